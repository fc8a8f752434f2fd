"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in
the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
Thresholds and tolerances are the stated ones; nothing here is relaxed to
make a criterion pass.
"""
from __future__ import annotations

import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from macchiato import fixtures
from macchiato.baselines import majority_vote, mask_average
from macchiato.cli import main as cli_main
from macchiato.consensus import (Heuristic, MacchiatoConfig, block_values, hard_consensus,
                                 soft_consensus)
from macchiato.distances import DistanceKind, binary_distance, lmsd, soft_distance
from macchiato.fusion import (MACCHIATO_METHODS, fixed_parameter_logit,
                              pad_axis0, prior_exponent, run_method)
from macchiato.errors import BudgetExceeded
from macchiato.grid import RaterStack, connected_components, crop, pad_background
from macchiato.io import read_mask, save_stack
from macchiato.metrics import shannon_entropy
from macchiato.oracle import OracleBudget, dense_soft, exhaustive_hard, frechet_hamming
from macchiato.staple import (PriorSpec, RaterPerformance, VotePatterns, e_step, limit_logit,
                              m_step_ratios, ml_staple, mml_staple, soft_counts)

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}

SUITE_PRESETS = ("rings", "blobs", "empty-rater", "two-components")
SUITE_SEEDS = range(25)
SOFT = (DistanceKind.TANIMOTO, DistanceKind.SOERGEL, DistanceKind.PSD1, DistanceKind.PSD2)


def _report(n: int, ok: bool, detail: str):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _random(seed: int, count: int, **kw) -> list[RaterStack]:
    rng = np.random.default_rng(seed)
    return [fixtures.random_stack(rng, **kw) for _ in range(count)]


def _jaccard_exact(a: set, b: set) -> Fraction:
    union = len(a | b)
    return Fraction(len(a ^ b), union) if union else Fraction(0)


def _soergel_exact(x, y) -> Fraction:
    xs = [Fraction(float(v)) for v in x]
    ys = [Fraction(float(v)) for v in y]
    den = sum(max(a, b) for a, b in zip(xs, ys))
    return sum(abs(a - b) for a, b in zip(xs, ys)) / den if den else Fraction(0)


def _suite() -> list[RaterStack]:
    """Random fixture suite: every non-F1 preset at 25 seeds."""
    return [fixtures.preset(name, s) for name in SUITE_PRESETS for s in SUITE_SEEDS]


def test_criterion_01_oracle_equivalence():
    stacks = _random(12345, 500)
    t0 = time.perf_counter()
    parts, ok = [], True
    for kind in (DistanceKind.JACCARD, DistanceKind.DICE):
        equal, worst = 0, 0.0
        for st in stacks:
            greedy = hard_consensus(st, MacchiatoConfig(kind)).lmsd
            _, best = exhaustive_hard(st, kind, OracleBudget(max_support=16))
            if greedy <= best + 1e-12:
                equal += 1
            else:
                worst = max(worst, (greedy - best) / best if best > 0 else math.inf)
        frac = equal / len(stacks)
        ok &= frac >= 0.90 and worst <= 0.10
        parts.append(f"{kind.value} equal {frac:.1%} worst excess {worst:.1%}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 60
    _report(1, ok, f"{len(stacks)} stacks; " + "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_02_mv_hamming_identity():
    stacks = _random(2002, 1000, K_choices=(1, 3, 5))
    t0 = time.perf_counter()
    same = sum(np.array_equal(majority_vote(st).flat, frechet_hamming(st).flat) for st in stacks)
    elapsed = time.perf_counter() - t0
    _report(2, same == len(stacks) and elapsed <= 10,
            f"{same}/{len(stacks)} identical; {elapsed:.2f}s")


def test_criterion_03_background_invariance():
    methods = ["mv", "ma"] + list(MACCHIATO_METHODS)
    t0 = time.perf_counter()
    checked, diffs = 0, []
    for name in fixtures.PRESETS:
        st = fixtures.preset(name, 0)
        base = {m: run_method(st, m).mask for m in methods}
        for margin in (0, 8, 64, 512):
            padded = pad_background(st, margin)
            for m in methods:
                out = crop(run_method(padded, m).mask, margin)
                checked += 1
                if out.values.tobytes() != base[m].values.tobytes():
                    diffs.append(f"{name}/{m}/{margin}")
    elapsed = time.perf_counter() - t0
    _report(3, not diffs and elapsed <= 30,
            f"{checked - len(diffs)}/{checked} bit-identical {diffs[:3]}; {elapsed:.1f}s")


def test_criterion_04_staple_background_dependence():
    f1 = fixtures.f1()
    sizes, masks = [], []
    for N in (16, 100, 10_000):
        T, _, _ = ml_staple(pad_axis0(f1, N - f1.grid.size))
        sizes.append(T.count())
        masks.append(T)
    union = set(f1.union().indices())
    final = set(masks[-1].indices())
    ok = final == union and all(b >= a for a, b in zip(sizes, sizes[1:]))
    _report(4, ok, f"sizes {sizes} at N=16,100,1e4; final {sorted(final)} union {sorted(union)}")


def test_criterion_05_asymptotics():
    f1 = fixtures.f1()
    sweep = [1e2, 1e3, 1e4, 1e5, 1e6]
    worst, matched, total = 0.0, 0, 0
    for prior in (PriorSpec.parse("uninformative"), PriorSpec.parse("avg")):
        alpha, A = prior_exponent(prior, f1)
        u, perf, trace = mml_staple(f1, prior)
        FP, B = soft_counts(f1, u)
        for pat in VotePatterns.of(f1).patterns:
            value, sign = limit_logit(pat, alpha, A, perf.p, FP, B, 1e6)
            curve = [fixed_parameter_logit(pat, perf, FP, B, N, alpha, A) for N in sweep]
            worst = max(worst, abs(curve[-1] - value))
            per_decade = (curve[-1] - curve[-2]) / math.log(10)
            direction = int(np.sign(round(per_decade)))
            matched += direction == sign
            total += 1
    _report(5, worst <= 0.05 and matched == total,
            f"max |logit(1e6) - limit| = {worst:.2e}; directions {matched}/{total}")


def test_criterion_06_equal_performance_is_mv():
    stacks = _random(606, 200, K_choices=(3, 5))
    same = 0
    for st in stacks:
        T, _, _ = ml_staple(st, equal_performance=True)
        same += np.array_equal(T.flat, majority_vote(st).flat)
    _report(6, same == len(stacks), f"{same}/{len(stacks)} equal to majority vote")


def test_criterion_07_em_unit_values():
    perf = RaterPerformance([0.8, 0.6], [0.9, 0.7])
    u = float(e_step(np.array([[True, False]]), perf, 0.5)[0])
    p, q = m_step_ratios(np.array([[True], [False]]), np.array([1.0, 1.0]),
                         np.array([1.0, 0.5]), RaterPerformance.uniform(1))
    ok = abs(u - 0.82051) <= 1e-5 and abs(u - 0.16 / 0.195) <= 1e-9
    ok &= p[0] == 2 / 3 and q[0] == 1.0
    _report(7, ok, f"u = {u:.9f}; p = {float(p[0])!r}, q = {float(q[0])!r}")


def test_criterion_08_surrogates_and_axioms():
    rng = np.random.default_rng(808)
    pairs_bad = 0
    dsc_err = 0.0
    for _ in range(10_000):
        n = int(rng.integers(1, 16))
        a, b = rng.random(n) < 0.5, rng.random(n) < 0.5
        A, B = np.flatnonzero(a), np.flatnonzero(b)
        jac = binary_distance(DistanceKind.JACCARD, A, B)
        dice = binary_distance(DistanceKind.DICE, A, B)
        for kind in SOFT:
            ref = jac if kind.binary_counterpart is DistanceKind.JACCARD else dice
            pairs_bad += abs(soft_distance(kind, a, b) - ref) > 1e-12
        sim_j, sim_d = 1 - jac, 1 - dice
        dsc_err = max(dsc_err, abs(sim_d - 2 * sim_j / (1 + sim_j)))
    # The inequality is judged in exact rational arithmetic with zero tolerance; the
    # implementation must return the correctly rounded exact value. Float-evaluated
    # sums are reported too: ties such as 5/6 = 1/3 + 1/2 can lose one ulp there.
    exact = {"jaccard": 0, "soergel": 0}
    floating = {"jaccard": 0, "soergel": 0}
    off = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 12))
        sets = [set(np.flatnonzero(rng.random(n) < 0.5).tolist()) for _ in range(3)]
        reals = rng.random((3, n))
        for name, items, impl, ref in (
                ("jaccard", sets, lambda s, t: binary_distance(DistanceKind.JACCARD, s, t),
                 _jaccard_exact),
                ("soergel", reals, lambda s, t: soft_distance(DistanceKind.SOERGEL, s, t),
                 _soergel_exact)):
            x, y, z = items
            e = [ref(x, z), ref(x, y), ref(y, z)]
            f = [impl(x, z), impl(x, y), impl(y, z)]
            exact[name] += e[0] > e[1] + e[2]
            floating[name] += f[0] > f[1] + f[2]
            off += any(abs(fv - float(ev)) > (0.0 if name == "jaccard" else 1e-15)
                       for fv, ev in zip(f, e))
    ok = pairs_bad == 0 and dsc_err <= 1e-12 and not any(exact.values()) and off == 0
    _report(8, ok, f"surrogate mismatches {pairs_bad}; DSC identity err {dsc_err:.1e}; "
                   f"triangle violations J {exact['jaccard']} S {exact['soergel']} "
                   f"(float-evaluated J {floating['jaccard']} S {floating['soergel']}); "
                   f"values off the exact distance {off}")


def test_criterion_09_soft_optimizer_validity():
    stacks = _suite() + _random(909, 100) + [fixtures.f1()]
    above_ma = non_monotone = above_dense = dense_checked = 0
    for kind in SOFT:
        for st in stacks:
            res = soft_consensus(st, MacchiatoConfig(kind))
            above_ma += res.lmsd > lmsd(st, mask_average(st), kind)
            for tr in res.traces:
                hist = tr.passes["sweep"]
                non_monotone += any(b >= a for a, b in zip(hist, hist[1:]))
            try:
                _, ref = dense_soft(st, kind)
            except BudgetExceeded:
                continue
            dense_checked += 1
            above_dense += res.lmsd > ref + 1e-4
    ok = above_ma == 0 and non_monotone == 0 and above_dense == 0
    _report(9, ok, f"{len(stacks) * len(SOFT)} runs: above MA {above_ma}, non-monotone "
                   f"traces {non_monotone}, above dense+1e-4 {above_dense}/{dense_checked}")


def test_criterion_10_entropy_family_split():
    stacks = [st for st in _suite() if len({m.values.tobytes() for m in st.masks}) > 1]
    ent = {k: [] for k in SOFT}
    near = []
    for st in stacks:
        for kind in SOFT:
            res = soft_consensus(st, MacchiatoConfig(kind))
            ent[kind].append(shannon_entropy(res.mask))
            if kind is DistanceKind.SOERGEL:
                v = np.array(block_values(res, st))
                near.extend(np.minimum(v, 1 - v) <= 1e-3)
    med = {k: float(np.median(v)) for k, v in ent.items()}
    frac = float(np.mean(near))
    ok = (len(stacks) >= 100 and med[DistanceKind.SOERGEL] < med[DistanceKind.TANIMOTO]
          and med[DistanceKind.PSD1] < med[DistanceKind.PSD2] and frac >= 0.90)
    _report(10, ok, f"{len(stacks)} fixtures; median entropy S {med[DistanceKind.SOERGEL]:.3f} "
                    f"< T {med[DistanceKind.TANIMOTO]:.3f}, 1SD {med[DistanceKind.PSD1]:.3f} "
                    f"< 2SD {med[DistanceKind.PSD2]:.3f}; Soergel near-binary {frac:.1%}")


def test_criterion_11_structure_wise_mv():
    stacks = _random(1111, 500)
    checked = violations = 0
    for st in stacks:
        labels = connected_components(st)
        for kind in (DistanceKind.JACCARD, DistanceKind.DICE):
            out = hard_consensus(st, MacchiatoConfig(kind), labels).mask.flat
            for c in range(1, labels.component_count + 1):
                vox = labels.members[c]
                if 2 * st.counts[vox].max() < st.K:
                    checked += 1
                    violations += bool(out[vox].any())
    _report(11, violations == 0,
            f"{checked - violations}/{checked} components with max votes < K/2 are empty")


def test_criterion_12_size_ordering():
    stacks = _suite()
    mj, mv, subset, staple_ge = [], [], 0, 0
    for st in stacks:
        h = hard_consensus(st, MacchiatoConfig(DistanceKind.JACCARD)).mask
        mj.append(h.count())
        mv.append(majority_vote(st).count())
        subset += not (h.flat & ~st.support).any()
        T, _, _ = ml_staple(pad_axis0(st, 10_000))
        staple_ge += T.count() >= h.count()
    n = len(stacks)
    ok = np.mean(mj) >= np.mean(mv) and subset == n and staple_ge == n
    _report(12, ok, f"mean |J| {np.mean(mj):.2f} vs |MV| {np.mean(mv):.2f}; subset of union "
                    f"{subset}/{n}; |ML STAPLE @1e4| >= |J| {staple_ge}/{n}")


def test_criterion_13_heuristic_comparison(tmp_path, capsys):
    stacks = _suite() + _random(1313, 50)
    manifests = [str(save_stack(tmp_path / f"s{i}", st, f"s{i}")) for i, st in enumerate(stacks)]
    report = tmp_path / "bench.json"
    code = cli_main(["bench-heuristics", *manifests, "--distance", "jaccard",
                     "--report", str(report)])
    capsys.readouterr()
    doc = json.loads(report.read_text())
    summ = doc["summary"]
    bad = 0
    for row in doc["rows"]:
        if row["oracle"] is not None:
            bad += any(row["oracle"] > row[h.value] for h in Heuristic)
    ok = code == 0 and summ["subcrown"] <= summ["crown"] and bad == 0
    _report(13, ok, f"mean LMSD subcrown {summ['subcrown']:.5f} <= crown {summ['crown']:.5f} "
                    f"(voxel {summ['voxel']:.5f}); oracle above a heuristic on {bad}/"
                    f"{summ['oracle_instances']} within-budget instances")


def test_criterion_14_f1_golden(tmp_path, capsys):
    path = str(save_stack(tmp_path / "f1", fixtures.f1(), "f1"))
    got = {}
    for method in ("mv", "macchiato-j", "macchiato-d", "ma"):
        out = tmp_path / f"{method}.raw"
        code = cli_main(["fuse", path, "--method", method, "--out", str(out)])
        rep = json.loads(capsys.readouterr().out)
        got[method] = (code, read_mask(out), rep["global"])
    ok = all(v[0] == 0 for v in got.values())
    ok &= got["mv"][1].indices() == [3, 4]
    ok &= got["macchiato-j"][1].indices() == [2, 3, 4, 5]
    ok &= abs(got["macchiato-j"][2]["lmsd"] - 0.0625) <= 1e-9
    ok &= abs(got["macchiato-d"][2]["lmsd"] - 2 * (1 / 7) ** 2 / 2) <= 1e-9
    ok &= abs(got["ma"][1].volume() - 3.0) <= 1e-9
    _report(14, ok, f"mv {got['mv'][1].indices()}, J {got['macchiato-j'][1].indices()} lmsd "
                    f"{got['macchiato-j'][2]['lmsd']}, D lmsd {got['macchiato-d'][2]['lmsd']:.10f}, "
                    f"ma volume {got['ma'][1].volume()}")


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-s"]))
