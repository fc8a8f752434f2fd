"""Method registry, background-size studies and heuristic benchmarks."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .baselines import majority_vote, mask_average
from .consensus import FusionResult, Heuristic, MacchiatoConfig, consensus
from .distances import DistanceKind
from .errors import BudgetExceeded
from .grid import RaterStack, SoftMask, pad_background
from .metrics import shannon_entropy
from .oracle import OracleBudget, exhaustive_hard
from .staple import (PriorMode, PriorSpec, RaterPerformance, VotePatterns, limit_logit,
                     ml_staple, mml_staple, posterior_logit, soft_counts, specificity_at)

MACCHIATO_METHODS = {
    "macchiato-j": DistanceKind.JACCARD,
    "macchiato-d": DistanceKind.DICE,
    "macchiato-tj": DistanceKind.TANIMOTO,
    "macchiato-sj": DistanceKind.SOERGEL,
    "macchiato-1sd": DistanceKind.PSD1,
    "macchiato-2sd": DistanceKind.PSD2,
}
METHODS = ("mv", "ma", "ml-staple", "mml-staple") + tuple(MACCHIATO_METHODS)


class OptionError(ValueError):
    """Incompatible method options."""


@dataclass(frozen=True)
class MethodSpec:
    method: str
    heuristic: Heuristic | None = None
    prior: PriorSpec | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise OptionError(f"unknown method {self.method!r}")
        if self.heuristic is not None:
            if self.method not in MACCHIATO_METHODS:
                raise OptionError("heuristic requires a macchiato method")
            object.__setattr__(self, "heuristic", Heuristic(self.heuristic))
        if self.prior is not None:
            if self.method != "mml-staple":
                raise OptionError("prior requires the mml-staple method")
            if isinstance(self.prior, str):
                object.__setattr__(self, "prior", PriorSpec.parse(self.prior))

    def describe(self) -> dict:
        out = {"method": self.method}
        if self.method in MACCHIATO_METHODS:
            out["heuristic"] = (self.heuristic or Heuristic.SUBCROWN).value
        if self.method == "mml-staple":
            out["prior"] = (self.prior or PriorSpec()).describe()
        return out


def run_method(stack: RaterStack, spec: MethodSpec | str) -> FusionResult:
    spec = MethodSpec(spec) if isinstance(spec, str) else spec
    t0 = time.perf_counter()
    m = spec.method
    if m == "mv":
        res = FusionResult(m, majority_vote(stack))
    elif m == "ma":
        res = FusionResult(m, mask_average(stack))
    elif m == "ml-staple":
        mask, perf, trace = ml_staple(stack)
        res = FusionResult(m, mask, performance=perf)
        res.config["iterations"] = trace.iterations
    elif m == "mml-staple":
        prior = spec.prior or PriorSpec()
        mask, perf, trace = mml_staple(stack, prior)
        res = FusionResult(m, mask, performance=perf)
        res.config.update(prior=prior.describe(), w=prior.resolve(stack),
                          iterations=trace.iterations, converged=trace.converged)
    else:
        cfg = MacchiatoConfig(MACCHIATO_METHODS[m], spec.heuristic or Heuristic.SUBCROWN)
        res = consensus(stack, cfg)
        res.method = m
    res.config.update(spec.describe())
    res.timings["fuse_s"] = time.perf_counter() - t0
    return res


def pad_axis0(stack: RaterStack, margin: int) -> RaterStack:
    """Append ``margin`` background slices after the data along the first axis."""
    pads = [(0, int(margin))] + [(0, 0)] * (stack.grid.ndim - 1)
    return pad_background(stack, pads)


def background_sweep(stack: RaterStack, spec: MethodSpec | str, margins) -> list[dict]:
    """Re-run a method with growing background and summarise each run.

    A margin of ``m`` appends ``m`` background slices along the first axis,
    so the grid size grows linearly with ``m``.
    """
    spec = MethodSpec(spec) if isinstance(spec, str) else spec
    margins = [int(m) for m in margins]
    if any(b < a for a, b in zip(margins, margins[1:])):
        raise ValueError("margins must be ascending")
    rows = []
    for m in margins:
        padded = pad_axis0(stack, m)
        res = run_method(padded, spec)
        mask = res.mask
        soft = isinstance(mask, SoftMask)
        row = {
            "margin": m,
            "N": padded.grid.size,
            "size": mask.threshold(0.5).count() if soft else mask.count(),
            "volume": mask.volume() if soft else float(mask.count()),
            "entropy": shannon_entropy(mask) if soft else 0.0,
            "p_mean": None, "q_mean": None,
        }
        if res.performance is not None:
            row["p_mean"] = float(np.mean(res.performance.p))
            row["q_mean"] = float(np.mean(res.performance.q))
        rows.append(row)
    return rows


def prior_exponent(prior: PriorSpec, stack: RaterStack) -> tuple[int, float]:
    """``(alpha, A)`` such that the resolved prior is ``A / N**alpha``."""
    if prior.mode is PriorMode.POWER:
        return prior.alpha, prior.A
    if prior.mode is PriorMode.UNINFORMATIVE:
        return 0, 0.5
    return 1, float(stack.matrix.sum()) / stack.K


def limit_classification(stack: RaterStack, prior: PriorSpec | None = None,
                         N_eval: float = 1e6) -> list[dict]:
    """Large-background limit of the posterior for every observed vote pattern.

    Rater parameters come from a converged soft run on ``stack``; ``p``, the
    soft false positives and the soft object sizes are then held fixed while
    the grid grows to ``N_eval``.
    """
    prior = PriorSpec() if prior is None else prior
    alpha, A = prior_exponent(prior, stack)
    u, perf, _ = mml_staple(stack, prior)
    FP, B = soft_counts(stack, u)
    rows = []
    for pat in VotePatterns.of(stack).patterns:
        value, sign = limit_logit(pat, alpha, A, perf.p, FP, B, N_eval)
        rows.append({"pattern": [int(v) for v in pat], "votes": int(pat.sum()),
                     "alpha": alpha, "A": A, "limit_sign": sign, "limit_logit": value})
    return rows


def fixed_parameter_logit(pattern, perf: RaterPerformance, FP, B, N: float, alpha: int,
                          A: float) -> float:
    """Posterior logit on a grid of ``N`` voxels with ``p``, ``FP`` and ``B`` held fixed."""
    q = specificity_at(N, FP, B)
    return posterior_logit(pattern, RaterPerformance(perf.p, q), A / float(N) ** alpha)


def bench_heuristics(stacks, distance: DistanceKind, heuristics=tuple(Heuristic),
                     budget: OracleBudget | None = None) -> dict:
    """Mean objective and wall time per heuristic, with an oracle column when affordable."""
    distance = DistanceKind(distance)
    budget = OracleBudget() if budget is None else budget
    heuristics = [Heuristic(h) for h in heuristics]
    rows = []
    for idx, st in enumerate(stacks):
        row = {"instance": idx}
        for h in heuristics:
            t0 = time.perf_counter()
            res = consensus(st, MacchiatoConfig(distance, h))
            row[h.value] = res.lmsd
            row[f"{h.value}_s"] = time.perf_counter() - t0
        row["oracle"] = None
        if not distance.is_soft:
            try:
                row["oracle"] = exhaustive_hard(st, distance, budget)[1]
            except BudgetExceeded:
                pass
        rows.append(row)
    summary = {h.value: float(np.mean([r[h.value] for r in rows])) for h in heuristics}
    summary.update({f"{h.value}_s": float(np.mean([r[f"{h.value}_s"] for r in rows]))
                    for h in heuristics})
    within = [r for r in rows if r["oracle"] is not None]
    summary["oracle_instances"] = len(within)
    if within:
        summary["oracle"] = float(np.mean([r["oracle"] for r in within]))
        for h in heuristics:
            summary[f"{h.value}_within_budget"] = float(np.mean([r[h.value] for r in within]))
    return {"distance": distance.value, "rows": rows, "summary": summary}
