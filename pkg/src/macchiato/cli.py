"""Command-line interface.

Exit codes: 0 success, 2 invalid or conflicting options, 3 input/output or
format errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import fixtures
from .baselines import majority_vote
from .consensus import FusionResult, Heuristic
from .distances import DistanceKind
from .errors import ConsensusError, GridMismatchError, MaskFormatError
from .fusion import (METHODS, MACCHIATO_METHODS, MethodSpec, OptionError, background_sweep,
                     bench_heuristics, limit_classification, run_method)
from .grid import Neighborhood, SoftMask, connected_components
from .io import (export_png, load_manifest, read_mask, report_json, rows_csv, save_stack,
                 write_mask, write_report)
from .metrics import detection_prf, lesionwise_prf, shannon_entropy, size_report, voxel_prf
from .staple import PriorSpec

EXIT_OPTIONS = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load(manifest: str, neighborhood: str | None):
    try:
        man, stack = load_manifest(manifest)
    except (OSError, MaskFormatError, GridMismatchError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot load {manifest}: {exc}") from exc
    if neighborhood:
        try:
            stack = stack.with_neighborhood(neighborhood)
        except ValueError as exc:
            raise CliError(EXIT_OPTIONS, str(exc)) from exc
    return man, stack


def _spec(args) -> MethodSpec:
    try:
        prior = PriorSpec.parse(args.prior) if getattr(args, "prior", None) else None
        return MethodSpec(args.method, getattr(args, "heuristic", None), prior)
    except ValueError as exc:
        raise CliError(EXIT_OPTIONS, str(exc)) from exc


def _emit(report: dict, path: str | None, csv_path: str | None = None, rows=None):
    text = report_json(report)
    if path:
        try:
            write_report(path, report)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc
    if csv_path and rows is not None:
        Path(csv_path).write_text(rows_csv(rows))
    sys.stdout.write(text)


def _fusion_report(res: FusionResult, stack) -> dict:
    labels = connected_components(stack)
    comps = []
    for c in range(1, labels.component_count + 1):
        row = {"component": c, "voxels": int(len(labels.members[c]))}
        if res.component_lmsd:
            row["lmsd"] = res.component_lmsd[c - 1]
            row["choice"] = res.traces[c - 1].choice
        comps.append(row)
    mask = res.mask
    glob = {"K": stack.K, "N": stack.grid.size, "union": int(stack.support.sum())}
    if isinstance(mask, SoftMask):
        glob.update(volume=mask.volume(), thresholded=mask.threshold(0.5).count(),
                    entropy_nats=shannon_entropy(mask))
    else:
        glob.update(size=mask.count(), foreground=mask.indices() if mask.count() <= 64 else None)
    if res.lmsd is not None:
        glob["lmsd"] = res.lmsd
    if res.performance is not None:
        glob["p"] = res.performance.p.tolist()
        glob["q"] = res.performance.q.tolist()
    return {"command": "fuse", "method": res.method, "config": res.config,
            "neighborhood": stack.grid.neighborhood.value, "components": comps,
            "global": glob, "timings": res.timings}


def cmd_fuse(args) -> int:
    spec = _spec(args)
    _, stack = _load(args.manifest, args.neighborhood)
    res = run_method(stack, spec)
    if args.out:
        try:
            write_mask(args.out, res.mask)
            if args.png:
                export_png(res.mask, args.png, outline=stack.union())
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from exc
    _emit(_fusion_report(res, stack), args.report)
    return 0


def cmd_metrics(args) -> int:
    _, stack = _load(args.manifest, args.neighborhood)
    try:
        cons = read_mask(args.consensus, stack.grid.neighborhood)
    except (OSError, MaskFormatError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot load {args.consensus}: {exc}") from exc
    if cons.grid != stack.grid:
        raise CliError(EXIT_IO, f"consensus dims {cons.grid.dims} differ from raters "
                                f"{stack.grid.dims}")
    hard = cons.threshold(0.5) if isinstance(cons, SoftMask) else cons
    rows: list[dict] = []
    report = {"command": "metrics", "mode": args.mode,
              "conventions": "0/0 ratios score 0 unless both sides are empty (voxel, lesion); "
                             "detection uses precision=1 without detections, recall=1 without "
                             "targets; entropy in nats"}
    if isinstance(cons, SoftMask) and args.mode in ("voxel", "lesion", "detect"):
        report["note"] = "soft consensus thresholded at > 0.5"
    if args.mode == "voxel":
        for k, m in enumerate(stack.masks):
            s = voxel_prf(hard, m)
            rows.append({"rater": k, "precision": s.precision, "recall": s.recall, "f1": s.f1})
    elif args.mode == "lesion":
        per, mean = lesionwise_prf(hard, stack)
        rows = [{"component": r.component, "rater": r.rater, "precision": r.score.precision,
                 "recall": r.score.recall, "f1": r.score.f1} for r in per]
        report["mean"] = {"precision": mean.precision, "recall": mean.recall, "f1": mean.f1,
                          "averaging": "all (lesion, rater) pairs"}
    elif args.mode == "detect":
        for k, m in enumerate(stack.masks):
            s = detection_prf(hard, m)
            rows.append({"rater": k, "precision": s.precision, "recall": s.recall, "f1": s.f1})
    elif args.mode == "entropy":
        soft = cons if isinstance(cons, SoftMask) else SoftMask(cons.grid, cons.flat)
        rows.append({"entropy_nats": shannon_entropy(soft)})
    else:
        given = FusionResult("consensus", cons)
        ref = FusionResult("mv", majority_vote(stack))
        rows = size_report([given, ref], ref)
    report["rows"] = rows
    _emit(report, args.report, args.csv, rows)
    return 0


def _margins(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(EXIT_OPTIONS, f"bad --margins {text!r}") from exc
    if not vals or any(v < 0 for v in vals) or vals != sorted(vals):
        raise CliError(EXIT_OPTIONS, "margins must be non-negative and ascending")
    return vals


def cmd_bg_study(args) -> int:
    spec = _spec(args)
    _, stack = _load(args.manifest, args.neighborhood)
    t0 = time.perf_counter()
    rows = background_sweep(stack, spec, _margins(args.margins))
    report = {"command": "bg-study", "config": spec.describe(),
              "padding": "margin = background slices appended along axis 0", "rows": rows}
    if spec.method == "mml-staple":
        report["limit_classification"] = limit_classification(stack, spec.prior)
    report["timings"] = {"total_s": time.perf_counter() - t0}
    _emit(report, args.report, args.csv, rows)
    return 0


def cmd_bench(args) -> int:
    try:
        distance = DistanceKind(args.distance)
        heuristics = [Heuristic(h) for h in args.heuristics.split(",")]
    except ValueError as exc:
        raise CliError(EXIT_OPTIONS, str(exc)) from exc
    if distance not in set(MACCHIATO_METHODS.values()):
        raise CliError(EXIT_OPTIONS, "bench-heuristics needs a macchiato distance")
    stacks = [_load(m, args.neighborhood)[1] for m in args.manifests]
    out = bench_heuristics(stacks, distance, heuristics)
    for r, m in zip(out["rows"], args.manifests):
        r["manifest"] = m
    report = {"command": "bench-heuristics", **out}
    _emit(report, args.report, args.csv, out["rows"])
    return 0


def cmd_gen(args) -> int:
    stack = fixtures.preset(args.preset, args.seed)
    try:
        path = save_stack(Path(args.out) / args.preset, stack, args.preset)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write fixtures: {exc}") from exc
    sys.stdout.write(json.dumps({"manifest": str(path), "K": stack.K,
                                 "dims": list(stack.grid.dims)}) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macchiato", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    nbs = [n.value for n in Neighborhood]

    f = sub.add_parser("fuse", help="fuse the raters of a manifest")
    f.add_argument("manifest")
    f.add_argument("--method", required=True, choices=METHODS)
    f.add_argument("--heuristic", choices=[h.value for h in Heuristic])
    f.add_argument("--neighborhood", choices=nbs)
    f.add_argument("--prior", help="uninformative | avg | power:A:alpha")
    f.add_argument("--out", help="consensus mask path")
    f.add_argument("--report", help="JSON report path")
    f.add_argument("--png", help="debug PNG of the first slice")
    f.set_defaults(func=cmd_fuse)

    m = sub.add_parser("metrics", help="score a consensus against the raters")
    m.add_argument("manifest")
    m.add_argument("--consensus", required=True)
    m.add_argument("--mode", required=True, choices=["voxel", "lesion", "detect", "entropy",
                                                      "sizes"])
    m.add_argument("--neighborhood", choices=nbs)
    m.add_argument("--report")
    m.add_argument("--csv")
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("bg-study", help="re-run a method with growing background")
    b.add_argument("manifest")
    b.add_argument("--method", required=True, choices=METHODS)
    b.add_argument("--margins", required=True, help="comma-separated ascending margins")
    b.add_argument("--heuristic", choices=[h.value for h in Heuristic])
    b.add_argument("--prior")
    b.add_argument("--neighborhood", choices=nbs)
    b.add_argument("--report")
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bg_study)

    h = sub.add_parser("bench-heuristics", help="compare block heuristics")
    h.add_argument("manifests", nargs="+")
    h.add_argument("--distance", default="jaccard", choices=[d.value for d in DistanceKind])
    h.add_argument("--heuristics", default="subcrown,crown,voxel")
    h.add_argument("--neighborhood", choices=nbs)
    h.add_argument("--report")
    h.add_argument("--csv")
    h.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen-fixtures", help="write a synthetic rater set")
    g.add_argument("--preset", required=True, choices=fixtures.PRESETS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTIONS
    except (OSError, MaskFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConsensusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
