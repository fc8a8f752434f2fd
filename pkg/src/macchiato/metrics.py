"""Agreement measures between a consensus and the raters.

Two 0/0 conventions are used. Voxel and lesion scores treat a 0/0 ratio as
0 unless both masks are empty (then the triple is (1, 1, 1)). Detection
scores follow the usual detection practice: precision is 1 when nothing
was detected and recall is 1 when there was nothing to detect.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from .errors import GridMismatchError
from .grid import BinaryMask, ComponentLabels, RaterStack, SoftMask, connected_components, label_mask

STRICT = "strict"
DETECTION = "detection"


@dataclass(frozen=True)
class PrfTriple:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: float, fp: float, fn: float, convention: str = STRICT) -> "PrfTriple":
        if convention == STRICT:
            if tp + fp + fn == 0:
                return cls(1.0, 1.0, 1.0)
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
        elif convention == DETECTION:
            p = tp / (tp + fp) if tp + fp else 1.0
            r = tp / (tp + fn) if tp + fn else 1.0
        else:
            raise ValueError(f"unknown convention {convention!r}")
        f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(float(p), float(r), float(f1))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


def _mean(triples) -> PrfTriple:
    arr = np.array([t.as_tuple() for t in triples], dtype=np.float64)
    if arr.size == 0:
        return PrfTriple(1.0, 1.0, 1.0)
    return PrfTriple(*(float(v) for v in arr.mean(axis=0)))


def voxel_prf(gt: BinaryMask, pred: BinaryMask) -> PrfTriple:
    """Scores of ``pred`` taking ``gt`` (usually the consensus) as ground truth."""
    if gt.grid != pred.grid:
        raise GridMismatchError("voxel scores need masks on the same grid")
    g, p = gt.flat, pred.flat
    tp = int(np.sum(g & p))
    return PrfTriple.from_counts(tp, int(np.sum(p & ~g)), int(np.sum(g & ~p)))


@dataclass(frozen=True)
class LesionScore:
    component: int
    rater: int
    score: PrfTriple


def lesionwise_prf(consensus: BinaryMask, stack: RaterStack,
                   labels: ComponentLabels | None = None) -> tuple[list[LesionScore], PrfTriple]:
    """Voxel scores inside each component of the rater union, for every rater.

    The mean is taken over all (component, rater) pairs.
    """
    if consensus.grid != stack.grid:
        raise GridMismatchError("consensus and raters must share a grid")
    labels = connected_components(stack) if labels is None else labels
    c_flat = consensus.flat
    rows = []
    for c in range(1, labels.component_count + 1):
        vox = labels.members[c]
        g = c_flat[vox]
        for k in range(stack.K):
            p = stack.matrix[k, vox]
            tp = int(np.sum(g & p))
            rows.append(LesionScore(c, k, PrfTriple.from_counts(
                tp, int(np.sum(p & ~g)), int(np.sum(g & ~p)))))
    return rows, _mean(r.score for r in rows)


def detection_prf(consensus: BinaryMask, rater: BinaryMask) -> PrfTriple:
    """Component detection: any overlap counts as a detection."""
    if consensus.grid != rater.grid:
        raise GridMismatchError("detection scores need masks on the same grid")
    grid = consensus.grid
    c_lab, nc = label_mask(consensus.flat, grid)
    r_lab, nr = label_mask(rater.flat, grid)
    hit_c = np.unique(c_lab[rater.flat & (c_lab > 0)])
    hit_r = np.unique(r_lab[consensus.flat & (r_lab > 0)])
    tp = len(hit_c)
    return PrfTriple.from_counts(tp, nr - len(hit_r), nc - tp, DETECTION)


def shannon_entropy(u: SoftMask) -> float:
    """Binary entropy in nats summed over voxels, with 0 ln 0 = 0."""
    x = u.flat
    return float(np.sum(entr(x) + entr(1.0 - x)))


def size_report(results, reference) -> list[dict]:
    """Sizes of fusion results relative to a reference result.

    Hard results report their foreground count, soft results their volume;
    ``thresholded`` counts voxels strictly above 0.5 in both cases.
    """
    ref = reference.size()
    rows = []
    for r in results:
        size = r.size()
        mask = r.mask
        thr = mask.threshold(0.5).count() if isinstance(mask, SoftMask) else mask.count()
        rows.append({
            "method": r.method,
            "kind": "soft" if isinstance(mask, SoftMask) else "hard",
            "size": size,
            "percent_vs_reference": (size - ref) / ref * 100.0 if ref else None,
            "thresholded": int(thr),
        })
    return rows
