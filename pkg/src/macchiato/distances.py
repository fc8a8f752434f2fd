"""Set distances, their soft surrogates and the local mean squared distance.

Conventions: two empty inputs are at distance 0 for every kind; a non-empty
set is at Jaccard or Dice distance 1 from the empty set. ``HAMMING`` is the
size of the symmetric difference, i.e. already the squared distance used in
the Frechet variance.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridMismatchError, SupportError
from .grid import BinaryMask, ComponentLabels, RaterStack, SoftMask, connected_components


class DistanceKind(str, enum.Enum):
    HAMMING = "hamming"
    JACCARD = "jaccard"
    DICE = "dice"
    TANIMOTO = "tanimoto"
    SOERGEL = "soergel"
    PSD1 = "psd1"
    PSD2 = "psd2"
    L2 = "l2"

    @property
    def is_soft(self) -> bool:
        return self in SOFT_KINDS

    @property
    def binary_counterpart(self) -> "DistanceKind":
        return SURROGATE_OF.get(self, self)


HARD_KINDS = frozenset({DistanceKind.HAMMING, DistanceKind.JACCARD, DistanceKind.DICE})
SOFT_KINDS = frozenset({DistanceKind.TANIMOTO, DistanceKind.SOERGEL, DistanceKind.PSD1,
                        DistanceKind.PSD2, DistanceKind.L2})
SURROGATE_OF = {
    DistanceKind.TANIMOTO: DistanceKind.JACCARD,
    DistanceKind.SOERGEL: DistanceKind.JACCARD,
    DistanceKind.PSD1: DistanceKind.DICE,
    DistanceKind.PSD2: DistanceKind.DICE,
    DistanceKind.L2: DistanceKind.HAMMING,
}

# kernel codes; soft kinds share the binary code of their counterpart in the hard kernels
KERNEL_CODE = {
    DistanceKind.HAMMING: 0, DistanceKind.L2: 0,
    DistanceKind.JACCARD: 1, DistanceKind.DICE: 2,
    DistanceKind.TANIMOTO: 3, DistanceKind.SOERGEL: 4,
    DistanceKind.PSD1: 5, DistanceKind.PSD2: 6,
}


def _as_set(x) -> set:
    if isinstance(x, BinaryMask):
        return set(x.indices())
    return set(int(v) for v in x)


def binary_distance(kind, a, b) -> float:
    """Distance between two voxel sets (iterables of indices or masks)."""
    kind = DistanceKind(kind)
    A, B = _as_set(a), _as_set(b)
    sym = len(A ^ B)
    if kind is DistanceKind.HAMMING:
        return float(sym)
    if kind is DistanceKind.JACCARD:
        union = len(A | B)
        return sym / union if union else 0.0
    if kind is DistanceKind.DICE:
        den = len(A) + len(B)
        return 1.0 - 2.0 * len(A & B) / den if den else 0.0
    raise ValueError(f"{kind.value} is not a binary set distance")


def soft_distance(kind, x, y) -> float:
    """Surrogate distance between two equal-length vectors with values in [0, 1]."""
    kind = DistanceKind(kind)
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("soft distance needs equal-length inputs")
    for v in (x, y):
        if np.isnan(v).any() or (v < 0).any() or (v > 1).any():
            raise DomainError("soft distance inputs must lie in [0, 1]")
    if kind is DistanceKind.L2:
        return float(np.sqrt(np.sum((x - y) ** 2)))
    if kind is DistanceKind.TANIMOTO:
        diff = float(np.sum((x - y) ** 2))
        den = diff + float(np.dot(x, y))
        return diff / den if den > 0 else 0.0
    if kind is DistanceKind.SOERGEL:
        hi = np.maximum(x, y)
        den = float(hi.sum())
        return float((hi - np.minimum(x, y)).sum()) / den if den > 0 else 0.0
    if kind in (DistanceKind.PSD1, DistanceKind.PSD2):
        p = 1 if kind is DistanceKind.PSD1 else 2
        den = float(np.sum(x ** p) + np.sum(y ** p))
        return 1.0 - 2.0 * float(np.dot(x, y)) / den if den > 0 else 0.0
    raise ValueError(f"{kind.value} is not a soft surrogate")


def lmsd(stack: RaterStack, candidate, kind, labels: ComponentLabels | None = None) -> float:
    """Local mean squared distance between the raters and a candidate consensus.

    Sum over connected components of the rater union of the mean (over all
    ``K`` raters) squared distance between the restrictions to the component.
    Hard candidates must be background outside the union.
    """
    kind = DistanceKind(kind)
    labels = connected_components(stack) if labels is None else labels
    if candidate.grid != stack.grid:
        raise GridMismatchError("candidate and stack grids differ")
    values = candidate.flat
    if isinstance(candidate, BinaryMask):
        if (values & ~stack.support).any():
            raise SupportError("hard candidate has foreground outside the rater union")
    elif (values[~stack.support] != 0).any():
        raise SupportError("soft candidate is non-zero outside the rater union")
    K = stack.K
    total = 0.0
    for c in range(1, labels.component_count + 1):
        vox = labels.members[c]
        acc = 0.0
        for k in range(K):
            sk = stack.matrix[k, vox]
            if kind.is_soft:
                d = soft_distance(kind, values[vox].astype(np.float64), sk.astype(np.float64))
                acc += d * d
            else:
                d = binary_distance(kind, vox[values[vox].astype(bool)], vox[sk])
                acc += d if kind is DistanceKind.HAMMING else d * d
        total += acc / K
    return total


@dataclass(frozen=True)
class ConfusionCounts:
    tp: float
    fp: float
    fn: float
    tn: float

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.fn + self.tn


def confusion(a: BinaryMask, b: BinaryMask) -> ConfusionCounts:
    """Counts of ``a`` (observed) against ``b`` (reference)."""
    if a.grid != b.grid:
        raise GridMismatchError("confusion needs masks on the same grid")
    x, t = a.flat, b.flat
    return ConfusionCounts(
        tp=int(np.sum(x & t)), fp=int(np.sum(x & ~t)),
        fn=int(np.sum(~x & t)), tn=int(np.sum(~x & ~t)),
    )


def soft_confusion(u: SoftMask, s: BinaryMask) -> ConfusionCounts:
    """Soft counts of a rater mask ``s`` against a posterior ``u``.

    These are the sums appearing in the STAPLE M-step:
    ``p = stp / (stp + sfn)`` and ``q = stn / (stn + sfp)``.
    """
    if u.grid != s.grid:
        raise GridMismatchError("soft confusion needs masks on the same grid")
    uf, sf = u.flat, s.flat
    return ConfusionCounts(
        tp=float(uf[sf].sum()), fp=float((1.0 - uf[sf]).sum()),
        fn=float(uf[~sf].sum()), tn=float((1.0 - uf[~sf]).sum()),
    )
