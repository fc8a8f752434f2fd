"""Brute-force references for the consensus optimisers.

These are deliberately simple: exhaustive subset enumeration for the hard
problem, the per-voxel Hamming minimiser, and per-voxel coordinate descent
on a value grid for the soft problem. The soft reference is a strong local
optimum, not a certified global one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .baselines import mask_average
from .distances import HARD_KINDS, KERNEL_CODE, DistanceKind
from .errors import BudgetExceeded
from .grid import BinaryMask, ComponentLabels, RaterStack, SoftMask, connected_components


@dataclass(frozen=True)
class OracleBudget:
    max_support: int = 20
    max_grid_points: int = 1 << 20

    def __post_init__(self):
        if not 0 < self.max_support <= 63:
            raise ValueError("max_support must lie in 1..63 (subsets are 64-bit words)")


def _component_bits(sub: np.ndarray) -> np.ndarray:
    weights = np.left_shift(np.uint64(1), np.arange(sub.shape[1], dtype=np.uint64))
    return np.array([int(weights[row].sum()) for row in sub], dtype=np.uint64)


def exhaustive_hard(stack: RaterStack, kind=DistanceKind.JACCARD,
                    budget: OracleBudget | None = None,
                    labels: ComponentLabels | None = None) -> tuple[BinaryMask, float]:
    """Exact minimiser of the local mean squared set distance.

    Every subset of every component is scored; ties within 1e-12 go to the
    lexicographically smallest sorted voxel tuple.
    """
    kind = DistanceKind(kind)
    if kind not in HARD_KINDS:
        raise ValueError(f"{kind.value} is not a hard set distance")
    budget = OracleBudget() if budget is None else budget
    labels = connected_components(stack) if labels is None else labels
    sizes = [len(labels.members[c]) for c in range(1, labels.component_count + 1)]
    if sizes and max(sizes) > budget.max_support:
        raise BudgetExceeded(f"component of {max(sizes)} voxels exceeds "
                             f"max_support={budget.max_support}")
    out = np.zeros(stack.grid.size, dtype=bool)
    total = 0.0
    for c in range(1, labels.component_count + 1):
        vox = labels.members[c]  # ascending, so bit order is voxel order
        bits = _component_bits(stack.matrix[:, vox])
        best, value = _kernels.enumerate_subsets(bits, len(vox), KERNEL_CODE[kind])
        best = int(best)
        out[vox[[j for j in range(len(vox)) if best >> j & 1]]] = True
        total += value
    return BinaryMask(stack.grid, out), float(total)


def frechet_hamming(stack: RaterStack) -> BinaryMask:
    """Per-voxel minimiser of the summed squared Hamming distance (ties to background)."""
    S = stack.matrix.astype(np.int64)
    cost_fg = (1 - S).sum(axis=0)
    cost_bg = S.sum(axis=0)
    return BinaryMask(stack.grid, cost_fg < cost_bg)


def _batch_objective(kind: DistanceKind, X: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Mean squared surrogate distance of every row of ``X`` (G, n) to the raters ``S`` (K, n)."""
    acc = np.zeros(X.shape[0])
    for sk in S.astype(np.float64):
        if kind is DistanceKind.L2:
            d2 = ((X - sk) ** 2).sum(axis=1)
            acc += d2
            continue
        if kind is DistanceKind.TANIMOTO:
            num = ((X - sk) ** 2).sum(axis=1)
            den = num + X @ sk
        elif kind is DistanceKind.SOERGEL:
            hi = np.maximum(X, sk)
            den = hi.sum(axis=1)
            num = den - np.minimum(X, sk).sum(axis=1)
        else:
            p = 1 if kind is DistanceKind.PSD1 else 2
            den = (X ** p).sum(axis=1) + (sk ** p).sum()
            num = den - 2.0 * (X @ sk)
        d = np.divide(num, den, out=np.zeros_like(den), where=den > 0)
        acc += d * d
    return acc / S.shape[0]


def dense_soft(stack: RaterStack, kind=DistanceKind.TANIMOTO, resolution: float = 1e-3,
               budget: OracleBudget | None = None, max_sweeps: int = 1000,
               labels: ComponentLabels | None = None) -> tuple[SoftMask, float]:
    """Reference soft consensus by cyclic per-voxel grid search.

    Starts from the mask average; each voxel in turn takes the grid value
    (or keeps its current value) minimising the component objective. Stops
    when a sweep gains less than 1e-10.
    """
    kind = DistanceKind(kind)
    if not kind.is_soft:
        raise ValueError(f"{kind.value} is not a soft surrogate")
    budget = OracleBudget() if budget is None else budget
    labels = connected_components(stack) if labels is None else labels
    steps = int(round(1.0 / resolution))
    values = np.linspace(0.0, 1.0, steps + 1)
    x = mask_average(stack).flat.copy()
    total = 0.0
    for c in range(1, labels.component_count + 1):
        vox = labels.members[c]
        if len(vox) * (steps + 1) > budget.max_grid_points:
            raise BudgetExceeded(f"{len(vox)} voxels x {steps + 1} grid values exceeds "
                                 f"max_grid_points={budget.max_grid_points}")
        S = stack.matrix[:, vox]
        xc = x[vox].copy()
        cur = float(_batch_objective(kind, xc[None, :], S)[0])
        for _ in range(max_sweeps):
            start = cur
            for j in range(len(vox)):
                X = np.repeat(xc[None, :], steps + 1, axis=0)
                X[:, j] = values
                f = _batch_objective(kind, X, S)
                b = int(np.argmin(f))
                if f[b] < cur - 1e-15:
                    xc[j] = values[b]
                    cur = float(f[b])
            if start - cur < 1e-10:
                break
        x[vox] = xc
        total += cur
    return SoftMask(stack.grid, x), float(total)
