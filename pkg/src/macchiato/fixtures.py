"""Synthetic rater stacks: named presets and a small random generator.

Every preset is a pure function of its seed.
"""
from __future__ import annotations

import numpy as np

from .grid import Grid, RaterStack, neighbor_offsets

PRESETS = ("f1", "rings", "blobs", "empty-rater", "two-components")


def f1() -> RaterStack:
    """Two raters on a 1D grid of 8 voxels: A = {2,3,4}, B = {3,4,5}."""
    return RaterStack.from_indices(Grid((8,)), [[2, 3, 4], [3, 4, 5]])


def _disk(shape, center, radius) -> np.ndarray:
    yy, xx = np.indices(shape)
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2


def _jitter(rng, base: np.ndarray, flip: float) -> np.ndarray:
    """Flip voxels on the inner and outer boundary of ``base`` with probability ``flip``."""
    grown = base.copy()
    shrunk = base.copy()
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        shifted = np.roll(base, (dy, dx), axis=(0, 1))
        grown |= shifted
        shrunk &= shifted
    edge = grown & ~shrunk
    flips = edge & (rng.random(base.shape) < flip)
    return base ^ flips


def rings(seed: int = 0, K: int = 3, size: int = 15) -> RaterStack:
    """Concentric disks of different radii with jittered borders."""
    rng = np.random.default_rng(seed)
    c = (size // 2, size // 2)
    masks = [_jitter(rng, _disk((size, size), c, 2 + k), 0.2) for k in range(K)]
    return RaterStack.from_arrays(masks)


def blobs(seed: int = 0, K: int = 4, size: int = 12) -> RaterStack:
    """A shared blob seen by every rater plus a small blob seen by rater 0 only."""
    rng = np.random.default_rng(seed)
    main = _disk((size, size), (4, 4), 2.5)
    masks = [_jitter(rng, main, 0.3) for _ in range(K)]
    masks[0] = masks[0] | _disk((size, size), (size - 3, size - 3), 1)
    return RaterStack.from_arrays(masks)


def empty_rater(seed: int = 0, K: int = 7, size: int = 12) -> RaterStack:
    """``K - 1`` jittered disks and one rater that segmented nothing."""
    rng = np.random.default_rng(seed)
    base = _disk((size, size), (size // 2, size // 2), 3)
    masks = [_jitter(rng, base, 0.3) for _ in range(K - 1)]
    masks.append(np.zeros((size, size), dtype=bool))
    return RaterStack.from_arrays(masks)


def two_components(seed: int = 0, K: int = 3, size: int = 14) -> RaterStack:
    rng = np.random.default_rng(seed)
    a = _disk((size, size), (3, 3), 2)
    b = _disk((size, size), (size - 4, size - 4), 2.5)
    masks = [_jitter(rng, a, 0.3) | _jitter(rng, b, 0.3) for _ in range(K)]
    return RaterStack.from_arrays(masks)


def preset(name: str, seed: int = 0) -> RaterStack:
    if name == "f1":
        return f1()
    makers = {"rings": rings, "blobs": blobs, "empty-rater": empty_rater,
              "two-components": two_components}
    if name not in makers:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return makers[name](seed)


def random_stack(rng: np.random.Generator, max_dims=(3, 5, 5), K_choices=(2, 3, 4),
                 max_support: int = 16, p_empty: float = 0.1, max_tries: int = 1000) -> RaterStack:
    """Random small stack with a non-empty union of at most ``max_support`` voxels.

    Each rater perturbs a shared random seed region: every voxel within one
    neighborhood step of the region is flipped with probability 0.35, and
    a rater is left empty with probability ``p_empty``.
    """
    for _ in range(max_tries):
        ndim = int(rng.integers(1, 4))
        dims = tuple(int(rng.integers(1, m + 1)) for m in max_dims[3 - ndim:])
        grid = Grid(dims)
        K = int(rng.choice(K_choices))
        n = grid.size
        base = np.zeros(n, dtype=bool)
        base[rng.choice(n, size=int(rng.integers(1, max(1, n // 3) + 1)), replace=False)] = True
        ring = _dilate(base, grid) & ~base
        masks = []
        for _k in range(K):
            if rng.random() < p_empty:
                masks.append(np.zeros(n, dtype=bool))
                continue
            flip = rng.random(n) < 0.35
            masks.append((base & ~(flip & (rng.random(n) < 0.5))) | (ring & flip))
        support = np.any(masks, axis=0)
        if 0 < support.sum() <= max_support:
            return RaterStack.from_arrays([m.reshape(dims) for m in masks])
    raise RuntimeError("could not draw a stack within the support limit")


def _dilate(flat: np.ndarray, grid: Grid) -> np.ndarray:
    vol = flat.reshape(grid.shape3)
    out = vol.copy()
    for d in neighbor_offsets(grid.neighborhood):
        src = tuple(slice(max(0, -o), n - max(0, o)) for o, n in zip(d, vol.shape))
        dst = tuple(slice(max(0, o), n - max(0, -o)) for o, n in zip(d, vol.shape))
        out[dst] |= vol[src]
    return out.reshape(-1)
