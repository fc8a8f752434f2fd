"""Voxel grids, mask containers and the morphological crown decomposition.

Masks are stored as NumPy arrays shaped like the grid (row-major); voxel
indices exposed to callers are flat row-major indices.

Distances on the grid are unit-step counts under the grid connectivity
(city-block for N4/N6, chessboard for N8/N26). Paths may leave the rater
union; since a shortest monotone path between two voxels never leaves their
bounding box, each component's distance maps are computed on its bounding
box only.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import EmptySourceMask, GridMismatchError

UNSET = -1


class Neighborhood(str, enum.Enum):
    N2 = "n2"
    N4 = "n4"
    N8 = "n8"
    N6 = "n6"
    N26 = "n26"
    SLICEWISE_2D = "slicewise"

    @property
    def ndim(self) -> int:
        return {"n2": 1, "n4": 2, "n8": 2, "n6": 3, "n26": 3, "slicewise": 3}[self.value]


DEFAULT_NEIGHBORHOOD = {1: Neighborhood.N2, 2: Neighborhood.N8, 3: Neighborhood.N26}


def neighbor_offsets(neighborhood: Neighborhood) -> np.ndarray:
    """Neighbor offsets as an ``(M, 3)`` array in padded 3D coordinates.

    Grids with fewer than three axes are padded with leading unit axes, so
    1D and 2D offsets live in the trailing coordinates. ``SLICEWISE_2D``
    slices along axis 0: no offset moves between slices.
    """
    nb = Neighborhood(neighborhood)
    offs = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        if d == (0, 0, 0):
            continue
        nz = sum(v != 0 for v in d)
        if nb is Neighborhood.N2:
            keep = d[0] == 0 and d[1] == 0
        elif nb is Neighborhood.N4:
            keep = d[0] == 0 and nz == 1
        elif nb in (Neighborhood.N8, Neighborhood.SLICEWISE_2D):
            keep = d[0] == 0
        elif nb is Neighborhood.N6:
            keep = nz == 1
        else:
            keep = True
        if keep:
            offs.append(d)
    return np.array(offs, dtype=np.intp)


def _structure(neighborhood: Neighborhood) -> np.ndarray:
    st = np.zeros((3, 3, 3), dtype=bool)
    st[1, 1, 1] = True
    for d in neighbor_offsets(neighborhood):
        st[tuple(d + 1)] = True
    return st


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    neighborhood: Neighborhood = None  # type: ignore[assignment]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not 1 <= len(dims) <= 3 or any(d < 1 for d in dims):
            raise ValueError(f"grid dims must be 1-3 positive extents, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        nb = self.neighborhood
        nb = DEFAULT_NEIGHBORHOOD[len(dims)] if nb is None else Neighborhood(nb)
        if nb.ndim != len(dims):
            raise ValueError(f"neighborhood {nb.value} needs {nb.ndim} axes, grid has {len(dims)}")
        object.__setattr__(self, "neighborhood", nb)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape3(self) -> tuple[int, int, int]:
        return (1,) * (3 - len(self.dims)) + self.dims

    def with_neighborhood(self, neighborhood) -> "Grid":
        return Grid(self.dims, Neighborhood(neighborhood))


def _check_grid(a: Grid, b: Grid):
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size != self.grid.size:
            raise ValueError(f"mask has {v.size} values, grid needs {self.grid.size}")
        if v.dtype != bool:
            if not np.isin(v, (0, 1)).all():
                raise ValueError("binary mask values must be 0 or 1")
        v = np.ascontiguousarray(v.reshape(self.grid.dims).astype(bool))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_indices(cls, grid: Grid, indices: Iterable[int]) -> "BinaryMask":
        flat = np.zeros(grid.size, dtype=bool)
        flat[list(indices)] = True
        return cls(grid, flat)

    @classmethod
    def empty(cls, grid: Grid) -> "BinaryMask":
        return cls(grid, np.zeros(grid.size, dtype=bool))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def indices(self) -> list[int]:
        return np.flatnonzero(self.flat).tolist()

    def count(self) -> int:
        return int(self.flat.sum())

    def __eq__(self, other):
        return (isinstance(other, BinaryMask) and self.grid == other.grid
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"BinaryMask(dims={self.grid.dims}, foreground={self.count()})"


@dataclass(frozen=True, eq=False)
class SoftMask:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != self.grid.size:
            raise ValueError(f"mask has {v.size} values, grid needs {self.grid.size}")
        if np.isnan(v).any() or (v < 0).any() or (v > 1).any():
            raise ValueError("soft mask values must lie in [0, 1]")
        v = np.ascontiguousarray(v.reshape(self.grid.dims))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def volume(self) -> float:
        return float(self.flat.sum())

    def threshold(self, level: float = 0.5) -> BinaryMask:
        return BinaryMask(self.grid, self.flat > level)

    def __eq__(self, other):
        return (isinstance(other, SoftMask) and self.grid == other.grid
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"SoftMask(dims={self.grid.dims}, volume={self.volume():.4g})"


@dataclass(frozen=True, eq=False)
class RaterStack:
    """Ordered rater masks sharing one grid."""

    grid: Grid
    masks: tuple[BinaryMask, ...]

    def __post_init__(self):
        masks = tuple(self.masks)
        if not masks:
            raise ValueError("a rater stack needs at least one mask")
        for m in masks:
            _check_grid(self.grid, m.grid)
        object.__setattr__(self, "masks", masks)

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], neighborhood=None) -> "RaterStack":
        arrays = [np.asarray(a) for a in arrays]
        grid = Grid(arrays[0].shape, neighborhood)
        return cls(grid, tuple(BinaryMask(grid, a) for a in arrays))

    @classmethod
    def from_indices(cls, grid: Grid, index_sets: Sequence[Iterable[int]]) -> "RaterStack":
        return cls(grid, tuple(BinaryMask.from_indices(grid, s) for s in index_sets))

    @property
    def K(self) -> int:
        return len(self.masks)

    @cached_property
    def matrix(self) -> np.ndarray:
        """``(K, N)`` boolean matrix of flattened rater masks."""
        m = np.stack([mk.flat for mk in self.masks])
        m.setflags(write=False)
        return m

    @cached_property
    def counts(self) -> np.ndarray:
        """Per-voxel positive vote count, flattened."""
        c = self.matrix.sum(axis=0).astype(np.int64)
        c.setflags(write=False)
        return c

    @cached_property
    def support(self) -> np.ndarray:
        """Flat boolean support of the rater union."""
        s = self.counts > 0
        s.setflags(write=False)
        return s

    def union(self) -> BinaryMask:
        return BinaryMask(self.grid, self.support)

    def with_neighborhood(self, neighborhood) -> "RaterStack":
        g = self.grid.with_neighborhood(neighborhood)
        return RaterStack(g, tuple(BinaryMask(g, m.values) for m in self.masks))


@dataclass(frozen=True, eq=False)
class ComponentLabels:
    grid: Grid
    labels: np.ndarray  # flat int64, 0 outside the union
    component_count: int

    def voxels(self, component_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == component_id)

    @cached_property
    def members(self) -> list[np.ndarray]:
        """Flat voxel indices per component, index 0 unused."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.component_count + 2))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.component_count + 1)]


def label_mask(mask: np.ndarray, grid: Grid) -> tuple[np.ndarray, int]:
    """Label a flat boolean array in scan order of each component's first voxel."""
    vol = np.asarray(mask, dtype=bool).reshape(grid.shape3)
    raw, n = ndimage.label(vol, structure=_structure(grid.neighborhood))
    raw = raw.reshape(-1).astype(np.int64)
    if n == 0:
        return raw, 0
    present, first = np.unique(raw, return_index=True)
    keep = present > 0
    present, first = present[keep], first[keep]
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[present[np.argsort(first, kind="stable")]] = np.arange(1, len(present) + 1)
    return remap[raw], int(len(present))


def connected_components(stack: RaterStack) -> ComponentLabels:
    labels, n = label_mask(stack.support, stack.grid)
    labels.setflags(write=False)
    return ComponentLabels(stack.grid, labels, n)


def distance_map(mask: BinaryMask, grid: Grid | None = None, domain=None) -> np.ndarray:
    """Unit-step distance from ``mask`` over the full grid.

    Returns a flat int64 array holding the distance on ``domain`` (flat
    indices or boolean array; default every voxel) and ``UNSET`` elsewhere
    or where the source cannot be reached.
    """
    grid = mask.grid if grid is None else grid
    _check_grid(grid, mask.grid)
    if not mask.flat.any():
        raise EmptySourceMask("distance map requested from an empty mask")
    src = np.ascontiguousarray(mask.values.reshape(grid.shape3).astype(np.uint8))
    dist = _kernels.bfs_distance(src, neighbor_offsets(grid.neighborhood)).reshape(-1)
    if domain is None:
        return dist
    out = np.full(grid.size, UNSET, dtype=np.int64)
    dom = np.asarray(domain)
    out[dom] = dist[dom]
    return out


def _bbox(coords: np.ndarray) -> tuple[slice, ...]:
    lo = coords.min(axis=0)
    hi = coords.max(axis=0) + 1
    return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))


def component_distances(stack: RaterStack, voxels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-rater distance maps for one component.

    Returns ``(dist, contributing)``: ``dist`` is ``(K, len(voxels))`` with
    ``UNSET`` rows for raters that are empty on the component, and
    ``contributing`` flags the raters with a non-empty restriction.
    """
    grid = stack.grid
    K = stack.K
    coords = np.stack(np.unravel_index(voxels, grid.shape3), axis=1)
    box = _bbox(coords)
    local = coords - np.array([s.start for s in box])
    box_shape = tuple(s.stop - s.start for s in box)
    offsets = neighbor_offsets(grid.neighborhood)
    sub = stack.matrix[:, voxels]
    dist = np.full((K, len(voxels)), UNSET, dtype=np.int64)
    contributing = sub.any(axis=1)
    for k in np.flatnonzero(contributing):
        src = np.zeros(box_shape, dtype=np.uint8)
        lk = local[sub[k]]
        src[lk[:, 0], lk[:, 1], lk[:, 2]] = 1
        d = _kernels.bfs_distance(src, offsets)
        dist[k] = d[local[:, 0], local[:, 1], local[:, 2]]
    return dist, contributing


def global_distance_map(stack: RaterStack, labels: ComponentLabels | None = None) -> np.ndarray:
    """Sum of per-rater distance maps on the union, per component.

    Raters empty on a component are left out of that component's sum.
    Values outside the union are ``UNSET``.
    """
    labels = connected_components(stack) if labels is None else labels
    out = np.full(stack.grid.size, UNSET, dtype=np.int64)
    for c in range(1, labels.component_count + 1):
        vox = labels.members[c]
        dist, contributing = component_distances(stack, vox)
        out[vox] = dist[contributing].sum(axis=0)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SubcrownEntry:
    td: int
    group: int  # bit k set iff rater k segmented these voxels
    voxels: np.ndarray = field(compare=False)

    def raters(self) -> tuple[int, ...]:
        return tuple(k for k in range(self.group.bit_length()) if self.group >> k & 1)


@dataclass(frozen=True)
class SubcrownPartition:
    component_id: int
    entries: tuple[SubcrownEntry, ...]

    def crowns(self) -> list[tuple[int, np.ndarray]]:
        """Merge entries by equal ``td`` (voxels sorted ascending)."""
        out: list[tuple[int, np.ndarray]] = []
        for td, group in itertools.groupby(self.entries, key=lambda e: e.td):
            vox = np.sort(np.concatenate([e.voxels for e in group]))
            out.append((td, vox))
        return out


def group_codes(stack: RaterStack, voxels: np.ndarray) -> np.ndarray:
    weights = (1 << np.arange(stack.K, dtype=np.int64))
    return (stack.matrix[:, voxels].astype(np.int64) * weights[:, None]).sum(axis=0)


def subcrown_partition(stack: RaterStack, D: np.ndarray, labels: ComponentLabels,
                       component_id: int) -> SubcrownPartition:
    vox = labels.members[component_id]
    td = np.asarray(D)[vox]
    codes = group_codes(stack, vox)
    order = np.lexsort((vox, codes, td))
    vox, td, codes = vox[order], td[order], codes[order]
    entries = []
    if len(vox):
        cut = np.flatnonzero((np.diff(td) != 0) | (np.diff(codes) != 0)) + 1
        for chunk in np.split(np.arange(len(vox)), cut):
            entries.append(SubcrownEntry(int(td[chunk[0]]), int(codes[chunk[0]]), vox[chunk]))
    return SubcrownPartition(component_id, tuple(entries))


def _pad_array(arr: np.ndarray, margin) -> np.ndarray:
    pads = _margins(margin, arr.ndim)
    return np.pad(arr, pads, mode="constant", constant_values=0)


def _margins(margin, ndim: int) -> list[tuple[int, int]]:
    if np.isscalar(margin):
        margin = [(int(margin), int(margin))] * ndim
    out = []
    for m in margin:
        if np.isscalar(m):
            m = (int(m), int(m))
        lo, hi = int(m[0]), int(m[1])
        if lo < 0 or hi < 0:
            raise ValueError("padding margins must be non-negative")
        out.append((lo, hi))
    if len(out) != ndim:
        raise ValueError(f"expected {ndim} margins, got {len(out)}")
    return out


def pad_background(obj, margin):
    """Embed a mask or stack in a larger all-background grid.

    ``margin`` is a scalar (same on every side), one value per axis, or a
    ``(before, after)`` pair per axis.
    """
    if isinstance(obj, RaterStack):
        padded = [_pad_array(m.values, margin) for m in obj.masks]
        g = Grid(padded[0].shape, obj.grid.neighborhood)
        return RaterStack(g, tuple(BinaryMask(g, p) for p in padded))
    if isinstance(obj, (BinaryMask, SoftMask)):
        p = _pad_array(obj.values, margin)
        return type(obj)(Grid(p.shape, obj.grid.neighborhood), p)
    raise TypeError(f"cannot pad {type(obj).__name__}")


def crop(obj, margin):
    """Inverse of :func:`pad_background` for the same ``margin``."""
    values = obj.masks[0].values if isinstance(obj, RaterStack) else obj.values
    pads = _margins(margin, values.ndim)
    sl = tuple(slice(lo, n - hi) for (lo, hi), n in zip(pads, values.shape))
    if isinstance(obj, RaterStack):
        arrays = [m.values[sl] for m in obj.masks]
        g = Grid(arrays[0].shape, obj.grid.neighborhood)
        return RaterStack(g, tuple(BinaryMask(g, a) for a in arrays))
    v = obj.values[sl]
    return type(obj)(Grid(v.shape, obj.grid.neighborhood), v)
