"""Frechet-mean consensus by greedy block moves over morphological subcrowns.

Both entry points work one connected component of the rater union at a
time. A component's objective only depends on a few per-rater counts, so
moving a block of voxels in or out (hard) or setting it to a shared value
(soft) is an O(K) update:

* hard: ``s_k = |S^k|``, ``i_k = |M & S^k|`` and ``m = |M|``;
* soft: ``s_k``, ``a_k = sum of x over S^k``, ``X1 = sum x`` and ``X2 = sum x**2``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .baselines import mask_average
from .distances import (HARD_KINDS, KERNEL_CODE, DistanceKind, binary_distance,
                        soft_distance)
from .grid import (BinaryMask, ComponentLabels, RaterStack, SoftMask, SubcrownPartition,
                   connected_components, global_distance_map, subcrown_partition)

TIE_TOL = 1e-12
CHECK_TOL = 1e-9


class Heuristic(str, enum.Enum):
    SUBCROWN = "subcrown"
    CROWN = "crown"
    VOXEL = "voxel"


@dataclass(frozen=True)
class MacchiatoConfig:
    """Options shared by the hard and soft consensus.

    ``check`` recomputes the component objective from scratch after every
    accepted move and raises if it drifts from the cached value.
    """

    distance: DistanceKind = DistanceKind.JACCARD
    heuristic: Heuristic = Heuristic.SUBCROWN
    scalar_minimizer_tol: float = 1e-6
    max_sweeps: int = 100
    scan_points: int = 20
    check: bool = False

    def __post_init__(self):
        object.__setattr__(self, "distance", DistanceKind(self.distance))
        object.__setattr__(self, "heuristic", Heuristic(self.heuristic))
        if self.max_sweeps < 1 or self.scan_points < 1:
            raise ValueError("max_sweeps and scan_points must be positive")

    def as_dict(self) -> dict:
        return {"distance": self.distance.value, "heuristic": self.heuristic.value,
                "scalar_minimizer_tol": self.scalar_minimizer_tol,
                "max_sweeps": self.max_sweeps, "scan_points": self.scan_points}


@dataclass
class ComponentTrace:
    """Objective of one component at the start of each pass and after every accepted move."""

    component_id: int
    passes: dict[str, list[float]] = field(default_factory=dict)
    sweeps: int = 0
    choice: str = ""


@dataclass
class FusionResult:
    method: str
    mask: BinaryMask | SoftMask
    lmsd: float | None = None
    performance: object | None = None
    config: dict = field(default_factory=dict)
    component_lmsd: list[float] = field(default_factory=list)
    traces: list[ComponentTrace] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def is_soft(self) -> bool:
        return isinstance(self.mask, SoftMask)

    def size(self) -> float:
        """Foreground count (hard) or volume (soft)."""
        return self.mask.volume() if self.is_soft else float(self.mask.count())


def _blocks(part: SubcrownPartition, heuristic: Heuristic) -> list[tuple[int, np.ndarray]]:
    """Ordered ``(td, voxels)`` blocks for a heuristic."""
    if heuristic is Heuristic.SUBCROWN:
        return [(e.td, e.voxels) for e in part.entries]
    if heuristic is Heuristic.CROWN:
        return part.crowns()
    return [(e.td, e.voxels[j:j + 1]) for e in part.entries for j in range(len(e.voxels))]


def _local(vox: np.ndarray, blocks):
    pos = {int(v): j for j, v in enumerate(vox)}
    return [(td, np.array([pos[int(v)] for v in b], dtype=np.intp)) for td, b in blocks]


# ---------------------------------------------------------------- hard

def _hard_value(kind: DistanceKind, s, i, m: float) -> float:
    if kind is DistanceKind.HAMMING:
        return float(np.mean(s + m - 2.0 * i))
    if kind is DistanceKind.JACCARD:
        den = s + m - i
        num = s + m - 2.0 * i
    else:
        den = s + m
        num = den - 2.0 * i
    d = np.divide(num, den, out=np.zeros_like(den), where=den > 0)
    return float(np.mean(d * d))


class HardState:
    """Candidate on one component with cached intersection counts."""

    def __init__(self, kind: DistanceKind, sub: np.ndarray, member: np.ndarray):
        self.kind = kind
        self.sub = sub  # (K, n) bool
        self.s = sub.sum(axis=1).astype(np.float64)
        self.member = member.copy()
        self.i = (sub & member).sum(axis=1).astype(np.float64)
        self.m = float(member.sum())
        self.value = _hard_value(kind, self.s, self.i, self.m)

    def delta_counts(self, block: np.ndarray):
        return self.sub[:, block].sum(axis=1).astype(np.float64), float(len(block))

    def trial(self, block: np.ndarray, add: bool) -> float:
        ov, n = self.delta_counts(block)
        sign = 1.0 if add else -1.0
        return _hard_value(self.kind, self.s, self.i + sign * ov, self.m + sign * n)

    def apply(self, block: np.ndarray, add: bool, value: float):
        ov, n = self.delta_counts(block)
        sign = 1.0 if add else -1.0
        self.i += sign * ov
        self.m += sign * n
        self.member[block] = add
        self.value = value

    def recompute(self) -> float:
        K, n = self.sub.shape
        cand = np.flatnonzero(self.member)
        acc = 0.0
        for k in range(K):
            d = binary_distance(self.kind, cand, np.flatnonzero(self.sub[k]))
            acc += d if self.kind is DistanceKind.HAMMING else d * d
        return acc / K


def _greedy(state: HardState, order, add: bool, max_sweeps: int, check: bool,
            history: list[float]) -> int:
    sweeps = 0
    changed = True
    while changed and sweeps < max_sweeps:
        changed = False
        sweeps += 1
        for _, block in order:
            if bool(state.member[block[0]]) == add:
                continue
            v = state.trial(block, add)
            if v < state.value - TIE_TOL:
                state.apply(block, add, v)
                history.append(v)
                changed = True
                if check:
                    _check(state)
    return sweeps


def _check(state):
    direct = state.recompute()
    if abs(direct - state.value) > CHECK_TOL:
        raise AssertionError(f"cached objective {state.value} drifted from {direct}")


def _hard_component(kind, sub, blocks, cfg: MacchiatoConfig, trace: ComponentTrace):
    n = sub.shape[1]
    shrink = HardState(kind, sub, np.ones(n, dtype=bool))
    trace.passes["shrink"] = [shrink.value]
    desc = sorted(blocks, key=lambda b: -b[0])  # stable: group order kept inside a crown
    trace.sweeps = _greedy(shrink, desc, False, cfg.max_sweeps, cfg.check, trace.passes["shrink"])

    td_min = min(td for td, _ in blocks)
    seed = np.zeros(n, dtype=bool)
    for td, b in blocks:
        if td == td_min:
            seed[b] = True
    grow = HardState(kind, sub, seed)
    trace.passes["grow"] = [grow.value]
    trace.sweeps += _greedy(grow, blocks, True, cfg.max_sweeps, cfg.check, trace.passes["grow"])

    empty = _hard_value(kind, shrink.s, np.zeros_like(shrink.s), 0.0)
    best, value, trace.choice = shrink.member, shrink.value, "union"
    if grow.value < value - TIE_TOL:
        best, value, trace.choice = grow.member, grow.value, "intersection"
    if empty < value - TIE_TOL:
        best, value, trace.choice = np.zeros(n, dtype=bool), empty, "empty"
    return best, value


def _prepare(stack: RaterStack, labels: ComponentLabels | None):
    labels = connected_components(stack) if labels is None else labels
    D = global_distance_map(stack, labels)
    return labels, D


def hard_consensus(stack: RaterStack, cfg: MacchiatoConfig | None = None,
                   labels: ComponentLabels | None = None) -> FusionResult:
    """Hard consensus minimising the local mean squared set distance.

    Each component is optimised twice: shrinking from the rater union
    (blocks of decreasing ``td``) and growing from the lowest-distance crown
    (blocks of increasing ``td``). A block moves only if the objective drops
    by more than 1e-12, and sweeps repeat until none does. The component
    keeps the best of the shrunk set, the grown set and the empty set, with
    ties resolved in that order.
    """
    cfg = MacchiatoConfig() if cfg is None else cfg
    if cfg.distance not in HARD_KINDS:
        raise ValueError(f"{cfg.distance.value} is not a hard set distance")
    labels, D = _prepare(stack, labels)
    out = np.zeros(stack.grid.size, dtype=bool)
    result = FusionResult(f"macchiato-{cfg.distance.value}", BinaryMask.empty(stack.grid),
                          config=cfg.as_dict())
    for c in range(1, labels.component_count + 1):
        vox = labels.members[c]
        part = subcrown_partition(stack, D, labels, c)
        blocks = _local(vox, _blocks(part, cfg.heuristic))
        trace = ComponentTrace(c)
        best, value = _hard_component(cfg.distance, stack.matrix[:, vox], blocks, cfg, trace)
        out[vox[best]] = True
        result.component_lmsd.append(value)
        result.traces.append(trace)
    result.mask = BinaryMask(stack.grid, out)
    result.lmsd = float(sum(result.component_lmsd))
    return result


# ---------------------------------------------------------------- soft

class OptState:
    """Soft candidate on one component with cached sums.

    ``x`` holds the component values, ``a[k]`` the sum of ``x`` over rater
    ``k``'s voxels, ``x1``/``x2`` the sum of ``x`` and of ``x**2``.
    """

    def __init__(self, kind: DistanceKind, sub: np.ndarray, x: np.ndarray):
        self.kind = kind
        self.code = KERNEL_CODE[kind]
        self.sub = sub
        self.s = sub.sum(axis=1).astype(np.float64)
        self.x = np.array(x, dtype=np.float64)
        self.a = sub.astype(np.float64) @ self.x
        self.x1 = float(self.x.sum())
        self.x2 = float(self.x @ self.x)
        self.value = self.objective_at(None, None)

    def block_rest(self, block: np.ndarray):
        xb = self.x[block]
        overlap = self.sub[:, block].sum(axis=1).astype(np.float64)
        a_rest = self.a - self.sub[:, block].astype(np.float64) @ xb
        return (overlap, a_rest, self.x1 - float(xb.sum()), self.x2 - float(xb @ xb),
                float(len(block)))

    def objective_at(self, block, x) -> float:
        if block is None:
            return _kernels.soft_objective(self.code, self.s, self.a, np.zeros_like(self.s),
                                           self.x1, self.x2, 0.0, 0.0)
        overlap, a_rest, x1r, x2r, size = self.block_rest(block)
        return _kernels.soft_objective(self.code, self.s, a_rest, overlap, x1r, x2r, size, x)

    def set_block(self, block: np.ndarray, x: float, value: float):
        overlap, a_rest, x1r, x2r, size = self.block_rest(block)
        self.a = a_rest + overlap * x
        self.x1 = x1r + size * x
        self.x2 = x2r + size * x * x
        self.x[block] = x
        self.value = value

    def recompute(self) -> float:
        K = self.sub.shape[0]
        acc = 0.0
        for k in range(K):
            d = soft_distance(self.kind, self.x, self.sub[k].astype(np.float64))
            acc += d * d
        return acc / K


def minimize_subcrown_value(state: OptState, block: np.ndarray, kind: DistanceKind | None = None,
                            tol: float = 1e-6, grid: int = 20) -> tuple[float, float]:
    """Best shared value of ``block`` in [0, 1] with everything else held fixed.

    Returns ``(x, objective)``. The endpoints and the current block value
    (its mean when the block is not uniform) are always evaluated, so the
    result is never worse than any of them.
    """
    if kind is not None and DistanceKind(kind) is not state.kind:
        raise ValueError("state was built for a different distance")
    block = np.asarray(block, dtype=np.intp)
    if block.size == 0:
        raise ValueError("empty block")
    overlap, a_rest, x1r, x2r, size = state.block_rest(block)
    incumbent = float(state.x[block].mean())
    x, f = _kernels.minimize_block(state.code, state.s, a_rest, overlap, x1r, x2r, size,
                                   incumbent, tol, grid)
    return float(x), float(f)


def _soft_component(kind, sub, x0, blocks, cfg: MacchiatoConfig, trace: ComponentTrace):
    state = OptState(kind, sub, x0)
    history = [state.value]
    trace.passes["sweep"] = history
    for sweep in range(cfg.max_sweeps):
        start = state.value
        for _, block in blocks:
            x, f = minimize_subcrown_value(state, block, tol=cfg.scalar_minimizer_tol,
                                           grid=cfg.scan_points)
            if f < state.value - TIE_TOL:
                state.set_block(block, x, f)
                history.append(f)
                if cfg.check:
                    _check(state)
        trace.sweeps = sweep + 1
        if start - state.value < TIE_TOL:
            break
    trace.choice = "sweep"
    return state.x, state.value


def soft_consensus(stack: RaterStack, cfg: MacchiatoConfig | None = None,
                   labels: ComponentLabels | None = None) -> FusionResult:
    """Soft consensus minimising the mean squared surrogate distance.

    Starts from the mask average and sweeps blocks by increasing ``td``,
    setting each block to its best shared value. Sweeps repeat until one
    gains less than 1e-12 or ``max_sweeps`` is reached.
    """
    cfg = MacchiatoConfig(DistanceKind.TANIMOTO) if cfg is None else cfg
    if not cfg.distance.is_soft:
        raise ValueError(f"{cfg.distance.value} is not a soft surrogate")
    labels, D = _prepare(stack, labels)
    avg = mask_average(stack).flat
    out = np.zeros(stack.grid.size, dtype=np.float64)
    result = FusionResult(f"macchiato-{cfg.distance.value}", mask_average(stack),
                          config=cfg.as_dict())
    for c in range(1, labels.component_count + 1):
        vox = labels.members[c]
        part = subcrown_partition(stack, D, labels, c)
        blocks = _local(vox, _blocks(part, cfg.heuristic))
        trace = ComponentTrace(c)
        x, value = _soft_component(cfg.distance, stack.matrix[:, vox], avg[vox], blocks, cfg,
                                   trace)
        out[vox] = x
        result.component_lmsd.append(value)
        result.traces.append(trace)
    result.mask = SoftMask(stack.grid, out)
    result.lmsd = float(sum(result.component_lmsd))
    return result


def consensus(stack: RaterStack, cfg: MacchiatoConfig) -> FusionResult:
    """Dispatch to :func:`hard_consensus` or :func:`soft_consensus` by distance family."""
    if cfg.distance.is_soft:
        return soft_consensus(stack, cfg)
    return hard_consensus(stack, cfg)


def block_values(result: FusionResult, stack: RaterStack) -> list[float]:
    """Shared value of every subcrown of a soft result (mean when not uniform)."""
    labels = connected_components(stack)
    D = global_distance_map(stack, labels)
    vals = result.mask.flat
    out = []
    for c in range(1, labels.component_count + 1):
        for e in subcrown_partition(stack, D, labels, c).entries:
            out.append(float(vals[e.voxels].mean()))
    return out
