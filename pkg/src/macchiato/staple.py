"""STAPLE: hard maximum-likelihood and soft EM variants, plus large-background analysis.

Voxels sharing the same rater-vote pattern are indistinguishable to STAPLE,
so both variants run on the distinct patterns weighted by their multiplicity.
This makes very large background paddings cheap without changing any result.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DegenerateCountsWarning, DomainError
from .grid import BinaryMask, RaterStack, SoftMask

EPS = 1e-8


@dataclass(frozen=True)
class RaterPerformance:
    """Per-rater sensitivity ``p`` and specificity ``q``, clamped to [EPS, 1 - EPS]."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.clip(np.asarray(self.p, dtype=np.float64).ravel(), EPS, 1 - EPS)
        q = np.clip(np.asarray(self.q, dtype=np.float64).ravel(), EPS, 1 - EPS)
        if p.shape != q.shape:
            raise ValueError("p and q must have one value per rater")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def uniform(cls, K: int, p: float = 0.99, q: float = 0.99) -> "RaterPerformance":
        return cls(np.full(K, p), np.full(K, q))

    @property
    def K(self) -> int:
        return self.p.shape[0]

    def permuted(self, order) -> "RaterPerformance":
        return RaterPerformance(self.p[list(order)], self.q[list(order)])


class PriorMode(str, enum.Enum):
    UNINFORMATIVE = "uninformative"
    AVG_OCCURRENCE = "avg"
    POWER = "power"


@dataclass(frozen=True)
class PriorSpec:
    mode: PriorMode = PriorMode.UNINFORMATIVE
    A: float = 0.5
    alpha: int = 0

    @classmethod
    def parse(cls, text: str) -> "PriorSpec":
        """Parse ``uninformative``, ``avg`` or ``power:A:alpha``."""
        if text == "uninformative":
            return cls()
        if text == "avg":
            return cls(PriorMode.AVG_OCCURRENCE)
        if text.startswith("power:"):
            _, a, alpha = text.split(":")
            return cls(PriorMode.POWER, float(a), int(alpha))
        raise ValueError(f"unknown prior {text!r}")

    def resolve(self, stack: RaterStack) -> float:
        N = stack.grid.size
        if self.mode is PriorMode.UNINFORMATIVE:
            w = 0.5
        elif self.mode is PriorMode.AVG_OCCURRENCE:
            w = float(stack.matrix.sum()) / (N * stack.K)
        else:
            if self.A <= 0 or self.alpha < 0:
                raise DomainError("power prior needs A > 0 and a natural exponent")
            w = self.A / float(N) ** self.alpha
        if not 0.0 < w < 1.0:
            raise DomainError(f"resolved prior w={w} is outside (0, 1)")
        return w

    def describe(self) -> str:
        if self.mode is PriorMode.POWER:
            return f"power:{self.A:g}:{self.alpha}"
        return self.mode.value


@dataclass
class EmTrace:
    iterations: int = 0
    deltas: list[float] = field(default_factory=list)
    log_likelihood: list[float] = field(default_factory=list)
    converged: bool = False


@dataclass(frozen=True)
class VotePatterns:
    """Distinct rater-vote columns of a stack with their voxel counts."""

    patterns: np.ndarray  # (P, K) bool
    counts: np.ndarray  # (P,) float64
    inverse: np.ndarray  # (N,) pattern index of every voxel

    @classmethod
    def of(cls, stack: RaterStack) -> "VotePatterns":
        pats, inverse, counts = np.unique(stack.matrix.T, axis=0, return_inverse=True,
                                          return_counts=True)
        return cls(pats.astype(bool), counts.astype(np.float64), inverse.reshape(-1))


def _vote_sums(patterns: np.ndarray, perf: RaterPerformance) -> tuple[np.ndarray, np.ndarray]:
    """Positive and negative log-evidence per pattern.

    ``pos`` collects ln(p/(1-q)) over raters voting 1 and ``neg`` collects
    ln(q/(1-p)) over raters voting 0, so ``logit = logit(w) + pos - neg``.
    Keeping the two sums apart makes symmetric ties exact.
    """
    S = patterns.astype(np.float64)
    up = np.log(perf.p) - np.log1p(-perf.q)
    down = np.log(perf.q) - np.log1p(-perf.p)
    return S @ up, (1.0 - S) @ down


def posterior_logit(pattern, perf: RaterPerformance, w: float) -> float:
    """Logit of the STAPLE posterior for one rater-vote pattern."""
    pattern = np.asarray(pattern, dtype=bool).reshape(1, -1)
    pos, neg = _vote_sums(pattern, perf)
    return float(math.log(w) - math.log1p(-w) + pos[0] - neg[0])


def e_step(patterns: np.ndarray, perf: RaterPerformance, w: float) -> np.ndarray:
    """Posterior foreground probability of each pattern."""
    pos, neg = _vote_sums(patterns, perf)
    return expit(math.log(w) - math.log1p(-w) + pos - neg)


def _checked_ratio(num, den, fallback, what):
    out = np.array(fallback, dtype=np.float64, copy=True)
    ok = den > 0
    if not ok.all():
        warnings.warn(f"zero denominator for {what} of raters {np.flatnonzero(~ok).tolist()}; "
                      "keeping previous value", DegenerateCountsWarning, stacklevel=3)
    out[ok] = num[ok] / den[ok]
    return out


def m_step_ratios(patterns: np.ndarray, counts: np.ndarray, u: np.ndarray,
                  previous: RaterPerformance) -> tuple[np.ndarray, np.ndarray]:
    """Soft sensitivity and specificity before clamping."""
    S = patterns.astype(np.float64)
    wu = counts * u
    wv = counts * (1.0 - u)
    p = _checked_ratio(wu @ S, np.full(S.shape[1], wu.sum()), previous.p, "sensitivity")
    q = _checked_ratio(wv @ (1.0 - S), np.full(S.shape[1], wv.sum()), previous.q, "specificity")
    return p, q


def m_step(patterns: np.ndarray, counts: np.ndarray, u: np.ndarray,
           previous: RaterPerformance) -> RaterPerformance:
    return RaterPerformance(*m_step_ratios(patterns, counts, u, previous))


def log_evidence(patterns, counts, perf: RaterPerformance, w: float) -> float:
    S = patterns.astype(np.float64)
    log_fg = S @ np.log(perf.p) + (1.0 - S) @ np.log1p(-perf.p)
    log_bg = (1.0 - S) @ np.log(perf.q) + S @ np.log1p(-perf.q)
    per = np.logaddexp(math.log(w) + log_fg, math.log1p(-w) + log_bg)
    return float(np.dot(counts, per))


def mml_staple(stack: RaterStack, prior: PriorSpec | None = None,
               init: RaterPerformance | None = None, max_iter: int = 100,
               tol: float = 1e-7) -> tuple[SoftMask, RaterPerformance, EmTrace]:
    """Soft STAPLE by expectation-maximisation of the marginal likelihood."""
    prior = PriorSpec() if prior is None else prior
    perf = RaterPerformance.uniform(stack.K) if init is None else init
    w = prior.resolve(stack)
    vp = VotePatterns.of(stack)
    trace = EmTrace()
    for _ in range(max_iter):
        trace.log_likelihood.append(log_evidence(vp.patterns, vp.counts, perf, w))
        u = e_step(vp.patterns, perf, w)
        new = m_step(vp.patterns, vp.counts, u, perf)
        delta = float(max(np.abs(new.p - perf.p).max(), np.abs(new.q - perf.q).max()))
        perf = new
        trace.iterations += 1
        trace.deltas.append(delta)
        if delta < tol:
            trace.converged = True
            break
    trace.log_likelihood.append(log_evidence(vp.patterns, vp.counts, perf, w))
    u = e_step(vp.patterns, perf, w)
    return SoftMask(stack.grid, u[vp.inverse]), perf, trace


def _hard_decision(patterns: np.ndarray, perf: RaterPerformance) -> np.ndarray:
    pos, neg = _vote_sums(patterns, perf)
    return pos > neg


def _hard_counts(patterns, counts, T):
    S = patterns.astype(np.float64)
    t = T.astype(np.float64)
    tp = (counts * t) @ S
    fn = (counts * t) @ (1.0 - S)
    fp = (counts * (1.0 - t)) @ S
    tn = (counts * (1.0 - t)) @ (1.0 - S)
    return tp, fp, fn, tn


def hard_log_likelihood(patterns, counts, T, perf: RaterPerformance) -> float:
    tp, fp, fn, tn = _hard_counts(patterns, counts, T)
    return float(np.sum(tp * np.log(perf.p) + fn * np.log1p(-perf.p)
                        + tn * np.log(perf.q) + fp * np.log1p(-perf.q)))


def _alternate(vp: VotePatterns, T: np.ndarray, perf: RaterPerformance, K: int,
               max_iter: int, equal_performance: bool | str):
    trace = EmTrace()
    N = float(vp.counts.sum())
    for _ in range(max_iter):
        tp, fp, fn, tn = _hard_counts(vp.patterns, vp.counts, T)
        if equal_performance == "per-rater":
            gamma = (tp + tn) / N
            new = RaterPerformance(gamma, gamma)
        elif equal_performance:
            gamma = np.full(K, (tp + tn).sum() / (N * K))
            new = RaterPerformance(gamma, gamma)
        else:
            p = _checked_ratio(tp, tp + fn, perf.p, "sensitivity")
            q = _checked_ratio(tn, tn + fp, perf.q, "specificity")
            new = RaterPerformance(p, q)
        delta = float(max(np.abs(new.p - perf.p).max(), np.abs(new.q - perf.q).max()))
        perf = new
        T_new = _hard_decision(vp.patterns, perf)
        trace.iterations += 1
        trace.deltas.append(delta)
        trace.log_likelihood.append(hard_log_likelihood(vp.patterns, vp.counts, T_new, perf))
        if np.array_equal(T_new, T):
            trace.converged = True
            break
        T = T_new
    return T, perf, trace


def ml_staple(stack: RaterStack, init: RaterPerformance | None = None, max_iter: int = 100,
              equal_performance: bool | str = False, start: BinaryMask | str | None = None,
              ) -> tuple[BinaryMask, RaterPerformance, EmTrace]:
    """Hard STAPLE: alternate rater parameters and the consensus maximising the likelihood.

    The alternation is a coordinate ascent with several fixed points, so the
    default runs it from the majority vote and from the rater union and keeps
    the run with the higher likelihood (ties keep the majority-vote run).
    ``start`` may instead name one start (``"mv"``, ``"union"``) or give an
    explicit initial mask.

    ``equal_performance=True`` sets every sensitivity and specificity to one
    shared accuracy, the pooled ``(TP + TN) / N``; the decision is then
    ``(S+ - S-) * logit(gamma) > 0``, i.e. the majority vote whenever
    ``gamma > 1/2``. ``equal_performance="per-rater"`` keeps one accuracy per
    rater, which gives a vote weighted by ``logit(gamma_k)``. Both start from
    the majority vote.
    """
    perf0 = RaterPerformance.uniform(stack.K) if init is None else init
    vp = VotePatterns.of(stack)
    if start is None:
        starts = ["mv"] if equal_performance else ["mv", "union"]
    else:
        starts = [start]
    best = None
    for st in starts:
        if isinstance(st, BinaryMask):
            T0 = np.zeros(len(vp.counts), dtype=bool)
            T0[vp.inverse[st.flat]] = True
            if not np.array_equal(T0[vp.inverse], st.flat):
                raise ValueError("start consensus must be a function of the vote pattern")
        elif st == "mv":
            T0 = 2 * vp.patterns.sum(axis=1) > stack.K
        elif st == "union":
            T0 = vp.patterns.any(axis=1)
        else:
            raise ValueError(f"unknown start {st!r}")
        T, perf, trace = _alternate(vp, T0, perf0, stack.K, max_iter, equal_performance)
        ll = hard_log_likelihood(vp.patterns, vp.counts, T, perf)
        if best is None or ll > best[0] + 1e-9 * max(1.0, abs(best[0])):
            best = (ll, T, perf, trace)
    _, T, perf, trace = best
    return BinaryMask(stack.grid, T[vp.inverse]), perf, trace


def limit_logit(pattern, alpha: int, A: float, p, FP, B, N: float) -> tuple[float, int]:
    """Large-background asymptote of the posterior logit.

    ``p``, ``FP`` and ``B = TP + FN`` are per-rater quantities held fixed
    while only the background grows. Returns the asymptotic logit and the
    sign of the leading ``(sum(pattern) - alpha) * ln N`` term, which gives
    the limit of the posterior (``+1``: 1, ``-1``: 0, ``0``: interior).
    """
    pattern = np.asarray(pattern, dtype=bool).ravel()
    p = np.asarray(p, dtype=np.float64)
    FP = np.asarray(FP, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if float(N) ** alpha <= A:
        raise DomainError("need N**alpha > A for a valid prior")
    if (N <= B).any():
        raise DomainError("need N larger than every rater object size")
    sign = int(np.sign(int(pattern.sum()) - alpha))
    if (FP[pattern] <= 0).any():
        return math.inf, sign
    value = (np.log(N - B[pattern]).sum() - math.log(float(N) ** alpha - A) + math.log(A)
             + np.log(p[pattern] / FP[pattern]).sum() + np.log1p(-p[~pattern]).sum())
    return float(value), sign


def specificity_at(N: float, FP, B) -> np.ndarray:
    """Specificity implied by fixed false positives and object sizes on a grid of ``N`` voxels."""
    FP = np.asarray(FP, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    return 1.0 - FP / (N - B)


def soft_counts(stack: RaterStack, u: SoftMask) -> tuple[np.ndarray, np.ndarray]:
    """Per-rater soft false positives and soft object size ``B = sTP + sFN``."""
    S = stack.matrix
    uf = u.flat
    fp = np.array([(1.0 - uf[S[k]]).sum() for k in range(stack.K)])
    B = np.full(stack.K, uf.sum())
    return fp, B
