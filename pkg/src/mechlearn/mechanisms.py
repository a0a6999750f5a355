"""Monotone threshold mechanisms: construction, evaluation and certificates.

A mechanism partitions the belief support into intervals. On each interval
a reported type is served according to one rule, written in terms of the
others' aggregate likelihood ratio ``LR_{-i}``:

``exclude``
    Never allocate.
``pooled(kappa, tau)``
    Allocate with probability ``kappa`` iff ``LR_{-i} >= tau``.
``efficient``
    Allocate iff ``LR(s_i) * LR_{-i} >= 1``.

Each pooled piece induces a line ``a s - b`` in the indirect utility with
``a = kappa (P+[LR >= tau] + P-[LR >= tau])`` and ``b = kappa P-[LR >= tau]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
from scipy.optimize import brentq

from .distributions import BeliefDistribution, from_config
from .exceptions import (
    CertificateFailed,
    LineInfeasible,
    NoBracket,
    NonConvexUtility,
    NoRoot,
    NotLogConcave,
    WrongMarketSize,
)
from .first_best import (
    DEFAULT_K,
    EnvelopeBounds,
    asymptotic_envelope,
    efficient_log_threshold,
    efficient_slope,
    efficient_utility,
    gauss_legendre,
    tail_value,
    unit_grid,
)
from .likelihood import DEFAULT_POINTS, DEFAULT_RANGE, OthersLR, others_lr
from .optimizer import IndirectUtility, ObjectiveWeights, check_extreme_structure, weight_density

EXCLUDE, POOLED, EFFICIENT = "exclude", "pooled", "efficient"
KINDS = (EXCLUDE, POOLED, EFFICIENT)

LINE_TOL = 1e-8
CERT_TOL = 1e-8
CERT_GRID = 401
BISECT_ITERS = 200


def _log(tau) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(tau, dtype=float))


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdPiece:
    """Allocation rule on the report interval ``[lo, hi]``."""

    lo: float
    hi: float
    kind: str
    kappa: float = 0.0
    tau: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown piece kind {self.kind!r}")
        if not self.hi >= self.lo:
            raise ValueError("piece interval is reversed")
        if self.kind == POOLED and not (0.0 <= self.kappa <= 1.0 and self.tau >= 0.0):
            raise ValueError("pooled piece needs kappa in [0, 1] and tau >= 0")

    @classmethod
    def exclude(cls, lo, hi):
        return cls(float(lo), float(hi), EXCLUDE, 0.0, math.inf)

    @classmethod
    def pooled(cls, lo, hi, kappa, tau):
        return cls(float(lo), float(hi), POOLED, float(kappa), float(tau))

    @classmethod
    def efficient(cls, lo, hi):
        return cls(float(lo), float(hi), EFFICIENT, 1.0, math.nan)

    @property
    def deterministic(self) -> bool:
        return self.kind != POOLED or self.kappa in (0.0, 1.0)

    def to_dict(self) -> dict[str, Any]:
        tau = None if self.kind == EFFICIENT else ("inf" if math.isinf(self.tau) else self.tau)
        return {"interval": [self.lo, self.hi], "kind": self.kind, "kappa": self.kappa, "tau": tau}

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdPiece":
        lo, hi = map(float, data["interval"])
        kind = data["kind"]
        if kind == EXCLUDE:
            return cls.exclude(lo, hi)
        if kind == EFFICIENT:
            return cls.efficient(lo, hi)
        tau = data.get("tau")
        return cls.pooled(lo, hi, float(data.get("kappa", 1.0)), math.inf if tau in (None, "inf") else float(tau))


@dataclass(frozen=True, eq=False)
class MonotoneThresholdMechanism:
    """Ordered, contiguous threshold pieces covering the belief support.

    Construction checks contiguity and that the scaled interim allocation
    (the slope of the indirect utility) is nondecreasing across reports.
    """

    pieces: tuple
    n: int
    distribution: BeliefDistribution
    n_points: int = DEFAULT_POINTS
    log_range: float = DEFAULT_RANGE
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if self.n < 1:
            raise ValueError("market size must be positive")
        if not self.pieces:
            raise ValueError("mechanism needs at least one piece")
        lo, hi = self.distribution.support
        if abs(self.pieces[0].lo - lo) > 1e-9 or abs(self.pieces[-1].hi - hi) > 1e-9:
            raise ValueError("pieces must cover the belief support")
        for left, right in zip(self.pieces[:-1], self.pieces[1:]):
            if abs(left.hi - right.lo) > 1e-9:
                raise ValueError("pieces must be contiguous")
        if self.monotone_slack() < -LINE_TOL:
            raise ValueError("interim allocation must be nondecreasing in the report")

    @property
    def lr(self) -> OthersLR:
        return others_lr(self.distribution, self.n - 1, self.n_points, self.log_range)

    @property
    def deterministic(self) -> bool:
        return all(p.deterministic for p in self.pieces)

    def piece_index(self, s) -> np.ndarray:
        his = np.array([p.hi for p in self.pieces[:-1]])
        return np.searchsorted(his, np.asarray(s, dtype=float), side="left")

    def interim_line(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Slope ``a(t)`` and intercept ``b(t)`` of a report-``t`` deviation.

        A type ``s`` reporting ``t`` gets utility ``a(t) s - b(t)``.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self.piece_index(t)
        a, b = np.zeros_like(t), np.zeros_like(t)
        for k, p in enumerate(self.pieces):
            sel = idx == k
            if not np.any(sel) or p.kind == EXCLUDE:
                continue
            if p.kind == POOLED:
                a[sel], b[sel] = self.lr.slope_intercept(_log(p.tau), p.kappa)
            else:
                tp, tm = self.lr.tails(efficient_log_threshold(t[sel]))
                a[sel], b[sel] = tp + tm, tm
        return a, b

    def piece_slopes(self) -> list[tuple[float, float]]:
        """Slope at the left and right end of each piece."""
        out = []
        for p in self.pieces:
            if p.kind == EXCLUDE:
                out.append((0.0, 0.0))
            elif p.kind == POOLED:
                a = float(self.lr.slope_intercept(_log(p.tau), p.kappa)[0])
                out.append((a, a))
            else:
                out.append(tuple(float(x) for x in efficient_slope(self.lr, np.array([p.lo, p.hi]))))
        return out

    def monotone_slack(self) -> float:
        ends = self.piece_slopes()
        gaps = [right[0] - left[1] for left, right in zip(ends[:-1], ends[1:])]
        return float(min(gaps, default=0.0))

    def allocate_log(self, s, log_lr_others) -> np.ndarray:
        """Allocation probability given own belief and others' log LR."""
        s = np.asarray(s, dtype=float)
        y = np.asarray(log_lr_others, dtype=float)
        s, y = np.broadcast_arrays(s, y)
        idx = self.piece_index(s)
        out = np.zeros(s.shape)
        for k, p in enumerate(self.pieces):
            sel = idx == k
            if not np.any(sel) or p.kind == EXCLUDE:
                continue
            if p.kind == POOLED:
                out[sel] = p.kappa * (y[sel] >= _log(p.tau))
            else:
                out[sel] = (y[sel] >= efficient_log_threshold(s[sel])).astype(float)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "pieces": [p.to_dict() for p in self.pieces],
            "n": self.n,
            "distribution": self.distribution.to_config(),
        }

    @classmethod
    def from_dict(cls, data: dict, distribution: BeliefDistribution | None = None, **kw) -> "MonotoneThresholdMechanism":
        d = distribution if distribution is not None else from_config(data["distribution"])
        pieces = tuple(ThresholdPiece.from_dict(p) for p in data["pieces"])
        return cls(pieces, int(data["n"]), d, **kw)


def _build(pieces: Iterable[ThresholdPiece], n, d, n_points, log_range, **meta) -> MonotoneThresholdMechanism:
    lo, hi = d.support
    kept = []
    for p in pieces:
        a, b = max(p.lo, lo), min(p.hi, hi)
        if b - a <= 1e-12:
            continue
        p = ThresholdPiece(a, b, p.kind, p.kappa, p.tau)
        if kept and kept[-1].kind == p.kind and kept[-1].kappa == p.kappa and (
            kept[-1].tau == p.tau or p.kind == EFFICIENT
        ):
            p = ThresholdPiece(kept[-1].lo, b, p.kind, p.kappa, p.tau)
            kept.pop()
        kept.append(p)
    if kept:
        kept[0] = ThresholdPiece(lo, kept[0].hi, kept[0].kind, kept[0].kappa, kept[0].tau)
        kept[-1] = ThresholdPiece(kept[-1].lo, hi, kept[-1].kind, kept[-1].kappa, kept[-1].tau)
        for i in range(1, len(kept)):
            prev = kept[i - 1]
            kept[i] = ThresholdPiece(prev.hi, kept[i].hi, kept[i].kind, kept[i].kappa, kept[i].tau)
    return MonotoneThresholdMechanism(tuple(kept), n, d, n_points, log_range, dict(meta))


def efficient_mechanism(d, n, n_points=DEFAULT_POINTS, log_range=DEFAULT_RANGE):
    lo, hi = d.support
    return MonotoneThresholdMechanism((ThresholdPiece.efficient(lo, hi),), n, d, n_points, log_range)


def exclusion_mechanism(d, n, n_points=DEFAULT_POINTS, log_range=DEFAULT_RANGE):
    lo, hi = d.support
    return MonotoneThresholdMechanism((ThresholdPiece.exclude(lo, hi),), n, d, n_points, log_range)


# ---------------------------------------------------------------------------
# Lines and thresholds
# ---------------------------------------------------------------------------


def slope_intercept(kappa: float, tau: float, d: BeliefDistribution, n: int, n_points=DEFAULT_POINTS, log_range=DEFAULT_RANGE):
    """Line ``(a, b)`` induced by ``pooled(kappa, tau)`` with ``n`` agents."""
    lr = others_lr(d, n - 1, n_points, log_range)
    a, b = lr.slope_intercept(_log(tau), kappa)
    return float(a), float(b)


def _log_tau_for_slope(lr: OthersLR, target: float) -> float:
    """Smallest log threshold whose two-state tail sum is at most ``target``."""
    if target >= 2.0:
        return -math.inf
    edges = lr.plus._edge_tail[0]
    lo, hi = edges[0] - 1.0, edges[-1] + 1.0

    def total(y):
        tp, tm = lr.tails(y)
        return float(tp + tm)

    if total(hi) > target:
        return math.inf
    if total(lo) <= target:
        return -math.inf
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if total(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * max(1.0, abs(mid)):
            break
    return hi


def solve_line(a: float, b: float, d: BeliefDistribution, n: int, n_points=DEFAULT_POINTS, log_range=DEFAULT_RANGE, tol: float = 1e-6):
    """Find ``(kappa, tau)`` whose pooled piece induces the line ``a s - b``.

    The inner search matches the slope for a given ``kappa``; the outer
    bisection over ``kappa in [a/2, 1]`` matches the intercept.

    Raises
    ------
    LineInfeasible
        If the line leaves the slope range [0, 2], has a negative intercept,
        sits below ``max(0, 2s - 1)`` or rises above the efficient envelope.
    NoBracket
        If the intercept cannot be bracketed.
    """
    lr = others_lr(d, n - 1, n_points, log_range)
    if not (-tol <= a <= 2.0 + tol) or b < -tol:
        raise LineInfeasible(f"line slope {a} / intercept {b} out of range")
    a, b = min(max(a, 0.0), 2.0), max(b, 0.0)
    if a <= LINE_TOL:
        if b > tol:
            raise LineInfeasible("flat line with positive intercept is never implementable")
        return 0.0, math.inf
    if a / 2.0 - b < -tol:
        raise LineInfeasible("line lies below max(0, 2s - 1)")
    grid = unit_grid(4001)
    excess = float(np.max(a * grid - b - efficient_utility(lr, grid)))
    if excess > tol:
        raise LineInfeasible(f"line exceeds the efficient envelope by {excess:.3g}")

    def intercept_gap(kappa):
        y = _log_tau_for_slope(lr, a / kappa)
        return kappa * float(lr.minus.tail(y)) - b, y

    k_lo, k_hi = max(a / 2.0, 1e-300), 1.0
    g_lo, y_lo = intercept_gap(k_lo)
    g_hi, y_hi = intercept_gap(k_hi)
    if g_lo < 0:
        if g_lo > -tol:
            return k_lo, float(np.exp(y_lo))
        raise NoBracket("intercept above a/2")
    if g_hi > 0:
        if g_hi < tol:
            return 1.0, float(np.exp(y_hi))
        raise NoBracket("intercept below the tangent line")
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (k_lo + k_hi)
        gap, _ = intercept_gap(mid)
        if gap > 0:
            k_lo = mid
        else:
            k_hi = mid
        if k_hi - k_lo <= 2e-16:
            break
    kappa = k_hi if abs(intercept_gap(k_hi)[0]) <= abs(intercept_gap(k_lo)[0]) else k_lo
    return float(kappa), float(np.exp(intercept_gap(kappa)[1]))


def threshold_types(tau: float, d: BeliefDistribution, n: int, n_points=DEFAULT_POINTS, log_range=DEFAULT_RANGE):
    """``(s_min, s_max)`` for threshold ``tau``, clamped to the support."""
    lr = others_lr(d, n - 1, n_points, log_range)
    tp, tm = (float(x) for x in lr.tails(_log(tau)))
    s_min = tm / (tp + tm) if tp + tm > 0 else 1.0
    s_max = 1.0 / (1.0 + tau)
    lo, hi = d.support
    return min(max(s_min, lo), hi), min(max(s_max, lo), hi)


def two_threshold(tau: float, d: BeliefDistribution, n: int, n_points=DEFAULT_POINTS, log_range=DEFAULT_RANGE):
    """Exclude below ``s_min``, pool with threshold ``tau``, serve efficiently above ``s_max``."""
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    s_min, s_max = threshold_types(tau, d, n, n_points, log_range)
    lo, hi = d.support
    pieces = [
        ThresholdPiece.exclude(lo, s_min),
        ThresholdPiece.pooled(s_min, s_max, 1.0, tau),
        ThresholdPiece.efficient(s_max, hi),
    ]
    return _build(pieces, n, d, n_points, log_range, tau=float(tau), s_min=s_min, s_max=s_max)


# ---------------------------------------------------------------------------
# Certificate for log-concave densities
# ---------------------------------------------------------------------------


def _moment_integrals(d, a, b, order=64):
    """``int_a^b g`` and ``int_a^b t g(t) dt``."""
    if b <= a:
        return 0.0, 0.0
    t, w = gauss_legendre(a, b, panels=8, order=order)
    g = weight_density(d, t)
    return float(np.dot(w, g)), float(np.dot(w, t * g))


def _atom(d, s):
    return 0.0 if s <= 0.0 or s >= 1.0 else float(2.0 * s * (1.0 - s) * d.pdf(s))


def dominance_profile(d: BeliefDistribution, s_min: float, s) -> np.ndarray:
    """``D(s) = int_{s_min}^{s} (s - t) g(t) dt`` minus the lower boundary term."""
    lo = d.support[0]
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s)
    for i, x in enumerate(s):
        m0, m1 = _moment_integrals(d, s_min, x)
        out[i] = x * m0 - m1
    if s_min <= lo:
        out -= (s - lo) * _atom(d, lo)
    return out


def sign_integral(d: BeliefDistribution, s_min: float, s_max: float) -> float:
    lo, hi = d.support
    total = _moment_integrals(d, s_min, s_max)[0]
    if s_min <= lo:
        total -= _atom(d, lo)
    if s_max >= hi:
        total += _atom(d, hi)
    return float(total)


def certificate_function(tau: float, d: BeliefDistribution, n: int, n_points=DEFAULT_POINTS, log_range=DEFAULT_RANGE) -> float:
    """Dominance profile at ``s_max(tau)``; its root is the optimal threshold."""
    s_min, s_max = threshold_types(tau, d, n, n_points, log_range)
    return float(dominance_profile(d, s_min, s_max)[0])


@dataclass(frozen=True)
class LogConcaveSolution:
    tau: float
    mechanism: MonotoneThresholdMechanism
    s_min: float
    s_max: float
    phi_at_root: float
    sign_changes: tuple


def _check_logconcave(d: BeliefDistribution) -> None:
    if not d.log_concave:
        raise NotLogConcave(f"{d.family} density is not log-concave")
    if not d.symmetric_about_half:
        f_half = float(d.pdf(0.5))
        fp_half = float(d.dpdf(0.5))
        if not (0.0 <= fp_half <= 2.0 * f_half):
            raise NotLogConcave("density is neither symmetric nor has f'(1/2) in [0, 2 f(1/2)]")


def solve_logconcave(
    d: BeliefDistribution,
    n: int,
    n_points=DEFAULT_POINTS,
    log_range=DEFAULT_RANGE,
    scan: int = 201,
) -> LogConcaveSolution:
    """Optimal two-threshold mechanism for a log-concave density.

    Scans ``tau`` on [0, 1] for sign changes of the certificate function and
    refines the smallest one with Brent's method.

    Raises
    ------
    NotLogConcave
        If the density fails the shape preconditions.
    NoRoot
        If the certificate function never changes sign.
    """
    _check_logconcave(d)
    phi = lambda t: certificate_function(t, d, n, n_points, log_range)
    taus = np.linspace(0.0, 1.0, scan)
    vals = np.array([phi(t) for t in taus])
    changes = []
    for i in range(scan - 1):
        if vals[i] == 0.0:
            changes.append((float(taus[i]), float(taus[i])))
        elif vals[i] * vals[i + 1] < 0:
            changes.append((float(taus[i]), float(taus[i + 1])))
    if vals[-1] == 0.0:
        changes.append((1.0, 1.0))
    if not changes:
        raise NoRoot("certificate function has no sign change on [0, 1]")
    a, b = changes[0]
    tau = a if a == b else brentq(phi, a, b, xtol=1e-15, rtol=1e-15, maxiter=500)
    mech = two_threshold(tau, d, n, n_points, log_range)
    s_min, s_max = threshold_types(tau, d, n, n_points, log_range)
    return LogConcaveSolution(float(tau), mech, s_min, s_max, phi(tau), tuple(changes))


@dataclass(frozen=True)
class Certificate:
    s_min: float
    s_max: float
    sign_integral: float
    dominance_grid: np.ndarray
    dominance: np.ndarray
    dominance_at_s_max: float
    g_below_max: float
    g_above_min: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "s_min": self.s_min,
            "s_max": self.s_max,
            "sign_integral": self.sign_integral,
            "dominance_max": float(np.max(self.dominance)),
            "dominance_at_s_max": self.dominance_at_s_max,
            "g_below_max": self.g_below_max,
            "g_above_min": self.g_above_min,
        }


def _pooled_interval(mech: MonotoneThresholdMechanism) -> tuple[float, float]:
    pooled = [p for p in mech.pieces if p.kind == POOLED and p.kappa > 0]
    if len(pooled) != 1:
        raise CertificateFailed("certificate needs exactly one pooled piece")
    return pooled[0].lo, pooled[0].hi


def verify_certificate(
    mech: MonotoneThresholdMechanism,
    weights: ObjectiveWeights | None = None,
    tol: float = CERT_TOL,
    points: int = CERT_GRID,
) -> Certificate:
    """Check the sign and dominance conditions for a two-threshold mechanism.

    Raises
    ------
    CertificateFailed
        If any condition fails by more than ``tol``.
    """
    d = weights.distribution if weights is not None else mech.distribution
    s_min, s_max = _pooled_interval(mech)
    lo, hi = d.support
    grid = np.linspace(s_min, s_max, points)
    dom = dominance_profile(d, s_min, grid)
    sign = sign_integral(d, s_min, s_max)
    below = np.linspace(lo, s_min, points)
    above = np.linspace(s_max, hi, points)
    with np.errstate(invalid="ignore", divide="ignore"):
        gb = np.nan_to_num(weight_density(d, below[(below > 0) & (below < 1)]), nan=0.0)
        ga = np.nan_to_num(weight_density(d, above[(above > 0) & (above < 1)]), nan=0.0)
    cert = Certificate(
        s_min, s_max, sign, grid, dom, float(dom[-1]),
        float(np.max(gb, initial=-np.inf)), float(np.min(ga, initial=np.inf)),
    )
    problems = []
    if sign < -tol:
        problems.append(f"sign integral {sign:.3g} < 0")
    if np.max(dom) > tol:
        problems.append(f"dominance profile reaches {np.max(dom):.3g}")
    if abs(cert.dominance_at_s_max) > tol:
        problems.append(f"dominance at s_max is {cert.dominance_at_s_max:.3g}")
    if cert.g_below_max > tol:
        problems.append("weight density positive below s_min")
    if cert.g_above_min < -tol:
        problems.append("weight density negative above s_max")
    if problems:
        raise CertificateFailed("; ".join(problems))
    return cert


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(mech: MonotoneThresholdMechanism, s_i, lr_others) -> np.ndarray | float:
    """Allocation probability for own belief ``s_i`` and others' LR."""
    out = mech.allocate_log(s_i, _log(lr_others))
    return float(out) if out.ndim == 0 else out


def designer_value(mech: MonotoneThresholdMechanism) -> float:
    """Ex-ante allocation probability of one agent."""
    d, lr = mech.distribution, mech.lr
    total = 0.0
    for p in mech.pieces:
        if p.kind == EXCLUDE or p.kappa == 0:
            continue
        if p.kind == EFFICIENT:
            total += tail_value(d, lr, p.lo, p.hi)
            continue
        tp, tm = (float(x) for x in lr.tails(_log(p.tau)))
        mass_p = float(d.conditional_cdf(p.hi, 1) - d.conditional_cdf(p.lo, 1))
        mass_m = float(d.conditional_cdf(p.hi, -1) - d.conditional_cdf(p.lo, -1))
        total += 0.5 * p.kappa * (mass_p * tp + mass_m * tm)
    return float(total)


def mechanism_utility(mech: MonotoneThresholdMechanism, k: int = DEFAULT_K, tol: float = 1e-9) -> IndirectUtility:
    """Truthful indirect utility on a ``k``-point grid of [0, 1].

    Types outside the support are assigned the rule of the nearest report.

    Raises
    ------
    NonConvexUtility
        If the utility is not convex, monotone, 2-Lipschitz, participation
        compatible and below the efficient envelope.
    """
    grid = unit_grid(k)
    lo, hi = mech.distribution.support
    a, b = mech.interim_line(np.clip(grid, lo, hi))
    u = a * grid - b
    util = IndirectUtility(grid, u)
    bad = util.violations(tol=tol)
    if np.max(u - efficient_utility(mech.lr, grid)) > 1e-6:
        bad.append("upper")
    if bad:
        raise NonConvexUtility(f"induced utility violates: {', '.join(bad)}")
    return util


# ---------------------------------------------------------------------------
# From an LP solution to a mechanism
# ---------------------------------------------------------------------------


def _tangent_point(lr: OthersLR, a: float) -> float:
    """Belief where the efficient envelope has slope ``a``."""
    lo, hi = 0.0, 1.0
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if float(efficient_slope(lr, np.array([mid]))[0]) < a:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def extract_mechanism(
    u: IndirectUtility,
    bounds: EnvelopeBounds,
    d: BeliefDistribution,
    n: int,
    n_points=DEFAULT_POINTS,
    log_range=DEFAULT_RANGE,
) -> MonotoneThresholdMechanism:
    """Threshold mechanism implementing an extreme-point LP solution.

    Bound-touching regions map to exclusion, always-allocate or efficient
    pieces; each free linear piece becomes a pooled piece. Lines next to an
    efficient region are snapped to exact tangency, and piece boundaries are
    placed at exact line intersections rather than grid nodes.
    """
    lr = others_lr(d, n - 1, n_points, log_range)
    report = check_extreme_structure(u, bounds)
    comps: list[list] = []
    for r in report.regions:
        if r.kind == "at_lower":
            comps.append(["zero" if r.part == "zero" else "diag", r.lo, r.hi, None])
        elif r.kind == "at_upper":
            comps.append(["upper", r.lo, r.hi, None])
        else:
            comps.append(["line", r.lo, r.hi, [r.slope, r.intercept]])
    for i, c in enumerate(comps):
        if c[0] != "line":
            continue
        nxt = comps[i + 1][0] if i + 1 < len(comps) else None
        prv = comps[i - 1][0] if i > 0 else None
        if "upper" in (nxt, prv):
            a = c[3][0]
            st = _tangent_point(lr, a)
            c[3][1] = a * st - float(efficient_utility(lr, np.array([st]))[0])
    lines = {"zero": (0.0, 0.0), "diag": (2.0, 1.0)}

    def boundary(left, right):
        kinds = (left[0], right[0])
        if "upper" in kinds:
            other = right if left[0] == "upper" else left
            if other[0] == "line":
                return _tangent_point(lr, other[3][0])
            return left[2]
        (a1, b1) = left[3] if left[0] == "line" else lines[left[0]]
        (a2, b2) = right[3] if right[0] == "line" else lines[right[0]]
        if abs(a1 - a2) < 1e-12:
            return left[2]
        return (b2 - b1) / (a2 - a1)

    cuts = [0.0] + [boundary(l, r) for l, r in zip(comps[:-1], comps[1:])] + [1.0]
    pieces = []
    for c, lo_, hi_ in zip(comps, cuts[:-1], cuts[1:]):
        if c[0] == "zero":
            pieces.append(ThresholdPiece.exclude(lo_, hi_))
        elif c[0] == "diag":
            pieces.append(ThresholdPiece.pooled(lo_, hi_, 1.0, 0.0))
        elif c[0] == "upper":
            pieces.append(ThresholdPiece.efficient(lo_, hi_))
        else:
            kappa, tau = solve_line(c[3][0], c[3][1], d, n, n_points, log_range)
            pieces.append(ThresholdPiece.pooled(lo_, hi_, kappa, tau))
    return _build(pieces, n, d, n_points, log_range, source="lp", kinks=list(report.kinks))


# ---------------------------------------------------------------------------
# Large markets
# ---------------------------------------------------------------------------


def limit_line(u_limit: IndirectUtility) -> tuple[float, float] | None:
    """Slope and intercept of the free linear piece of a limit solution."""
    report = check_extreme_structure(u_limit, asymptotic_envelope(len(u_limit.grid)))
    free = report.of_kind("strictly_between")
    if not free:
        return None
    return free[0].slope, free[0].intercept


def asymptotic_family(
    d: BeliefDistribution,
    n: int,
    u_limit: IndirectUtility,
    n_points=DEFAULT_POINTS,
    log_range=DEFAULT_RANGE,
) -> MonotoneThresholdMechanism:
    """Feasible ``n``-agent mechanism built from the limit solution.

    The limit line ``a s - b`` is shifted down to the smallest intercept
    ``b(n) >= b`` that keeps it below the ``n``-agent envelope. Types below
    its zero are excluded, types above its crossing with ``2s - 1`` are
    always served, and the rest are pooled so as to induce the shifted line.
    """
    lo, hi = d.support
    line = limit_line(u_limit)
    if line is None:
        pieces = [ThresholdPiece.exclude(lo, 0.5), ThresholdPiece.pooled(0.5, hi, 1.0, 0.0)]
        return _build(pieces, n, d, n_points, log_range, b_n=None)
    a, b = line
    lr = others_lr(d, n - 1, n_points, log_range)
    st = _tangent_point(lr, a)
    gap = a * st - float(efficient_utility(lr, np.array([st]))[0])
    b_n = max(b, gap)
    s_min = b_n / a
    s_max = (1.0 - b_n) / (2.0 - a) if a < 2.0 else 1.0
    kappa, tau = solve_line(a, b_n, d, n, n_points, log_range)
    pieces = [
        ThresholdPiece.exclude(lo, s_min),
        ThresholdPiece.pooled(s_min, min(s_max, hi), kappa, tau),
        ThresholdPiece.pooled(min(s_max, hi), hi, 1.0, 0.0),
    ]
    return _build(pieces, n, d, n_points, log_range, b_n=b_n, b_limit=b, slope=a, s_min=s_min, s_max=min(s_max, hi))


# ---------------------------------------------------------------------------
# Two-agent persuasion menu
# ---------------------------------------------------------------------------


def export_persuasion_menu(mech: MonotoneThresholdMechanism) -> dict[str, Any]:
    """Receiver-type-indexed menu of experiments for the two-agent case.

    Receiver type ``lambda`` is the agent's own belief; the sender holds the
    other belief ``s``. Exclusion maps to an uninformative ``null``
    experiment, a pooled piece to a ``cutoff`` recommending iff ``s`` clears
    ``tau / (1 + tau)``, and an efficient piece to ``matching``: recommend
    iff ``s + lambda >= 1``.

    Raises
    ------
    WrongMarketSize
        Unless ``mech.n == 2``.
    """
    if mech.n != 2:
        raise WrongMarketSize(f"persuasion menu needs two agents, got {mech.n}")
    entries = []
    for p in mech.pieces:
        if p.kind == EXCLUDE or (p.kind == POOLED and p.kappa == 0.0):
            exp = {"type": "null"}
        elif p.kind == POOLED:
            cut = 1.0 if math.isinf(p.tau) else p.tau / (1.0 + p.tau)
            exp = {"type": "cutoff", "sender_belief": cut, "kappa": p.kappa}
        else:
            exp = {"type": "matching"}
        entries.append({"lambda_lo": p.lo, "lambda_hi": p.hi, "experiment": exp})
    contiguous = all(abs(x["lambda_hi"] - y["lambda_lo"]) <= 1e-12 for x, y in zip(entries[:-1], entries[1:]))
    return {"n": 2, "entries": entries, "deterministic": mech.deterministic, "monotone_partitional": contiguous}
