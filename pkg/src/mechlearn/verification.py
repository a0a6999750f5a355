"""Independent checks on constructed mechanisms.

Everything here recomputes a property from the mechanism's allocation rule
rather than trusting how it was built: incentive and participation margins
on a type-by-report grid, the envelope identity, ex-post violations, and a
Monte Carlo estimate of the designer's value.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .distributions import conditional_pdf, inverse_cdf_table, log_lr
from .exceptions import EndpointMismatch
from .first_best import efficient_log_threshold, gauss_legendre
from .mechanisms import EFFICIENT, EXCLUDE, POOLED, MonotoneThresholdMechanism, _log
from .rng import stream, worker_count

FEASIBILITY_GRID = 201
FEASIBILITY_TOL = 1e-6
MIN_MC_SAMPLES = 10_000


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst-case margins; each should be at least ``-tol``.

    ``envelope_residual`` is the largest gap between ``U(s) - U(s_lo)`` and
    the integral of the scaled interim allocation.
    """

    ic_min_margin: float
    ir_min: float
    envelope_residual: float
    monotone_x_min_slack: float
    epic_violation_mass: float | None = None
    value_mc: float | None = None
    tol: float = FEASIBILITY_TOL

    @property
    def passed(self) -> bool:
        return (
            self.ic_min_margin >= -self.tol
            and self.ir_min >= -self.tol
            and self.envelope_residual <= 10 * self.tol
            and self.monotone_x_min_slack >= -self.tol
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _cumulative_slope(mech: MonotoneThresholdMechanism, s: np.ndarray) -> np.ndarray:
    """``int_{s_lo}^{s} a(t) dt`` with exact pooled pieces and quadrature elsewhere."""
    out = np.zeros_like(s)
    base = 0.0
    for p in mech.pieces:
        sel = (s >= p.lo) & (s <= p.hi)
        if p.kind == EXCLUDE:
            out[sel] = base
            continue
        if p.kind == POOLED:
            a = float(mech.lr.slope_intercept(_log(p.tau), p.kappa)[0])
            out[sel] = base + a * (s[sel] - p.lo)
            base += a * (p.hi - p.lo)
            continue
        for i in np.flatnonzero(sel):
            out[i] = base + _slope_integral(mech, p.lo, s[i])
        base += _slope_integral(mech, p.lo, p.hi)
    return out


def _slope_integral(mech, a, b):
    t, w = gauss_legendre(a, b, panels=16, order=16)
    if t.size == 0:
        return 0.0
    tp, tm = mech.lr.tails(efficient_log_threshold(t))
    return float(np.dot(w, tp + tm))


def check_feasibility(
    mech: MonotoneThresholdMechanism,
    grid: int = FEASIBILITY_GRID,
    tol: float = FEASIBILITY_TOL,
) -> FeasibilityReport:
    """IC, IR, monotonicity and envelope checks on a ``grid x grid`` lattice."""
    lo, hi = mech.distribution.support
    s = np.linspace(lo, hi, grid)
    a, b = mech.interim_line(s)
    truthful = a * s - b
    deviation = np.outer(s, a) - b[None, :]
    ic = float(np.min(truthful[:, None] - deviation))
    residual = truthful - truthful[0] - _cumulative_slope(mech, s)
    ends = mech.piece_slopes()
    within = np.diff(a)
    return FeasibilityReport(
        ic_min_margin=ic,
        ir_min=float(np.min(truthful)),
        envelope_residual=float(np.max(np.abs(residual))),
        monotone_x_min_slack=float(min(np.min(within), mech.monotone_slack(), min(e[1] - e[0] for e in ends))),
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Ex-post incentive compatibility
# ---------------------------------------------------------------------------


def _allocation_steps(mech: MonotoneThresholdMechanism):
    """Log thresholds where any report's allocation can change."""
    pts = set()
    lo, hi = mech.distribution.support
    for p in mech.pieces:
        if p.kind == POOLED and p.kappa > 0:
            pts.add(float(_log(p.tau)))
        elif p.kind == EFFICIENT:
            pts.update(float(x) for x in efficient_log_threshold(np.array([p.lo, p.hi])))
    return sorted(x for x in pts if np.isfinite(x))


def _best_worst(mech, y):
    """Highest and lowest allocation any report attains at others' log LR ``y``."""
    best, worst = np.zeros_like(y), np.ones_like(y)
    for p in mech.pieces:
        if p.kind == EXCLUDE:
            hi_, lo_ = np.zeros_like(y), np.zeros_like(y)
        elif p.kind == POOLED:
            hi_ = lo_ = p.kappa * (y >= _log(p.tau))
        else:
            hi_ = (y >= efficient_log_threshold(p.hi)).astype(float)
            lo_ = (y >= efficient_log_threshold(p.lo)).astype(float)
        best, worst = np.maximum(best, hi_), np.minimum(worst, lo_)
    return best, worst


def check_epic(mech: MonotoneThresholdMechanism, grid: int = 64) -> float:
    """Probability of profiles where the rule is not ex-post optimal.

    A profile counts if the agent is served although the aggregate
    likelihood ratio is below one, or if some other report would do better
    ex post (more service when the ratio is at least one, less when below).
    ``grid`` is the number of quadrature panels per piece.
    """
    lr = mech.lr
    steps = _allocation_steps(mech)
    total = 0.0
    for p in mech.pieces:
        cuts = [p.lo, p.hi] + [1.0 / (1.0 + np.exp(x)) for x in steps]
        cuts = sorted(c for c in set(cuts) if p.lo <= c <= p.hi)
        for a, b in zip(cuts[:-1], cuts[1:]):
            s, w = gauss_legendre(a, b, panels=max(1, grid // 8), order=8)
            if s.size == 0:
                continue
            total += float(np.dot(w, _violation_density(mech, lr, p, s, steps)))
    return total


def _violation_density(mech, lr, piece, s, steps):
    out = np.zeros_like(s)
    for i, si in enumerate(s):
        own = float(efficient_log_threshold(si))
        knots = sorted(set(steps + [own]))
        edges = np.array([-np.inf] + knots + [np.inf])
        mids = np.empty(len(edges) - 1)
        inner = np.array(knots)
        if len(inner) > 1:
            mids[1:-1] = 0.5 * (inner[:-1] + inner[1:])
        mids[0], mids[-1] = inner[0] - 1.0, inner[-1] + 1.0
        x_own = mech.allocate_log(np.full_like(mids, si), mids)
        best, worst = _best_worst(mech, mids)
        bad = np.where(mids >= own, x_own < best - 1e-12, x_own > worst + 1e-12)
        if not np.any(bad):
            continue
        tp_lo, tm_lo = lr.tails(edges[:-1])
        tp_hi, tm_hi = lr.tails(edges[1:])
        prob_p = np.sum((tp_lo - tp_hi)[bad])
        prob_m = np.sum((tm_lo - tm_hi)[bad])
        out[i] = 0.5 * (
            float(conditional_pdf(mech.distribution, si, 1, strict=False)) * prob_p
            + float(conditional_pdf(mech.distribution, si, -1, strict=False)) * prob_m
        )
    return out


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    se: float
    samples: int
    workers: int


def _draw_profiles(mech, rng, size):
    d, n = mech.distribution, mech.n
    state = np.where(rng.random(size) < 0.5, 1, -1)
    u = rng.random((size, n))
    gp, cp = inverse_cdf_table(d, 1)
    gm, cm = inverse_cdf_table(d, -1)
    beliefs = np.where(state[:, None] == 1, np.interp(u, cp, gp), np.interp(u, cm, gm))
    return np.clip(beliefs, 1e-15, 1.0 - 1e-15)


def _mc_chunk(mech, seed, worker, size):
    rng = stream(seed, worker)
    beliefs = _draw_profiles(mech, rng, size)
    logs = log_lr(beliefs)
    others = logs[:, 1:].sum(axis=1)
    x = mech.allocate_log(beliefs[:, 0], others)
    return float(np.sum(x)), float(np.sum(x * x))


def mc_value(
    mech: MonotoneThresholdMechanism,
    samples: int = 1_000_000,
    seed: int = 0,
    workers: int | None = None,
) -> MCEstimate:
    """Simulated ex-ante allocation probability of agent 1.

    Work is split into one counter-based stream per worker and the partial
    sums are combined in worker order, so the estimate is reproducible for a
    given seed and worker count.
    """
    if samples < MIN_MC_SAMPLES:
        raise ValueError(f"need at least {MIN_MC_SAMPLES} samples")
    workers = workers or worker_count()
    sizes = [samples // workers + (1 if w < samples % workers else 0) for w in range(workers)]
    chunk = 250_000

    def run(w):
        total = sq = 0.0
        done, part = 0, 0
        while done < sizes[w]:
            size = min(chunk, sizes[w] - done)
            t, q = _mc_chunk(mech, seed, w * 1_000_003 + part, size)
            total, sq, done, part = total + t, sq + q, done + size, part + 1
        return total, sq

    if workers == 1:
        parts = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(workers)))
    total = sum(p[0] for p in parts)
    sq = sum(p[1] for p in parts)
    mean = total / samples
    var = max(sq / samples - mean * mean, 0.0)
    return MCEstimate(mean, float(np.sqrt(var / samples)), samples, workers)


# ---------------------------------------------------------------------------
# Convex order and majorization
# ---------------------------------------------------------------------------


def _check_cumulatives(x, h, g, tol):
    x, h, g = (np.asarray(v, dtype=float) for v in (x, h, g))
    if x.ndim != 1 or h.shape != x.shape or g.shape != x.shape or np.any(np.diff(x) <= 0):
        raise ValueError("need increasing grid and matching cumulative arrays")
    if abs(h[-1] - g[-1]) > tol:
        raise EndpointMismatch(f"total masses differ: {h[-1]} vs {g[-1]}")
    return x, h, g


def majorizes(x, h, g, tol: float = 1e-10) -> bool:
    """True if ``g`` majorizes ``h``: ``int H >= int G`` on every prefix, equal overall.

    ``h`` and ``g`` are right-continuous step cumulatives of signed measures
    with atoms at the grid points ``x``.
    """
    x, h, g = _check_cumulatives(x, h, g, tol)
    dx = np.diff(x)
    ih = np.concatenate([[0.0], np.cumsum(h[:-1] * dx)])
    ig = np.concatenate([[0.0], np.cumsum(g[:-1] * dx)])
    return bool(np.all(ih >= ig - tol) and abs(ih[-1] - ig[-1]) <= tol)


def convex_dominates(x, h, g, tol: float = 1e-10) -> bool:
    """True if the measure of ``h`` dominates that of ``g`` in convex order.

    Tested on the family ``c(s) = max(0, k - s)`` for every knot ``k`` of the
    grid, plus the affine functions ``+-1`` and ``+-s``.
    """
    x, h, g = _check_cumulatives(x, h, g, tol)
    mu = np.diff(np.concatenate([[0.0], h]))
    nu = np.diff(np.concatenate([[0.0], g]))
    tests = np.maximum(0.0, x[:, None] - x[None, :])
    ok = np.all(tests @ mu >= tests @ nu - tol)
    ok &= abs(mu.sum() - nu.sum()) <= tol and abs(mu @ x - nu @ x) <= tol
    return bool(ok)


def convex_order_vs_majorization(x, h, g, tol: float = 1e-10) -> tuple[bool, bool]:
    """Both verdicts for the same pair; they should always agree."""
    return majorizes(x, h, g, tol), convex_dominates(x, h, g, tol)
