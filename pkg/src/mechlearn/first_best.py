"""Efficient allocation: its indirect utility envelope and designer value.

The efficient rule allocates iff the aggregate likelihood ratio is at least
one, so a type ``s`` is served iff the others' ratio clears
``(1 - s) / s``. Its interim utility is the upper bound on any feasible
indirect utility; ``max(0, 2s - 1)`` is the lower bound from participation
and from always allocating.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .distributions import BeliefDistribution, conditional_pdf
from .likelihood import DEFAULT_POINTS, DEFAULT_RANGE, OthersLR, others_lr

log = logging.getLogger(__name__)

DEFAULT_K = 2001
CONVEXITY_ADJUST_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class EnvelopeBounds:
    """Pointwise bounds on the indirect utility over a grid of [0, 1].

    Attributes
    ----------
    grid : ndarray
        ``K`` equally spaced beliefs including 0 and 1.
    upper : ndarray
        Efficient envelope (or ``s`` in the large-market limit).
    lower : ndarray
        ``max(0, 2s - 1)``.
    n : int or None
        Market size; None for the limit envelope.
    max_adjustment : float
        Largest change made by the convex projection.
    """

    grid: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    n: int | None
    max_adjustment: float = 0.0

    def to_rows(self):
        return [(float(s), float(lo), float(up)) for s, lo, up in zip(self.grid, self.lower, self.upper)]


def unit_grid(k: int = DEFAULT_K) -> np.ndarray:
    if k < 3:
        raise ValueError("grid needs at least 3 points")
    return np.linspace(0.0, 1.0, k)


def lower_bound(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.maximum(0.0, 2.0 * s - 1.0)


def efficient_log_threshold(s) -> np.ndarray:
    """``log((1 - s) / s)``: the others' log LR at which type s is served."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log1p(-s) - np.log(s)


def efficient_utility(lr: OthersLR, s) -> np.ndarray:
    """Interim utility of truthful type ``s`` under the efficient rule."""
    s = np.asarray(s, dtype=float)
    tp, tm = lr.tails(efficient_log_threshold(s))
    u = s * tp - (1.0 - s) * tm
    return np.where(s <= 0.0, 0.0, np.where(s >= 1.0, 1.0, u))


def efficient_slope(lr: OthersLR, s) -> np.ndarray:
    """Scaled interim allocation ``2^{n-1} X(s)``: the envelope's derivative."""
    tp, tm = lr.tails(efficient_log_threshold(s))
    return tp + tm


def lower_convex_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Greatest convex minorant of ``(x, y)`` evaluated on ``x``."""
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(x, x[hull], y[hull])


def efficient_envelope(
    d: BeliefDistribution,
    n: int,
    k: int = DEFAULT_K,
    n_points: int = DEFAULT_POINTS,
    log_range: float = DEFAULT_RANGE,
) -> EnvelopeBounds:
    """Efficient envelope for ``n`` agents on a ``k``-point grid."""
    if n < 1:
        raise ValueError("need at least one agent")
    grid = unit_grid(k)
    lr = others_lr(d, n - 1, n_points, log_range)
    raw = efficient_utility(lr, grid)
    lower = lower_bound(grid)
    hull = lower_convex_hull(grid, np.maximum(raw, lower))
    adjust = float(np.max(np.abs(hull - raw)))
    if adjust > CONVEXITY_ADJUST_TOL:
        log.warning("convex projection moved the envelope by %.3g", adjust)
    else:
        log.debug("convex projection adjustment %.3g", adjust)
    return EnvelopeBounds(grid, hull, lower, n, adjust)


def asymptotic_envelope(k: int = DEFAULT_K) -> EnvelopeBounds:
    """Limit envelope ``U(s) = s`` as the market grows."""
    grid = unit_grid(k)
    return EnvelopeBounds(grid, grid.copy(), lower_bound(grid), None, 0.0)


def gauss_legendre(a: float, b: float, panels: int = 64, order: int = 16):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    if b <= a:
        return np.zeros(0), np.zeros(0)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def tail_value(d: BeliefDistribution, lr: OthersLR, a: float, b: float) -> float:
    """Allocation probability contributed by efficient service on ``[a, b]``."""
    s, w = gauss_legendre(a, b)
    if s.size == 0:
        return 0.0
    tp, tm = lr.tails(efficient_log_threshold(s))
    dens = 0.5 * (conditional_pdf(d, s, 1, strict=False) * tp + conditional_pdf(d, s, -1, strict=False) * tm)
    return float(np.dot(w, dens))


def efficient_value(
    d: BeliefDistribution,
    n: int,
    n_points: int = DEFAULT_POINTS,
    log_range: float = DEFAULT_RANGE,
) -> float:
    """Ex-ante probability that the efficient rule allocates to agent i."""
    lr = others_lr(d, n - 1, n_points, log_range)
    return tail_value(d, lr, *d.support)
