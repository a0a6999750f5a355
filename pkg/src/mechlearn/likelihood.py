"""Distribution of the aggregate log likelihood ratio of other agents.

The engine works on an odd, uniform grid ``x_j = -L + j * dx`` of
log-likelihood-ratio values. Each grid node carries the probability of its
cell ``[x_j - dx/2, x_j + dx/2]``; mass beyond the grid goes to atoms at
``-inf`` / ``+inf``. A single signal's cell masses are exact differences of
the closed-form conditional CDF, m-fold sums use FFT convolution, and tail
probabilities interpolate the cell-edge survival function with a monotone
cubic so they vary smoothly in the threshold.

Both states are convolved separately; because every cell mass is exact, the
ratio of the two interpolated densities stays within O(dx^2) of ``e^y``,
which is what keeps threshold rules incentive compatible to high accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.signal import fftconvolve
from scipy.special import expit

from .distributions import STATES, BeliefDistribution
from .exceptions import RangeTooSmall

log = logging.getLogger(__name__)

DEFAULT_POINTS = 8193
DEFAULT_RANGE = 40.0
CLIP_TOL = 1e-4


def _check_points(n_points: int) -> None:
    if n_points < 3 or (n_points - 1) & (n_points - 2):
        raise ValueError(f"grid size must be a power of two plus one, got {n_points}")


@dataclass(frozen=True, eq=False)
class GridDistribution:
    """Discretized law of a sum of ``m`` log likelihood ratios in one state.

    Attributes
    ----------
    grid : ndarray
        Symmetric node grid with ``grid[(N-1)//2] == 0``.
    mass : ndarray
        Probability of each node's cell.
    atom_pos, atom_neg : float
        Mass clipped beyond the right / left end.
    state : int
        Conditioning state, +1 or -1.
    m : int
        Number of summed signals.
    smooth : bool
        False only for the point mass at zero (``m = 0``); such grids use a
        step tail where the threshold node counts toward ``>= tau``.
    """

    grid: np.ndarray
    mass: np.ndarray
    atom_pos: float
    atom_neg: float
    state: int
    m: int
    smooth: bool = True

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def log_range(self) -> float:
        return float(self.grid[-1])

    @property
    def total(self) -> float:
        return float(self.mass.sum() + self.atom_pos + self.atom_neg)

    @cached_property
    def _edge_tail(self):
        dx = self.spacing
        edges = np.concatenate([self.grid - dx / 2, [self.grid[-1] + dx / 2]])
        # Summing from the right keeps small upper tails accurate.
        tail = np.concatenate([np.cumsum(self.mass[::-1])[::-1], [0.0]]) + self.atom_pos
        return edges, tail

    @cached_property
    def _interpolant(self):
        edges, tail = self._edge_tail
        return PchipInterpolator(edges, tail, extrapolate=False)

    def tail(self, log_tau) -> np.ndarray:
        """``P[Y >= log_tau]`` for finite or infinite ``log_tau``."""
        t = np.asarray(log_tau, dtype=float)
        edges, tail = self._edge_tail
        if not self.smooth:
            idx = np.searchsorted(self.grid, t, side="left")
            full = np.concatenate([np.cumsum(self.mass[::-1])[::-1], [0.0]]) + self.atom_pos
            out = full[np.clip(idx, 0, len(self.grid))]
        else:
            out = self._interpolant(np.clip(t, edges[0], edges[-1]))
        out = np.where(t < edges[0], 1.0 - self.atom_neg, out)
        out = np.where(t > edges[-1], self.atom_pos, out)
        out = np.where(t == -np.inf, 1.0, out)
        return np.clip(out, 0.0, 1.0)


def _grid(n_points: int, log_range: float) -> np.ndarray:
    _check_points(n_points)
    if not log_range > 0:
        raise ValueError("log range must be positive")
    return np.linspace(-log_range, log_range, n_points)


def _check_clip(g: GridDistribution, tol: float) -> GridDistribution:
    clipped = g.atom_pos + g.atom_neg
    if clipped > tol:
        raise RangeTooSmall(f"grid clips {clipped:.3g} of mass (state {g.state}, m={g.m}); raise the log range")
    return g


def single_log_lr(
    d: BeliefDistribution,
    state: int,
    n_points: int = DEFAULT_POINTS,
    log_range: float = DEFAULT_RANGE,
    clip_tol: float = CLIP_TOL,
) -> GridDistribution:
    """Law of ``log(s / (1 - s))`` for one belief drawn from ``f_state``."""
    if state not in STATES:
        raise ValueError("state must be +1 or -1")
    x = _grid(n_points, log_range)
    dx = x[1] - x[0]
    edges = np.concatenate([x - dx / 2, [x[-1] + dx / 2]])
    sf = np.asarray(d.conditional_sf(expit(edges), state), dtype=float)
    sf = np.minimum.accumulate(np.clip(sf, 0.0, 1.0))
    mass = -np.diff(sf)
    g = GridDistribution(x, mass, float(sf[-1]), float(1.0 - sf[0]), state, 1)
    return _check_clip(g, clip_tol)


def unit_atom(state: int, n_points: int = DEFAULT_POINTS, log_range: float = DEFAULT_RANGE) -> GridDistribution:
    """Point mass at zero: the aggregate of no signals."""
    x = _grid(n_points, log_range)
    mass = np.zeros_like(x)
    mass[(n_points - 1) // 2] = 1.0
    return GridDistribution(x, mass, 0.0, 0.0, state, 0, smooth=False)


def convolve(a: GridDistribution, b: GridDistribution, clip_tol: float = CLIP_TOL) -> GridDistribution:
    """Law of the sum of independent ``a`` and ``b`` on the common grid."""
    if a.state != b.state or len(a.grid) != len(b.grid) or a.spacing != b.spacing:
        raise ValueError("convolution needs matching grids and states")
    if a.m == 0:
        return b
    if b.m == 0:
        return a
    n = len(a.grid)
    full = np.clip(fftconvolve(a.mass, b.mass), 0.0, None)
    off = (n - 1) // 2
    inner = full[off : off + n]
    below = float(full[:off].sum())
    above = float(full[off + n :].sum())
    ia, ib = float(a.mass.sum()), float(b.mass.sum())
    atom_pos = a.atom_pos * (ib + b.atom_pos) + ia * b.atom_pos + above
    # Ambiguous (+inf) + (-inf) mass is booked to -inf.
    atom_neg = a.atom_neg + b.atom_neg * (1.0 - a.atom_neg) + below
    g = GridDistribution(a.grid, inner, atom_pos, atom_neg, a.state, a.m + b.m, a.smooth or b.smooth)
    return _check_clip(g, clip_tol)


def convolve_m(base: GridDistribution, m: int, clip_tol: float = CLIP_TOL) -> GridDistribution:
    """m-fold self-convolution by repeated squaring."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    n = len(base.grid)
    result = unit_atom(base.state, n, base.log_range)
    power = base
    while m:
        if m & 1:
            result = convolve(result, power, clip_tol)
        m >>= 1
        if m:
            power = convolve(power, power, clip_tol)
    return result


def tail_prob(g: GridDistribution, tau) -> np.ndarray | float:
    """``P[LR >= tau]`` for likelihood-ratio thresholds ``tau >= 0``.

    ``tau = 0`` returns exactly 1 and ``tau = inf`` returns the ``+inf`` atom.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(np.isnan(tau)):
        raise ValueError("thresholds must be nonnegative")
    with np.errstate(divide="ignore"):
        out = g.tail(np.log(tau))
    out = np.where(tau == 0, 1.0, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Paired laws for the other m agents
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OthersLR:
    """Laws of the others' aggregate log LR under both states."""

    plus: GridDistribution
    minus: GridDistribution

    @property
    def m(self) -> int:
        return self.plus.m

    def tails(self, log_tau):
        """``(P+[Y >= t], P-[Y >= t])`` at log thresholds ``t``."""
        return self.plus.tail(log_tau), self.minus.tail(log_tau)

    def slope_intercept(self, log_tau, kappa=1.0):
        """Line ``a s - b`` induced by allocating with prob ``kappa`` above ``log_tau``."""
        tp, tm = self.tails(log_tau)
        return kappa * (tp + tm), kappa * tm


@lru_cache(maxsize=64)
def others_lr(
    d: BeliefDistribution,
    m: int,
    n_points: int = DEFAULT_POINTS,
    log_range: float = DEFAULT_RANGE,
    clip_tol: float = CLIP_TOL,
    auto_widen: bool = True,
) -> OthersLR:
    """Aggregate laws for ``m`` other agents, widening the grid if needed.

    With ``auto_widen`` the log range grows by 1.5x (and the node count
    doubles to keep the spacing) until the clipped mass is below
    ``clip_tol``.
    """
    points, rng = n_points, log_range
    for _ in range(6):
        try:
            pair = [convolve_m(single_log_lr(d, s, points, rng, clip_tol), m, clip_tol) for s in (1, -1)]
            if (points, rng) != (n_points, log_range):
                log.info("widened log-LR grid to N=%d, L=%.1f for m=%d", points, rng, m)
            return OthersLR(*pair)
        except RangeTooSmall:
            if not auto_widen:
                raise
            rng *= 1.5
            points = 2 * (points - 1) + 1
    raise RangeTooSmall(f"could not contain aggregate of m={m} signals")
