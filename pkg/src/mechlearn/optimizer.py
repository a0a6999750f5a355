"""Designer's reduced problem over convex indirect utilities.

The ex-ante allocation probability of a BIC, IR mechanism is a linear
functional of its indirect utility ``U``::

    V(U) = int g(s) U(s) ds + c_hi U(s_hi) - c_lo U(s_lo),
    g(s) = -3 (1 - 2s) f(s) - 2 s (1 - s) f'(s),

maximized over convex, nondecreasing, 2-Lipschitz ``U`` squeezed between
``max(0, 2s - 1)`` and the efficient envelope. On a grid this is an LP.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .distributions import BeliefDistribution
from .exceptions import NumericalFailure, StructureViolation
from .first_best import DEFAULT_K, EnvelopeBounds, asymptotic_envelope, unit_grid

LP_TOL = 1e-12
BOUND_TOL = 1e-7
KINK_TOL = 1e-3


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def weight_density(d: BeliefDistribution, s) -> np.ndarray:
    """``g(s)``; zero outside the support."""
    s = np.asarray(s, dtype=float)
    return -3.0 * (1.0 - 2.0 * s) * d.pdf(s) - 2.0 * d.score_term(s)


@dataclass(frozen=True, eq=False)
class ObjectiveWeights:
    """Discretized objective ``V(U) = coef . U``.

    Attributes
    ----------
    grid : ndarray
        Grid on [0, 1] shared with the LP.
    g : ndarray
        Weight density at the grid nodes.
    atom_lo, atom_hi : float
        Boundary weights ``2 s (1 - s) f(s)`` at the support ends.
    coef : ndarray
        Exact integrals of ``g`` against the piecewise-linear hat basis, plus
        the boundary atoms spread onto neighbouring nodes.
    distribution : BeliefDistribution
    """

    grid: np.ndarray
    g: np.ndarray
    atom_lo: float
    atom_hi: float
    coef: np.ndarray
    distribution: BeliefDistribution

    def value(self, u) -> float:
        return float(np.dot(self.coef, np.asarray(u, dtype=float)))


def _hat_integrals(d: BeliefDistribution, grid: np.ndarray, order: int = 6) -> np.ndarray:
    lo, hi = d.support
    x, w = np.polynomial.legendre.leggauss(order)
    coef = np.zeros_like(grid)
    for j in range(len(grid) - 1):
        a, b = max(grid[j], lo), min(grid[j + 1], hi)
        if b <= a:
            continue
        t = 0.5 * (a + b) + 0.5 * (b - a) * x
        gw = 0.5 * (b - a) * w * weight_density(d, t)
        right = (t - grid[j]) / (grid[j + 1] - grid[j])
        coef[j] += np.dot(gw, 1.0 - right)
        coef[j + 1] += np.dot(gw, right)
    return coef


def _spread(grid: np.ndarray, s: float, weight: float, coef: np.ndarray) -> None:
    j = int(np.clip(np.searchsorted(grid, s, side="right") - 1, 0, len(grid) - 2))
    r = (s - grid[j]) / (grid[j + 1] - grid[j])
    coef[j] += weight * (1.0 - r)
    coef[j + 1] += weight * r


def _boundary_atom(d: BeliefDistribution, s: float) -> float:
    if s <= 0.0 or s >= 1.0:
        return 0.0
    return float(2.0 * s * (1.0 - s) * d.pdf(s))


def objective_weights(d: BeliefDistribution, k: int = DEFAULT_K) -> ObjectiveWeights:
    """Objective weights for a belief distribution on a ``k``-point grid."""
    grid = unit_grid(k)
    lo, hi = d.support
    atom_lo, atom_hi = _boundary_atom(d, lo), _boundary_atom(d, hi)
    coef = _hat_integrals(d, grid)
    _spread(grid, hi, atom_hi, coef)
    _spread(grid, lo, -atom_lo, coef)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = weight_density(d, grid)
    return ObjectiveWeights(grid, g, atom_lo, atom_hi, coef, d)


# ---------------------------------------------------------------------------
# Indirect utility
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IndirectUtility:
    """Piecewise-linear indirect utility on a grid of [0, 1]."""

    grid: np.ndarray
    values: np.ndarray
    lp_stats: dict = field(default_factory=dict)

    def __call__(self, s) -> np.ndarray:
        return np.interp(s, self.grid, self.values)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.grid)

    def violations(self, bounds: EnvelopeBounds | None = None, tol: float = 1e-9) -> list[str]:
        """Names of violated shape or bound invariants."""
        out = []
        sl = self.slopes()
        if np.min(np.diff(sl), initial=0.0) < -tol / (self.grid[1] - self.grid[0]):
            out.append("convex")
        if np.min(sl) < -tol:
            out.append("monotone")
        if np.max(sl) > 2.0 + tol:
            out.append("lipschitz")
        if np.min(self.values) < -tol:
            out.append("participation")
        if bounds is not None:
            if np.max(self.values - bounds.upper) > tol:
                out.append("upper")
            if np.min(self.values - bounds.lower) < -tol:
                out.append("lower")
        return out


# ---------------------------------------------------------------------------
# LP
# ---------------------------------------------------------------------------


def _lp_matrices(k: int, h: float):
    """Variables ``[U_0..U_{k-1}, slope_0..slope_{k-2}]``."""
    j = np.arange(k - 1)
    rows = np.concatenate([j, j, j])
    cols = np.concatenate([j + 1, j, k + j])
    vals = np.concatenate([np.ones(k - 1), -np.ones(k - 1), -h * np.ones(k - 1)])
    a_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(k - 1, 2 * k - 1))
    i = np.arange(k - 2)
    a_ub = sparse.csr_matrix(
        (np.concatenate([np.ones(k - 2), -np.ones(k - 2)]), (np.concatenate([i, i]), np.concatenate([k + i, k + i + 1]))),
        shape=(k - 2, 2 * k - 1),
    )
    return a_eq, a_ub


def _run_lp(c, a_ub, b_ub, a_eq, b_eq, bounds):
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10, "presolve": True},
    )
    return res


def solve_reduced(weights: ObjectiveWeights, bounds: EnvelopeBounds) -> IndirectUtility:
    """Maximize ``V(U)`` over the discretized feasible set.

    Ties are broken toward the pointwise smallest utility by a second LP that
    minimizes ``sum(U)`` at the optimal value.

    Raises
    ------
    NumericalFailure
        If HiGHS does not report an optimal solution.
    """
    grid = bounds.grid
    if len(grid) != len(weights.grid) or not np.allclose(grid, weights.grid):
        raise ValueError("weights and bounds must share a grid")
    if np.any(bounds.upper < bounds.lower - 1e-12):
        raise NumericalFailure("upper bound below lower bound")
    k, h = len(grid), float(grid[1] - grid[0])
    a_eq, a_ub = _lp_matrices(k, h)
    b_eq, b_ub = np.zeros(k - 1), np.zeros(k - 2)
    upper = np.maximum(bounds.upper, bounds.lower)
    var_bounds = np.vstack(
        [np.column_stack([bounds.lower, upper]), np.column_stack([np.zeros(k - 1), 2.0 * np.ones(k - 1)])]
    )
    c = np.concatenate([-weights.coef, np.zeros(k - 1)])
    t0 = time.perf_counter()
    first = _run_lp(c, a_ub, b_ub, a_eq, b_eq, var_bounds)
    if first.status != 0:
        raise NumericalFailure(f"LP failed: {first.message}")
    best = -first.fun
    # Lexicographic tie-break: smallest total utility at the optimum.
    obj_row = sparse.csr_matrix(c.reshape(1, -1))
    slack = LP_TOL * max(1.0, abs(best))
    second = _run_lp(
        np.concatenate([np.ones(k), np.zeros(k - 1)]),
        sparse.vstack([a_ub, obj_row]).tocsr(),
        np.concatenate([b_ub, [-(best - slack)]]),
        a_eq,
        b_eq,
        var_bounds,
    )
    chosen = second if second.status == 0 else first
    u = np.clip(chosen.x[:k], bounds.lower, upper)
    stats = {
        "status": "optimal",
        "objective": float(weights.value(u)),
        "lp_objective": float(best),
        "iterations": int(first.nit) + int(getattr(second, "nit", 0)),
        "tie_break": bool(second.status == 0),
        "grid_points": k,
        "seconds": time.perf_counter() - t0,
    }
    return IndirectUtility(grid, u, stats)


def solve_asymptotic(weights: ObjectiveWeights) -> IndirectUtility:
    """Same LP with the limit envelope ``U(s) <= s``."""
    return solve_reduced(weights, asymptotic_envelope(len(weights.grid)))


# ---------------------------------------------------------------------------
# Structure of the solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Maximal run of grid points sharing one classification.

    ``kind`` is ``at_lower``, ``at_upper`` or ``strictly_between``. For
    ``at_lower`` runs, ``part`` is ``zero`` or ``diagonal``; for
    ``strictly_between`` runs it is ``linear``. ``lo``/``hi`` include the
    neighbouring boundary nodes of between-runs, so chords are closed.
    """

    kind: str
    lo: float
    hi: float
    start: int
    stop: int
    part: str = ""
    slope: float = float("nan")
    intercept: float = float("nan")


@dataclass(frozen=True)
class StructureReport:
    regions: tuple
    kinks: tuple
    adjacent_between: tuple

    def of_kind(self, kind: str) -> list[Region]:
        return [r for r in self.regions if r.kind == kind]


def _classify(u, bounds, tol):
    at_lo = np.abs(u - bounds.lower) <= tol
    at_up = np.abs(u - bounds.upper) <= tol
    tag = np.where(at_lo & ~at_up, 0, np.where(at_up & ~at_lo, 1, np.where(at_lo & at_up, -1, 2)))
    known = np.flatnonzero(tag >= 0)
    if known.size == 0:
        return np.zeros_like(tag)
    ambiguous = np.flatnonzero(tag < 0)
    if ambiguous.size:
        pos = np.searchsorted(known, ambiguous)
        left = known[np.clip(pos - 1, 0, known.size - 1)]
        right = known[np.clip(pos, 0, known.size - 1)]
        nearest = np.where(np.abs(ambiguous - left) <= np.abs(right - ambiguous), left, right)
        tag[ambiguous] = tag[nearest]
    # Between-points that are bound-adjacent but listed as bound-free stay 2.
    return tag


def _runs(tag):
    edges = np.flatnonzero(np.diff(tag)) + 1
    starts = np.concatenate([[0], edges])
    stops = np.concatenate([edges, [len(tag)]])
    return list(zip(starts, stops))


def check_extreme_structure(
    u: IndirectUtility,
    bounds: EnvelopeBounds,
    tol: float = BOUND_TOL,
    kink_tol: float = KINK_TOL,
) -> StructureReport:
    """Split an LP solution into bound-touching and linear free regions.

    Free regions are cut at slope jumps larger than ``kink_tol``; each piece
    must then lie on its chord within ``10 * tol``.

    Raises
    ------
    StructureViolation
        If a free piece is curved.
    """
    grid, vals = u.grid, u.values
    tag = _classify(vals, bounds, tol)
    slopes = np.diff(vals) / np.diff(grid)
    regions: list[Region] = []
    kinks: list[float] = []
    adjacent: list[tuple[float, float]] = []
    for start, stop in _runs(tag):
        kind = int(tag[start])
        if kind == 0:
            half = int(np.searchsorted(grid, 0.5))
            cuts = [start] + ([half] if start < half < stop - 1 else []) + [stop]
            for a, b in zip(cuts[:-1], cuts[1:]):
                part = "zero" if grid[a] < 0.5 or grid[b - 1] <= 0.5 else "diagonal"
                regions.append(Region("at_lower", float(grid[a]), float(grid[b - 1]), int(a), int(b), part))
        elif kind == 1:
            regions.append(Region("at_upper", float(grid[start]), float(grid[stop - 1]), int(start), int(stop)))
        else:
            a, b = max(start - 1, 0), min(stop, len(grid) - 1)
            jumps = np.diff(slopes[a:b])
            # Slope jumps in the first/last cell come from a bound crossing
            # that falls between nodes; they are not kinks.
            inner = [a + 1 + int(i) for i in np.flatnonzero(np.abs(jumps) > kink_tol) if a + 1 < a + 1 + i < b - 1]
            pieces = [a] + inner + [b]
            kinks.extend(float(grid[i]) for i in inner)
            prev = None
            for p, q in zip(pieces[:-1], pieces[1:]):
                fp = p + 1 if p == a and q - p >= 3 else p
                fq = q - 1 if q == b and q - fp >= 3 else q
                slope = (vals[fq] - vals[fp]) / (grid[fq] - grid[fp])
                chord = vals[fp] + slope * (grid[fp : fq + 1] - grid[fp])
                dev = float(np.max(np.abs(vals[fp : fq + 1] - chord)))
                if dev > 10 * tol:
                    raise StructureViolation(
                        f"free region [{grid[p]:.4f}, {grid[q]:.4f}] deviates {dev:.2e} from its chord"
                    )
                region = Region(
                    "strictly_between", float(grid[p]), float(grid[q]), int(p), int(q + 1), "linear",
                    float(slope), float(slope * grid[fp] - vals[fp]),
                )
                if prev is not None:
                    adjacent.append((prev.hi, region.lo))
                regions.append(region)
                prev = region
    return StructureReport(tuple(regions), tuple(kinks), tuple(adjacent))


def threshold_summary(report: StructureReport) -> dict:
    """``s_min``/``s_max`` of a two-threshold shape, or the kink list."""
    lower = [r for r in report.of_kind("at_lower") if r.part == "zero"]
    upper = report.of_kind("at_upper")
    free = report.of_kind("strictly_between")
    out: dict = {"kinks": list(report.kinks)}
    if lower and lower[0].start == 0:
        out["s_min"] = lower[0].hi
    if upper and upper[-1].stop == report.regions[-1].stop:
        out["s_max"] = upper[-1].lo
    out["two_threshold"] = bool(len(free) <= 1 and "s_min" in out and "s_max" in out)
    return out
