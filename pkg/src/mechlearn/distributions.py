"""Private-belief distributions and their state-conditional counterparts.

A belief ``s`` is the posterior probability that the state is ``+1`` given
one private signal, under a uniform prior. Bayes consistency ties the
state-conditional densities to the unconditional density ``f``::

    f_{+1}(s) = 2 s f(s),    f_{-1}(s) = 2 (1 - s) f(s)

Every family below exposes closed-form (or exact piecewise) conditional
CDFs so downstream tail probabilities do not inherit quadrature noise.
"""

from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy import integrate, special, stats

from .exceptions import InvalidDistribution, OutOfSupport

STATES = (1, -1)
SAMPLING_GRID = 4097
VALIDATION_TOL = 1e-6


def _check_state(state: int) -> int:
    if state not in STATES:
        raise ValueError(f"state must be +1 or -1, got {state!r}")
    return int(state)


class BeliefDistribution(ABC):
    """Unconditional belief density on a subinterval of [0, 1]."""

    family: str = "abstract"

    # -- density ----------------------------------------------------------

    @property
    @abstractmethod
    def support(self) -> tuple[float, float]:
        """Closed support ``(s_lo, s_hi)``."""

    @abstractmethod
    def _pdf(self, s: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _dpdf(self, s: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _cdf(self, s: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _first_moment_cdf(self, s: np.ndarray) -> np.ndarray:
        """Partial first moment ``int_{s_lo}^{s} t f(t) dt``."""

    @abstractmethod
    def to_config(self) -> dict[str, Any]: ...

    def _inside(self, s: np.ndarray) -> np.ndarray:
        lo, hi = self.support
        return (s >= lo) & (s <= hi)

    def pdf(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        lo, hi = self.support
        out = np.zeros_like(s)
        inside = self._inside(s)
        out[inside] = self._pdf(np.clip(s[inside], lo, hi))
        return out

    def dpdf(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = self._inside(s)
        out[inside] = self._dpdf(s[inside])
        return out

    def score_term(self, s) -> np.ndarray:
        """``s (1 - s) f'(s)``, finite at the endpoints."""
        s = np.asarray(s, dtype=float)
        return s * (1.0 - s) * self.dpdf(s)

    def cdf(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        lo, hi = self.support
        return np.clip(self._cdf(np.clip(s, lo, hi)), 0.0, 1.0)

    def conditional_cdf(self, s, state: int) -> np.ndarray:
        """``P(belief <= s | state)``."""
        state = _check_state(state)
        s = np.asarray(s, dtype=float)
        lo, hi = self.support
        sc = np.clip(s, lo, hi)
        plus = 2.0 * self._first_moment_cdf(sc)
        out = plus if state == 1 else 2.0 * self._cdf(sc) - plus
        return np.clip(out, 0.0, 1.0)

    def conditional_sf(self, s, state: int) -> np.ndarray:
        """``P(belief > s | state)``."""
        return 1.0 - self.conditional_cdf(s, state)

    # -- flags ------------------------------------------------------------

    @property
    def log_concave(self) -> bool:
        return _numeric_log_concave(self)

    @property
    def symmetric_about_half(self) -> bool:
        lo, hi = self.support
        if abs(lo + hi - 1.0) > 1e-12:
            return False
        s = np.linspace(lo, hi, 1001)
        return bool(np.max(np.abs(self.pdf(s) - self.pdf(1.0 - s))) <= 1e-9)

    @property
    def interior_pdf_floor(self) -> float:
        lo, hi = self.support
        s = np.linspace(lo, hi, 1001)[1:-1]
        return float(np.min(self.pdf(s)))


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform(BeliefDistribution):
    family = "uniform"

    @property
    def support(self):
        return (0.0, 1.0)

    def _pdf(self, s):
        return np.ones_like(s)

    def _dpdf(self, s):
        return np.zeros_like(s)

    def _cdf(self, s):
        return s

    def _first_moment_cdf(self, s):
        return 0.5 * s * s

    def conditional_sf(self, s, state):
        state = _check_state(state)
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        return (1.0 - s) * (1.0 + s) if state == 1 else (1.0 - s) ** 2

    @property
    def log_concave(self):
        return True

    @property
    def symmetric_about_half(self):
        return True

    def to_config(self):
        return {"family": self.family}


@dataclass(frozen=True)
class BetaSymmetric(BeliefDistribution):
    """Beta(alpha, alpha); ``f_{+1}`` is Beta(alpha+1, alpha)."""

    alpha: float = 2.0
    family = "beta_symmetric"

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise InvalidDistribution(f"alpha must be positive, got {self.alpha}")

    @property
    def support(self):
        return (0.0, 1.0)

    def _pdf(self, s):
        return stats.beta.pdf(s, self.alpha, self.alpha)

    def _dpdf(self, s):
        a = self.alpha
        if a == 1.0:
            return np.zeros_like(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._pdf(s) * (a - 1.0) * (1.0 - 2.0 * s) / (s * (1.0 - s))
        return out

    def score_term(self, s):
        s = np.asarray(s, dtype=float)
        return (self.alpha - 1.0) * (1.0 - 2.0 * s) * self.pdf(s)

    def _cdf(self, s):
        return special.betainc(self.alpha, self.alpha, s)

    def _first_moment_cdf(self, s):
        return 0.5 * special.betainc(self.alpha + 1.0, self.alpha, s)

    def conditional_cdf(self, s, state):
        state = _check_state(state)
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        a = self.alpha
        return special.betainc(a + 1.0, a, s) if state == 1 else special.betainc(a, a + 1.0, s)

    def conditional_sf(self, s, state):
        state = _check_state(state)
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        a = self.alpha
        return special.betaincc(a + 1.0, a, s) if state == 1 else special.betaincc(a, a + 1.0, s)

    @property
    def log_concave(self):
        return self.alpha >= 1.0

    @property
    def symmetric_about_half(self):
        return True

    def to_config(self):
        return {"family": self.family, "alpha": float(self.alpha)}


@dataclass(frozen=True)
class TruncatedNormal(BeliefDistribution):
    """Normal(1/2, sigma^2) truncated to [0, 1]."""

    sigma: float = 0.2
    family = "truncated_normal"

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise InvalidDistribution(f"sigma must be positive, got {self.sigma}")

    @property
    def support(self):
        return (0.0, 1.0)

    @property
    def _z_edges(self):
        return -0.5 / self.sigma, 0.5 / self.sigma

    @property
    def _norm(self):
        z0, z1 = self._z_edges
        return special.ndtr(z1) - special.ndtr(z0)

    def _pdf(self, s):
        z = (s - 0.5) / self.sigma
        return stats.norm.pdf(z) / (self.sigma * self._norm)

    def _dpdf(self, s):
        return -self._pdf(s) * (s - 0.5) / self.sigma**2

    def _cdf(self, s):
        z0, _ = self._z_edges
        return (special.ndtr((s - 0.5) / self.sigma) - special.ndtr(z0)) / self._norm

    def _first_moment_cdf(self, s):
        z0, _ = self._z_edges
        z = (s - 0.5) / self.sigma
        phi = stats.norm.pdf
        body = 0.5 * (special.ndtr(z) - special.ndtr(z0)) - self.sigma * (phi(z) - phi(z0))
        return body / self._norm

    @property
    def log_concave(self):
        return True

    @property
    def symmetric_about_half(self):
        return True

    def to_config(self):
        return {"family": self.family, "sigma": float(self.sigma)}


@dataclass(frozen=True)
class Tabulated(BeliefDistribution):
    """Piecewise-linear density on a uniform knot grid.

    Parameters
    ----------
    knots : tuple of float
        Equally spaced belief values; the first and last define the support.
    values : tuple of float
        Density at each knot.
    """

    knots: tuple
    values: tuple
    family = "tabulated"

    def __post_init__(self):
        s = np.asarray(self.knots, dtype=float)
        f = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.shape != f.shape or s.size < 2:
            raise InvalidDistribution("knots and values must be 1-D of equal length >= 2")
        if s[0] < 0 or s[-1] > 1 or np.any(np.diff(s) <= 0):
            raise InvalidDistribution("knots must increase within [0, 1]")
        step = np.diff(s)
        if np.max(np.abs(step - step.mean())) > 1e-9:
            raise InvalidDistribution("knots must be equally spaced")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise InvalidDistribution("density values must be finite and nonnegative")

    @property
    def _s(self):
        return np.asarray(self.knots, dtype=float)

    @property
    def _f(self):
        return np.asarray(self.values, dtype=float)

    @property
    def support(self):
        return (float(self.knots[0]), float(self.knots[-1]))

    def _segment(self, s):
        k = np.clip(np.searchsorted(self._s, s, side="right") - 1, 0, len(self.knots) - 2)
        slope = np.diff(self._f) / np.diff(self._s)
        return k, s - self._s[k], slope[k]

    def _pdf(self, s):
        k, u, m = self._segment(s)
        return self._f[k] + m * u

    def _dpdf(self, s):
        return self._segment(s)[2]

    def _cumulative(self):
        s, f = self._s, self._f
        h = np.diff(s)
        m = np.diff(f) / h
        seg0 = f[:-1] * h + m * h**2 / 2
        seg1 = s[:-1] * f[:-1] * h + (s[:-1] * m + f[:-1]) * h**2 / 2 + m * h**3 / 3
        return np.concatenate([[0.0], np.cumsum(seg0)]), np.concatenate([[0.0], np.cumsum(seg1)])

    def _cdf(self, s):
        c0, _ = self._cumulative()
        k, u, m = self._segment(s)
        f = self._f[k]
        return c0[k] + f * u + m * u**2 / 2

    def _first_moment_cdf(self, s):
        _, c1 = self._cumulative()
        k, u, m = self._segment(s)
        sk, f = self._s[k], self._f[k]
        return c1[k] + sk * f * u + (sk * m + f) * u**2 / 2 + m * u**3 / 3

    @property
    def log_concave(self):
        return _numeric_log_concave(self)

    def to_config(self):
        return {"family": self.family, "s": list(map(float, self.knots)), "f": list(map(float, self.values))}

    @classmethod
    def from_csv(cls, path: str | Path) -> "Tabulated":
        """Read a two-column ``s,f`` CSV (header optional)."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise InvalidDistribution(f"non-numeric row in {path}: {row}")
        if not rows:
            raise InvalidDistribution(f"no density rows found in {path}")
        s, f = zip(*rows)
        return cls(tuple(s), tuple(f))


def _numeric_log_concave(d: BeliefDistribution, points: int = 1001) -> bool:
    lo, hi = d.support
    s = np.linspace(lo, hi, points)[1:-1]
    f = d.pdf(s)
    if np.any(f <= 0):
        return False
    return bool(np.max(np.diff(np.log(f), 2)) <= 1e-9)


# ---------------------------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------------------------


def from_config(config: Mapping[str, Any] | str, base_dir: str | Path | None = None) -> BeliefDistribution:
    """Build a distribution from a JSON-like mapping or JSON string.

    Examples
    --------
    >>> from_config({"family": "beta_symmetric", "alpha": 2.0})
    BetaSymmetric(alpha=2.0)
    """
    if isinstance(config, str):
        config = json.loads(config)
    if not isinstance(config, Mapping) or "family" not in config:
        raise InvalidDistribution("distribution config needs a 'family' key")
    family = config["family"]
    try:
        if family == "uniform":
            return Uniform()
        if family == "beta_symmetric":
            return BetaSymmetric(float(config.get("alpha", 2.0)))
        if family == "truncated_normal":
            return TruncatedNormal(float(config.get("sigma", 0.2)))
        if family == "tabulated":
            if "csv" in config:
                path = Path(config["csv"])
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                return Tabulated.from_csv(path)
            return Tabulated(tuple(map(float, config["s"])), tuple(map(float, config["f"])))
    except (TypeError, KeyError) as exc:
        raise InvalidDistribution(f"bad parameters for family {family!r}: {exc}") from exc
    raise InvalidDistribution(f"unknown family {family!r}")


@dataclass(frozen=True)
class ValidationReport:
    normalization_error: float
    mean_error: float
    positive_interior: bool
    log_concave: bool
    symmetric_about_half: bool
    score_bound: float


def validate(d: BeliefDistribution, tol: float = VALIDATION_TOL) -> ValidationReport:
    """Check normalization and the unbiased-prior mean condition.

    Raises
    ------
    InvalidDistribution
        If the density integrates away from one or its mean differs from 1/2
        by more than ``tol``, or if it vanishes inside the support.
    """
    lo, hi = d.support
    pts = list(getattr(d, "knots", ()))[1:-1][:200] or None
    mass = integrate.quad(lambda t: float(d.pdf(t)), lo, hi, points=pts, limit=500, epsabs=1e-13)[0]
    mean = integrate.quad(lambda t: t * float(d.pdf(t)), lo, hi, points=pts, limit=500, epsabs=1e-13)[0]
    grid = np.linspace(lo, hi, 1001)[1:-1]
    f = d.pdf(grid)
    positive = bool(np.all(f > 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.abs(d.dpdf(grid) / f)
    report = ValidationReport(
        normalization_error=abs(mass - 1.0),
        mean_error=abs(mean - 0.5),
        positive_interior=positive,
        log_concave=d.log_concave,
        symmetric_about_half=d.symmetric_about_half,
        score_bound=float(np.max(score[np.isfinite(score)])) if positive else float("inf"),
    )
    if report.normalization_error > tol:
        raise InvalidDistribution(f"density integrates to {mass:.9f}")
    if report.mean_error > tol:
        raise InvalidDistribution(f"belief mean {mean:.9f} differs from 1/2")
    if not positive:
        raise InvalidDistribution("density vanishes inside its support")
    return report


# ---------------------------------------------------------------------------
# Pointwise helpers
# ---------------------------------------------------------------------------


def conditional_pdf(d: BeliefDistribution, s, state: int, strict: bool = True) -> np.ndarray:
    """State-conditional density ``f_state(s)``."""
    state = _check_state(state)
    s = np.asarray(s, dtype=float)
    lo, hi = d.support
    if strict and np.any((s < lo - 1e-12) | (s > hi + 1e-12)):
        raise OutOfSupport(f"belief outside support [{lo}, {hi}]")
    weight = 2.0 * s if state == 1 else 2.0 * (1.0 - s)
    return weight * d.pdf(s)


def lr_point(s) -> np.ndarray | float:
    """Likelihood ratio ``s / (1 - s)``; ``inf`` at ``s = 1``."""
    arr = np.asarray(s, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise OutOfSupport("likelihood ratio needs beliefs in [0, 1]")
    with np.errstate(divide="ignore"):
        out = np.where(arr < 1.0, arr / np.where(arr < 1.0, 1.0 - arr, 1.0), np.inf)
    return float(out) if out.ndim == 0 else out


def log_lr(s) -> np.ndarray:
    """Log likelihood ratio, with +-inf at the endpoints."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(s) - np.log1p(-s)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def inverse_cdf_table(d: BeliefDistribution, state: int, points: int = SAMPLING_GRID):
    """Grid and normalized cumulative-trapezoid CDF of ``f_state``."""
    lo, hi = d.support
    grid = np.linspace(lo, hi, points)
    dens = conditional_pdf(d, grid, state)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    grid.setflags(write=False)
    cdf.setflags(write=False)
    return grid, cdf


def sample(d: BeliefDistribution, state: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw beliefs from ``f_state`` by inverting the tabulated CDF."""
    grid, cdf = inverse_cdf_table(d, _check_state(state))
    return np.interp(rng.random(size), cdf, grid)
