"""Independent reference computations used only by the tests.

Nothing here touches the log-likelihood-ratio grid, the LP or the
mechanism classes; everything is direct quadrature in belief space.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate


def joint_density(d, s1, s2):
    """Density of two conditionally independent beliefs, state integrated out."""
    f1, f2 = d.pdf(s1), d.pdf(s2)
    return 2.0 * f1 * f2 * (s1 * s2 + (1.0 - s1) * (1.0 - s2))


def conditional_tail(d, state, cut):
    """``P[s >= cut | state]`` by adaptive quadrature of ``2s f`` or ``2(1-s) f``."""
    w = (lambda t: 2.0 * t) if state == 1 else (lambda t: 2.0 * (1.0 - t))
    lo, hi = d.support
    cut = min(max(cut, lo), hi)
    return integrate.quad(lambda t: w(t) * float(d.pdf(t)), cut, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def pair_tail(d, state, tau):
    """``P[LR(s1) LR(s2) >= tau | state]`` by 2-D quadrature."""
    w = (lambda t: 2.0 * t) if state == 1 else (lambda t: 2.0 * (1.0 - t))
    lo, hi = d.support

    def inner_lo(s1):
        c = tau * (1.0 - s1) / s1
        return max(lo, c / (1.0 + c))

    return integrate.dblquad(
        lambda s2, s1: w(s1) * w(s2) * float(d.pdf(s1)) * float(d.pdf(s2)),
        max(lo, 1e-300), hi, inner_lo, lambda s1: hi, epsabs=1e-12, epsrel=1e-10,
    )[0]


def efficient_value_pair(d):
    """``P[s1 + s2 >= 1]`` under the joint law, i.e. the two-agent efficient value."""
    lo, hi = d.support
    return integrate.dblquad(
        lambda s2, s1: joint_density(d, s1, s2), lo, hi, lambda s1: max(lo, 1.0 - s1), lambda s1: hi,
        epsabs=1e-12, epsrel=1e-10,
    )[0]


def envelope_pair(d, s):
    """Two-agent efficient envelope and its slope at each belief in ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u, du = np.empty_like(s), np.empty_like(s)
    for i, x in enumerate(s):
        tp, tm = conditional_tail(d, 1, 1.0 - x), conditional_tail(d, -1, 1.0 - x)
        u[i] = x * tp - (1.0 - x) * tm
        du[i] = tp + tm
    return u, du


def value_of_utility(d, s, u, du):
    """Designer value ``int f [(2s-1) U + 2s(1-s) U']`` on a fine grid.

    Uses the interim allocation identity directly, with no integration by
    parts, so it checks the objective weights independently.
    """
    integrand = d.pdf(s) * ((2.0 * s - 1.0) * u + 2.0 * s * (1.0 - s) * du)
    return float(integrate.simpson(integrand, x=s))


def bauer_bruteforce(d, lattice: int = 41, fine: int = 4001, envelope=None):
    """Best value over piecewise-linear extreme shapes with kinks on a coarse lattice.

    Each candidate is zero up to a lattice kink ``k``, then linear, then
    follows either the efficient envelope (the line is the tangent from
    ``(k, 0)``) or the diagonal ``2s - 1`` (the line is a chord to a second
    lattice point). Chords above the envelope are discarded.
    """
    s = np.linspace(0.0, 1.0, fine)
    ubar, dubar = envelope(s) if envelope else envelope_pair(d, s)
    knots = np.linspace(0.0, 1.0, lattice)
    best, arg = -np.inf, None

    def consider(u, du, label):
        nonlocal best, arg
        v = value_of_utility(d, s, u, du)
        if v > best:
            best, arg = v, label

    for ka in knots[:-1]:
        right = s > ka
        ratio = np.where(right, ubar / np.where(right, s - ka, 1.0), np.inf)
        j = int(np.argmin(ratio))
        slope = float(ratio[j])
        u = np.where(s < ka, 0.0, np.where(s <= s[j], slope * (s - ka), ubar))
        du = np.where(s < ka, 0.0, np.where(s <= s[j], slope, dubar))
        consider(u, du, (float(ka), float(s[j]), "envelope"))
        for kb in knots[knots > max(ka, 0.5)]:
            slope = (2.0 * kb - 1.0) / (kb - ka)
            mid = (s >= ka) & (s <= kb)
            if slope > 2.0 or np.any(slope * (s[mid] - ka) > ubar[mid] + 1e-9):
                continue
            u = np.where(s < ka, 0.0, np.where(s <= kb, slope * (s - ka), 2.0 * s - 1.0))
            du = np.where(s < ka, 0.0, np.where(s <= kb, slope, 2.0))
            consider(u, du, (float(ka), float(kb), "diagonal"))
    return best, arg


def subdiagonal_pooled_mass(d, s_min, s_max, tau):
    """Probability that a pooled type is served while ``s1 + s2 < 1``."""
    cut = tau / (1.0 + tau)
    return integrate.dblquad(
        lambda s2, s1: joint_density(d, s1, s2),
        s_min, s_max, lambda s1: cut, lambda s1: max(cut, 1.0 - s1), epsabs=1e-12, epsrel=1e-10,
    )[0]


def pair_mechanism_value(d, rule, breaks=()):
    """Two-agent value of an arbitrary allocation ``rule(s1, s2)`` by 2-D quadrature."""
    lo, hi = d.support
    edges = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.dblquad(
            lambda s2, s1: rule(s1, s2) * joint_density(d, s1, s2), a, b, lo, hi, epsabs=1e-10, epsrel=1e-8,
        )[0]
    return total
