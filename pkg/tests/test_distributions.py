import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mechlearn.distributions import (
    BetaSymmetric,
    Tabulated,
    TruncatedNormal,
    Uniform,
    conditional_pdf,
    from_config,
    lr_point,
    log_lr,
    sample,
    validate,
)
from mechlearn.exceptions import InvalidDistribution, OutOfSupport
from mechlearn.rng import stream

from conftest import FAMILIES
from oracles import conditional_tail


def test_conditional_pdf_examples():
    assert conditional_pdf(Uniform(), 0.5, 1) == pytest.approx(1.0)
    assert conditional_pdf(Uniform(), 0.25, -1) == pytest.approx(1.5)
    assert conditional_pdf(BetaSymmetric(2.0), 0.5, 1) == pytest.approx(1.5)


def test_conditional_pdf_rejects_bad_input():
    with pytest.raises(OutOfSupport):
        conditional_pdf(Uniform(), 1.2, 1)
    with pytest.raises(ValueError):
        conditional_pdf(Uniform(), 0.5, 0)


@pytest.mark.parametrize("s, expected", [(0.5, 1.0), (0.75, 3.0), (0.25, 1 / 3)])
def test_lr_point(s, expected):
    assert lr_point(s) == pytest.approx(expected)


def test_lr_point_endpoints_and_errors():
    assert lr_point(1.0) == np.inf
    assert lr_point(0.0) == 0.0
    with pytest.raises(OutOfSupport):
        lr_point(-0.1)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_builtin_families_validate(name):
    report = validate(FAMILIES[name])
    assert report.normalization_error < 1e-9
    assert report.mean_error < 1e-9
    assert report.positive_interior and report.log_concave and report.symmetric_about_half


def test_uniform_report_flags():
    report = validate(Uniform())
    assert report.log_concave and report.symmetric_about_half


def test_beta_half_is_not_log_concave():
    assert not BetaSymmetric(0.5).log_concave
    validate(BetaSymmetric(0.5))


def test_biased_tabulated_density_rejected():
    s = np.linspace(0, 1, 101)
    f = 0.7 + 0.6 * s  # integrates to 1, mean 0.55
    with pytest.raises(InvalidDistribution, match="mean"):
        validate(Tabulated(tuple(s), tuple(f)))


def test_tabulated_matches_closed_form():
    s = np.linspace(0, 1, 2001)
    tab = Tabulated(tuple(s), tuple(6 * s * (1 - s)))
    validate(tab)
    x = np.linspace(0.01, 0.99, 37)
    beta = BetaSymmetric(2.0)
    for state in (1, -1):
        assert np.max(np.abs(tab.conditional_cdf(x, state) - beta.conditional_cdf(x, state))) < 1e-6


@pytest.mark.parametrize("bad", [
    {"family": "nope"},
    {"alpha": 2},
    {"family": "beta_symmetric", "alpha": -1},
    {"family": "truncated_normal", "sigma": 0},
    {"family": "tabulated", "s": [0, 0.5, 0.7], "f": [1, 1, 1]},
])
def test_from_config_rejects(bad):
    with pytest.raises(InvalidDistribution):
        from_config(bad)


def test_from_config_roundtrip_and_csv(tmp_path):
    for d in FAMILIES.values():
        assert from_config(json.dumps(d.to_config())) == d
    path = tmp_path / "dens.csv"
    path.write_text("s,f\n0,1\n0.5,1\n1,1\n")
    d = from_config({"family": "tabulated", "csv": "dens.csv"}, base_dir=tmp_path)
    validate(d)
    assert d.support == (0.0, 1.0)


@pytest.mark.parametrize("name", sorted(FAMILIES))
@pytest.mark.parametrize("state", [1, -1])
def test_conditional_sf_matches_quadrature(name, state):
    d = FAMILIES[name]
    for cut in (0.1, 0.37, 0.5, 0.81):
        assert float(d.conditional_sf(cut, state)) == pytest.approx(conditional_tail(d, state, cut), abs=1e-10)


def test_sampling_moments():
    d = Uniform()
    n = 1_000_000
    plus = sample(d, 1, stream(1, 0), n)
    minus = sample(d, -1, stream(1, 1), n)
    se = np.sqrt(1 / 18 / n)
    assert abs(plus.mean() - 2 / 3) < 3 * se
    assert abs(minus.mean() - 1 / 3) < 3 * se
    mixed = np.where(stream(1, 2).random(n) < 0.5, plus, minus)
    assert abs(mixed.mean() - 0.5) < 3 * mixed.std() / np.sqrt(n)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.3, 8.0), s=st.floats(0.01, 0.99))
def test_state_plus_dominates_state_minus(alpha, s):
    d = BetaSymmetric(alpha)
    assert d.conditional_cdf(s, 1) <= d.conditional_cdf(s, -1) + 1e-12
    total = 0.5 * (d.conditional_cdf(s, 1) + d.conditional_cdf(s, -1))
    assert total == pytest.approx(float(d.cdf(s)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(sigma=st.floats(0.05, 2.0), s=st.floats(0.0, 1.0))
def test_symmetry_of_conditionals(sigma, s):
    d = TruncatedNormal(sigma)
    assert float(d.conditional_cdf(s, 1)) == pytest.approx(float(d.conditional_sf(1 - s, -1)), abs=1e-12)


@given(s=st.floats(1e-6, 1 - 1e-6))
def test_log_lr_inverts(s):
    x = float(log_lr(s))
    assert 1 / (1 + np.exp(-x)) == pytest.approx(s, rel=1e-9)
