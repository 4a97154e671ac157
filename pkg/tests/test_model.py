import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scalemod.errors import DivergentPartial, EvaluationError, SchemaError
from scalemod.functions import FD_STEP, handle
from scalemod.model import (
    AffineMean,
    CustomMean,
    CustomScale,
    ExponentialFamily,
    LocationFamily,
    ProductScale,
    SemilinearScale,
    SubsetOmega,
    ThetaPrior,
    eval_log_density,
    eval_mean,
    eval_mean_dx,
    eval_mean_dy,
    eval_scale,
    eval_scale_dx,
    eval_scale_dxdy,
    eval_scale_dy,
    inverse_partials,
    is_isotropic,
    log_density_dx,
    mixed_log_derivative,
)

from oracles import SQRT_2PI

BOX = (-6.0, 6.0)
GAUSS = LocationFamily("gaussian_location", 1.0, BOX)
CAUCHY = LocationFamily("cauchy_location", 1.0, BOX)
IDENT = handle("identity")


def gauss_expfam(log_normalizer=handle("polynomial", 0.0, 0.0, 0.5)):
    return ExponentialFamily(handle("normal_pdf", 0.0, 1.0), IDENT, IDENT, log_normalizer, BOX)


# --- densities -------------------------------------------------------------

def test_log_density_examples():
    assert eval_log_density(GAUSS, 0.0, 0.0) == pytest.approx(-math.log(SQRT_2PI), abs=1e-12)
    assert eval_log_density(gauss_expfam(), 1.0, 1.0) == pytest.approx(-0.918939, abs=1e-6)
    assert eval_log_density(CAUCHY, 1.0, 0.0) == pytest.approx(math.log(1 / (2 * math.pi)), abs=1e-12)
    assert eval_log_density(CAUCHY, 1.0, 0.0) == pytest.approx(-1.837877, abs=1e-6)


def test_score_examples():
    assert log_density_dx(GAUSS, 1.0, 0.0) == pytest.approx(-1.0)
    assert log_density_dx(CAUCHY, 1.0, 0.0) == pytest.approx(-1.0)


def test_mixed_examples():
    xs = np.linspace(-5, 5, 7)
    np.testing.assert_allclose(mixed_log_derivative(GAUSS, xs, 0.3), 1.0)
    assert mixed_log_derivative(CAUCHY, 2.0, 0.0) == pytest.approx(-0.24, abs=1e-12)
    assert mixed_log_derivative(CAUCHY, 1.0, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_expfam_matches_named_location_on_grid():
    xs = np.linspace(*BOX, 20)[None, :]
    th = np.linspace(*BOX, 20)[:, None]
    a = eval_log_density(gauss_expfam(), xs, th)
    b = eval_log_density(GAUSS, xs, th)
    np.testing.assert_allclose(np.exp(a), np.exp(b), rtol=1e-10, atol=0)


def test_numeric_normalizer_matches_closed_form_up_to_truncation():
    fam = gauss_expfam("numeric")
    th = np.array([-2.0, 0.0, 1.5])
    lo, hi = BOX
    from scipy import stats
    mass = stats.norm.cdf(hi - th) - stats.norm.cdf(lo - th)
    expected = stats.norm.logpdf(0.5, loc=th) - np.log(mass)
    np.testing.assert_allclose(eval_log_density(fam, 0.5, th), expected, atol=1e-12)


FAMILIES = {
    "gauss": GAUSS,
    "cauchy": CAUCHY,
    "gauss_scaled": LocationFamily("gaussian_location", 0.7, BOX),
    "cauchy_scaled": LocationFamily("cauchy_location", 1.8, BOX),
    "expfam": gauss_expfam(),
}


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_score_and_mixed_match_differences(name):
    fam = FAMILIES[name]
    rng = np.random.default_rng(11)
    x = rng.uniform(-5, 5, 100)
    th = rng.uniform(-5, 5, 100)
    h = FD_STEP
    fd_x = (eval_log_density(fam, x + h, th) - eval_log_density(fam, x - h, th)) / (2 * h)
    np.testing.assert_allclose(log_density_dx(fam, x, th), fd_x, atol=1e-6)
    fd_mixed = (log_density_dx(fam, x, th + h) - log_density_dx(fam, x, th - h)) / (2 * h)
    np.testing.assert_allclose(mixed_log_derivative(fam, x, th), fd_mixed, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-6, 6), th=st.floats(-6, 6), s=st.floats(0.2, 3))
def test_density_positive(x, th, s):
    # positivity is a statement about the log-density being finite
    for kind in ("gaussian_location", "cauchy_location"):
        assert np.isfinite(eval_log_density(LocationFamily(kind, s, BOX), x, th))


def test_evaluation_error_names_point():
    fam = ExponentialFamily(handle("normal_pdf", 0.0, 1.0), handle("exp", 1.0, 1.0),
                            handle("exp", 1.0, 1.0), handle("constant", 0.0), BOX)
    with np.errstate(over="ignore"), pytest.raises(EvaluationError) as err:
        eval_log_density(fam, 5.0, 800.0)
    assert "x=5, theta=800" in str(err.value)


# --- prior -----------------------------------------------------------------

def test_prior_kept_when_normalized():
    prior = ThetaPrior(handle("normal_pdf", 0.0, 1.0), BOX)
    assert prior.norm == 1.0


def test_prior_renormalized_when_off():
    prior = ThetaPrior(handle("constant", 1.0), (0.0, 4.0))
    assert prior.norm == pytest.approx(4.0)
    assert prior.pdf(1.0) == pytest.approx(0.25)


def test_prior_rejects_negative_density():
    with pytest.raises(SchemaError):
        ThetaPrior(handle("identity"), (-1.0, 1.0))


# --- means -----------------------------------------------------------------

def test_mean_examples():
    m = AffineMean(IDENT, handle("constant", 0.0))
    for x, y in [(0, 0), (3, -2), (-5, 5)]:
        assert eval_mean(m, 0.7, x, y) == pytest.approx(0.7)
    m2 = AffineMean(handle("constant", 0.0), handle("constant", 1.0))
    assert eval_mean(m2, 0.0, 1.0, 2.0) == pytest.approx(3.0)


MEANS = {
    "affine": AffineMean(IDENT, handle("polynomial", 0.0, 0.0, 1.0), IDENT, handle("linear", 2.0, 0.0)),
    "affine_exp": AffineMean(handle("exp", 1.0, 0.3), IDENT, handle("exp", 0.5, 0.4), IDENT),
    "custom": CustomMean(handle("monomials3", 1.0, 1, 1, 0, 0.5, 0, 2, 1)),
}


@pytest.mark.parametrize("name", sorted(MEANS))
def test_mean_partials_match_differences(name):
    m = MEANS[name]
    rng = np.random.default_rng(5)
    th, x, y = rng.uniform(-2, 2, (3, 100))
    h = FD_STEP
    np.testing.assert_allclose(eval_mean_dx(m, th, x, y),
                               (eval_mean(m, th, x + h, y) - eval_mean(m, th, x - h, y)) / (2 * h),
                               atol=1e-6)
    np.testing.assert_allclose(eval_mean_dy(m, th, x, y),
                               (eval_mean(m, th, x, y + h) - eval_mean(m, th, x, y - h)) / (2 * h),
                               atol=1e-6)


def test_isotropy_detection():
    grid = np.linspace(-3, 3, 7)
    assert is_isotropic(AffineMean(handle("constant", 2.5), handle("constant", 0.0)), grid, grid, grid)
    assert not is_isotropic(AffineMean(IDENT, handle("constant", 0.0)), grid, grid, grid)


# --- scales ----------------------------------------------------------------

def test_scale_examples():
    s = SemilinearScale(IDENT, IDENT)
    assert (eval_scale(s, 1.0, 2.0), eval_scale_dx(s, 1.0, 2.0), eval_scale_dy(s, 1.0, 2.0),
            eval_scale_dxdy(s, 1.0, 2.0)) == (3.0, 1.0, 1.0, 0.0)
    p = ProductScale()
    assert (eval_scale(p, 4.0, 0.5), eval_scale_dx(p, 4.0, 0.5), eval_scale_dy(p, 4.0, 0.5),
            eval_scale_dxdy(p, 4.0, 0.5)) == (2.0, 0.5, 4.0, 1.0)


def test_custom_scale_partials_match_differences():
    s = CustomScale(handle("monomials2", 1.0, 2, 1, 0.5, 0, 3))
    rng = np.random.default_rng(8)
    x, y = rng.uniform(-2, 2, (2, 100))
    h = FD_STEP
    np.testing.assert_allclose(eval_scale_dx(s, x, y),
                               (eval_scale(s, x + h, y) - eval_scale(s, x - h, y)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(eval_scale_dy(s, x, y),
                               (eval_scale(s, x, y + h) - eval_scale(s, x, y - h)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(eval_scale_dxdy(s, x, y),
                               (eval_scale_dx(s, x, y + h) - eval_scale_dx(s, x, y - h)) / (2 * h),
                               atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-6, 6), y=st.floats(-6, 6))
def test_mixed_partial_of_scales(x, y):
    assert eval_scale_dxdy(SemilinearScale(handle("exp", 1.0, 0.2), handle("polynomial", 0, 1, 1)), x, y) == 0
    assert eval_scale_dxdy(ProductScale(), x, y) == 1


def test_inverse_partials_diverge_at_zero():
    with pytest.raises(DivergentPartial):
        inverse_partials(ProductScale(), 1.0, 0.0)


# --- subsets ---------------------------------------------------------------

def test_omega_parse_and_validation():
    om = SubsetOmega.parse("2:3, -1:0.5")
    assert om.intervals == ((-1.0, 0.5), (2.0, 3.0))
    assert om.length == pytest.approx(2.5)
    for bad in ("1:0", "0:1,0.5:2", "0-1", "a:b"):
        with pytest.raises(SchemaError):
            SubsetOmega.parse(bad)


def test_scenario_rejects_constant_scale(scen_g):
    with pytest.raises(SchemaError):
        scen_g.replace(scale=SemilinearScale(handle("constant", 1.0), handle("constant", 2.0)))


def test_scenario_checks_omega(scen_g):
    with pytest.raises(SchemaError):
        scen_g.check_omega(SubsetOmega(((5.0, 9.0),)))
