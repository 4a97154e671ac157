import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scalemod.diagnostics import (
    DiagnosticsConfig,
    F1,
    F1_direct,
    F_direct,
    F_factorized,
    F_sweep,
    check_modulability,
    check_theorem_conditions,
    diagnose,
    level_set_pairs,
    phi,
    psi,
    psi_dtheta,
    rank_one_residual,
    sample_subsets,
)
from scalemod.errors import InsufficientCoverage, LevelSetExhausted, MeanShapeError
from scalemod.functions import FD_STEP, handle
from scalemod.model import (
    AffineMean,
    CustomMean,
    CustomScale,
    SemilinearScale,
    SubsetOmega,
    eval_scale,
    mixed_log_derivative,
)

from oracles import CAUCHY_F, CAUCHY_OMEGA, F1_OMEGA, F1_THETA_X

FAST = DiagnosticsConfig(n_subsets=8, n_pairs=6, grid=9)


def with_mean(scn, form, *params):
    return scn.replace(mean=CustomMean(handle(form, *params)))


# --- psi and phi -------------------------------------------------------------

def test_psi_examples(scen_g, scen_c):
    assert psi(scen_g, 0.3, 1.0, 2.0) == pytest.approx(1.0)
    for th in (-2.0, 0.0, 4.0):
        assert psi(scen_g, th, 1.5, 1.5) == pytest.approx(0.0, abs=1e-15)
    assert psi(scen_c, 0.0, 1.0, 2.0) == pytest.approx(-0.2, abs=1e-12)


def test_psi_dtheta_examples(scen_g, scen_c):
    th = np.linspace(-6, 6, 11)
    np.testing.assert_array_equal(psi_dtheta(scen_g, th, 0.4, -1.2), 0.0)
    assert psi_dtheta(scen_c, 0.0, 1.0, 2.0) == pytest.approx(0.24, abs=1e-12)


@pytest.mark.parametrize("name", ["scen_cauchy_sum", "scen_gaussian_product", "scen_affine_mean"])
def test_psi_dtheta_matches_difference(shipped, name):
    scn = shipped[name]
    rng = np.random.default_rng(4)
    th, x, y = rng.uniform(0.5, 4, (3, 50))
    fd = (psi(scn, th + FD_STEP, x, y) - psi(scn, th - FD_STEP, x, y)) / (2 * FD_STEP)
    np.testing.assert_allclose(psi_dtheta(scn, th, x, y), fd, atol=1e-6)


def test_phi_examples(scen_g):
    assert phi(scen_g, 0.7, 1.0, -2.0) == 0.0
    scn = with_mean(scen_g, "monomials3", 1.0, 1, 1, 0)
    for x, y in [(1.0, 2.0), (-3.0, 0.5)]:
        assert phi(scn, 0.8, x, y) == pytest.approx(0.8)


# --- F and F1 ------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(a=st.floats(-6, 2), w=st.floats(0.5, 4), x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_F_vanishes_for_gaussian_sum(scen_g, a, w, x, y):
    om = SubsetOmega(((a, min(a + w, 6.0)),))
    assert abs(F_factorized(scen_g, om, x, y)) <= 1e-8
    assert abs(F_direct(scen_g, om, x, y)) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-6, 2), w=st.floats(0.5, 4), x=st.floats(0.5, 3), y=st.floats(0.5, 3))
def test_F_vanishes_for_isotropic_mean(shipped, a, w, x, y):
    scn = shipped["scen_isotropic"]
    om = SubsetOmega(((a, min(a + w, 6.0)),))
    assert abs(F_factorized(scn, om, x, y)) <= 1e-10


def test_F_cauchy_oracle(scen_c):
    om = SubsetOmega(CAUCHY_OMEGA)
    assert F_direct(scen_c, om, 1.0, 2.0) == pytest.approx(CAUCHY_F, rel=1e-9)
    assert F_factorized(scen_c, om, 1.0, 2.0) == pytest.approx(CAUCHY_F, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-6, -0.5), b=st.floats(0.5, 6), x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_fubini_on_cauchy(scen_c, a, b, x, y):
    om = SubsetOmega(((a, a + 0.5), (b - 0.3, b)))
    d, f = F_direct(scen_c, om, x, y), F_factorized(scen_c, om, x, y)
    assert abs(d - f) <= max(1e-9 * abs(d), 1e-12)


def test_F1_examples(scen_g):
    om = SubsetOmega(F1_OMEGA)
    assert abs(F1(scen_g, om, 1.0, 2.0)) <= 1e-8
    tx = with_mean(scen_g, "monomials3", 1.0, 1, 1, 0)
    assert F1_direct(tx, om, 1.0, 2.0) == pytest.approx(F1_THETA_X, rel=1e-9)
    assert F1(tx, om, 1.0, 2.0) == pytest.approx(F1_THETA_X, rel=1e-9)


def test_F1_isotropic_reduction(scen_g):
    # m = c * x: psi constant, so F1 = -(1/f'_x) m'_x D^2
    scn = with_mean(scen_g, "monomials3", 2.0, 0, 1, 0)
    om = SubsetOmega(((-1.0, 3.0),))
    x, y = 0.5, 1.0
    from scalemod.bayes import log_posterior_mass
    D = np.exp(log_posterior_mass(scn, om, x, y))
    assert F1(scn, om, x, y) == pytest.approx(-2.0 * D**2, rel=1e-10)


def test_F1_rejects_mean_depending_on_y(scen_g):
    scn = with_mean(scen_g, "monomials3", 1.0, 0, 0, 1)
    with pytest.raises(MeanShapeError):
        F1(scn, scen_g.omega_full, 1.0, 2.0)


# --- sampling ------------------------------------------------------------------

def test_subsets_reproducible_and_valid():
    a = sample_subsets((-6, 6), 30, 9)
    assert a == sample_subsets((-6, 6), 30, 9)
    assert sample_subsets((-6, 6), 1, 9) == a[:1]
    for om in a:
        assert 1 <= len(om.intervals) <= 3
        assert om.within((-6, 6))
        assert all(hi - lo >= 0.6 - 1e-12 for lo, hi in om.intervals)


@pytest.mark.parametrize("name", ["scen_gaussian_sum", "scen_gaussian_product", "scen_affine_mean"])
def test_level_set_pairs_share_scale(shipped, name):
    scn = shipped[name]
    pairs = level_set_pairs(scn.scale, (scn.x_support, scn.y_support), 20, 3)
    assert len(pairs) == 20
    for p1, p2 in pairs:
        assert p1 != p2
        assert abs(eval_scale(scn.scale, *p1) - eval_scale(scn.scale, *p2)) <= 1e-10


def test_level_set_exhausted():
    # y barely moves f, so a partner exists only when x2 is within 0.006 of x1
    s = SemilinearScale(handle("identity"), handle("linear", 1e-3, 0.0))
    with pytest.raises(LevelSetExhausted):
        level_set_pairs(s, ((-6, 6), (-6, 6)), 50, 0)


def test_level_set_pairs_custom_scale():
    s = CustomScale(handle("monomials2", 1.0, 1, 0, 1.0, 0, 3))
    for p1, p2 in level_set_pairs(s, ((-2, 2), (-2, 2)), 10, 1):
        assert abs(eval_scale(s, *p1) - eval_scale(s, *p2)) <= 1e-10


# --- modulability --------------------------------------------------------------

def test_gaussian_sum_modulable(scen_g):
    rep = check_modulability(scen_g, FAST)
    assert rep.modulable and rep.max_discrepancy <= 1e-6
    assert rep.n_evaluated == 48 and rep.n_skipped == 0


def test_gaussian_product_not_modulable_with_witness(scen_prod):
    cfg = DiagnosticsConfig(n_subsets=4, n_pairs=5, probe_pairs=(((1.0, 2.0), (4.0, 0.5)),))
    rep = check_modulability(scen_prod, cfg)
    assert not rep.modulable
    probe = rep.probes[0]
    assert (probe.m1, probe.m2) == (pytest.approx(1.0, abs=1e-9), pytest.approx(1.5, abs=1e-9))
    assert probe.discrepancy == pytest.approx(0.5, abs=1e-9)


def test_isotropic_modulable_under_product_scale(shipped):
    rep = check_modulability(shipped["scen_isotropic"], FAST)
    assert rep.modulable


def test_insufficient_coverage(scen_g):
    from scalemod.model import LocationFamily
    fam = LocationFamily("gaussian_location", 0.05, (-6.0, 6.0))
    scn = scen_g.replace(family_x=fam, family_y=fam)
    with pytest.raises(InsufficientCoverage):
        check_modulability(scn, DiagnosticsConfig(n_subsets=3, n_pairs=10))


def test_verdict_follows_tolerance(scen_prod):
    loose = check_modulability(scen_prod, DiagnosticsConfig(n_subsets=2, n_pairs=3, tol_modulable=1e6))
    assert loose.modulable


# --- theorem conditions -----------------------------------------------------

def test_rank_one_residual():
    u, v = np.array([1.0, -2.0, 3.0]), np.array([0.5, 4.0])
    assert rank_one_residual(np.outer(u, v)) <= 1e-15
    assert rank_one_residual(np.zeros((3, 3))) == 0.0
    assert rank_one_residual(np.eye(2)) == 1.0


def test_cauchy_minor_example(scen_c):
    M = mixed_log_derivative(scen_c.family_x, np.array([1.0, 2.0])[None, :], np.array([0.0, 1.0])[:, None])
    minor = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    assert abs(minor) == pytest.approx(0.48, abs=1e-12)


def test_conditions_gaussian_sum(scen_g):
    rep = check_theorem_conditions(scen_g)
    for name in ("semilinearity", "exponential_family", "psi_theta", "phi", "mean_affine"):
        assert rep.conditions[name]["residual"] <= 1e-8, name
    assert rep.all_conditions_pass
    assert rep.skip_fraction == 0.0
    spreads = [p["spread"] for p in rep.psi_lambda]
    assert max(spreads) <= 1e-8


def test_conditions_gaussian_product(scen_prod):
    rep = check_theorem_conditions(scen_prod)
    assert rep.semilinearity_residual == pytest.approx(1.0, abs=1e-12)
    assert not rep.conditions["semilinearity"]["pass"]
    assert 0 < rep.skip_fraction < 1


def test_conditions_cauchy(scen_c):
    rep = check_theorem_conditions(scen_c)
    assert rep.expfam_residual >= 0.1
    assert rep.psi_theta_residual >= 0.24
    assert rep.conditions["semilinearity"]["pass"] and rep.conditions["mean_affine"]["pass"]


def test_conditions_detect_nonaffine_mean(scen_g):
    rep = check_theorem_conditions(with_mean(scen_g, "monomials3", 1.0, 1, 2, 0))
    assert not rep.conditions["mean_affine"]["pass"]


def test_residuals_nonnegative(shipped):
    for scn in shipped.values():
        rep = check_theorem_conditions(scn, DiagnosticsConfig(grid=7))
        assert all(c["residual"] >= 0 and np.isfinite(c["residual"]) for c in rep.conditions.values())


def test_conditions_imply_modulability(shipped):
    for scn in shipped.values():
        rep = diagnose(scn, FAST)
        if rep.all_conditions_pass:
            assert rep.modulable, scn.name


def test_checker_and_verifier_agree_on_product(scen_prod):
    rep = diagnose(scen_prod, FAST)
    assert not rep.modulable and not rep.conditions["semilinearity"]["pass"]


def test_sweep_and_report(scen_g):
    rep = F_sweep(scen_g, FAST)
    assert len(rep.F_values) == 8 * 9
    assert max(abs(v["F"]) for v in rep.F_values) <= 1e-8
    d = rep.to_dict()
    assert d["format"] == 1 and "expfam_residual" in d


def test_affine_mean_defaults(scen_g):
    # mean affine in a scaled statistic still passes the affine test
    m = AffineMean(handle("identity"), handle("constant", 2.0), handle("identity"), handle("identity"))
    rep = check_theorem_conditions(scen_g.replace(mean=m))
    assert rep.conditions["mean_affine"]["pass"]
