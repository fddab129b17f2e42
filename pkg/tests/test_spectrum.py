"""Lambda, rate function, kappa (two ways), speed, truncated R-moments."""

import math

import numpy as np
import pytest

from rwre_lab import _tilt, env, prng, spectrum

KAPPA_TWO_POINT = math.log2(1.5)  # closed form for the canonical two-point model


# -- Lambda --------------------------------------------------------------------


def test_lambda_frozen_values(two_point_model):
    assert spectrum.lambda_fn(two_point_model, 0.0) == 0.0
    assert spectrum.lambda_fn(two_point_model, 1.0) == pytest.approx(math.log(1.1), abs=1e-15)
    assert spectrum.lambda_fn(two_point_model, 0.5) == pytest.approx(
        math.log(0.4 * math.sqrt(2) + 0.6 / math.sqrt(2)), abs=1e-15
    )
    assert spectrum.lambda_fn(two_point_model, 0.5) == pytest.approx(-0.010101, abs=5e-7)


def test_lambda_prime_matches_difference_quotient(two_point_model, markov_model):
    h = 1e-6
    for model in (two_point_model, markov_model):
        for lam in (0.2, 0.7, 1.3):
            numeric = (spectrum.lambda_fn(model, lam + h) - spectrum.lambda_fn(model, lam - h)) / (2 * h)
            assert spectrum.lambda_prime(model, lam) == pytest.approx(numeric, abs=1e-6)


def test_lambda_is_convex_on_grid(two_point_model, markov_model):
    for model in (two_point_model, markov_model):
        vals = [spectrum.lambda_fn(model, l) for l in spectrum.DEFAULT_LAMBDA_GRID]
        second = np.diff(vals, 2)
        assert np.all(second >= -1e-9)


def test_markov_power_iteration_cross_check(markov_model):
    log_rho = markov_model.log_rho_values
    p = markov_model.transition_arr
    for lam in (0.3, 0.8, 1.5):
        m = p * np.exp(lam * log_rho)[np.newaxis, :]
        assert _tilt.power_iteration_root(m) == pytest.approx(_tilt.perron_root(m), rel=1e-10)


def test_markov_finite_n_oracle(markov_model):
    # The exact finite-n normalized log moment must approach the Perron value.
    for lam in (0.25, 0.75, 1.25):
        fin = spectrum.finite_n_lambda_markov(markov_model, lam, n=2000)
        assert abs(fin - spectrum.lambda_fn(markov_model, lam)) < 1e-3


def test_markov_lambda_matches_monte_carlo(markov_model):
    # Brute-force (1/n) log E prod rho_i^lam against the Perron value.  Small
    # lam keeps the annealed product moment in the Monte-Carlo-estimable
    # regime; larger tilts put all the mass on unsampled rare environments.
    n, replicas = 50, 40_000
    for lam in (0.2, 0.4):
        cols = env.annealed_left_columns(markov_model, seed=606, replicas=replicas)
        log_prod = np.zeros(replicas)
        for _ in range(n):
            omega = next(cols)
            log_prod += lam * np.log((1 - omega) / omega)
        shift = log_prod.max()
        mc = (shift + math.log(np.mean(np.exp(log_prod - shift)))) / n
        assert abs(mc - spectrum.lambda_fn(markov_model, lam)) < 0.02


# -- kappa ---------------------------------------------------------------------


def test_kappa_root_closed_form(two_point_model):
    k = spectrum.kappa_root(two_point_model)
    assert abs(float(k) - KAPPA_TWO_POINT) < 1e-10
    assert not k.at_boundary


def test_kappa_root_monotone_in_q():
    # More frequent slow sites => smaller kappa; closed form log2((1-q)/q).
    ks = []
    for q in (0.40, 0.45, 0.49):
        model = env.make_iid_two_point(2 / 3, 1 / 3, q, master_seed=1)
        k = float(spectrum.kappa_root(model))
        assert k == pytest.approx(math.log2((1 - q) / q), abs=1e-10)
        ks.append(k)
    assert ks[0] > ks[1] > ks[2]


def test_kappa_boundary_flag():
    # rho = 1 identically: Lambda(1) = 0 exactly, the boundary case.
    k = spectrum.kappa_root(env.make_constant(0.5, master_seed=1))
    assert float(k) == 1.0
    assert k.at_boundary
    # Two-point tuned to the boundary (q = 1/3): floating-point evaluation of
    # Lambda(1) is within one ulp of zero, so the root lands next to 1 but the
    # exact-boundary flag is not guaranteed.
    model = env.make_iid_two_point(2 / 3, 1 / 3, 1 / 3, master_seed=1)
    assert float(spectrum.kappa_root(model)) == pytest.approx(1.0, abs=1e-9)


def test_kappa_via_rate_duality(two_point_model, markov_model):
    for model, tol in ((two_point_model, 1e-8), (markov_model, 1e-6)):
        k_rate = spectrum.kappa_via_rate(model)
        assert abs(float(k_rate) - float(spectrum.kappa_root(model))) < tol
        lo, hi = k_rate.argmin_interval
        assert lo <= hi


def test_kappa_via_rate_constant_rho_degenerate(ballistic_model):
    # Constant rho: J is +inf except at E log rho < 0, so min_{y>0} J(y)/y = +inf.
    assert math.isinf(float(spectrum.kappa_via_rate(ballistic_model)))


# -- rate function --------------------------------------------------------------


def test_rate_function_frozen_values(two_point_model):
    e_lr = two_point_model.e_log_rho()
    assert spectrum.rate_function(two_point_model, e_lr) == pytest.approx(0.0, abs=1e-9)
    # At x = log 2 the supremum sits at the slope limit: J = -log P(rho=2).
    assert spectrum.rate_function(two_point_model, math.log(2)) == pytest.approx(
        -math.log(0.4), abs=1e-9
    )
    assert spectrum.rate_function(two_point_model, math.log(2)) == pytest.approx(0.916291, abs=1e-6)
    assert math.isinf(spectrum.rate_function(two_point_model, 0.75))
    assert math.isinf(spectrum.rate_function(two_point_model, -0.75))
    assert spectrum.rate_function(two_point_model, 0.0) > 0.0


def test_rate_function_nonnegative_and_convex(two_point_model, markov_model):
    for model in (two_point_model, markov_model):
        s_max, _ = spectrum._slope_limit(model, +1)
        s_min, _ = spectrum._slope_limit(model, -1)
        xs = np.linspace(s_min, s_max, 41)
        js = np.array([spectrum.rate_function(model, float(x)) for x in xs])
        assert np.all(js >= -1e-12)
        assert np.all(np.diff(js, 2) >= -1e-7)


# -- speed and moments -----------------------------------------------------------


def test_speed_constant_environments():
    # omega = 2/3: R = 2 exactly, v = 1/(2*2-1) = 1/3.
    est = spectrum.speed(env.make_constant(2 / 3, master_seed=3))
    assert not est.diverged
    assert est.mean_r == pytest.approx(2.0, abs=1e-12)
    assert est.speed == pytest.approx(1 / 3, abs=1e-12)
    # omega = 3/4: R = 1.5, v = 1/2.
    est = spectrum.speed(env.make_constant(3 / 4, master_seed=3))
    assert est.speed == pytest.approx(0.5, abs=1e-12)


def test_speed_flags_divergence_in_zero_speed_regime(two_point_model, markov_model):
    for model in (two_point_model, markov_model):
        est = spectrum.speed(model, truncation_depth=500, replicas=100)
        assert est.diverged
        assert est.speed == 0.0
        assert est.tail_relative >= spectrum._TAIL_RULE


def test_r_moment_constant_rho_half():
    # rho = 1/2: truncated R at depth 60 is 2 - 2^-60.
    model = env.make_constant(2 / 3, master_seed=5)
    est = spectrum.r_moment(model, beta=1.0, truncation_depth=60, replicas=8)
    assert est.estimate == pytest.approx(2.0, abs=1e-6)
    assert not est.divergence_warning


def test_r_moment_dichotomy(two_point_model):
    # beta = 0.3 < kappa: stable in the truncation depth (common random
    # numbers make the comparison exact term-by-term).
    lo = spectrum.r_moment(two_point_model, beta=0.3, truncation_depth=1000,
                           replicas=2000, seed=17)
    hi = spectrum.r_moment(two_point_model, beta=0.3, truncation_depth=10_000,
                           replicas=2000, seed=17)
    assert not lo.divergence_warning
    assert abs(hi.estimate - lo.estimate) / lo.estimate < 0.01
    # beta = 0.9 > kappa: flagged as divergent.
    bad = spectrum.r_moment(two_point_model, beta=0.9, truncation_depth=1000,
                            replicas=2000, seed=17)
    assert bad.divergence_warning


def test_r_moment_rejects_nonpositive_beta(two_point_model):
    with pytest.raises(ValueError):
        spectrum.r_moment(two_point_model, beta=0.0, truncation_depth=10, replicas=4)


# -- empirical log rho -----------------------------------------------------------


def test_empirical_log_rho_mean(two_point_model, ballistic_model):
    real = env.EnvironmentRealization(ballistic_model, seed=1)
    assert spectrum.empirical_log_rho_mean(real, 100) == pytest.approx(-math.log(2), abs=1e-12)
    real = env.EnvironmentRealization(two_point_model, seed=1)
    assert spectrum.empirical_log_rho_mean(real, 1) == pytest.approx(
        math.log(real.rho_at(0)), abs=1e-12
    )
    n = 100_000
    mean = spectrum.empirical_log_rho_mean(real, n)
    # CLT band: sd of log rho is sqrt(q(1-q)) * log 4.
    sigma = math.sqrt(0.4 * 0.6) * math.log(4)
    assert abs(mean - two_point_model.e_log_rho()) < 4 * sigma / math.sqrt(n)
    with pytest.raises(ValueError):
        spectrum.empirical_log_rho_mean(real, 0)


# -- report ----------------------------------------------------------------------


def test_spectrum_report_invariants(two_point_model, markov_model):
    for model in (two_point_model, markov_model):
        rep = spectrum.spectrum_report(model, speed_depth=500, speed_replicas=100)
        assert rep.check_invariants() == []
        assert rep.speed.diverged
        assert rep.model_id == model.model_id()
        assert rep.negative_lambda_witness is not None
        assert rep.negative_lambda_witness < 0.0


def test_spectrum_report_detects_corruption(two_point_model):
    rep = spectrum.spectrum_report(two_point_model, speed_depth=200, speed_replicas=50)
    rep.kappa_via_rate = rep.kappa_root + 0.01
    assert any("disagree" in p for p in rep.check_invariants())
