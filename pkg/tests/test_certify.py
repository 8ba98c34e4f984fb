import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowembed.certify import (
    BoundHypothesisWarning,
    DegenerateError,
    ErrorReport,
    UnstableDerivativeError,
    best_order,
    default_mu_grid,
    embedding_error,
    epsilon_for_exponential_bound,
    epsilon_slope_check,
    exponential_bound,
    lie_coefficient,
    lie_vs_field_taylor,
    measure_error,
    mu_order_check,
    mu_radius,
    order_sweep,
    sample_points,
    theoretical_bound,
)
from flowembed.maps import (
    Domain,
    EulerStep,
    Identity,
    LinearScalar,
    SampleGrid,
    Translation,
)

SMALL = SampleGrid(7, 4)
BOX = Domain([-0.8, -0.8], [0.8, 0.8], 0.5)


def test_theoretical_bound_examples():
    assert theoretical_bound(0.001, 0.6, 2) == pytest.approx(3e-7, rel=1e-12)
    assert theoretical_bound(0.001, 0.6, 1) == pytest.approx(3.3333333e-6, rel=1e-7)
    vals = [theoretical_bound(e, 0.6, 3) for e in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert vals == sorted(vals, reverse=True) and vals[-1] < 1e-15


@given(
    e1=st.floats(1e-6, 0.05), e2=st.floats(1e-6, 0.05),
    d=st.floats(0.1, 2.0), m=st.integers(1, 12),
)
def test_theoretical_bound_monotone(e1, e2, d, m):
    lo, hi = sorted((e1, e2))
    if lo < hi:
        assert theoretical_bound(lo, d, m) < theoretical_bound(hi, d, m)
        # decreasing in delta: scale delta up
        assert theoretical_bound(lo, d * 1.5, m) < theoretical_bound(lo, d, m)


def test_exponential_bound_examples():
    b = exponential_bound(0.01, 0.6)
    assert b.value == pytest.approx(3e-2 * math.exp(-0.6 / (6 * math.e * 0.01)), rel=1e-14)
    assert b.value == pytest.approx(7.58e-4, rel=1e-3)
    assert not b.below_floor
    tiny = exponential_bound(0.001, 0.6)
    assert tiny.value == pytest.approx(3.2e-19, rel=2e-2)
    assert tiny.below_floor


def test_epsilon_for_exponential_bound():
    for target in (1e-10, 1e-9, 1e-8):
        eps = epsilon_for_exponential_bound(0.5, target)
        assert exponential_bound(eps, 0.5).value == pytest.approx(target, rel=1e-10)
        assert eps / 0.5 <= 1 / (6 * math.e)


def test_error_report_satisfied_is_recomputed():
    rep = ErrorReport(2, 1e-9, 1e-6, None, 0.01, 0.5, 10, 0.0)
    assert rep.satisfied and not rep.tolerance_limited
    rep.measured_error = 1e-5
    assert not rep.satisfied
    rep.measured_error = 1e-9
    rep.integrator_discrepancy = 1e-10
    assert rep.tolerance_limited and not rep.satisfied
    # m above the optimal order is outside the theorem: never satisfied
    assert not ErrorReport(9, 0.0, 1.0, None, 0.01, 0.5, 10, 0.0).satisfied


def test_measure_error_identity():
    rep = measure_error(Identity(2), 3, BOX, SMALL)
    assert rep.measured_error == 0.0 and rep.satisfied and rep.n_samples == 49


def test_measure_error_translation_exact_embedding():
    rep = measure_error(Translation((0.01,)), 3, Domain([-1], [1], 0.5), SMALL)
    assert rep.measured_error <= 1e-13
    assert rep.epsilon_used == pytest.approx(1.25 * 0.01)


def test_measure_error_linear_scalar_closed_form():
    lam = 1.01
    a = (lam - 1) - (lam - 1) ** 2 / 2
    dom = Domain([0.5], [1.5], 0.5)
    rep = measure_error(LinearScalar(lam), 2, dom, SampleGrid(11, 8))
    expected = abs(lam - math.exp(a)) * 1.5
    assert rep.measured_error == pytest.approx(expected, rel=1e-8)
    assert rep.satisfied


def test_embedding_error_single_point():
    err, disc = embedding_error(LinearScalar(1.1), 2, [1.0])
    assert abs(err - abs(1.1 - math.exp(0.095))) <= 1e-10
    assert disc <= 1e-12


def test_measure_error_warns_outside_range():
    with pytest.warns(BoundHypothesisWarning):
        rep = measure_error(Translation((0.01,)), 5, Domain([-1], [1], 0.5), SMALL)
    assert not rep.satisfied


def test_order_sweep_identity_and_translation():
    reps = order_sweep(Identity(2), BOX, SMALL, 3)
    assert [r.m for r in reps] == [1, 2, 3]
    assert all(r.measured_error == 0 and r.satisfied for r in reps)
    reps = order_sweep(Translation((0.01,)), Domain([-1], [1], 0.5), SMALL, 10)
    # eps_used = 0.0125, delta = 0.5 -> m_star = 3
    assert [r.m for r in reps] == [1, 2, 3]
    assert all(r.measured_error <= 1e-13 for r in reps)
    assert reps[-1].bound_exp is not None and reps[0].bound_exp is None


def test_order_sweep_pendulum_small_grid():
    reps = order_sweep(EulerStep("pendulum", 0.005), BOX, SMALL, 10)
    assert all(r.satisfied for r in reps if not r.tolerance_limited)
    errors = [r.measured_error for r in reps]
    assert errors == sorted(errors, reverse=True)
    assert best_order(reps) == reps[-1].m


def test_order_sweep_records_failures():
    # huge displacement escapes the delta/3 guard; the sweep still returns a row
    reps = order_sweep(Translation((0.3,)), Domain([0], [1], 0.5), SMALL, 3, epsilon=1e-3)
    assert reps and all(r.failure for r in reps)
    assert not any(r.satisfied for r in reps)


def test_sample_points_deterministic():
    a = sample_points(BOX, 9)
    np.testing.assert_array_equal(a, sample_points(BOX, 9))
    assert len(a) == 9
    assert np.all(a >= -0.8) and np.all(a <= 0.8)


def test_mu_radius():
    assert mu_radius(0.01, 0.5, 1) == pytest.approx(50.0)
    assert mu_radius(0.01, 0.5, 3) == pytest.approx(2 * 0.5 / (3 * 0.01 * 2))
    assert mu_radius(0.0, 0.5, 2) == math.inf


def test_mu_order_identity_inconclusive():
    est = mu_order_check(Identity(2), 2, BOX, 4)
    assert est.inconclusive and all(e == 0 for e in est.errors)
    assert math.isnan(est.observed_order)


def test_mu_order_first_order_map():
    est = mu_order_check(EulerStep("pendulum", 0.01), 1, BOX, 4, grid=SMALL)
    assert est.mu_values == (1.0, 0.5, 0.25)
    assert 1.5 <= est.observed_order <= 2.5


def test_mu_order_rejects_large_mu0():
    with pytest.raises(ValueError):
        mu_order_check(EulerStep("pendulum", 0.01), 3, BOX, 4, mu0=100.0, grid=SMALL)


def test_lie_coefficients_trivial():
    x = np.array([0.3, 0.1])
    for k in (1, 2, 3):
        np.testing.assert_array_equal(lie_coefficient(Identity(2), k, x), [0.0, 0.0])
    t = Translation((0.01, -0.02))
    np.testing.assert_allclose(lie_coefficient(t, 1, x), [0.01, -0.02], atol=1e-17)
    np.testing.assert_allclose(lie_coefficient(t, 2, x), [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(lie_coefficient(t, 3, x), [0.0, 0.0], atol=1e-12)


def test_lie_coefficients_linear_scalar_log_series():
    lam, x = 1.05, 0.8
    u = lam - 1
    f = LinearScalar(lam)
    assert lie_coefficient(f, 1, [x])[0] == pytest.approx(u * x, rel=1e-12)
    assert lie_coefficient(f, 2, [x])[0] == pytest.approx(-0.5 * u**2 * x, rel=1e-6)
    assert lie_coefficient(f, 3, [x])[0] == pytest.approx(u**3 * x / 3, rel=1e-5)


def test_lie_coefficient_pendulum_second_order_closed_form():
    # a_1 = h (p, -sin q)  =>  a_2 = -(1/2)(a_1 . grad) a_1 = (h^2/2)(sin q, p cos q)
    h, q, p = 0.01, 0.3, 0.1
    got = lie_coefficient(EulerStep("pendulum", h), 2, [q, p])
    np.testing.assert_allclose(got, [0.5 * h**2 * math.sin(q), 0.5 * h**2 * p * math.cos(q)], rtol=1e-6)


def test_lie_coefficient_pendulum_third_order_closed_form():
    # from the recursion by hand: a_3 = h^3 (-p cos q / 3, (p^2 + 4 cos q) sin q / 12)
    h, q, p = 0.01, 0.3, 0.1
    got = lie_coefficient(EulerStep("pendulum", h), 3, [q, p])
    want = [-(h**3) * p * math.cos(q) / 3, h**3 * (p**2 + 4 * math.cos(q)) * math.sin(q) / 12]
    np.testing.assert_allclose(got, want, rtol=1e-4)


@pytest.mark.parametrize("step", [1e-8, 1e-13])
def test_lie_coefficient_detects_cancellation(step):
    with pytest.raises(UnstableDerivativeError):
        lie_coefficient(EulerStep("pendulum", 0.01), 3, [0.3, 0.1], fd_step=step)


def test_lie_coefficient_rejects_bad_order():
    with pytest.raises(ValueError):
        lie_coefficient(Identity(1), 4, [0.0])


def test_lie_vs_field_identity():
    checks = lie_vs_field_taylor(Identity(2), 3, [0.3, 0.1], default_mu_grid(3, 0.01, 0.5))
    assert [c.k for c in checks] == [2, 3]
    assert all(np.all(c.a_k_from_field == 0) and c.rel_discrepancy == 0 for c in checks)


def test_lie_vs_field_linear_scalar():
    lam, x = 1.05, 1.0
    grid = default_mu_grid(2, 0.1, 0.5)
    (check,) = lie_vs_field_taylor(LinearScalar(lam), 2, [x], grid)
    assert check.a_k_from_field[0] == pytest.approx(-0.5 * 0.05**2 * x, rel=1e-6)
    assert check.rel_discrepancy <= 1e-3


def test_lie_vs_field_pendulum():
    grid = default_mu_grid(2, 0.0163, 0.5)
    (check,) = lie_vs_field_taylor(EulerStep("pendulum", 0.01), 2, [0.3, 0.1], grid)
    assert check.rel_discrepancy <= 1e-3 and not check.inconclusive


def test_lie_vs_field_validates_grid():
    with pytest.raises(ValueError):
        lie_vs_field_taylor(Identity(1), 2, [0.0], (0.1, 0.2, 0.3))
    with pytest.raises(ValueError):
        lie_vs_field_taylor(Identity(1), 4, [0.0], default_mu_grid(4, 0.1, 1.0))


def test_default_mu_grid():
    g = default_mu_grid(3, 0.01, 0.5)
    assert len(g) == 13 and len(set(g)) == 13
    assert max(g) <= min(0.2, mu_radius(0.01, 0.5, 3) / 8)
    assert min(g) > 0


def test_slope_check_degenerate_and_validation():
    with pytest.raises(DegenerateError):
        epsilon_slope_check(lambda h: Identity(2), 1, BOX, SMALL, [0.02, 0.01, 0.005])
    with pytest.raises(ValueError):
        epsilon_slope_check(lambda h: EulerStep("pendulum", h), 1, BOX, SMALL, [0.01])
    with pytest.raises(ValueError):
        epsilon_slope_check(lambda h: EulerStep("pendulum", h), 1, BOX, SMALL, [0.02, 0.01, 0.001])


def test_slope_check_first_order():
    fit = epsilon_slope_check(lambda h: EulerStep("pendulum", h), 1, BOX, SMALL, [0.02, 0.01, 0.005])
    assert 1.7 <= fit.slope <= 2.3
    assert len(fit.errors) == 3


def test_threads_env_gives_same_result(monkeypatch):
    f = EulerStep("cubic", 0.01)
    serial = measure_error(f, 2, BOX, SMALL)
    monkeypatch.setenv("FLOWEMBED_THREADS", "4")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        threaded = measure_error(f, 2, BOX, SMALL)
    assert serial == threaded
