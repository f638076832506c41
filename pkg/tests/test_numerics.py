import math

import numpy as np
import pytest

from modules import bounds
from modules import model_core as mc
from modules import numerics as nm
from modules.errors import DomainError, QuadratureError
from modules.samplers import RngStream, step_planar_batch
from modules.tv_estimator import planar_radial_functional


def test_quad_1d_polynomial():
    result = nm.quad_1d(lambda x: x**2, 0.0, 3.0, tol=1e-12)
    assert result.value == pytest.approx(9.0, abs=1e-12)
    assert result.error_estimate <= 1e-12
    assert result.evaluations > 0


def test_quad_1d_rejects_empty_interval():
    with pytest.raises(DomainError):
        nm.quad_1d(lambda x: x, 1.0, 1.0)


def test_stationary_normalizer_and_numerator():
    denominator = nm.normalizing_constant()
    numerator = nm.stationary_integral(planar_radial_functional("f")).value
    assert 3.1885 <= denominator <= 3.1895
    assert 0.4855 <= numerator <= 0.4865
    assert numerator / denominator == pytest.approx(0.15240, abs=5e-4)


def test_stationary_expectation_of_constant():
    fun = nm.RadialFunctional("const", lambda r: 0.75)
    assert nm.stationary_expectation_planar(fun) == pytest.approx(0.75, abs=1e-9)


def test_truncation_tail_guard():
    huge = nm.RadialFunctional("huge", lambda r: 1.0, sup_abs=1e20)
    with pytest.raises(QuadratureError) as info:
        nm.stationary_integral(huge)
    assert info.value.error_estimate > 1e-8


def test_stationary_expectation_of_v_below_drift_bound():
    expectation = nm.stationary_expectation_v()
    assert math.e <= expectation < bounds.stationary_v_bound(bounds.DRIFT_LAMBDA, bounds.DRIFT_B)


def test_angular_average():
    assert nm.angular_average(lambda r, t: math.cos(t) ** 2, 2.0) == pytest.approx(0.5, abs=1e-10)
    assert nm.angular_average(lambda r, t: r, 3.0) == pytest.approx(3.0, abs=1e-10)


@pytest.mark.parametrize("r", [0.4, 1.0, 1.7, 3.0, 8.0])
def test_planar_p_radial_matches_angular_average(r):
    breakpoints = (math.acos(1.0 / r),) if r > 1.0 else ()
    direct = nm.angular_average(lambda rr, t: min(1.0, abs(rr * math.cos(t))), r, 1e-10, breakpoints)
    assert planar_radial_functional("p").radial(r) == pytest.approx(direct, abs=1e-9)


def test_pv_quadrature_is_v_times_ratio():
    for r in (0.3, 1.5, 6.0):
        assert nm.pv_quadrature(r) == pytest.approx(float(mc.v_lyapunov(r)) * nm.pv_ratio_quadrature(r),
                                                    rel=1e-14)


def test_pv_ratio_agrees_with_monte_carlo():
    r = 2.0
    m = 200_000
    points = np.tile([r, 0.0], (m, 1))
    draws = RngStream(7, 0).uniform((m, 3))
    moved, _ = step_planar_batch(points, draws)
    ratio = mc.v_lyapunov(np.linalg.norm(moved, axis=1)) / mc.v_lyapunov(r)
    se = ratio.std(ddof=1) / math.sqrt(m)
    assert nm.pv_ratio_quadrature(r) == pytest.approx(ratio.mean(), abs=max(5.0 * se, 1e-4))


@pytest.mark.parametrize("r", [0.01, 0.1, 0.2, 5.0, 10.0, 40.0])
def test_pv_ratio_contracts_outside_small_set(r):
    assert nm.pv_ratio_quadrature(r) <= bounds.DRIFT_LAMBDA


@pytest.mark.parametrize("r", [0.01, 0.05, 0.1, 0.2, 0.249])
def test_pv_ratio_inside_unit_disc_shrinks_by_fixed_factor(r):
    # r < 1/4 时所有提议都被接受
    assert nm.pv_ratio_quadrature(r) <= math.exp(-13.0 / 12.0)


@pytest.mark.parametrize("r", [5.0, 10.0, 40.0])
def test_closed_form_dominates_quadrature(r):
    assert nm.pv_ratio_quadrature(r) <= bounds.drift_case1_ratio(r) + 1e-10


def test_pv_ratio_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        nm.pv_ratio_quadrature(0.0)
