import math

import numpy as np
import pytest

from modules import model_core as mc
from modules import samplers as smp
from modules import tv_estimator as tv
from modules.diagnostics import FunctionalSpec, builtin_functionals
from modules.errors import ConfigError, DomainError
from modules.numerics import RadialFunctional

PARAMS = mc.ModelParams(0.1, 0.1)


def _by_name(model):
    return {fun.name: fun for fun in tv.builtin_tv_functionals(model)}


@pytest.mark.parametrize("model", [smp.SQUARE, smp.PLANAR])
def test_builtin_functionals_respect_declared_ranges(model):
    rng = np.random.default_rng(17)
    if model == smp.SQUARE:
        states = rng.random((20_000, 3, 2))
    else:
        states = rng.uniform(-20.0, 20.0, size=(20_000, 2))
    for fun in tv.builtin_tv_functionals(model):
        values = fun.values(states)
        assert values.shape == (20_000,)
        assert np.all(values >= fun.low) and np.all(values <= fun.high), fun.name


def test_builtin_functional_examples():
    planar = _by_name(smp.PLANAR)
    assert planar["h"](mc.PlanarPoint(0.0, 4.0)) == pytest.approx(0.25)
    assert planar["ell"](mc.PlanarPoint(math.pi / 2.0, 0.0)) == pytest.approx(1.0)
    assert planar["g"](mc.PlanarPoint(3.0, 4.0)) == pytest.approx(9.0 / 25.0)
    assert planar["p"](mc.PlanarPoint(-0.25, 7.0)) == pytest.approx(0.25)

    square = _by_name(smp.SQUARE)
    corner = mc.SquareConfig(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert square["ell"](corner) == pytest.approx(1.0)
    assert square["h"](corner) == pytest.approx(1.0)
    assert square["p"](corner) == pytest.approx(math.e)
    assert square["g"](corner) == 0.0


def test_square_functionals_need_three_particles():
    with pytest.raises(DomainError):
        tv.builtin_tv_functionals(smp.SQUARE, n_particles=2)


def test_planar_references_from_quadrature():
    planar = _by_name(smp.PLANAR)
    assert tv.reference_expectation(smp.PLANAR, planar["f"]).value == pytest.approx(0.15240, abs=5e-4)
    g_ref = tv.reference_expectation(smp.PLANAR, planar["g"])
    assert g_ref.value == pytest.approx(0.5, abs=1e-8)
    assert g_ref.stderr == 0.0


def test_reference_of_constant_functional():
    const = FunctionalSpec("one", smp.PLANAR, lambda x: np.ones(x.shape[:-1]), 0.0, 2.0,
                           radial=RadialFunctional("one", lambda r: 1.0))
    assert tv.reference_expectation(smp.PLANAR, const).value == pytest.approx(1.0, abs=1e-8)


def test_reference_requires_range_and_radial_form():
    psi = builtin_functionals(smp.PLANAR)[0]
    with pytest.raises(ConfigError):
        tv.reference_expectation(smp.PLANAR, psi)
    bare = FunctionalSpec("bare", smp.PLANAR, lambda x: x[..., 0], -1.0, 1.0)
    with pytest.raises(ConfigError):
        tv.reference_expectation(smp.PLANAR, bare)
    with pytest.raises(ConfigError):
        tv.planar_radial_functional("nope")


def test_square_reference_from_independent_ensemble():
    fun = _by_name(smp.SQUARE)["g"]
    ref = tv.reference_expectation(smp.SQUARE, fun, PARAMS, seed=3, m_chains=400, iterations=30)
    assert ref.stderr > 0.0
    assert (ref.m_chains, ref.iterations, ref.seed) == (400, 30, 3)
    assert 0.0 < ref.value < 1.0


def test_curve_at_fixed_start_is_exact():
    f = _by_name(smp.PLANAR)["f"]
    spec = smp.EnsembleSpec(50, 5, 9, smp.InitPolicy(point=(1.0, 0.0)))
    ref = tv.reference_expectation(smp.PLANAR, f)
    curve = tv.tv_curve(smp.PLANAR, f, spec, [0, 5], reference=ref)
    assert curve.estimates[0] == pytest.approx(abs(ref.value - math.exp(-1.0)), abs=1e-15)
    assert curve.stderrs[0] == 0.0
    assert curve.checkpoints == (0, 5)
    assert curve.m_chains == 50


def test_curve_is_independent_of_threads():
    ell = _by_name(smp.SQUARE)["ell"]
    spec = smp.EnsembleSpec(300, 8, 12)
    ref = tv.ReferenceValue(0.9, 0.001)
    one = tv.tv_curve(smp.SQUARE, ell, spec, [1, 4, 8], PARAMS, ref, threads=1)
    four = tv.tv_curve(smp.SQUARE, ell, spec, [1, 4, 8], PARAMS, ref, threads=4)
    assert one == four
    assert all(s >= 0.001 / math.sqrt(2.0) for s in one.stderrs)


def test_curves_share_one_simulation():
    funs = [fun for fun in tv.builtin_tv_functionals(smp.SQUARE) if fun.name in ("g", "ell")]
    spec = smp.EnsembleSpec(60, 6, 21)
    refs = tv.reference_expectations(smp.SQUARE, funs, PARAMS, seed=5, m_chains=80, iterations=6)
    assert [r.seed for r in refs] == [5, 5]
    joint = tv.tv_curves(smp.SQUARE, funs, spec, [3, 6], PARAMS, refs, threads=2)
    for fun, ref, curve in zip(funs, refs, joint):
        alone_ref = tv.reference_expectation(smp.SQUARE, fun, PARAMS, seed=5, m_chains=80, iterations=6)
        assert ref.value == pytest.approx(alone_ref.value, rel=1e-12)
        assert ref.stderr == pytest.approx(alone_ref.stderr, rel=1e-9)
        alone = tv.tv_curve(smp.SQUARE, fun, spec, [3, 6], PARAMS, ref)
        assert curve.functional == fun.name
        assert curve.estimates == pytest.approx(alone.estimates, rel=1e-12, abs=1e-15)
        assert curve.stderrs == pytest.approx(alone.stderrs, rel=1e-9)


def test_curves_validate_reference_count():
    funs = tv.builtin_tv_functionals(smp.PLANAR)[:2]
    spec = smp.EnsembleSpec(4, 3, 1)
    with pytest.raises(ConfigError):
        tv.tv_curves(smp.PLANAR, funs, spec, [1], references=[tv.ReferenceValue(0.5)])
    with pytest.raises(ConfigError):
        tv.tv_curves(smp.PLANAR, [], spec, [1])


def test_identical_chains_have_exactly_zero_stderr():
    h = _by_name(smp.PLANAR)["h"]
    spec = smp.EnsembleSpec(37, 2, 4, smp.InitPolicy(point=(0.3, 0.7)))
    curve = tv.tv_curve(smp.PLANAR, h, spec, [0], reference=tv.ReferenceValue(0.5))
    assert curve.stderrs == (0.0,)
    assert curve.estimates[0] == pytest.approx(abs(0.5 - min(1.0, 1.0 / math.hypot(0.3, 0.7))), abs=1e-15)


def test_curve_requires_range():
    psi = builtin_functionals(smp.SQUARE)[0]
    spec = smp.EnsembleSpec(2, 3, 1)
    dropped = FunctionalSpec(psi.name, psi.model, psi.rule)
    with pytest.raises(ConfigError):
        tv.tv_curve(smp.SQUARE, dropped, spec, [1], PARAMS, tv.ReferenceValue(1.0))


def test_tv_curve_validation():
    with pytest.raises(DomainError):
        tv.TvCurve(smp.PLANAR, "f", 0.0, 1.0, (1, 2), (0.1,), (0.0,), 0.1, 0.0, 2, 1)
    with pytest.raises(DomainError):
        tv.TvCurve(smp.PLANAR, "f", 0.0, 1.0, (1,), (1.5,), (0.0,), 0.1, 0.0, 2, 1)


def test_default_checkpoints():
    assert tv.default_checkpoints(10) == tuple(range(1, 11))
    points = tv.default_checkpoints(500)
    assert len(points) == 50 + 45
    assert points[49:52] == (50, 60, 70)
    assert points[-1] == 500
    assert tv.default_checkpoints(305)[-2:] == (300, 305)
    with pytest.raises(ConfigError):
        tv.default_checkpoints(0)


def test_occupation_of_whole_space():
    traces = smp.run_ensemble(smp.PLANAR, smp.EnsembleSpec(5, 40, 2))
    everywhere = FunctionalSpec("all", smp.PLANAR, lambda x: np.ones(x.shape[:-1]), 0.0, 1.0)
    result = tv.occupation_fraction(traces, everywhere, 40, pi_s=1.0)
    assert result.fraction == 1.0
    assert result.difference == 0.0
    assert result.mean_tv_estimate == 0.0


def test_occupation_of_band_matches_stationary_mass():
    band = builtin_functionals(smp.PLANAR)[2]
    assert band.radial is tv.planar_radial_functional("phi2")
    n = 600
    traces = smp.run_ensemble(smp.PLANAR, smp.EnsembleSpec(1000, n, 31), threads=4)
    result = tv.occupation_fraction(traces, band, n)
    assert 0.2 < result.pi_s < 0.35
    assert result.difference <= result.mean_tv_estimate + 1e-12
    # (1, 0) 在 S 内，前几步带来 O(1/n) 的偏差
    assert result.difference <= 3.0 * result.stderr + 10.0 / n


def test_occupation_validation():
    traces = smp.run_ensemble(smp.PLANAR, smp.EnsembleSpec(2, 5, 2))
    radius = builtin_functionals(smp.PLANAR)[0]
    with pytest.raises(ConfigError):
        tv.occupation_fraction(traces, radius, 10, pi_s=0.5)
    with pytest.raises(ConfigError):
        tv.occupation_fraction(traces, radius, 5)
    with pytest.raises(DomainError):
        tv.occupation_fraction(traces, radius, 5, pi_s=0.5)


@pytest.mark.slow
def test_square_tv_estimates_are_small():
    spec = smp.EnsembleSpec(5000, 500, 4)
    for fun in tv.builtin_tv_functionals(smp.SQUARE):
        curve = tv.tv_curve(smp.SQUARE, fun, spec, [30, 500], PARAMS, threads=4)
        assert curve.estimates[0] <= 0.02, fun.name
        assert curve.estimates[1] <= 0.01, fun.name


@pytest.mark.slow
def test_planar_tv_estimates_are_small():
    spec = smp.EnsembleSpec(3000, 300, 5, smp.InitPolicy(point=(1.0, 0.0)))
    for fun in tv.builtin_tv_functionals(smp.PLANAR):
        curve = tv.tv_curve(smp.PLANAR, fun, spec, [300], threads=4)
        assert curve.estimates[-1] <= 0.01, fun.name
