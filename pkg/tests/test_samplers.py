import math

import numpy as np
import pytest

from modules import model_core as mc
from modules import samplers as smp
from modules.errors import ConfigError, DegenerateAnnulusError, DomainError

PARAMS = mc.ModelParams(0.1, 0.1)


def test_rng_streams_are_reproducible_and_distinct():
    a = smp.RngStream(42, 0).uniform(5)
    b = smp.RngStream(42, 0).uniform(5)
    c = smp.RngStream(42, 1).uniform(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_run_chain_square_length_and_support():
    trace = smp.run_chain(smp.SQUARE, (0.5,) * 6, 10, smp.RngStream(42, 0), PARAMS)
    assert trace.states.shape == (11, 3, 2)
    assert trace.accepted.shape == (11, 3)
    assert trace.iterations == 10
    assert np.all((trace.states >= 0.0) & (trace.states <= 1.0))
    assert not trace.accepted[0].any()


def test_square_chain_leaves_coincident_start():
    trace = smp.run_chain(smp.SQUARE, (0.5,) * 6, 1, smp.RngStream(7, 0), PARAMS)
    # 前两个粒子离开重合状态时旧局部能量为 +inf，必然接受
    assert trace.accepted[1, 0] and trace.accepted[1, 1]
    assert np.isfinite(mc.log_density_square(mc.SquareConfig(trace.states[1]), PARAMS))


def test_square_zero_constants_accepts_everything():
    trace = smp.run_chain(smp.SQUARE, (0.2,) * 6, 50, smp.RngStream(1, 0), mc.ModelParams(0.0, 0.0))
    assert smp.acceptance_rate(trace) == 1.0
    assert list(trace.accept_counts) == [50, 50, 50]


def test_metropolis_sweep_square_matches_run_chain():
    start = mc.SquareConfig.from_flat([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    stepped = smp.metropolis_sweep_square(start, PARAMS, smp.RngStream(9, 3))
    trace = smp.run_chain(smp.SQUARE, start, 1, smp.RngStream(9, 3), PARAMS)
    assert np.array_equal(stepped.points, trace.states[1])


def test_run_chain_planar_stays_off_origin():
    trace = smp.run_chain(smp.PLANAR, (1.0, 0.0), 300, smp.RngStream(3, 0))
    radii = np.linalg.norm(trace.states, axis=1)
    assert np.all(radii > 0.0)
    assert trace.accepted.shape == (301,)
    assert 0.0 < smp.acceptance_rate(trace) < 1.0


def test_planar_proposals_fall_in_annulus():
    rng = smp.RngStream(5, 0)
    for r in (0.2, 1.0, 3.7):
        x = mc.PlanarPoint(r / math.sqrt(2.0), r / math.sqrt(2.0))
        annulus = mc.annulus_of(x)
        for _ in range(200):
            y = smp.propose_planar(x, rng)
            assert annulus.inner - 1e-12 <= y.radius <= annulus.outer + 1e-12


def test_planar_acceptance_identity():
    rng = np.random.default_rng(99)
    radii = rng.uniform(0.2, 5.0, size=(10_000, 2))
    worst = 0.0
    for rx, ry in radii:
        alpha = smp.accept_prob_planar(mc.PlanarPoint(rx, 0.0), mc.PlanarPoint(0.0, ry))
        fx, fy = float(mc.f_radial(rx)), float(mc.f_radial(ry))
        worst = max(worst, abs(alpha * fy - min(fx, fy)) / min(fx, fy))
    assert worst < 1e-12


def test_accept_prob_planar_rejects_origin():
    with pytest.raises(DomainError):
        smp.accept_prob_planar(mc.PlanarPoint(1.0, 0.0), mc.PlanarPoint(0.0, 0.0))


def test_step_planar_returns_point():
    y = smp.step_planar(mc.PlanarPoint(1.0, 0.0), smp.RngStream(0, 0))
    assert y.radius > 0.0


def test_planar_start_at_origin_rejected():
    with pytest.raises(DegenerateAnnulusError):
        smp.run_chain(smp.PLANAR, (0.0, 0.0), 5, smp.RngStream(0, 0))


def test_square_requires_params():
    with pytest.raises(ConfigError):
        smp.run_chain(smp.SQUARE, (0.5,) * 6, 5, smp.RngStream(0, 0))


def test_invalid_specs():
    with pytest.raises(ConfigError):
        smp.EnsembleSpec(0, 10, 1)
    with pytest.raises(ConfigError):
        smp.EnsembleSpec(2, 10, -1)
    with pytest.raises(ConfigError):
        smp.InitPolicy(kind="gaussian")
    with pytest.raises(ConfigError):
        smp.InitPolicy(kind="uniform", low=-1.0, high=1.0).draw(smp.SQUARE, smp.RngStream(0, 0), PARAMS)


def test_uniform_init_policy_within_box():
    policy = smp.InitPolicy(kind="uniform", low=-10.0, high=10.0)
    state = policy.draw(smp.PLANAR, smp.RngStream(4, 2))
    assert state.shape == (2,)
    assert np.all(np.abs(state) <= 10.0)


def test_ensemble_matches_individual_chains():
    spec = smp.EnsembleSpec(4, 20, 123)
    traces = smp.run_ensemble(smp.SQUARE, spec, PARAMS)
    for j, trace in enumerate(traces):
        alone = smp.run_chain(smp.SQUARE, (0.5,) * 6, 20, smp.RngStream(123, j), PARAMS)
        assert np.array_equal(trace.states, alone.states)
        assert np.array_equal(trace.accepted, alone.accepted)


@pytest.mark.parametrize("model", [smp.SQUARE, smp.PLANAR])
def test_ensemble_is_independent_of_thread_count(model):
    params = PARAMS if model == smp.SQUARE else None
    spec = smp.EnsembleSpec(600, 5, 77, smp.InitPolicy(kind="uniform", low=0.0, high=1.0))
    one = smp.run_ensemble(model, spec, params, threads=1)
    many = smp.run_ensemble(model, spec, params, threads=4)
    for a, b in zip(one, many):
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.accepted, b.accepted)


def test_ensemble_functional_values_streams_checkpoints():
    spec = smp.EnsembleSpec(300, 12, 5)
    radius = lambda states: np.linalg.norm(states, axis=-1)  # noqa: E731
    values = smp.ensemble_functional_values(smp.PLANAR, spec, radius, [0, 3, 12], threads=2)
    traces = smp.run_ensemble(smp.PLANAR, spec)
    expected = np.stack([radius(t.states[[0, 3, 12]]) for t in traces])
    assert values.shape == (300, 3)
    assert np.array_equal(values, expected)


def test_ensemble_functional_values_validates_checkpoints():
    spec = smp.EnsembleSpec(2, 5, 5)
    radius = lambda states: np.linalg.norm(states, axis=-1)  # noqa: E731
    with pytest.raises(ConfigError):
        smp.ensemble_functional_values(smp.PLANAR, spec, radius, [6])
    with pytest.raises(ConfigError):
        smp.ensemble_functional_values(smp.PLANAR, spec, radius, [3, 2])


def _single_move_alpha(points, i, target):
    old = mc.local_energy_square(points[None], i, PARAMS)
    new = mc.local_energy_square(points[None], i, PARAMS, candidate=target[None])
    return float(np.exp(np.minimum(old - new, 0.0))[0])


def test_square_single_particle_moves_satisfy_detailed_balance():
    rng = np.random.default_rng(404)
    for _ in range(200):
        x = rng.random((3, 2))
        i = int(rng.integers(3))
        y = x.copy()
        y[i] = rng.random(2)
        forward = _single_move_alpha(x, i, y[i])
        backward = _single_move_alpha(y, i, x[i])
        pi_x = math.exp(mc.log_density_square(mc.SquareConfig(x), PARAMS))
        pi_y = math.exp(mc.log_density_square(mc.SquareConfig(y), PARAMS))
        assert forward * pi_x == pytest.approx(backward * pi_y, rel=1e-10)


def test_square_sweep_accepts_exactly_below_alpha():
    x = np.array([[0.2, 0.3], [0.7, 0.1], [0.4, 0.9]])
    target = np.array([0.95, 0.95])
    alpha = _single_move_alpha(x, 0, target)
    assert 0.0 < alpha < 1.0
    draws = np.empty((2, 3, 3))
    draws[:, :, :2] = x
    draws[:, 0, :2] = target
    draws[:, 1:, 2] = 0.5
    draws[0, 0, 2] = alpha * (1.0 - 1e-9)
    draws[1, 0, 2] = alpha * (1.0 + 1e-9)
    pts, accepted = smp.sweep_square_batch(np.stack([x, x]), PARAMS, draws)
    assert accepted[0, 0] and not accepted[1, 0]
    assert np.array_equal(pts[0, 0], target)
    assert np.array_equal(pts[1], x)


def test_planar_proposal_second_moment():
    m = 1_000_000
    points = np.tile([2.0, 0.0], (m, 1))
    y = smp.propose_planar_batch(points, np.random.default_rng(77).random((m, 2)))
    assert np.mean(np.sum(y**2, axis=1)) == pytest.approx(5.0, abs=0.02)
    assert np.abs(y.mean(axis=0)).max() < 0.01


def test_accept_prob_planar_examples():
    inner, outer = mc.PlanarPoint(0.25, 0.0), mc.PlanarPoint(0.0, 1.25)
    assert smp.accept_prob_planar(inner, outer) == 1.0
    assert smp.accept_prob_planar(outer, inner) == pytest.approx(5.0 * math.exp(-2.2), rel=1e-12)
    assert smp.accept_prob_planar(outer, inner) == pytest.approx(0.554, abs=1e-3)


@pytest.mark.slow
def test_planar_chain_stays_off_origin_for_a_million_steps():
    trace = smp.run_chain(smp.PLANAR, (1.0, 0.0), 1_000_000, smp.RngStream(11, 0))
    assert np.linalg.norm(trace.states, axis=1).min() > 0.0
