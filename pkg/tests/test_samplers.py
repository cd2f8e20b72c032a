import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcmc_gridbench.distributions import TargetDistribution, gamma21, get_distribution
from mcmc_gridbench.errors import ConfigError
from mcmc_gridbench.samplers import (
    SAMPLERS,
    AdaptState,
    ChainState,
    TuningParams,
    adaptive_metropolis_transition,
    get_sampler,
    shrinking_rank_transition,
    step_out_slice_transition,
    univariate_metropolis_transition,
)


class ScriptedRNG:
    """Replays fixed uniforms and normals; fails loudly when a script runs out."""

    def __init__(self, uniforms=(), normals=()):
        self.uniforms = list(uniforms)
        self.normals = list(normals)

    def random(self):
        return self.uniforms.pop(0)

    def standard_normal(self, size=None):
        if size is None:
            return self.normals.pop(0)
        out = np.array(self.normals[:size], dtype=float)
        assert out.size == size, "normal script exhausted"
        del self.normals[:size]
        return out


class RecordingRNG:
    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self.uniforms = []

    def random(self):
        u = self.rng.random()
        self.uniforms.append(u)
        return u

    def standard_normal(self, size=None):
        return self.rng.standard_normal(size)


def make_target(name, dim, logf, gradient=None):
    return TargetDistribution(name, dim, logf, gradient=gradient, default_initial_point=np.zeros(dim))


def recording_target(logf, dim, gradient=None):
    points = []

    def log_density(x):
        points.append(np.array(x, dtype=float))
        return logf(x)

    return make_target("recorded", dim, log_density, gradient=gradient), points


def std_normal(x):
    return -0.5 * float(np.dot(x, x))


def uniform01(x):
    return 0.0 if 0.0 < x[0] < 1.0 else -math.inf


def state(x, target):
    x = np.asarray(x, dtype=float)
    return ChainState(x, target.log_density(x))


# tuning params


@pytest.mark.parametrize("scale,beta", [(0.0, 0.05), (-1.0, 0.05), (1.0, 0.0), (1.0, 1.0)])
def test_tuning_validation(scale, beta):
    with pytest.raises(ValueError):
        TuningParams(scale, beta)


# univariate Metropolis


def test_um_flat_target_accepts():
    t = make_target("flat", 1, lambda x: 0.0)
    res = univariate_metropolis_transition(ChainState(np.zeros(1), 0.0), t, TuningParams(1.0), ScriptedRNG([], [0.7]))
    assert res.next.x[0] == 0.7
    assert res.logp_evals == 1


def test_um_hand_trace_reject():
    t = make_target("n", 1, std_normal)
    s = ChainState(np.zeros(1), 0.0)
    res = univariate_metropolis_transition(s, t, TuningParams(1.0), ScriptedRNG([0.5], [3.0]))
    # delta = -4.5 < log(0.5)
    assert res.next.x[0] == 0.0
    assert res.next.cached_logp == 0.0
    assert res.logp_evals == 1


def test_um_sweep_counts():
    t = get_distribution("scaled_gaussian", dim=3)
    s = state(np.zeros(3), t)
    res = univariate_metropolis_transition(s, t, TuningParams(1.0), np.random.default_rng(0))
    assert res.logp_evals == 3


def test_um_changes_one_coordinate_per_proposal():
    t, points = recording_target(std_normal, 3)
    s = ChainState(np.array([0.1, 0.2, 0.3]), std_normal(np.array([0.1, 0.2, 0.3])))
    univariate_metropolis_transition(s, t, TuningParams(0.5), np.random.default_rng(3))
    assert len(points) == 3
    for i, p in enumerate(points):
        # proposal i moves coordinate i; later coordinates are untouched
        assert p[i] != s.x[i]
        np.testing.assert_array_equal(p[i + 1 :], s.x[i + 1 :])


def test_um_rejects_minus_infinity():
    t = gamma21()
    s = state([0.5], t)
    res = univariate_metropolis_transition(s, t, TuningParams(1.0), ScriptedRNG([], [-3.0]))
    assert res.next.x[0] == 0.5


# adaptive Metropolis


def test_am_initial_phase_proposal():
    t, points = recording_target(lambda x: 0.0, 4)
    s = ChainState(np.ones(4), 0.0)
    z = [0.3, -1.2, 0.8, 2.0]
    adapt = AdaptState(4)
    res = adaptive_metropolis_transition(s, t, TuningParams(3.0), ScriptedRNG([], z), adapt)
    np.testing.assert_allclose(points[0], 1.0 + (3.0 / 2.0) * np.array(z), rtol=0, atol=1e-15)
    assert res.logp_evals == 1
    assert adapt.count == 1


def test_adapt_batch_covariance_oracle():
    a = AdaptState(2)
    for p in [(0.0, 0.0), (1.0, 0.0), (0.0, 2.0)]:
        a.update(np.array(p))
    np.testing.assert_allclose(a.covariance(), [[1 / 3, -1 / 3], [-1 / 3, 4 / 3]], rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_adapt_matches_np_cov(n, d, seed):
    pts = np.random.default_rng(seed).normal(3.0, 2.0, (n, d))
    a = AdaptState(d)
    for p in pts:
        a.update(p)
    expected = np.atleast_2d(np.cov(pts, rowvar=False))
    np.testing.assert_allclose(a.covariance(), expected, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(a.running_mean, pts.mean(axis=0), rtol=1e-12, atol=1e-12)


def test_am_freeze_keeps_scatter():
    t = get_distribution("gaussian4")
    rng = np.random.default_rng(0)
    adapt = AdaptState(4)
    s = state(t.known_mean, t)
    for _ in range(200):
        s = adaptive_metropolis_transition(s, t, TuningParams(0.05), rng, adapt).next
    adapt.freeze()
    before = adapt.running_scatter.copy()
    count = adapt.count
    for _ in range(100):
        s = adaptive_metropolis_transition(s, t, TuningParams(0.05), rng, adapt).next
    assert np.array_equal(adapt.running_scatter, before)
    assert adapt.count == count


def test_am_reject_keeps_state():
    t = make_target("n", 2, std_normal)
    s = ChainState(np.zeros(2), 0.0)
    res = adaptive_metropolis_transition(s, t, TuningParams(1.0), ScriptedRNG([0.9], [50.0, 50.0]), AdaptState(2))
    np.testing.assert_array_equal(res.next.x, s.x)
    assert res.next.cached_logp == 0.0


def test_am_zero_covariance_factor_is_finite():
    a = AdaptState(3)
    for _ in range(10):
        a.update(np.ones(3))
    assert np.all(a.factor() == 0.0)


# step-out slice


def test_slice_hand_trace():
    t = make_target("u", 1, uniform01)
    s = ChainState(np.array([0.5]), 0.0)
    # level draw, placement 0.75, shrink draws 0.5 (gives 0.0, rejected) and 0.75
    rng = ScriptedRNG([0.5, 0.75, 0.5, 0.75])
    res = step_out_slice_transition(s, t, TuningParams(2.0), rng)
    assert res.logp_evals == 4
    assert res.next.x[0] == 0.75
    assert res.next.cached_logp == 0.0
    assert rng.uniforms == []


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 20), st.integers(0, 10_000))
def test_slice_point_in_slice(x0, w, seed):
    t = make_target("n", 1, std_normal)
    rng = RecordingRNG(seed)
    s = ChainState(np.array([x0]), std_normal(np.array([x0])))
    res = step_out_slice_transition(s, t, TuningParams(w), rng)
    level = s.cached_logp + math.log(rng.uniforms[0])
    assert res.next.cached_logp >= level
    assert res.next.cached_logp == std_normal(res.next.x)


def test_slice_sweep_changes_coordinates_one_at_a_time():
    t, points = recording_target(std_normal, 3)
    s = ChainState(np.zeros(3), 0.0)
    res = step_out_slice_transition(s, t, TuningParams(1.0), np.random.default_rng(1))
    assert res.logp_evals == len(points)
    changed = {int(np.flatnonzero(p != s.x)[0]) for p in points if np.any(p != s.x)}
    assert changed <= {0, 1, 2}


# shrinking rank


def test_sr_requires_gradient():
    t = make_target("n", 2, std_normal)
    with pytest.raises(ConfigError):
        shrinking_rank_transition(ChainState(np.zeros(2), 0.0), t, TuningParams(1.0), np.random.default_rng(0))


def test_sr_first_proposal_accepted():
    t = make_target("flat", 3, lambda x: 0.0, gradient=lambda x: np.zeros(3))
    res = shrinking_rank_transition(ChainState(np.zeros(3), 0.0), t, TuningParams(1.0), np.random.default_rng(0))
    assert res.logp_evals == 1
    assert res.grad_evals == 0
    assert not np.array_equal(res.next.x, np.zeros(3))


def test_sr_first_offset_scales_linearly():
    offsets = []
    for scale in (1.0, 2.0):
        t, points = recording_target(lambda x: 0.0, 2, gradient=lambda x: np.zeros(2))
        rng = ScriptedRNG([0.5], [0.3, -0.4, 1.1, 0.2])
        shrinking_rank_transition(ChainState(np.array([1.0, 1.0]), 0.0), t, TuningParams(scale), rng)
        offsets.append(points[0] - 1.0)
    np.testing.assert_allclose(offsets[1], 2 * offsets[0], rtol=1e-14)
    # the first proposal is the crumb plus a draw with the crumb's spread
    np.testing.assert_allclose(offsets[0], [0.3 + 1.1, -0.4 + 0.2], rtol=1e-14)


def test_sr_rank_reduction_confines_proposals_to_a_line():
    t, points = recording_target(std_normal, 2, gradient=lambda x: -np.asarray(x))
    grads = []
    orig = t.gradient

    def grad(x):
        grads.append(np.array(x))
        return orig(x)

    t = make_target("n", 2, t.log_density, gradient=grad)
    x0 = np.array([0.2, -0.1])
    res = shrinking_rank_transition(ChainState(x0, std_normal(x0)), t, TuningParams(100.0), np.random.default_rng(4))
    assert res.grad_evals >= 1
    first = grads[0]
    direction = first / np.linalg.norm(first)
    # every proposal made after the first gradient evaluation
    idx = next(i for i, p in enumerate(points) if np.array_equal(p, first))
    for p in points[idx + 1 :]:
        assert abs(np.dot(p - x0, direction)) < 1e-10
    assert res.next.cached_logp == std_normal(res.next.x)


def test_sr_counts_and_slice_property():
    t = get_distribution("gaussian4")
    rng = RecordingRNG(11)
    s = state(t.known_mean + 0.01, t)
    for _ in range(50):
        n0 = len(rng.uniforms)
        res = shrinking_rank_transition(s, t, TuningParams(1.0), rng)
        level = s.cached_logp + math.log(rng.uniforms[n0])
        assert res.next.cached_logp >= level
        assert res.grad_evals <= res.logp_evals - 1
        s = res.next


# registry and reproducibility


def test_registry():
    assert set(SAMPLERS) == {"adaptive_metropolis", "univariate_metropolis", "shrinking_rank", "step_out_slice"}
    with pytest.raises(ConfigError, match="unknown sampler: gibbs"):
        get_sampler("gibbs")


@pytest.mark.parametrize("name", sorted(SAMPLERS))
def test_same_seed_same_transition(name):
    t = get_distribution("eight_schools")
    spec = get_sampler(name)
    out = []
    for _ in range(2):
        rng = np.random.default_rng(42)
        s = state(t.default_initial_point, t)
        adapt = AdaptState(t.dim) if spec.adaptive else None
        evals = 0
        for _ in range(30):
            res = spec.kernel(s, t, TuningParams(1.0), rng, adapt)
            s = res.next
            evals += res.logp_evals
        out.append((s.x.copy(), s.cached_logp, evals))
    assert np.array_equal(out[0][0], out[1][0])
    assert out[0][1:] == out[1][1:]
