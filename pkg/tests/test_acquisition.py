import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vvbo.acquisition import (
    Grid,
    LinearObjective,
    LipschitzObjective,
    MultiStart,
    TimeVarying,
    compute_regret,
    default_optimizer,
    maximize_acquisition,
    run_tv_vvbo,
    run_vvbo,
    ucb_score,
)
from vvbo.kernels import BoxDomain, ScalarKernel
from vvbo.krr import (
    PosteriorHyperparams,
    empty_state,
    objective_mean,
    posterior_mean_coords,
    posterior_variance_opnorm,
    update,
)
from vvbo.measurement import InducedSpectrum

RBF = ScalarKernel("rbf", (0.2,))


class ToyProblem:
    """Two-output problem ``f(x) = (sin 6x, cos 4x)`` on a 1-D box."""

    def __init__(self, ms, noise=0.0, lower=0.0, upper=1.0, resolution=1001):
        self.domain = BoxDomain(np.array([lower]), np.array([upper]))
        self.ms = [np.asarray(m, dtype=float) for m in ms]
        self.noise = noise
        cand = Grid(resolution).candidates(self.domain)
        self._opt = [float(np.max(self._f(cand) @ m)) for m in self.ms]

    @staticmethod
    def _f(X):
        X = np.atleast_2d(X)
        return np.column_stack([np.sin(6 * X[:, 0]), np.cos(4 * X[:, 0])])

    def query(self, x, rng):
        out = self._f(x)[0]
        return out + self.noise * rng.normal(size=2) if self.noise else out

    def true_objective(self, x, phase):
        return float(self._f(x)[0] @ self.ms[phase])

    def optimum(self, phase):
        return self._opt[phase]


def iso_state(lam=0.01, q=2, **kw):
    spec = InducedSpectrum(np.ones(q), np.eye(q), float(q))
    return empty_state(RBF, spec, PosteriorHyperparams(lam=lam, **kw), 1)


def test_ucb_at_t0_is_beta_times_norm():
    state = iso_state(Gamma=1.0, sigma=0.0)
    obj = LinearObjective(np.array([3.0, 4.0]), 5.0)
    assert ucb_score(state, [0.3], obj) == pytest.approx(5.0)
    assert ucb_score(state, [0.3], LinearObjective([3.0, 4.0], 5.0, beta=2.0)) == pytest.approx(10.0)


def test_ucb_dominates_mean_and_rank_one_formula(rng):
    spec = InducedSpectrum(np.array([1.0]), np.ones((1, 1)), 1.0)
    state = empty_state(RBF, spec, PosteriorHyperparams(lam=0.05), 1)
    for x in rng.random((5, 1)):
        state = update(state, x, [rng.normal()])
    Xq = rng.random((50, 1))
    obj = LinearObjective([1.0], 1.0, beta=2.0)
    score = ucb_score(state, Xq, obj)
    mean = objective_mean(state, Xq, [1.0])
    assert np.all(score >= mean)
    np.testing.assert_allclose(score, mean + 2.0 * np.sqrt(posterior_variance_opnorm(state, Xq)), atol=1e-12)


def test_lipschitz_objective_uses_measurement_coords(rng):
    state = iso_state()
    state = update(state, [0.5], [1.0, -2.0])
    basis = np.eye(2)
    obj = LipschitzObjective(lambda C: np.abs(C).sum(axis=1), L=2.0, basis=basis, beta=1.0)
    x = np.array([0.5])
    mu = posterior_mean_coords(state, x)
    expected = np.abs(mu).sum() + 2.0 * np.sqrt(posterior_variance_opnorm(state, x))
    assert ucb_score(state, x, obj) == pytest.approx(expected)


def test_time_varying_phase_lookup():
    a, b = LinearObjective([1.0], 1.0), LinearObjective([2.0], 2.0)
    tv = TimeVarying((a, b), (3, 2))
    assert tv.horizon == 5
    assert [tv.phase_at(t) for t in range(5)] == [0, 0, 0, 1, 1]
    assert tv.at(3) is b
    with pytest.raises(ValueError):
        tv.phase_at(5)
    with pytest.raises(ValueError):
        TimeVarying((a,), (1, 2))


def test_grid_constant_scorer_returns_first_lattice_point():
    dom = BoxDomain(np.array([-1.0, 2.0]), np.array([1.0, 3.0]))
    x, v = maximize_acquisition(Grid(11), dom, lambda X: np.zeros(len(X)))
    np.testing.assert_array_equal(x, [-1.0, 2.0])
    assert v == 0.0


def test_grid_finds_lattice_peak():
    dom = BoxDomain(np.zeros(2), np.ones(2))
    c = np.array([0.3, 0.7])
    x, v = maximize_acquisition(Grid(11), dom, lambda X: -np.sum((X - c) ** 2, axis=1))
    np.testing.assert_allclose(x, c, atol=1e-12)
    assert v == pytest.approx(0.0, abs=1e-24)


def test_grid_matches_exhaustive_1d(rng):
    dom = BoxDomain(np.zeros(1), np.ones(1))
    a = rng.normal(size=6)

    def scorer(X):
        return np.cos(np.outer(X[:, 0], np.arange(6)) * 3.0) @ a

    x, v = maximize_acquisition(Grid(1001), dom, scorer)
    lattice = np.linspace(0, 1, 1001)
    vals = scorer(lattice[:, None])
    assert v == vals.max()
    assert x[0] == lattice[np.argmax(vals)]


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(-1e3, 1e3), seed=st.integers(0, 10_000))
def test_argmax_invariant_to_constant_shift(shift, seed):
    a = np.random.default_rng(seed).normal(size=4)
    dom = BoxDomain(np.zeros(1), np.ones(1))

    def scorer(X):
        return np.sin(np.outer(X[:, 0], [1.0, 3.0, 7.0, 11.0])) @ a

    x1, _ = maximize_acquisition(Grid(201), dom, scorer)
    x2, _ = maximize_acquisition(Grid(201), dom, lambda X: scorer(X) + shift)
    if abs(shift) < 1e2:
        np.testing.assert_array_equal(x1, x2)
    else:
        vals = scorer(Grid(201).candidates(dom))
        assert scorer(x2[None, :])[0] >= vals.max() - 1e-9


def test_multistart_stays_in_domain_and_improves(rng):
    dom = BoxDomain(np.array([-2.0, 0.0, 1.0]), np.array([2.0, 1.0, 5.0]))
    c = np.array([1.5, 0.25, 4.0])
    seen = []

    def scorer(X):
        seen.append(X.copy())
        return -np.sum((X - c) ** 2, axis=1)

    x, v = maximize_acquisition(MultiStart(8, 200), dom, scorer, rng)
    allx = np.vstack(seen)
    assert np.all(allx >= dom.lower) and np.all(allx <= dom.upper)
    assert v > -1e-3
    np.testing.assert_allclose(x, c, atol=0.05)
    with pytest.raises(ValueError):
        maximize_acquisition(MultiStart(), dom, scorer)


def test_default_optimizer_choice():
    assert default_optimizer(1) == Grid(1001)
    assert default_optimizer(2) == Grid(101)
    assert isinstance(default_optimizer(3), MultiStart)


def test_zero_iterations_gives_empty_trace(rng):
    prob = ToyProblem([[1.0, 0.0]])
    trace = run_vvbo(prob, 0, LinearObjective([1.0, 0.0], 1.0, 2.0), iso_state(), Grid(101), rng)
    assert len(trace) == 0
    assert trace.x.shape == (0, 1)
    assert trace.final_state.size == 0


def test_single_point_domain_has_zero_regret(rng):
    prob = ToyProblem([[1.0, 0.5]], lower=0.4, upper=0.4, resolution=2)
    trace = run_vvbo(prob, 5, LinearObjective([1.0, 0.5], np.hypot(1, 0.5), 2.0), iso_state(), Grid(2), rng)
    assert not trace.simple_regret.any()
    assert not trace.cumulative_regret.any()


def test_regret_bookkeeping(rng):
    prob = ToyProblem([[1.0, 0.0]])
    trace = run_vvbo(prob, 15, LinearObjective([1.0, 0.0], 1.0, 2.0), iso_state(), Grid(1001), rng)
    gap = prob.optimum(0) - trace.F
    assert np.all(gap >= 0)
    np.testing.assert_allclose(trace.cumulative_regret, np.cumsum(gap), atol=1e-12)
    np.testing.assert_allclose(trace.simple_regret, np.minimum.accumulate(gap), atol=1e-12)
    np.testing.assert_array_equal(trace.posterior_size, np.arange(1, 16))
    np.testing.assert_array_equal(trace.iteration, np.arange(1, 16))


def test_noise_free_run_converges(rng):
    prob = ToyProblem([[1.0, 0.0]])
    trace = run_vvbo(prob, 25, LinearObjective([1.0, 0.0], 1.0, 2.0), iso_state(lam=1e-4), Grid(1001), rng)
    assert trace.simple_regret[-1] < 1e-3


def test_constant_schedule_equals_plain_run():
    prob = ToyProblem([[1.0, 0.0], [1.0, 0.0]])
    obj = LinearObjective([1.0, 0.0], 1.0, 2.0)
    plain = run_vvbo(prob, 12, obj, iso_state(), Grid(501), np.random.default_rng(3))
    tv = run_tv_vvbo(prob, 12, TimeVarying((obj, obj), (6, 6)), iso_state(), Grid(501), np.random.default_rng(3))
    np.testing.assert_array_equal(plain.x, tv.x)
    np.testing.assert_array_equal(plain.F, tv.F)
    np.testing.assert_array_equal(tv.phase, [1] * 6 + [2] * 6)


def test_time_varying_keeps_posterior_and_resets_simple_regret(rng):
    ms = [[1.0, 0.0], [0.0, 1.0]]
    prob = ToyProblem(ms, noise=0.05)
    objs = tuple(LinearObjective(m, 1.0, 2.0) for m in ms)
    trace = run_tv_vvbo(prob, 20, TimeVarying(objs, (10, 10)), iso_state(), Grid(501), rng)
    np.testing.assert_array_equal(trace.posterior_size, np.arange(1, 21))
    gap2 = prob.optimum(1) - trace.F[10:]
    np.testing.assert_allclose(trace.simple_regret[10:], np.minimum.accumulate(np.maximum(gap2, 0)), atol=1e-12)
    with pytest.raises(ValueError):
        run_tv_vvbo(prob, 21, TimeVarying(objs, (10, 10)), iso_state(), Grid(501), rng)


def test_truncated_schedule(rng):
    ms = [[1.0, 0.0], [0.0, 1.0]]
    prob = ToyProblem(ms)
    objs = tuple(LinearObjective(m, 1.0, 2.0) for m in ms)
    trace = run_tv_vvbo(prob, 7, TimeVarying(objs, (5, 5)), iso_state(), Grid(101), rng)
    np.testing.assert_array_equal(trace.phase, [1] * 5 + [2] * 2)


def test_runs_are_deterministic():
    prob = ToyProblem([[0.6, 0.8]], noise=0.1)
    obj = LinearObjective([0.6, 0.8], 1.0)
    traces = [run_vvbo(prob, 10, obj, iso_state(sigma=0.1), MultiStart(4, 40), np.random.default_rng(9))
              for _ in range(2)]
    assert traces[0].same_as(traces[1])


def test_compute_regret_examples():
    simple, cum = compute_regret([1.0, 3.0, 2.0, 0.0, 4.0], [1, 1, 1, 2, 2], {1: 3.0, 2: 4.0})
    np.testing.assert_array_equal(simple, [2.0, 0.0, 0.0, 4.0, 0.0])
    np.testing.assert_array_equal(cum, [2.0, 2.0, 3.0, 7.0, 7.0])
    simple, cum = compute_regret([5.0], [1], {1: 4.0})
    assert simple[0] == 0.0 and cum[0] == 0.0
    with pytest.raises(ValueError):
        compute_regret([1.0, 2.0], [1, 2], {1: 3.0})
