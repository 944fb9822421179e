import numpy as np
import pytest

from vvbo.acquisition import Grid, LinearObjective, LinearObserver, PhaseSetup, run_vvbo
from vvbo.baselines import (
    AugmentedKernel,
    ScalarGPState,
    ScalarTask,
    run_bo,
    run_ctbo,
    run_ffbo,
    run_mtbo,
    run_rbo,
    run_rmtbo,
    scalar_gp_predict,
    scalar_gp_update,
)
from vvbo.harness import ExperimentConfig, run_single
from vvbo.hilbert import OutputGrid
from vvbo.kernels import BoxDomain, ScalarKernel
from vvbo.krr import PosteriorHyperparams, empty_state, posterior_mean_coords, posterior_variance_opnorm, update
from vvbo.measurement import InducedSpectrum, MeasurementOperator, functional_coords, induced_operator

RBF = ScalarKernel("rbf", (0.2,))
HYPER = PosteriorHyperparams(lam=0.01)


class FiveDimProblem:
    """Outputs given directly as 5 canonical coordinates, ``c(x) = A [sin((k+1) 3x)]_k``."""

    def __init__(self, ms, noise=0.02, seed=0):
        self.domain = BoxDomain(np.zeros(1), np.ones(1))
        self.A = np.random.default_rng(seed).normal(size=(5, 5))
        self.ms = [np.asarray(m, dtype=float) for m in ms]
        self.noise = noise
        cand = Grid(1001).candidates(self.domain)
        self._opt = [float(np.max(self.coords(cand) @ m)) for m in self.ms]

    def coords(self, X):
        X = np.atleast_2d(X)
        return np.sin(np.outer(X[:, 0], 3.0 * np.arange(1, 6))) @ self.A.T

    def query(self, x, rng):
        return self.coords(x)[0] + self.noise * rng.normal(size=5)

    def true_objective(self, x, phase):
        return float(self.coords(x)[0] @ self.ms[phase])

    def optimum(self, phase):
        return self._opt[phase]


def test_scalar_gp_single_point_example():
    state = scalar_gp_update(ScalarGPState.empty(RBF, 0.01, 1), [0.4], 0.7)
    mean, var = scalar_gp_predict(state, [0.4])
    assert mean == pytest.approx(0.7 / 1.01, rel=1e-14)
    assert var == pytest.approx(1 - 1 / 1.01, rel=1e-10)
    assert state.log_det_value == pytest.approx(np.log(101), rel=1e-14)


def test_scalar_gp_matches_rank_one_vvkrr(rng):
    spec = InducedSpectrum(np.array([1.0]), np.ones((1, 1)), 1.0)
    for _ in range(10):
        lam = rng.uniform(0.01, 0.3)
        s = ScalarGPState.empty(RBF, lam, 1)
        v = empty_state(RBF, spec, PosteriorHyperparams(lam=lam), 1)
        for x in rng.random((rng.integers(1, 12), 1)):
            y = rng.normal()
            s, v = scalar_gp_update(s, x, y), update(v, x, [y])
        Xq = rng.random((20, 1))
        mean, var = scalar_gp_predict(s, Xq)
        np.testing.assert_allclose(mean, posterior_mean_coords(v, Xq)[:, 0], atol=1e-10)
        np.testing.assert_allclose(var, posterior_variance_opnorm(v, Xq), atol=1e-10)
        assert np.all(var <= RBF.diag(Xq) + 1e-12)
        G = RBF.matrix(s.X, s.X)
        assert s.log_det_value == pytest.approx(np.linalg.slogdet(np.eye(s.size) + G / lam)[1], abs=1e-8)


def test_scalar_gp_rejects_bad_input():
    s = ScalarGPState.empty(RBF, 0.01, 1)
    with pytest.raises(ValueError):
        scalar_gp_update(s, [0.1, 0.2], 1.0)
    with pytest.raises(ValueError):
        scalar_gp_update(s, [0.1], np.nan)
    with pytest.raises(ValueError):
        ScalarGPState.empty(RBF, 0.0, 1)


def test_augmented_kernel_psd_and_reduction(rng):
    k = AugmentedKernel(RBF, 1)
    rows = np.hstack([rng.random((15, 1)), rng.normal(size=(15, 3))])
    K = k.matrix(rows, rows)
    assert np.linalg.eigvalsh(K).min() > -1e-10
    np.testing.assert_allclose(np.diag(K), k.diag(rows), atol=1e-12)
    c = rng.normal(size=3)
    c /= np.linalg.norm(c)
    fixed = np.hstack([rows[:, :1], np.tile(c, (15, 1))])
    np.testing.assert_allclose(k.matrix(fixed, fixed), RBF.matrix(rows[:, :1], rows[:, :1]), atol=1e-12)
    B = np.diag([2.0, 1.0, 0.5])
    kb = AugmentedKernel(RBF, 1, B)
    np.testing.assert_allclose(kb.matrix(fixed[:2], fixed[:2]), RBF.matrix(rows[:2, :1], rows[:2, :1]) * (c @ B @ c))


def tasks_for(ms, beta=2.0, n=8):
    return [ScalarTask(np.asarray(m, dtype=float), beta, n) for m in ms]


def test_single_phase_rbo_equals_bo():
    prob = FiveDimProblem([np.ones(5) / 5])
    t = tasks_for(prob.ms, n=12)
    a = run_bo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(4))
    b = run_rbo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(4))
    assert a.same_as(b)


def test_rbo_resets_and_bo_keeps_data():
    ms = [np.eye(5)[0], np.eye(5)[1]]
    prob = FiveDimProblem(ms)
    t = tasks_for(ms, n=6)
    r = run_rbo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(1))
    b = run_bo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(1))
    np.testing.assert_array_equal(r.posterior_size, list(range(1, 7)) * 2)
    np.testing.assert_array_equal(b.posterior_size, np.arange(1, 13))


def test_bo_width_uses_functional_norm():
    m = np.array([3.0, 4.0, 0.0, 0.0, 0.0])
    prob = FiveDimProblem([m])
    trace = run_bo(prob, tasks_for([m], beta=2.0, n=1), RBF, HYPER, Grid(11), np.random.default_rng(0))
    assert trace.acquisition[0] == pytest.approx(2.0 * 5.0)


def test_ctbo_equals_ffbo_with_one_context():
    m = np.array([0.2, 0.1, -0.3, 0.5, 0.0])
    prob = FiveDimProblem([m, m])
    t = tasks_for([m, m], n=6)
    a = run_ctbo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(2))
    b = run_ffbo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(2))
    assert a.same_as(b)


def test_ctbo_context_follows_phase():
    ms = [np.eye(5)[0], np.eye(5)[3]]
    prob = FiveDimProblem(ms)
    t = tasks_for(ms, n=6)
    a = run_ctbo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(2))
    b = run_ffbo(prob, t, RBF, HYPER, Grid(501), np.random.default_rng(2))
    assert np.array_equal(a.x[:6], b.x[:6])
    assert not np.array_equal(a.x[6:], b.x[6:])


def test_full_span_projection_matches_identity():
    grid = OutputGrid.uniform(0.0, 1.0, ScalarKernel("rbf", (0.3,)), n_grid=5)
    assert grid.rank == 5
    Q, _ = np.linalg.qr(np.random.default_rng(7).normal(size=(5, 5)))
    m = np.array([0.4, -0.2, 0.7, 0.1, 0.3])
    prob = FiveDimProblem([m])

    ident = MeasurementOperator.identity(grid)
    spec_i = induced_operator(ident)
    mb_i, mn_i = functional_coords(ident, m, spec_i)
    a = run_vvbo(prob, 20, LinearObjective(mb_i, mn_i, 2.0), empty_state(RBF, spec_i, HYPER, 1), Grid(1001),
                 np.random.default_rng(5), to_obs=LinearObserver(spec_i.eigvecs.T))

    proj = MeasurementOperator("projection", grid, Q)
    spec_p = induced_operator(proj)
    mb_p, mn_p = functional_coords(proj, Q @ m, spec_p)
    setup = PhaseSetup(empty_state(RBF, spec_p, HYPER, 1), LinearObjective(mb_p, mn_p, 2.0),
                       LinearObserver(spec_p.eigvecs.T @ Q))
    b = run_mtbo(prob, setup, [20], Grid(1001), np.random.default_rng(5))

    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_allclose(a.acquisition, b.acquisition, atol=1e-8)
    np.testing.assert_allclose(a.F, b.F, atol=1e-8)


def test_rmtbo_resets_each_phase():
    grid = OutputGrid.uniform(0.0, 1.0, ScalarKernel("rbf", (0.3,)), n_grid=5)
    ms = [np.eye(5)[0], np.eye(5)[2]]
    prob = FiveDimProblem(ms)
    setups = []
    for m in ms:
        M = MeasurementOperator("scalar", grid, m[None, :])
        spec = induced_operator(M)
        mb, mn = functional_coords(M, [1.0], spec)
        setups.append(PhaseSetup(empty_state(RBF, spec, HYPER, 1), LinearObjective(mb, mn, 2.0),
                                 LinearObserver(spec.eigvecs.T @ M.matrix_canon)))
    r = run_rmtbo(prob, setups, [5, 5], Grid(501), np.random.default_rng(0))
    np.testing.assert_array_equal(r.posterior_size, list(range(1, 6)) * 2)
    mt = run_mtbo(prob, setups[0], [5, 5], Grid(501), np.random.default_rng(0))
    np.testing.assert_array_equal(mt.posterior_size, np.arange(1, 11))
    assert r.select(r.phase == 1).same_as(mt.select(mt.phase == 1))


def test_mtbo_equals_partial_vvbo_in_phase_one():
    cfg = dict(benchmark="GP", regime="partial", iterations=(8, 8), n_runs=1)
    v = run_single(ExperimentConfig(method="vvbo", **cfg), 0)
    m = run_single(ExperimentConfig(method="mtbo", **cfg), 0)
    assert v.select(v.phase == 1).same_as(m.select(m.phase == 1))
    assert not np.array_equal(v.x[8:], m.x[8:])


@pytest.mark.parametrize("method", ["bo", "rbo", "ctbo", "ffbo", "mtbo", "rmtbo"])
def test_baselines_are_deterministic(method):
    cfg = ExperimentConfig("GP", method=method, iterations=4, n_runs=1)
    assert run_single(cfg, 0).same_as(run_single(cfg, 0))
