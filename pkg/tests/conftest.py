import numpy as np
import pytest

from vvbo.kernels import ScalarKernel
from vvbo.krr import PosteriorHyperparams, empty_state, update
from vvbo.measurement import InducedSpectrum


def random_spectrum(rng, q, n=None):
    A = rng.normal(size=(q, q))
    B = A @ A.T / q + 0.05 * np.eye(q)
    policy = ("energy", 1.0) if n is None else ("rank", n)
    return InducedSpectrum.from_matrix(B, policy)


def random_instance(rng, t, q, d=1, lam=None, ell=None):
    """Random posterior instance with ``t`` observations and a ``q``-dim measurement space."""
    kernel = ScalarKernel("rbf", (ell if ell is not None else rng.uniform(0.2, 0.8),))
    spec = random_spectrum(rng, q)
    hyper = PosteriorHyperparams(lam=lam if lam is not None else rng.uniform(0.01, 0.5))
    X = rng.random((t, d))
    Y = rng.normal(size=(t, spec.rank))
    state = empty_state(kernel, spec, hyper, d)
    for x, y in zip(X, Y):
        state = update(state, x, y)
    return state, X, Y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one acceptance line; it is echoed in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def _report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
