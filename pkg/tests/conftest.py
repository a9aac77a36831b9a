import numpy as np
import pytest

_ACCEPTANCE: list[str] = []


def fd_milstein(model, x, j1, j2):
    """Central-difference oracle for ``(d sigma_j2 / dx) sigma_j1`` at one state."""
    x = np.asarray(x, dtype=float)
    step = 1e-5 * (1.0 + np.linalg.norm(x))
    d = x.size
    jac = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        jac[:, k] = (model.diffusion_column(x + e, j2) - model.diffusion_column(x - e, j2)) / (2 * step)
    return jac @ model.diffusion_column(x, j1)


def random_states(rng, n, d, radius=10.0):
    x = rng.normal(size=(n, d))
    x *= radius * rng.uniform(size=(n, 1)) / np.linalg.norm(x, axis=1, keepdims=True)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
