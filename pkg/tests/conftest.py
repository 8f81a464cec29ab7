import numpy as np
import pytest

from llorma.data import UNBOUNDED_SCALE, ObservedMatrix


def random_observed(n_rows, n_cols, rank, fraction, seed, scale=UNBOUNDED_SCALE):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n_rows, rank)) @ rng.standard_normal((n_cols, rank)).T
    mask = rng.random(M.shape) < fraction
    return M, ObservedMatrix.from_dense(M, mask, scale=scale)


def central_diff(f, X, step=1e-5):
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        Xp = X.copy()
        Xm = X.copy()
        Xp[idx] += step
        Xm[idx] -= step
        g[idx] = (f(Xp) - f(Xm)) / (2 * step)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


@pytest.fixture
def block_matrix():
    """Two disjoint rank-1 blocks on the diagonal of a 10x10 matrix."""
    M = np.zeros((10, 10))
    M[:5, :5] = np.outer([1, 2, 1, 2, 1], [1, 1, 2, 2, 1])
    M[5:, 5:] = np.outer([2, 1, 2, 1, 3], [1, 3, 1, 2, 2])
    return M


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
