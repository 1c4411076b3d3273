import numpy as np
import pytest
from scipy.stats import ortho_group

ACCEPTANCE_RESULTS = []


def random_spd(rng, n, cond, norm2=1.0):
    """SPD matrix with exact extreme eigenvalues, built independently of asyncqp.problem_gen."""
    if n == 1:
        return np.array([[norm2]])
    U = ortho_group.rvs(n, random_state=rng)
    lam = np.concatenate([[norm2, norm2 / cond], rng.uniform(norm2 / cond, norm2, n - 2)])
    Q = U @ np.diag(lam) @ U.T
    return 0.5 * (Q + Q.T)


def random_sizes(rng, n):
    """Random composition of n into positive block sizes."""
    cuts = np.sort(rng.choice(np.arange(1, n), size=rng.integers(0, n), replace=False)) if n > 1 else []
    return tuple(int(v) for v in np.diff(np.concatenate([[0], cuts, [n]])))


def power_extremes(Q, iters=5000, tol=1e-13):
    """Largest eigenvalue by power iteration, smallest by power iteration on Q^-1."""
    def top(M):
        v = np.ones(M.shape[0]) / np.sqrt(M.shape[0]) + 1e-3 * np.arange(M.shape[0])
        lam = 0.0
        for _ in range(iters):
            w = M @ v
            new = float(v @ w)
            v = w / np.linalg.norm(w)
            if abs(new - lam) <= tol * abs(new):
                break
            lam = new
        return new
    return top(Q), 1.0 / top(np.linalg.inv(Q))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def record(criterion, ok, detail):
    ACCEPTANCE_RESULTS.append((criterion, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
