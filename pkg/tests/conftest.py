import numpy as np
import pytest
from scipy.optimize import lsq_linear

from prutf.linop import AugmentedBoundary, build_difference_operator, run_offsets

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_D(n, r):
    D = np.eye(n)
    for _ in range(r + 1):
        D = np.diff(D, axis=0)
    return D


def box_qp(y, r, lam):
    """Exact minimiser of 0.5 * ||y - D^T u||^2 subject to |u| <= lam."""
    D = dense_D(len(y), r)
    if lam == 0:
        return np.zeros(D.shape[0])
    res = lsq_linear(D.T, y, bounds=(-lam, lam), method="bvls", tol=1e-14, max_iter=10_000)
    return res.x


def box_qp_cd(y, r, lam, tol=1e-10, max_sweeps=200_000):
    """Projected coordinate descent on the same problem (slow; small r only)."""
    D = dense_D(len(y), r)
    m = D.shape[0]
    u = np.zeros(m)
    resid = y.copy()
    norms = (D * D).sum(axis=1)
    for _ in range(max_sweeps):
        change = 0.0
        for i in range(m):
            new = np.clip(u[i] + D[i] @ resid / norms[i], -lam, lam)
            delta = new - u[i]
            if delta:
                resid -= delta * D[i]
                u[i] = new
                change = max(change, abs(delta))
        if change < tol:
            break
    return u


def random_boundary(rng, m, r, max_changes=4, pins=False):
    r_a, r_b = run_offsets(r)
    changes, taken = [], np.zeros(m, bool)
    for _ in range(int(rng.integers(0, max_changes + 1))):
        tau = int(rng.integers(r_b, m - r_a)) if m - r_a > r_b else None
        if tau is None or taken[tau - r_b:tau + r_a + 1].any():
            continue
        taken[tau - r_b:tau + r_a + 1] = True
        changes.append((tau, int(rng.choice([-1, 1]))))
    pin_list = []
    if pins:
        free = np.flatnonzero(~taken)
        if free.size:
            pin_list.append((int(rng.choice(free)), 1))
    return AugmentedBoundary(m, r, tuple(changes), tuple(pin_list))


def piecewise_poly(rng, n, r, k, scale=3.0, min_gap=None):
    min_gap = min_gap or r + 2
    cps = []
    cand = rng.permutation(np.arange(min_gap, n - min_gap))
    for c in cand:
        if len(cps) == k:
            break
        if all(abs(c - d) >= min_gap for d in cps):
            cps.append(int(c))
    cps.sort()
    x = np.arange(n) / n
    f = np.empty(n)
    for lo, hi in zip([0, *cps], [*cps, n]):
        f[lo:hi] = np.polyval(rng.normal(scale=scale, size=r + 1), x[lo:hi])
    return f, cps


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def op_factory():
    return build_difference_operator
