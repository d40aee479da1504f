"""Shared instance builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from cpfjdgsvd.oracle import dense_full_gsvd
from cpfjdgsvd.sparse import MatrixPair, SparseMatrix, gen_b0, gen_b1

SUITE_SIZE = 20


def random_sparse(rows, cols, density, rng):
    m = sp.random(rows, cols, density=density, random_state=rng, data_rvs=rng.standard_normal)
    return (m + sp.eye(rows, cols)).tocsr()


def random_pair(m, p, n, seed=0, density=0.05):
    rng = np.random.default_rng(seed)
    a = random_sparse(m, n, density, rng)
    b = random_sparse(p, n, density, rng)
    return MatrixPair(SparseMatrix.from_scipy(a), SparseMatrix.from_scipy(b))


def suite_instance(i):
    """Instance ``i`` of the desk-scale oracle suite.

    Returns ``(pair, tau, x0_kind, label)``. Even instances use an interior
    target, odd ones an extreme target beyond the end of the spectrum.
    """
    rng = np.random.default_rng(1000 + i)
    kind = ("b0", "b1", "random")[i % 3]
    n = int(rng.integers(101, 301))
    m = int(rng.integers(max(100, n), 401))
    a = SparseMatrix.from_scipy(random_sparse(m, n, 0.03, rng))
    if kind == "b0":
        b = gen_b0(n)
    elif kind == "b1":
        b = gen_b1(n)
    else:
        b = SparseMatrix.from_scipy(random_sparse(int(rng.integers(n, 401)), n, 0.03, rng))
    pair = MatrixPair(a, b)
    oracle = dense_full_gsvd(pair)
    sig = np.sort(oracle.sigma[oracle.nontrivial])
    if i % 2 == 0:
        lo, hi = np.quantile(sig, [0.3, 0.7])
        tau = float(rng.uniform(lo, hi))
        where = "interior"
    elif i % 4 == 1:
        tau = float(sig[-1] * 1.2)
        where = "largest"
    else:
        tau = float(sig[0] * 0.8)
        where = "smallest"
    x0 = "mod4" if kind == "b1" else "ones"
    return pair, tau, x0, oracle, f"#{i} {kind} {m}x{n}/{pair.p}x{n} tau={tau:.4g} ({where})"


@pytest.fixture(scope="session")
def small_pair():
    return random_pair(60, 50, 40, seed=7)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
