import numpy as np
import pytest
import scipy.linalg as sla

from cpfjdgsvd import solver as S
from cpfjdgsvd.errors import InputError, RegularityError
from cpfjdgsvd.oracle import closest_to_target, dense_correction_solve, dense_full_gsvd
from cpfjdgsvd.solver import (
    ConvergedSet,
    ShiftChoice,
    SolverConfig,
    c_tau,
    check_outer_convergence,
    deflate,
    expand,
    extract_ritz,
    initialize,
    inner_tolerance,
    mod4_start,
    purge,
    run,
    select_shift,
    solve_correction,
    target_order,
    thick_restart,
)
from cpfjdgsvd.sparse import MatrixPair, SparseMatrix, gen_b0

from conftest import random_pair


def build_state(pair, cfg, k, seed=0, conv=None):
    rng = np.random.default_rng(seed)
    conv = ConvergedSet.empty(pair.m, pair.p, pair.n) if conv is None else conv
    state = initialize(pair, cfg, conv, rng)
    while state.k < k:
        state, _ = expand(state, rng.standard_normal(pair.n), conv, pair, rng)
    return state, conv


def assert_state_invariants(state, pair, conv=None):
    a, b = pair.a.toarray(), pair.b.toarray()
    scale = pair.norm1_a + pair.norm1_b
    k = state.k
    assert np.abs(a @ state.x - state.u @ state.g).max() <= 1e-11 * scale
    assert np.abs(b @ state.x - state.v @ state.h).max() <= 1e-11 * scale
    for q in (state.x, state.u, state.v):
        assert np.abs(q.T @ q - np.eye(k)).max() <= 1e-12
    if conv is not None and conv.j:
        assert np.abs(state.x.T @ conv.y).max() <= 1e-10


@pytest.fixture(scope="module")
def pair():
    return random_pair(80, 70, 50, seed=3, density=0.1)


def test_defaults():
    cfg = SolverConfig(tau=1.0)
    assert (cfg.k_min, cfg.k_max, cfg.fixtol, cfg.eps_tilde, cfg.tol) == (3, 30, 1e-4, 1e-3, 1e-10)


@pytest.mark.parametrize(
    "kwargs",
    [dict(tau=0.0), dict(tau=-1.0), dict(tau=np.inf), dict(tau=1.0, ell=0), dict(tau=1.0, k_min=5, k_max=5),
     dict(tau=1.0, fixtol=1e-12), dict(tau=1.0, x0=np.zeros(3))],
)
def test_config_validation(kwargs):
    with pytest.raises(InputError):
        SolverConfig(**kwargs)


def test_mod4_start():
    x = mod4_start(6)
    np.testing.assert_allclose(x * np.linalg.norm([1, 2, 3, 0, 1, 2]), [1, 2, 3, 0, 1, 2])


def test_target_order_example():
    theta = np.array([1.93, 3.92, 4.12])
    assert target_order(theta, 4.0)[0] == 1
    assert list(target_order(np.array([np.inf, 2.0, 1.0]), 1.5)) == [2, 1, 0]


def test_extract_matches_rayleigh_ritz(pair):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 8)
    assert_state_invariants(state, pair)
    ritz = extract_ritz(state, cfg, conv, pair)
    a, b = pair.a.toarray(), pair.b.toarray()
    x = state.x
    lam, vec = sla.eigh(x.T @ a.T @ a @ x, x.T @ (a.T @ a + b.T @ b) @ x)
    # theta^2 / (1 + theta^2) = lam
    thetas = np.sqrt(lam / (1 - lam))
    j = np.argmin(np.abs(thetas - 1.2))
    assert ritz.theta == pytest.approx(thetas[j], rel=1e-10)
    xs = x @ vec[:, j]
    assert abs(abs(xs @ ritz.x) / (np.linalg.norm(xs) * np.linalg.norm(ritz.x)) - 1) <= 1e-10
    assert np.linalg.norm(ritz.u) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(ritz.v) == pytest.approx(1.0, abs=1e-12)
    assert ritz.y @ ritz.x == pytest.approx(1.0, abs=1e-10)
    r = ritz.beta * a.T @ ritz.u - ritz.alpha * b.T @ ritz.v
    assert np.abs(r - ritz.r).max() <= 1e-13 * np.abs(r).max() + 1e-15
    assert np.abs(x.T @ ritz.r).max() <= 1e-10 * (pair.norm1_a + pair.norm1_b)


def test_select_shift_rules(pair):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 5)
    ritz = extract_ritz(state, cfg, conv, pair)
    scale = ritz.beta * pair.norm1_a + ritz.alpha * pair.norm1_b
    ritz.r_norm = 1e-5 * scale
    assert select_shift(ritz, pair, cfg) is ShiftChoice.THETA
    assert select_shift(ritz, pair, SolverConfig(tau=1.2, fixtol=0.0)) is ShiftChoice.TAU
    ritz.r_norm = 1e-2 * scale
    assert select_shift(ritz, pair, cfg) is ShiftChoice.TAU
    assert select_shift(ritz, pair, SolverConfig(tau=1.2, fixtol=np.inf)) is ShiftChoice.THETA
    assert not check_outer_convergence(ritz, pair, cfg)
    ritz.r_norm = 1e-11 * scale
    assert check_outer_convergence(ritz, pair, cfg)


def test_c_tau_hand_value():
    tau = 2.0
    rho = lambda t: (t * t + 1) / (t * t - tau * tau)  # noqa: E731
    thetas = [1.0, 3.0, 0.5]
    norm = max(1 / tau**2, 1.0, *(abs(rho(t)) for t in thetas))
    sep = min(abs(rho(1.0) + 1 / tau**2), abs(rho(1.0) - 1), abs(rho(1.0) - rho(3.0)), abs(rho(1.0) - rho(0.5)))
    assert c_tau(thetas, tau) == pytest.approx(norm / sep, rel=1e-14)
    assert c_tau([2.0, 1.0], 2.0) == np.inf
    # an infinite selected value maps to 1, which coincides with a trivial eigenvalue
    assert c_tau([np.inf, 1.0], 2.0) == np.inf
    assert np.isfinite(c_tau([1.0, np.inf], 2.0))


def test_inner_tolerance_values(pair, monkeypatch):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 3)
    ritz = extract_ritz(state, cfg, conv, pair)
    assert inner_tolerance(ritz, ritz.projected_thetas, cfg, ShiftChoice.THETA) == pytest.approx(2e-3)
    monkeypatch.setattr(S, "c_tau", lambda th, tau: 2.0)
    assert inner_tolerance(ritz, ritz.projected_thetas, cfg, ShiftChoice.TAU) == pytest.approx(4e-3)
    monkeypatch.setattr(S, "c_tau", lambda th, tau: 50.0)
    assert inner_tolerance(ritz, ritz.projected_thetas, cfg, ShiftChoice.TAU) == 0.01
    fixed = SolverConfig(tau=1.2, inner_tol=1e-14)
    assert inner_tolerance(ritz, ritz.projected_thetas, fixed, ShiftChoice.TAU) == 1e-14


def test_solve_correction_matches_dense(pair):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 6)
    ritz = extract_ritz(state, cfg, conv, pair)
    t, info = solve_correction(ritz, conv, pair, 1.44, 1e-14)
    ref, _ = dense_correction_solve(ritz, conv, pair, 1.44)
    assert np.linalg.norm(t - ref) <= 1e-8 * np.linalg.norm(ref)
    assert abs(ritz.y @ t) <= 1e-12 * np.linalg.norm(t)


def test_expand_invariants_and_fallback(pair):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 4)
    grown, fb = expand(state, np.random.default_rng(1).standard_normal(pair.n), conv, pair)
    assert not fb and grown.k == 5
    assert_state_invariants(grown, pair)
    grown, fb = expand(state, state.x @ np.ones(4), conv, pair, np.random.default_rng(2))
    assert fb and grown.k == 5
    assert_state_invariants(grown, pair)


def test_thick_restart_keeps_target_value(pair):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 12)
    ritz = extract_ritz(state, cfg, conv, pair)
    small = thick_restart(state, ritz, 3)
    assert small.k == 3
    assert_state_invariants(small, pair)
    again = extract_ritz(small, cfg, conv, pair)
    assert again.theta == pytest.approx(ritz.theta, rel=1e-12)
    np.testing.assert_allclose(np.sort(again.gsvd.theta), np.sort(ritz.projected_thetas[:3]), rtol=1e-10)


def test_deflate_and_purge(pair):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 7)
    ritz = extract_ritz(state, cfg, conv, pair)
    new, dup = deflate(ritz, conv)
    assert not dup and new.j == 1
    assert new.y.T @ new.x == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(new.c**2 + new.s**2, 1.0, atol=1e-12)
    rest = purge(state, ritz)
    assert rest.k == 6
    assert np.abs(rest.x.T @ ritz.y).max() <= 1e-10
    assert_state_invariants(rest, pair, new)
    # a second deflation of the same vector is flagged
    _, dup = deflate(ritz, new)
    assert dup


def test_start_vector_made_orthogonal_to_yc(pair):
    cfg = SolverConfig(tau=1.2)
    state, conv = build_state(pair, cfg, 5)
    conv, _ = deflate(extract_ritz(state, cfg, conv, pair), conv)
    fresh = initialize(pair, cfg, conv, np.random.default_rng(0), x0=conv.x[:, 0] + 0.1)
    assert np.abs(fresh.x.T @ conv.y).max() <= 1e-12


def test_diagonal_run():
    pair = MatrixPair(SparseMatrix.from_dense(np.diag(np.arange(1.0, 11.0))), SparseMatrix.from_dense(np.eye(10)))
    conv, stats = run(pair, SolverConfig(tau=7.2, ell=2))
    assert stats.converged
    np.testing.assert_allclose(conv.sigma, [7.0, 8.0], rtol=1e-10)


def test_run_matches_oracle_and_reports(pair):
    cfg = SolverConfig(tau=1.0, ell=3)
    conv, stats = run(pair, cfg)
    oracle = dense_full_gsvd(pair)
    expected = oracle.sigma[closest_to_target(oracle, 1.0, 3)]
    np.testing.assert_allclose(sorted(conv.sigma, key=lambda s: abs(s - 1.0)), expected, rtol=1e-8)
    assert len(stats.components) == 3 and all(c.converged for c in stats.components)
    assert stats.outer == len(stats.history)
    res = conv.residual_matrix(pair)
    bound = (conv.s * pair.norm1_a + conv.c * pair.norm1_b) * cfg.tol
    assert np.all(np.linalg.norm(res, axis=0) <= bound)


def test_exact_solve_equivalence(pair):
    cfg = SolverConfig(tau=1.0, ell=2, inner_tol=1e-14)
    _, st_minres = run(pair, cfg)
    _, st_dense = run(pair, cfg, correction_solver=dense_correction_solve)
    th1 = [h.theta for h in st_minres.history]
    th2 = [h.theta for h in st_dense.history]
    assert len(th1) == len(th2)
    np.testing.assert_allclose(th1, th2, rtol=1e-8)


def test_scaling_covariance_power_of_two(pair):
    # gamma = 8 scales every floating-point operation exactly, so any
    # difference would expose a scale-dependent threshold in the solver
    cfg = SolverConfig(tau=1.0, ell=2)
    c1, s1 = run(pair, cfg)
    c2, s2 = run(pair.scaled(8.0), cfg)
    np.testing.assert_array_equal(c1.c, c2.c)
    np.testing.assert_array_equal(c1.s, c2.s)
    np.testing.assert_allclose(c2.x, c1.x / 8.0, rtol=1e-15)
    assert [h.choice for h in s1.history] == [h.choice for h in s2.history]


def test_scaling_covariance_factor_ten(pair):
    cfg = SolverConfig(tau=1.0, ell=2)
    c1, _ = run(pair, cfg)
    c2, _ = run(pair.scaled(10.0), cfg)
    np.testing.assert_allclose(c1.c, c2.c, atol=1e-12)
    np.testing.assert_allclose(c1.s, c2.s, atol=1e-12)
    rel = np.linalg.norm(c2.x - 0.1 * c1.x, axis=0) / np.linalg.norm(0.1 * c1.x, axis=0)
    # limited by the forward error of x at tol = 1e-10, not by the scaling
    assert rel.max() <= 1e-8


def test_not_converged_returns_partial(pair):
    conv, stats = run(pair, SolverConfig(tau=1.0, ell=2, max_outer=2))
    assert not stats.converged
    assert stats.events[-1]["kind"] == "not_converged"
    assert stats.components[-1].converged is False


def test_subspace_limits_clamped():
    pair = random_pair(20, 20, 12, seed=4, density=0.3)
    conv, stats = run(pair, SolverConfig(tau=1.0, ell=4, k_max=200))
    assert stats.converged and stats.k_max == 9
    assert stats.events[0]["kind"] == "dimensions"


def test_ell_larger_than_n():
    pair = random_pair(10, 10, 4, seed=5, density=0.5)
    with pytest.raises(InputError):
        run(pair, SolverConfig(tau=1.0, ell=5))


def test_irregular_pair_detected():
    a = SparseMatrix.from_dense(np.diag([1.0, 0.0, 2.0]))
    b = SparseMatrix.from_dense(np.diag([1.0, 0.0, 1.0]))
    pair = MatrixPair(a, b)
    with pytest.raises(RegularityError):
        initialize(pair, SolverConfig(tau=1.0), x0=np.array([0.0, 1.0, 0.0]))


def test_rank_deficient_b_with_mod4_start():
    rng = np.random.default_rng(9)
    from cpfjdgsvd.sparse import gen_b1

    n = 40
    a = SparseMatrix.from_dense(rng.standard_normal((60, n)))
    pair = MatrixPair(a, gen_b1(n))
    conv, stats = run(pair, SolverConfig(tau=3.0, ell=2, x0=mod4_start(n)))
    oracle = dense_full_gsvd(pair)
    expected = oracle.sigma[closest_to_target(oracle, 3.0, 2)]
    assert stats.converged
    np.testing.assert_allclose(sorted(conv.sigma, key=lambda s: abs(s - 3.0)), expected, rtol=1e-8)
