"""Cross-product-free Jacobi-Davidson for a partial GSVD of a sparse pair (A, B).

The driver computes the ``ell`` GSVD components ``(alpha, beta, u, v, x)``
whose generalized singular values ``alpha / beta`` are closest to a target
``tau``. The right subspace is expanded with approximate solutions of
projected correction equations solved by MINRES; the left subspaces are
A and B applied to it, kept as thin QR factorizations so that neither
A^T A nor B^T B is ever formed. Thick restarting bounds the subspace
dimension and converged components are deflated by oblique projection.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .dense import DenseGsvd, ThinQr, dense_gsvd, qr_append_column
from .errors import InputError, RegularityError
from .minres import PencilOperator, ProjectedOperator, default_max_iters, minres_solve
from .sparse import MatrixPair, spmv, spmv_transpose

log = logging.getLogger(__name__)

INNER_TOL_RULE = "min(2*c_tau*eps_tilde, 0.01)"
DUPLICATE_THRESHOLD = 1e-6


class ShiftChoice(str, enum.Enum):
    TAU = "tau"
    THETA = "theta"


@dataclass
class SolverConfig:
    """Parameters of a run.

    ``fixtol = 0`` never switches to the Ritz-value shift and
    ``fixtol = inf`` always uses it. ``inner_tol``, when set, replaces the
    adaptive inner stopping rule by a fixed relative tolerance (used to
    emulate exact inner solves).
    """

    tau: float
    ell: int = 1
    tol: float = 1e-10
    k_min: int = 3
    k_max: int = 30
    fixtol: float = 1e-4
    eps_tilde: float = 1e-3
    x0: np.ndarray | None = None
    max_outer: int = 500
    minres_max_iters: int | None = None
    inner_tol: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InputError(f"tau must be a positive finite number, got {self.tau}")
        if self.ell < 1:
            raise InputError("ell must be at least 1")
        if not 1 <= self.k_min < self.k_max:
            raise InputError(f"need 1 <= k_min < k_max, got {self.k_min}, {self.k_max}")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.fixtol != 0 and not self.fixtol >= self.tol:
            raise InputError("fixtol must be 0 (never switch) or at least tol")
        if not self.eps_tilde > 0:
            raise InputError("eps_tilde must be positive")
        if self.max_outer < 1:
            raise InputError("max_outer must be at least 1")
        if self.inner_tol is not None and not self.inner_tol > 0:
            raise InputError("inner_tol must be positive")
        if self.x0 is not None:
            x0 = np.asarray(self.x0, dtype=np.float64).ravel()
            nrm = np.linalg.norm(x0)
            if not (nrm > 0 and np.isfinite(nrm)):
                raise InputError("x0 must be a nonzero finite vector")
            self.x0 = x0 / nrm


def ones_start(n):
    return np.full(n, 1.0 / np.sqrt(n))


def mod4_start(n):
    """Unit vector with entries proportional to (i mod 4), i = 1..n."""
    x = np.arange(1, n + 1) % 4
    x = x.astype(np.float64)
    return x / np.linalg.norm(x)


@dataclass
class SearchState:
    """Orthonormal X (n x k) with thin QR factors A X = U G and B X = V H."""

    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    g: np.ndarray
    h: np.ndarray
    deficient: bool = False

    @property
    def k(self):
        return self.x.shape[1]


@dataclass
class RitzApproximation:
    alpha: float
    beta: float
    theta: float
    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    r_norm: float
    x_norm: float
    index: int
    gsvd: DenseGsvd
    order: np.ndarray

    @property
    def projected_thetas(self):
        """All projected values, the selected one first, then by distance to tau."""
        return self.gsvd.theta[self.order]


@dataclass
class ConvergedSet:
    """Deflation set: A X_c = U_c C_c, B X_c = V_c S_c, Y_c = A^T U_c C_c + B^T V_c S_c."""

    c: np.ndarray
    s: np.ndarray
    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def empty(cls, m, p, n):
        return cls(np.zeros(0), np.zeros(0), np.zeros((m, 0)), np.zeros((p, 0)),
                   np.zeros((n, 0)), np.zeros((n, 0)))

    @property
    def j(self):
        return self.c.shape[0]

    @property
    def sigma(self):
        with np.errstate(divide="ignore"):
            return self.c / self.s

    def residual_matrix(self, pair):
        """Columns beta_i A^T u_i - alpha_i B^T v_i."""
        cols = [self.s[i] * spmv_transpose(pair.a, self.u[:, i]) - self.c[i] * spmv_transpose(pair.b, self.v[:, i])
                for i in range(self.j)]
        return np.column_stack(cols) if cols else np.zeros((pair.n, 0))


@dataclass
class IterationRecord:
    outer: int
    component: int
    k: int
    theta: float
    alpha: float
    beta: float
    r_norm: float
    x_norm: float
    choice: str | None = None
    inner_tol: float | None = None
    inner_iters: int = 0
    inner_rel_res: float | None = None


@dataclass
class ComponentRecord:
    alpha: float
    beta: float
    sigma: float
    r_norm: float
    outer: int
    inner: int
    converged: bool


@dataclass
class RunStats:
    outer: int = 0
    inner: int = 0
    converged: bool = False
    components: list = field(default_factory=list)
    history: list = field(default_factory=list)
    events: list = field(default_factory=list)
    k_min: int = 0
    k_max: int = 0
    inner_tol_rule: str = INNER_TOL_RULE

    def event(self, kind, message, **extra):
        log.info("%s: %s", kind, message)
        self.events.append({"kind": kind, "outer": self.outer, "message": message, **extra})


def _positive_qr(m):
    q, r = np.linalg.qr(m)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


def _orthogonalize(w, *bases):
    for _ in range(2):
        for q in bases:
            if q.shape[1]:
                w = w - q @ (q.T @ w)
    return w


def _grow(state: SearchState | None, xnew, pair: MatrixPair) -> SearchState:
    """Append an orthonormalized direction to X and update both QR factorizations."""
    if state is None:
        xq, uq, vq = ThinQr.empty(pair.n), ThinQr.empty(pair.m), ThinQr.empty(pair.p)
        deficient = False
    else:
        xq = ThinQr(state.x, np.eye(state.k))
        uq, vq = ThinQr(state.u, state.g), ThinQr(state.v, state.h)
        deficient = state.deficient
    xq = qr_append_column(xq, xnew)
    xp = xq.q[:, -1]
    uq = qr_append_column(uq, spmv(pair.a, xp), allow_deficient=True)
    vq = qr_append_column(vq, spmv(pair.b, xp), allow_deficient=True)
    k = xq.k
    if uq.r[k - 1, k - 1] == 0.0 and vq.r[k - 1, k - 1] == 0.0:
        raise RegularityError("A x and B x are both dependent on the current subspace: the pair is not regular")
    return SearchState(xq.q, uq.q, vq.q, uq.r, vq.r, deficient or uq.deficient or vq.deficient)


def _y_basis(conv: ConvergedSet):
    if conv is None or conv.j == 0:
        return None
    q, _ = np.linalg.qr(conv.y)
    return q


def _start_direction(pair, cfg, conv, rng, x0=None):
    n = pair.n
    x = cfg.x0 if x0 is None else np.asarray(x0, dtype=np.float64)
    if x is None:
        x = ones_start(n)
    qy = _y_basis(conv)
    if qy is not None:
        w = _orthogonalize(x, qy)
        if np.linalg.norm(w) <= 1e-8 * np.linalg.norm(x):
            w = _orthogonalize(rng.standard_normal(n), qy)
        x = w
    return x / np.linalg.norm(x)


def initialize(pair: MatrixPair, cfg: SolverConfig, conv: ConvergedSet | None = None,
               rng=None, x0=None) -> SearchState:
    """One-dimensional search state from the start vector (made orthogonal to Y_c)."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    x = _start_direction(pair, cfg, conv, rng, x0)
    if pair.n == 1:
        x = np.ones(1)
    ax, bx = spmv(pair.a, x), spmv(pair.b, x)
    if not ax.any() and not bx.any():
        raise RegularityError("A x0 = 0 and B x0 = 0: the pair is not regular")
    return _grow(None, x, pair)


def target_order(theta, tau):
    """Indices of ``theta`` sorted by |theta - tau|; infinite values last, ties to the smaller."""
    theta = np.asarray(theta, dtype=np.float64)
    dist = np.where(np.isfinite(theta), np.abs(theta - tau), np.inf)
    return np.lexsort((theta, dist))


def extract_ritz(state: SearchState, cfg: SolverConfig, conv: ConvergedSet | None,
                 pair: MatrixPair) -> RitzApproximation:
    """Galerkin extraction of the approximation whose value is closest to tau."""
    gs = dense_gsvd(state.g, state.h)
    order = target_order(gs.theta, cfg.tau)
    i = int(order[0])
    alpha, beta = float(gs.sigma_g[i]), float(gs.sigma_h[i])
    d = gs.d[:, i]
    u = state.u @ gs.e[:, i]
    v = state.v @ gs.f[:, i]
    x = state.x @ d
    atu = spmv_transpose(pair.a, u)
    btv = spmv_transpose(pair.b, v)
    r = beta * atu - alpha * btv
    y = alpha * atu + beta * btv
    theta = alpha / beta if beta > 0 else np.inf
    return RitzApproximation(alpha, beta, theta, u, v, x, y, r, float(np.linalg.norm(r)),
                             float(np.linalg.norm(d)), i, gs, order)


def _threshold(ritz, pair, factor):
    return (ritz.beta * pair.norm1_a + ritz.alpha * pair.norm1_b) * factor


def check_outer_convergence(ritz: RitzApproximation, pair: MatrixPair, cfg: SolverConfig) -> bool:
    """||r|| <= (beta ||A||_1 + alpha ||B||_1) * tol."""
    return ritz.r_norm <= _threshold(ritz, pair, cfg.tol)


def select_shift(ritz: RitzApproximation, pair: MatrixPair, cfg: SolverConfig) -> ShiftChoice:
    if not np.isfinite(ritz.theta) or cfg.fixtol == 0:
        return ShiftChoice.TAU
    if np.isinf(cfg.fixtol) or ritz.r_norm <= _threshold(ritz, pair, cfg.fixtol):
        return ShiftChoice.THETA
    return ShiftChoice.TAU


def _spectral_map(t, tau):
    """(t^2 + 1) / (t^2 - tau^2), with t = inf -> 1 and t = tau -> inf."""
    if np.isinf(t):
        return 1.0
    den = t * t - tau * tau
    if den == 0.0:
        return np.inf
    return (t * t + 1.0) / den


def c_tau(all_theta, tau):
    """Ratio of the norm estimate to the separation estimate for the tau-equation.

    ``all_theta[0]`` is the selected Ritz value; the rest are the other
    projected values. With a single value only the two trivial-eigenvalue
    terms enter the separation.
    """
    all_theta = np.asarray(all_theta, dtype=np.float64)
    mapped = [_spectral_map(t, tau) for t in all_theta]
    est_norm = max(1.0 / tau**2, 1.0, max(abs(m) for m in mapped))
    rho = mapped[0]
    if not np.isfinite(est_norm) or not np.isfinite(rho):
        return np.inf
    terms = [abs(rho + 1.0 / tau**2), abs(rho - 1.0)]
    terms += [abs(rho - m) for m in mapped[1:] if np.isfinite(m)]
    est_sep = min(terms)
    if est_sep == 0.0:
        return np.inf
    return est_norm / est_sep


def inner_tolerance(ritz: RitzApproximation, all_theta, cfg: SolverConfig, choice: ShiftChoice) -> float:
    if cfg.inner_tol is not None:
        return cfg.inner_tol
    if choice is ShiftChoice.THETA:
        return 2.0 * cfg.eps_tilde
    return float(min(2.0 * c_tau(all_theta, cfg.tau) * cfg.eps_tilde, 0.01))


def correction_operator(ritz, conv, pair, shift):
    xp = np.column_stack([conv.x, ritz.x])
    yp = np.column_stack([conv.y, ritz.y])
    return ProjectedOperator(PencilOperator(pair, shift), xp, yp)


def correction_rhs(ritz, conv):
    """-(I - Y_c X_c^T) r."""
    r = ritz.r
    if conv.j:
        r = r - conv.y @ (conv.x.T @ r)
    return -r


def solve_correction(ritz: RitzApproximation, conv: ConvergedSet, pair: MatrixPair, shift: float,
                     tol_inner: float, max_iters=None):
    """Approximately solve the projected correction equation with MINRES.

    Returns ``(t, info)``; ``t`` is zero and ``info`` is None when the
    projected right-hand side vanishes.
    """
    rhs = correction_rhs(ritz, conv)
    if np.linalg.norm(rhs) <= 1e-15 * ritz.r_norm or not rhs.any():
        return np.zeros(pair.n), None
    op = correction_operator(ritz, conv, pair, shift)
    info = minres_solve(op, rhs, tol_inner, max_iters)
    return info.t, info


def expand(state: SearchState, t, conv: ConvergedSet | None, pair: MatrixPair, rng=None):
    """Orthonormalize ``t`` against X (and Y_c) and grow the subspaces by one.

    Returns ``(state, fallback)``; when ``t`` carries no new direction a seeded
    random vector is used instead and ``fallback`` is True.
    """
    t = np.asarray(t, dtype=np.float64)
    qy = _y_basis(conv)
    bases = (qy, state.x) if qy is not None else (state.x,)
    w = _orthogonalize(t, *bases)
    tn = np.linalg.norm(t)
    fallback = tn == 0.0 or np.linalg.norm(w) <= 1e-13 * tn
    if fallback:
        rng = np.random.default_rng(0) if rng is None else rng
        for _ in range(10):
            w = _orthogonalize(rng.standard_normal(pair.n), *bases)
            if np.linalg.norm(w) > 1e-8:
                break
        else:
            raise RegularityError("cannot find an expansion direction outside the current subspace")
    return _grow(state, w / np.linalg.norm(w), pair), fallback


def _compress(state: SearchState, gs: DenseGsvd, keep) -> SearchState:
    """Restrict the subspaces to span(X D[:, keep]) using the projected GSVD."""
    part = gs.take(keep)
    qd, rd = _positive_qr(part.d)
    rinv = solve_triangular(rd, np.eye(rd.shape[0]), lower=False)
    return SearchState(
        x=state.x @ qd,
        u=state.u @ part.e,
        v=state.v @ part.f,
        g=part.sigma_g[:, None] * rinv,
        h=part.sigma_h[:, None] * rinv,
        deficient=state.deficient,
    )


def thick_restart(state: SearchState, ritz: RitzApproximation, k_min: int) -> SearchState:
    """Keep the k_min projected directions whose values are closest to tau."""
    return _compress(state, ritz.gsvd, ritz.order[:k_min])


def purge(state: SearchState, ritz: RitzApproximation) -> SearchState | None:
    """Remove the just-converged direction; None when nothing is left."""
    if state.k == 1:
        return None
    keep = np.array([i for i in range(state.k) if i != ritz.index])
    return _compress(state, ritz.gsvd, keep)


def deflate(ritz: RitzApproximation, conv: ConvergedSet):
    """Append the converged approximation. Returns ``(new_set, duplicate_flag)``."""
    duplicate = False
    if conv.j:
        overlap = np.abs(conv.y.T @ ritz.x)
        duplicate = bool(overlap.max() > DUPLICATE_THRESHOLD)
    # fix the sign freedom: largest-magnitude entry of x positive
    sign = -1.0 if ritz.x[np.argmax(np.abs(ritz.x))] < 0 else 1.0
    new = ConvergedSet(
        c=np.append(conv.c, ritz.alpha),
        s=np.append(conv.s, ritz.beta),
        u=np.column_stack([conv.u, sign * ritz.u]),
        v=np.column_stack([conv.v, sign * ritz.v]),
        x=np.column_stack([conv.x, sign * ritz.x]),
        y=np.column_stack([conv.y, sign * ritz.y]),
    )
    return new, duplicate


def effective_dimensions(pair: MatrixPair, cfg: SolverConfig):
    # X stays orthogonal to the (ell - 1) columns of Y_c, so it cannot exceed n - ell + 1
    k_max = min(cfg.k_max, pair.n - cfg.ell + 1, pair.m, pair.p)
    k_min = max(1, min(cfg.k_min, k_max - 1))
    return k_min, k_max


def run(pair: MatrixPair, cfg: SolverConfig, correction_solver=None):
    """Compute ``cfg.ell`` GSVD components closest to ``cfg.tau``.

    Returns ``(converged_set, stats)``. If a component does not converge
    within ``cfg.max_outer`` outer iterations the partial set is returned and
    ``stats.converged`` is False.

    ``correction_solver(ritz, conv, pair, shift, tol_inner, max_iters)`` may
    replace the MINRES inner solve; it must return ``(t, info)`` where
    ``info`` is a :class:`MinresResult` or None.
    """
    if cfg.ell > pair.n:
        raise InputError(f"cannot compute {cfg.ell} components of a pair with n = {pair.n}")
    solver = solve_correction if correction_solver is None else correction_solver
    rng = np.random.default_rng(cfg.seed)
    k_min, k_max = effective_dimensions(pair, cfg)
    max_iters = cfg.minres_max_iters or default_max_iters(pair.n)
    stats = RunStats(k_min=k_min, k_max=k_max)
    if (k_min, k_max) != (cfg.k_min, cfg.k_max):
        stats.event("dimensions", f"subspace limits reduced to k_min={k_min}, k_max={k_max}")

    conv = ConvergedSet.empty(pair.m, pair.p, pair.n)
    state = initialize(pair, cfg, conv, rng)
    comp_outer = comp_inner = 0
    deficient_seen = False

    while True:
        if state.deficient and not deficient_seen:
            deficient_seen = True
            stats.event("degenerate_qr", "A x or B x was dependent on the current left basis; zero diagonal kept")
        ritz = extract_ritz(state, cfg, conv, pair)
        stats.outer += 1
        comp_outer += 1
        rec = IterationRecord(stats.outer, conv.j, state.k, ritz.theta, ritz.alpha, ritz.beta,
                              ritz.r_norm, ritz.x_norm)
        stats.history.append(rec)

        if check_outer_convergence(ritz, pair, cfg):
            conv, duplicate = deflate(ritz, conv)
            if duplicate:
                stats.event("duplicate", f"component {conv.j} overlaps earlier converged ones",
                            component=conv.j - 1)
            stats.components.append(ComponentRecord(ritz.alpha, ritz.beta, ritz.theta, ritz.r_norm,
                                                    comp_outer, comp_inner, True))
            comp_outer = comp_inner = 0
            if conv.j == cfg.ell:
                stats.converged = True
                return conv, stats
            state = purge(state, ritz)
            if state is None:
                state = initialize(pair, cfg, conv, rng)
            continue

        if comp_outer >= cfg.max_outer:
            stats.components.append(ComponentRecord(ritz.alpha, ritz.beta, ritz.theta, ritz.r_norm,
                                                    comp_outer, comp_inner, False))
            stats.event("not_converged", f"component {conv.j} did not converge in {cfg.max_outer} outer iterations",
                        component=conv.j)
            return conv, stats

        choice = select_shift(ritz, pair, cfg)
        shift = ritz.theta**2 if choice is ShiftChoice.THETA else cfg.tau**2
        tol_in = inner_tolerance(ritz, ritz.projected_thetas, cfg, choice)
        t, info = solver(ritz, conv, pair, shift, tol_in, max_iters)
        rec.choice, rec.inner_tol = choice.value, tol_in
        if info is not None:
            rec.inner_iters, rec.inner_rel_res = info.iters, info.rel_res
            stats.inner += info.iters
            comp_inner += info.iters
            if not info.converged:
                stats.event("minres_cap", f"inner solve stopped at {info.iters} iterations with "
                            f"relative residual {info.rel_res:.2e} > {tol_in:.2e}")

        if state.k >= k_max:
            state = thick_restart(state, ritz, k_min)
        state, fallback = expand(state, t, conv, pair, rng)
        if fallback:
            stats.event("fallback_expansion", "correction gave no new direction; expanded with a random vector")
