"""Dense ground truth for desk-scale pairs.

These routines densify A and B and use LAPACK. They exist to check the
iterative solver, so they may form small cross products where convenient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, RegularityError
from .sparse import MatrixPair

MAX_ORACLE_N = 600
TRIVIAL_TOL = 1e-12


@dataclass(frozen=True)
class FullGsvd:
    """``U^T A X = diag(alphas)``, ``V^T B X = diag(betas)`` column by column.

    ``u_full[:, i]`` is zero where ``alphas[i] == 0`` and likewise for
    ``v_full``; those vectors are not determined by the decomposition.
    """

    alphas: np.ndarray
    betas: np.ndarray
    x_full: np.ndarray
    u_full: np.ndarray
    v_full: np.ndarray
    norm_x: float
    zero: np.ndarray
    infinite: np.ndarray

    @property
    def sigma(self):
        sigma = np.full(self.alphas.shape, np.inf)
        finite = self.betas > 0
        sigma[finite] = self.alphas[finite] / self.betas[finite]
        return sigma

    @property
    def nontrivial(self):
        return ~(self.zero | self.infinite)


def dense_full_gsvd(pair: MatrixPair) -> FullGsvd:
    """Full GSVD of (A, B) through the CS decomposition of the stacked QR factor."""
    n = pair.n
    if n > MAX_ORACLE_N:
        raise InputError(f"dense oracle is limited to n <= {MAX_ORACLE_N}, got {n}")
    a, b = pair.a.toarray(), pair.b.toarray()
    m = a.shape[0]
    q, r = np.linalg.qr(np.vstack([a, b]))
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    q, r = q * signs, r * signs[:, None]
    sv = np.linalg.svd(r, compute_uv=False)
    if sv[-1] <= 1e-13 * sv[0]:
        raise RegularityError("stacked matrix [A; B] is rank deficient")
    q1, q2 = q[:m], q[m:]
    uu, s, wt = np.linalg.svd(q1, full_matrices=True)
    w = wt.T
    alphas = np.zeros(n)
    alphas[: s.size] = np.minimum(s, 1.0)
    q2w = q2 @ w
    nb = np.linalg.norm(q2w, axis=0)
    betas = np.sqrt(np.maximum(0.0, 1.0 - alphas**2))
    small = alphas**2 > 0.5
    betas[small] = np.minimum(nb[small], 1.0)
    alphas[small] = np.sqrt(1.0 - betas[small] ** 2)

    u_full = np.zeros((m, n))
    k = min(m, n)
    u_full[:, :k] = uu[:, :k]
    u_full[:, alphas == 0] = 0.0
    v_full = np.zeros((q2.shape[0], n))
    ok = nb > 1e-14
    v_full[:, ok] = q2w[:, ok] / nb[ok]
    x_full = solve_triangular(r, w, lower=False)

    order = np.argsort(-alphas / np.maximum(betas, 1e-300), kind="stable")
    alphas, betas = alphas[order], betas[order]
    return FullGsvd(
        alphas=alphas,
        betas=betas,
        x_full=x_full[:, order],
        u_full=u_full[:, order],
        v_full=v_full[:, order],
        norm_x=float(1.0 / sv[-1]),
        zero=alphas < TRIVIAL_TOL,
        infinite=betas < TRIVIAL_TOL,
    )


def closest_to_target(oracle: FullGsvd, tau: float, ell: int):
    """Indices of the ``ell`` nontrivial values closest to ``tau`` (ties: smaller value)."""
    idx = np.flatnonzero(oracle.nontrivial)
    if ell > idx.size:
        raise InputError(f"only {idx.size} nontrivial values, asked for {ell}")
    sig = oracle.sigma[idx]
    order = np.lexsort((sig, np.abs(sig - tau)))
    return idx[order[:ell]]


@dataclass(frozen=True)
class BoundReport:
    case: str
    lhs: float
    rhs: float
    applicable: bool = True

    def holds(self, slack=0.0):
        return (not self.applicable) or self.lhs <= self.rhs + slack


def residual_bound(theta, r_norm, x_tilde_norm, oracle: FullGsvd) -> BoundReport:
    """Residual bound on the distance of ``theta`` to the nearest nontrivial value.

    Case (i) holds for theta strictly between s_min / sqrt(2 + s_min^2) and
    sqrt(1 + 2 s_max^2); below it theta itself and above it 1 / theta is
    bounded. The right-hand side is ||X||^2 ||r|| / ||x||.
    """
    sig = oracle.sigma[oracle.nontrivial]
    if sig.size == 0 or not np.isfinite(theta) or theta <= 0:
        return BoundReport("n/a", np.nan, np.nan, applicable=False)
    smin, smax = sig.min(), sig.max()
    rhs = oracle.norm_x**2 * r_norm / x_tilde_norm
    lower = smin / np.sqrt(2.0 + smin**2)
    upper = np.sqrt(1.0 + 2.0 * smax**2)
    if theta >= upper:
        return BoundReport("ii", 1.0 / theta, rhs)
    if theta <= lower:
        return BoundReport("iii", theta, rhs)
    lhs = np.min(np.abs(sig**2 - theta**2) / ((1.0 + sig**2) * theta))
    return BoundReport("i", float(lhs), rhs)


def sin_angle(a, b):
    """Sine of the angle between two nonzero vectors."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return float(np.linalg.norm(a - (b @ a) * b))


def dense_correction_solve(ritz, conv, pair, shift, tol_inner=None, max_iters=None):
    """Exact solution of the projected correction equation by dense least squares.

    Drop-in replacement for the MINRES inner solve: minimum-norm solution of
    the (singular) projected system, then mapped onto the complement of Yp.
    """
    a, b = pair.a.toarray(), pair.b.toarray()
    xp = np.column_stack([conv.x, ritz.x])
    yp = np.column_stack([conv.y, ritz.y])
    n = pair.n
    right = np.eye(n) - xp @ yp.T
    op = right.T @ (a.T @ a - shift * (b.T @ b)) @ right
    rhs = ritz.r - conv.y @ (conv.x.T @ ritz.r) if conv.j else ritz.r.copy()
    rhs = -(rhs - yp @ (xp.T @ rhs))
    z, *_ = np.linalg.lstsq(op, rhs, rcond=None)
    return right @ z, None
