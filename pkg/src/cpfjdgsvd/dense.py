"""Small dense kernels: incremental thin QR, one-sided Jacobi SVD, dense GSVD.

Everything here works on k x k (or tall, thin) numpy arrays. The dense GSVD
never forms G^T G or H^T H: it goes through a thin QR of the stacked matrix
and a cosine-sine split of the orthonormal factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegeneratePairError, InputError, RankDeficiencyError

EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ThinQr:
    """Thin QR factorization ``q @ r`` with upper-triangular ``r``."""

    q: np.ndarray
    r: np.ndarray
    deficient: bool = False

    @classmethod
    def empty(cls, rows):
        return cls(np.zeros((rows, 0)), np.zeros((0, 0)))

    @property
    def k(self):
        return self.q.shape[1]


def orthonormal_completion(q, count=1):
    """Return ``count`` unit vectors orthonormal to the columns of ``q`` and to each other.

    Deterministic: canonical basis vectors are tried in order of how little
    of them lies in span(q).
    """
    q = np.asarray(q, dtype=np.float64)
    rows = q.shape[0]
    basis = q.copy()
    out = []
    weight = np.sum(q * q, axis=1) if q.shape[1] else np.zeros(rows)
    for i in np.argsort(weight, kind="stable"):
        if len(out) == count:
            break
        w = np.zeros(rows)
        w[i] = 1.0
        for _ in range(2):
            w -= basis @ (basis.T @ w)
        nrm = np.linalg.norm(w)
        if nrm > 0.5:
            w /= nrm
            out.append(w)
            basis = np.column_stack([basis, w])
    if len(out) < count:
        raise InputError(f"cannot complete {q.shape[1]} columns in R^{rows} by {count} more")
    return np.column_stack(out) if out else np.zeros((rows, 0))


def qr_append_column(qr: ThinQr, new_col, *, allow_deficient=False, rank_tol=1e-13) -> ThinQr:
    """Append one column to a thin QR factorization.

    Classical Gram-Schmidt is applied twice, and again while a pass removes
    more than half of what is left. If the orthogonal part of
    ``new_col`` has norm at most ``rank_tol * ||new_col||`` the column is
    considered dependent: :class:`RankDeficiencyError` is raised, or, with
    ``allow_deficient=True``, the new diagonal entry of R is set to zero, Q is
    completed with an arbitrary orthonormal vector and the result is flagged
    ``deficient``.
    """
    q, r = qr.q, qr.r
    col = np.asarray(new_col, dtype=np.float64)
    if col.ndim != 1 or col.shape[0] != q.shape[0]:
        raise InputError(f"column of shape {col.shape} does not fit Q with {q.shape[0]} rows")
    k = q.shape[1]
    nrm = np.linalg.norm(col)
    w = col.copy()
    coeffs = np.zeros(k)
    # CGS2, plus extra passes while a pass still cancels most of w (Kahan-Parlett)
    prev = nrm
    for sweep in range(5):
        c = q.T @ w
        w -= q @ c
        coeffs += c
        gamma = np.linalg.norm(w)
        if sweep >= 1 and gamma > 0.5 * prev:
            break
        prev = gamma
    deficient = nrm == 0.0 or gamma <= rank_tol * nrm
    if deficient:
        if not allow_deficient:
            raise RankDeficiencyError(
                f"appended column is dependent (residual {gamma:.3e}, norm {nrm:.3e})"
            )
        gamma = 0.0
        qhat = orthonormal_completion(q, 1)[:, 0]
    else:
        qhat = w / gamma
    r_new = np.zeros((k + 1, k + 1))
    r_new[:k, :k] = r
    r_new[:k, k] = coeffs
    r_new[k, k] = gamma
    return ThinQr(np.column_stack([q, qhat]), r_new, deficient or qr.deficient)


def _round_robin(n):
    """Rounds of disjoint index pairs covering every pair of range(n) once."""
    players = list(range(n + (n % 2)))
    half = len(players) // 2
    rounds = []
    for _ in range(len(players) - 1):
        p = np.array([players[i] for i in range(half)])
        q = np.array([players[-1 - i] for i in range(half)])
        keep = (p < n) & (q < n)
        rounds.append((p[keep], q[keep]))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_svd(m, tol=None, max_sweeps=80):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``(u, s, v)`` with ``m = u @ diag(s) @ v.T``, ``u`` of shape
    rows x cols with orthonormal columns, ``v`` orthogonal and ``s``
    nonincreasing. Columns are rotated in disjoint pairs (round-robin order) so
    each round is a single vectorized update. A pair is rotated while
    ``|a_p . a_q| > tol * ||a_p|| ||a_q||``; ``tol`` defaults to
    ``max(1e-15, rows * eps)``.
    """
    a = np.array(m, dtype=np.float64, copy=True)
    if a.ndim != 2:
        raise InputError("jacobi_svd needs a 2-D array")
    rows, cols = a.shape
    if rows < cols:
        raise InputError("jacobi_svd needs rows >= cols")
    if tol is None:
        tol = max(1e-15, rows * EPS)
    v = np.eye(cols)
    rounds = _round_robin(cols) if cols > 1 else []
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            ap, aq = a[:, p], a[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ap, aq = a[:, p], a[:, q]
            a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    sv = np.linalg.norm(a, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, a, v = sv[order], a[:, order], v[:, order]
    u = np.zeros_like(a)
    nonzero = sv > 0.0
    u[:, nonzero] = a[:, nonzero] / sv[nonzero]
    if not nonzero.all():
        u[:, ~nonzero] = orthonormal_completion(u[:, nonzero], int((~nonzero).sum()))
    return u, sv, v


@dataclass(frozen=True)
class DenseGsvd:
    """GSVD ``G D = E diag(sigma_g)``, ``H D = F diag(sigma_h)`` of a k x k pair.

    Components are stored in nonincreasing order of ``theta``.
    """

    sigma_g: np.ndarray
    sigma_h: np.ndarray
    e: np.ndarray
    f: np.ndarray
    d: np.ndarray

    @property
    def k(self):
        return self.sigma_g.shape[0]

    @property
    def theta(self):
        theta = np.full(self.k, np.inf)
        finite = self.sigma_h > 0.0
        theta[finite] = self.sigma_g[finite] / self.sigma_h[finite]
        return theta

    def take(self, idx):
        """Sub-decomposition restricted to the components ``idx`` (in that order)."""
        idx = np.asarray(idx, dtype=np.int64)
        return DenseGsvd(self.sigma_g[idx], self.sigma_h[idx], self.e[:, idx], self.f[:, idx], self.d[:, idx])


def _reorthonormalize(q, weights):
    """Orthonormalize the columns of a nearly orthonormal ``q``, most weighted first.

    The change to column i is of order eps / weights[i], so ``q * weights``
    moves only at rounding level.
    """
    if q.shape[1] < 2:
        return q
    order = np.argsort(-weights, kind="stable")
    qq, rr = np.linalg.qr(q[:, order])
    qq = qq * np.where(np.diag(rr) < 0, -1.0, 1.0)
    out = np.empty_like(q)
    out[:, order] = qq
    return out


def dense_gsvd(g, h, *, rank_tol=1e-13) -> DenseGsvd:
    """GSVD of a square pair via the CS decomposition of the stacked QR factor.

    ``[G; H] = Q R``; the top block ``Q1 = E diag(alpha) W^T`` is split by a
    Jacobi SVD, ``F`` comes from normalizing the columns of ``Q2 W`` and
    ``D = R^{-1} W``. Where alpha^2 > 1/2 the roles swap: W is refined by a
    Jacobi SVD of that block of ``Q2 W`` and E is obtained by normalization.
    Raises :class:`DegeneratePairError` when [G; H] is numerically rank
    deficient.
    """
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    k = g.shape[1]
    if g.shape != (k, k) or h.shape != (k, k):
        raise InputError(f"expected two square matrices of equal size, got {g.shape} and {h.shape}")
    stacked = np.vstack([g, h])
    qs, rs = np.linalg.qr(stacked)
    signs = np.where(np.diag(rs) < 0, -1.0, 1.0)
    qs, rs = qs * signs, rs * signs[:, None]

    sv = np.linalg.svd(rs, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < rank_tol * sv[0]:
        raise DegeneratePairError(
            f"[G; H] is numerically rank deficient (singular values {sv[0]:.3e} .. {sv[-1]:.3e})"
        )

    q1, q2 = qs[:k], qs[k:]
    e, sg, w = jacobi_svd(q1)
    sg = np.minimum(sg, 1.0)
    sh = np.sqrt(np.maximum(0.0, 1.0 - sg * sg))
    f = np.zeros((k, k))
    # Singular vectors of Q1 for alpha near 1 are poorly determined; in that
    # block (alpha^2 > 1/2) rotate W by the SVD of Q2 W instead, so the small
    # betas and their F columns are computed directly.
    big = np.flatnonzero(sg * sg > 0.5)
    rest = np.flatnonzero(sg * sg <= 0.5)
    if big.size:
        fb, sb, z = jacobi_svd(q2 @ w[:, big])
        sb = np.minimum(sb, 1.0)
        w[:, big] = w[:, big] @ z
        sh[big] = sb
        sg[big] = np.sqrt(1.0 - sb * sb)
        f[:, big] = fb
        q1w = q1 @ w[:, big]
        e[:, big] = q1w / np.linalg.norm(q1w, axis=0)
    if rest.size:
        q2w = q2 @ w[:, rest]
        f[:, rest] = q2w / np.linalg.norm(q2w, axis=0)

    order = np.argsort(-sg, kind="stable")
    sg, sh, e, f, w = sg[order], sh[order], e[:, order], f[:, order], w[:, order]
    zero_h = sh == 0.0
    if zero_h.any():
        f[:, zero_h] = orthonormal_completion(f[:, ~zero_h], int(zero_h.sum()))

    # columns scaled by a tiny alpha or beta carry relative errors eps / alpha
    e = _reorthonormalize(e, sg)
    f = _reorthonormalize(f, sh)

    d = solve_triangular(rs, w, lower=False)
    # sign convention: the largest-magnitude entry of each d column is positive
    pivot = d[np.argmax(np.abs(d), axis=0), np.arange(k)]
    flip = np.where(pivot < 0, -1.0, 1.0)
    return DenseGsvd(sg, sh, e * flip, f * flip, d * flip)
