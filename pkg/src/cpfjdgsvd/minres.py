"""Matrix-free MINRES for the projected correction equations.

The operator is

    (I - Yp Xp^T) (A^T A - shift * B^T B) (I - Xp Yp^T)

applied with one product by each of A, A^T, B, B^T. With Yp^T Xp = I the left
projector is the transpose of the right one, so the operator is symmetric
(and in general indefinite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparse import MatrixPair, spmv, spmv_transpose

EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class PencilOperator:
    """``z -> A^T A z - shift * B^T B z`` without forming either cross product."""

    pair: MatrixPair
    shift: float

    def apply(self, z):
        pr = self.pair
        out = spmv_transpose(pr.a, spmv(pr.a, z))
        if self.shift != 0.0:
            out -= self.shift * spmv_transpose(pr.b, spmv(pr.b, z))
        return out


class ProjectedOperator:
    """Pencil operator sandwiched between the oblique projectors built from Xp, Yp."""

    def __init__(self, inner: PencilOperator, xp=None, yp=None):
        n = inner.pair.n
        xp = np.zeros((n, 0)) if xp is None else np.asarray(xp, dtype=np.float64).reshape(n, -1)
        yp = np.zeros((n, 0)) if yp is None else np.asarray(yp, dtype=np.float64).reshape(n, -1)
        if xp.shape != yp.shape:
            raise ValueError("Xp and Yp must have the same shape")
        self.inner = inner
        self.xp = xp
        self.yp = yp
        self.n = n
        self.applications = 0

    def project_right(self, z):
        """(I - Xp Yp^T) z: removes the components along Yp."""
        if self.xp.shape[1] == 0:
            return z
        return z - self.xp @ (self.yp.T @ z)

    def project_left(self, z):
        """(I - Yp Xp^T) z: the transpose of :meth:`project_right`."""
        if self.xp.shape[1] == 0:
            return z
        return z - self.yp @ (self.xp.T @ z)

    def apply(self, z):
        self.applications += 1
        z = np.asarray(z, dtype=np.float64)
        return self.project_left(self.inner.apply(self.project_right(z)))

    __call__ = apply


def apply_projected(op: ProjectedOperator, z):
    return op.apply(z)


@dataclass
class MinresResult:
    t: np.ndarray
    rel_res: float
    iters: int
    converged: bool
    breakdown: bool = False
    history: list = field(default_factory=list)


def default_max_iters(n):
    return int(min(2 * n, 10000))


def minres_solve(op: ProjectedOperator, rhs, rel_tol, max_iters=None) -> MinresResult:
    """Solve ``op t = rhs`` by MINRES from a zero initial guess.

    ``rhs`` is first passed through the left projector. Iteration stops once
    the recurrence residual estimate drops below ``rel_tol`` and the residual
    recomputed from scratch confirms it, or after ``max_iters`` steps. The
    returned ``t`` satisfies ``Yp^T t = 0`` and ``rel_res`` is always the
    recomputed value ``||b - op t|| / ||b||`` with ``b`` the projected rhs.
    ``history`` holds the recurrence estimates, which are nonincreasing.
    """
    n = op.n
    if max_iters is None:
        max_iters = default_max_iters(n)
    b = op.project_left(np.asarray(rhs, dtype=np.float64))
    beta1 = np.linalg.norm(b)
    if beta1 == 0.0:
        return MinresResult(np.zeros(n), 0.0, 0, True, history=[0.0])

    x = np.zeros(n)
    r1 = b.copy()
    r2 = b.copy()
    y = b.copy()
    beta = beta1
    oldb = 0.0
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    history = [1.0]
    target = rel_tol
    breakdown = False
    anorm = 0.0
    itn = 0

    def true_rel_res(xk):
        tk = op.project_right(xk)
        return tk, np.linalg.norm(b - op.apply(tk)) / beta1

    while itn < max_iters:
        itn += 1
        v = y / beta
        y = op.apply(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = v @ y
        y = y - (alfa / beta) * r2
        # keep the Lanczos vector in range(I - Yp Xp^T) despite rounding
        y = op.project_left(y)
        r1, r2 = r2, y
        oldb, beta = beta, np.linalg.norm(y)
        anorm = max(anorm, abs(alfa), oldb if itn >= 2 else 0.0, beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), EPS)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(phibar / beta1)

        if beta <= EPS * anorm:
            breakdown = True
            break
        if phibar / beta1 <= target:
            t, rel = true_rel_res(x)
            if rel <= rel_tol:
                return MinresResult(t, rel, itn, True, False, history)
            # recurrence is optimistic: aim lower and keep going
            target = 0.5 * (phibar / beta1) * rel_tol / rel

    t, rel = true_rel_res(x)
    return MinresResult(t, rel, itn, rel <= rel_tol or breakdown, breakdown, history)
