"""Dense primal-dual interior-point solver for small block SDPs.

Problems are given in linear-matrix-inequality form::

    maximize    b^T y
    subject to  A_k0 + sum_i y_i A_ki  >= 0      (PSD, one block per k)

The solver works on this problem together with its conic dual::

    minimize    sum_k <A_k0, X_k>
    subject to  sum_k <A_ki, X_k> = -b_i,   X_k >= 0

using an infeasible path-following method with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step.  1x1 blocks are collected internally into a
diagonal (linear programming) block.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

log = logging.getLogger(__name__)


class SdpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class SdpBlock:
    """Block ``const + sum_i y_i coeffs[i] >= 0``; ``coeffs`` has shape (m, s, s)."""

    const: np.ndarray
    coeffs: np.ndarray

    @property
    def size(self) -> int:
        return self.const.shape[0]


@dataclass(frozen=True)
class SdpProblem:
    objective: np.ndarray
    blocks: tuple[SdpBlock, ...]

    def __post_init__(self):
        b = np.asarray(self.objective, dtype=float).reshape(-1)
        object.__setattr__(self, "objective", b)
        if not self.blocks:
            raise ValueError("an SDP needs at least one block")
        m = b.size
        blocks = []
        for k, blk in enumerate(self.blocks):
            c = np.atleast_2d(np.asarray(blk.const, dtype=float))
            a = np.asarray(blk.coeffs, dtype=float).reshape(m, c.shape[0], c.shape[0])
            if c.shape[0] != c.shape[1]:
                raise ValueError(f"block {k}: constant matrix is not square")
            if not np.allclose(c, c.T, atol=1e-12) or not np.allclose(a, a.transpose(0, 2, 1), atol=1e-12):
                raise ValueError(f"block {k}: matrices must be symmetric")
            blocks.append(SdpBlock(c, a))
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def num_vars(self) -> int:
        return self.objective.size

    def slack(self, y) -> list[np.ndarray]:
        y = np.asarray(y, dtype=float)
        return [blk.const + np.tensordot(y, blk.coeffs, axes=1) for blk in self.blocks]


@dataclass(frozen=True)
class SdpOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98
    # accept a stalled run whose best iterate meets this looser tolerance
    loose_tol: float = 1e-6


@dataclass
class SdpSolution:
    status: SdpStatus
    y: np.ndarray
    objective_value: float
    block_witnesses: list[np.ndarray]
    dual_matrices: list[np.ndarray]
    duality_gap: float
    primal_objective: float
    iterations: int
    primal_infeasibility: float = 0.0
    dual_infeasibility: float = 0.0
    history: list[tuple[float, float]] = field(default_factory=list)
    reduced_accuracy: bool = False

    @property
    def ok(self) -> bool:
        return self.status == SdpStatus.OPTIMAL


# ---------------------------------------------------------------------------
# internal standard form
#
#   (P) min <C, X>  s.t.  <F_i, X> = b_i, X >= 0
#   (D) max b^T y   s.t.  Z = C - sum_i y_i F_i >= 0
#
# with C = A_0 and F_i = -A_i.  Dense blocks are stored as (m, s*s) matrices,
# the diagonal block as an (m, l) matrix.


class _Std:
    def __init__(self, prob: SdpProblem):
        self.m = prob.num_vars
        self.b = prob.objective.copy()
        self.dense_idx = []
        self.lp_idx = []
        for k, blk in enumerate(prob.blocks):
            (self.lp_idx if blk.size == 1 else self.dense_idx).append(k)
        self.C = [prob.blocks[k].const.copy() for k in self.dense_idx]
        self.F = [-prob.blocks[k].coeffs.reshape(self.m, -1) for k in self.dense_idx]
        self.sizes = [prob.blocks[k].size for k in self.dense_idx]
        if self.lp_idx:
            self.c_lp = np.array([prob.blocks[k].const[0, 0] for k in self.lp_idx])
            self.F_lp = -np.stack([prob.blocks[k].coeffs[:, 0, 0] for k in self.lp_idx], axis=1)
        else:
            self.c_lp = np.zeros(0)
            self.F_lp = np.zeros((self.m, 0))
        self.nu = sum(self.sizes) + len(self.lp_idx)

    def A(self, X, x):
        out = self.F_lp @ x if x.size else np.zeros(self.m)
        for F, Xk in zip(self.F, X):
            out = out + F @ Xk.reshape(-1)
        return out

    def AT(self, y):
        Z = [(y @ F).reshape(s, s) for F, s in zip(self.F, self.sizes)]
        return Z, y @ self.F_lp

    def cdot(self, X, x):
        return sum(float(np.vdot(C, Xk)) for C, Xk in zip(self.C, X)) + float(self.c_lp @ x)


def _sym(M):
    return 0.5 * (M + M.T)


def _nt_scaling(X, Z):
    """Return (R, lam) with R^T Z R = diag(lam) = R^{-1} X R^{-T}."""
    Lx = np.linalg.cholesky(X)
    Lz = np.linalg.cholesky(Z)
    U, s, Vt = np.linalg.svd(Lz.T @ Lx)
    R = Lx @ Vt.T / np.sqrt(s)
    return R, s


def _max_step_psd(lam, dS):
    """Largest alpha with diag(lam) + alpha dS >= 0 (capped at a big number)."""
    isq = 1.0 / np.sqrt(lam)
    M = dS * isq[:, None] * isq[None, :]
    w = np.linalg.eigvalsh(_sym(M))
    mn = w[0]
    return np.inf if mn >= 0 else -1.0 / mn


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def solve(prob: SdpProblem, opts: SdpOptions | None = None) -> SdpSolution:
    """Maximise ``b^T y`` subject to the block LMIs of ``prob``."""
    opts = opts or SdpOptions()
    S = _Std(prob)
    m, nu = S.m, S.nu

    normC = max(1.0, np.sqrt(sum(np.sum(C * C) for C in S.C) + np.sum(S.c_lp**2)))
    normb = max(1.0, np.linalg.norm(S.b))
    normF = max([1.0] + [np.linalg.norm(F, axis=1).max() for F in S.F if F.size]
                + ([np.abs(S.F_lp).max()] if S.F_lp.size else []))
    xi = max(10.0, np.sqrt(nu), normb / normF * np.sqrt(nu))
    eta = max(10.0, np.sqrt(nu), normC)

    X = [xi * np.eye(s) for s in S.sizes]
    x = xi * np.ones(len(S.c_lp))
    Z = [eta * np.eye(s) for s in S.sizes]
    z = eta * np.ones(len(S.c_lp))
    y = np.zeros(m)

    history: list[tuple[float, float]] = []
    status = SdpStatus.ITERATION_LIMIT
    it = 0
    pinf = dinf = gap = np.inf
    pobj = dobj = 0.0
    best: tuple = (np.inf,)

    def residuals(X, x, y, Z, z):
        rp = S.b - S.A(X, x)
        ATy, ATy_lp = S.AT(y)
        Rd = [C - A - Zk for C, A, Zk in zip(S.C, ATy, Z)]
        rd_lp = S.c_lp - ATy_lp - z
        return rp, Rd, rd_lp

    for it in range(1, opts.max_iters + 1):
        rp, Rd, rd_lp = residuals(X, x, y, Z, z)
        pobj = S.cdot(X, x)
        dobj = float(S.b @ y)
        gap = sum(float(np.vdot(Xk, Zk)) for Xk, Zk in zip(X, Z)) + float(x @ z)
        mu = gap / nu
        pinf = np.linalg.norm(rp) / (1.0 + normb)
        dinf = np.sqrt(sum(np.sum(R * R) for R in Rd) + np.sum(rd_lp**2)) / (1.0 + normC)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        history.append((pobj, dobj))

        if pinf <= opts.feas_tol and dinf <= opts.feas_tol and relgap <= opts.gap_tol:
            status = SdpStatus.OPTIMAL
            break
        err = max(pinf, dinf, relgap)
        if err < best[0]:
            best = (err, [Xk.copy() for Xk in X], x.copy(), y.copy(), (pobj, dobj, pinf, dinf))

        # infeasibility certificates: directions in which the iterates diverge
        ynorm = np.linalg.norm(y)
        if dobj > 1e8 * max(1.0, abs(pobj)) or (ynorm > 1e10 and dobj > 0):
            ATy, ATy_lp = S.AT(y)
            res = np.sqrt(sum(np.sum((A + Zk) ** 2) for A, Zk in zip(ATy, Z)) + np.sum((ATy_lp + z) ** 2))
            if res / dobj < 1e-6:
                status = SdpStatus.UNBOUNDED
                break
        Xnorm = np.sqrt(sum(np.sum(Xk * Xk) for Xk in X) + np.sum(x * x))
        if -pobj > 1e8 * max(1.0, abs(dobj)) or (Xnorm > 1e10 and pobj < 0):
            res = np.linalg.norm(S.A(X, x))
            if res / -pobj < 1e-6:
                status = SdpStatus.INFEASIBLE
                break

        try:
            scal = [_nt_scaling(Xk, Zk) for Xk, Zk in zip(X, Z)]
        except np.linalg.LinAlgError:
            status = SdpStatus.NUMERICAL_FAILURE
            break
        Ws = [R @ R.T for R, _ in scal]

        # Schur complement M_ij = <F_i, W F_j W> + lp part.  With W = R R^T this
        # is G G^T for G_i = vec(R^T F_i R), so a QR of G^T yields a Cholesky
        # factor of M without squaring its condition number.
        cols = []
        for F, (R, _), s in zip(S.F, scal, S.sizes):
            Fm = F.reshape(m, s, s)
            cols.append(np.einsum("ba,mbc,cd->mad", R, Fm, R, optimize=True).reshape(m, -1).T)
        if x.size:
            cols.append((S.F_lp * np.sqrt(x / z)).T)
        Gt = np.vstack(cols)
        reg = 1e-14 * np.sqrt(np.sum(Gt * Gt) / max(m, 1))
        try:
            U = np.linalg.qr(np.vstack([Gt, reg * np.eye(m)]), mode="r")
        except np.linalg.LinAlgError:
            status = SdpStatus.NUMERICAL_FAILURE
            break
        if not np.all(np.isfinite(U)) or np.min(np.abs(np.diag(U))) == 0.0:
            status = SdpStatus.NUMERICAL_FAILURE
            break
        cho = (U, False)

        def direction(rc, rc_lp):
            """Solve the Newton system for scaled centrality targets.

            ``rc`` are the right-hand sides of lam o (dX~ + dZ~) = rc per dense
            block, ``rc_lp`` that of x*dz + z*dx = rc_lp.
            """
            Ds = []
            for (R, lam), r in zip(scal, rc):
                Ds.append(2.0 * r / (lam[:, None] + lam[None, :]))
            # dX = R D R^T - W dZ W,  dZ = Rd - A^T dy
            rhs = rp.copy()
            for F, (R, _), D, W, Rdk in zip(S.F, scal, Ds, Ws, Rd):
                rhs -= F @ (R @ D @ R.T).reshape(-1)
                rhs += F @ (W @ Rdk @ W).reshape(-1)
            if x.size:
                # z dx + x dz = rc_lp, dz = rd_lp - F_lp^T dy
                rhs -= S.F_lp @ (rc_lp / z)
                rhs += S.F_lp @ (x / z * rd_lp)
            dy = sla.cho_solve(cho, rhs)
            for refine in range(4):
                ATdy, ATdy_lp = S.AT(dy)
                dZ = [Rdk - A for Rdk, A in zip(Rd, ATdy)]
                dX = [_sym(R @ D @ R.T - W @ dZk @ W) for (R, _), D, W, dZk in zip(scal, Ds, Ws, dZ)]
                dz = rd_lp - ATdy_lp
                dx = (rc_lp - x * dz) / z if x.size else np.zeros(0)
                # iterative refinement: the step must satisfy A(dX) = rp
                res = rp - S.A(dX, dx)
                if refine == 3 or np.linalg.norm(res) <= 1e-3 * opts.feas_tol * (1.0 + normb):
                    break
                dy = dy + sla.cho_solve(cho, res)
            return dX, dx, dy, dZ, dz

        def steps(dX, dx, dZ, dz):
            ap, ad = np.inf, np.inf
            for (R, lam), dXk, dZk in zip(scal, dX, dZ):
                Ri = np.linalg.inv(R)
                ap = min(ap, _max_step_psd(lam, _sym(Ri @ dXk @ Ri.T)))
                ad = min(ad, _max_step_psd(lam, _sym(R.T @ dZk @ R)))
            if x.size:
                ap = min(ap, _max_step_lp(x, dx))
                ad = min(ad, _max_step_lp(z, dz))
            return ap, ad

        # predictor
        rc_aff = [-np.diag(lam**2) for _, lam in scal]
        rc_lp_aff = -x * z
        dXa, dxa, dya, dZa, dza = direction(rc_aff, rc_lp_aff)
        ap, ad = steps(dXa, dxa, dZa, dza)
        ap, ad = min(1.0, ap), min(1.0, ad)
        gap_aff = sum(float(np.vdot(Xk + ap * dXk, Zk + ad * dZk))
                      for Xk, dXk, Zk, dZk in zip(X, dXa, Z, dZa))
        gap_aff += float((x + ap * dxa) @ (z + ad * dza))
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3
        # corrector with second-order term in the scaled space
        rc = []
        for (R, lam), dXk, dZk in zip(scal, dXa, dZa):
            Ri = np.linalg.inv(R)
            dXs = Ri @ dXk @ Ri.T
            dZs = R.T @ dZk @ R
            rc.append(sigma * mu * np.eye(lam.size) - np.diag(lam**2) - _sym(dXs @ dZs))
        rc_lp = sigma * mu - x * z - dxa * dza
        dX, dx, dy, dZ, dz = direction(rc, rc_lp)
        ap, ad = steps(dX, dx, dZ, dz)
        ap = min(1.0, opts.step_fraction * ap)
        ad = min(1.0, opts.step_fraction * ad)

        X = [_sym(Xk + ap * dXk) for Xk, dXk in zip(X, dX)]
        x = x + ap * dx
        y = y + ad * dy
        Z = [_sym(Zk + ad * dZk) for Zk, dZk in zip(Z, dZ)]
        z = z + ad * dz
        log.debug("it %d pinf %.2e dinf %.2e relgap %.2e mu %.2e ap %.3f ad %.3f sigma %.2e", it, pinf, dinf, relgap, mu, ap, ad, sigma)
        if max(ap, ad) < 1e-10:
            status = SdpStatus.NUMERICAL_FAILURE
            break
    else:
        it = opts.max_iters

    reduced = False
    if status in (SdpStatus.NUMERICAL_FAILURE, SdpStatus.ITERATION_LIMIT) and best[0] <= opts.loose_tol:
        # stalled close to optimality: fall back to the most accurate iterate
        _, X, x, y, (pobj, dobj, pinf, dinf) = best
        status = SdpStatus.OPTIMAL
        reduced = True

    witnesses = prob.slack(y)
    duals = _unpack_duals(prob, S, X, x)
    if status != SdpStatus.OPTIMAL:
        log.debug("sdp solve ended with %s after %d iterations (pinf=%.2e dinf=%.2e)", status, it, pinf, dinf)
    return SdpSolution(
        status=status,
        y=y,
        objective_value=float(prob.objective @ y),
        block_witnesses=witnesses,
        dual_matrices=duals,
        duality_gap=abs(pobj - dobj) if np.isfinite(gap) else np.inf,
        primal_objective=pobj,
        iterations=it,
        primal_infeasibility=float(pinf),
        dual_infeasibility=float(dinf),
        history=history,
        reduced_accuracy=reduced,
    )


def _unpack_duals(prob, S, X, x):
    out: list[np.ndarray] = [None] * len(prob.blocks)  # type: ignore[list-item]
    for k, Xk in zip(S.dense_idx, X):
        out[k] = Xk
    for j, k in enumerate(S.lp_idx):
        out[k] = np.array([[x[j]]])
    return out


def to_sdpa(prob: SdpProblem) -> str:
    """Sparse SDPA text for cross-checking with external solvers.

    SDPA's dual form is ``max b^T y  s.t.  sum_i y_i F_i - F_0 >= 0``, so
    ``F_0 = -A_0`` and ``F_i = A_i``.
    """
    m = prob.num_vars
    lines = [f"{m}", f"{len(prob.blocks)}", " ".join(str(b.size) for b in prob.blocks),
             " ".join(repr(float(v)) for v in prob.objective)]
    for i in range(m + 1):
        for k, blk in enumerate(prob.blocks):
            mat = -blk.const if i == 0 else blk.coeffs[i - 1]
            rows, cols = np.nonzero(np.triu(mat))
            for r, c in zip(rows, cols):
                lines.append(f"{i} {k + 1} {r + 1} {c + 1} {float(mat[r, c])!r}")
    return "\n".join(lines) + "\n"
