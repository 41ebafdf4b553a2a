"""Block semidefinite programs in primal standard form.

A :class:`SdpProblem` has PSD matrix blocks ``X_b`` and free scalars ``w``::

    min/max  c . v
    s.t.     A v = b
             X_b >= 0 (PSD) for every block

where ``v = [w, vech(X_1), vech(X_2), ...]`` and ``vech`` lists the upper
triangle row by row. Coefficients act on the stored entries themselves:
a row coefficient ``a`` on entry ``(i, j)`` with ``i < j`` contributes
``a * X_ij`` (not ``2 a X_ij``). Blocks of size 1 are non-negative scalars.

The built-in solver is a primal-dual interior-point method on the
homogeneous self-dual embedding with Nesterov-Todd scaling and
Mehrotra predictor-corrector steps, using dense linear algebra.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max-iter"
NUMERICAL_FAILURE = "numerical-failure"
STATUSES = (OPTIMAL, INFEASIBLE, UNBOUNDED, MAX_ITER, NUMERICAL_FAILURE)

SQRT2 = math.sqrt(2.0)


class SdpFormatError(ValueError):
    pass


@dataclass
class SdpProblem:
    blocks: list[int]
    n_free: int
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    sense: str = "min"
    offset: float = 0.0
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.blocks = [int(k) for k in self.blocks]
        if any(k < 1 for k in self.blocks):
            raise ValueError("block sizes must be positive")
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.c = np.asarray(self.c, dtype=float).ravel()
        N = self.n_vars
        if self.A.shape[1] != N:
            raise ValueError(f"A has {self.A.shape[1]} columns, expected {N}")
        if self.A.shape[0] != self.b.size:
            raise ValueError("A and b disagree on the number of equalities")
        if self.c.size != N:
            raise ValueError(f"objective has length {self.c.size}, expected {N}")

    @property
    def n_vars(self) -> int:
        return self.n_free + sum(k * (k + 1) // 2 for k in self.blocks)

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    def block_offsets(self) -> list[int]:
        offs = []
        pos = self.n_free
        for k in self.blocks:
            offs.append(pos)
            pos += k * (k + 1) // 2
        return offs

    def entry_index(self, block: int, i: int, j: int) -> int:
        """Column of entry ``(i, j)`` of block ``block`` (either triangle)."""
        k = self.blocks[block]
        if i > j:
            i, j = j, i
        if not (0 <= i <= j < k):
            raise IndexError(f"entry ({i}, {j}) out of range for block of size {k}")
        return self.block_offsets()[block] + i * k - i * (i - 1) // 2 + (j - i)

    def split(self, v: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Split a variable vector into free values and symmetric block matrices."""
        free = np.array(v[: self.n_free])
        mats = []
        for off, k in zip(self.block_offsets(), self.blocks):
            seg = v[off: off + k * (k + 1) // 2]
            M = np.zeros((k, k))
            M[np.triu_indices(k)] = seg
            mats.append(M + np.triu(M, 1).T)
        return free, mats


@dataclass
class SolverOptions:
    feastol: float = 1e-8
    gaptol: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.99
    verbose: bool = False

    def __post_init__(self):
        if self.feastol <= 0 or self.gaptol <= 0:
            raise ValueError("tolerances must be positive")

    @classmethod
    def from_env(cls, **overrides) -> "SolverOptions":
        """Defaults, then ``PBCERT_SDP_FEASTOL`` / ``_GAPTOL`` / ``_MAXITER``, then overrides."""
        kw = {}
        if "PBCERT_SDP_FEASTOL" in os.environ:
            kw["feastol"] = float(os.environ["PBCERT_SDP_FEASTOL"])
        if "PBCERT_SDP_GAPTOL" in os.environ:
            kw["gaptol"] = float(os.environ["PBCERT_SDP_GAPTOL"])
        if "PBCERT_SDP_MAXITER" in os.environ:
            kw["max_iters"] = int(os.environ["PBCERT_SDP_MAXITER"])
        kw.update(overrides)
        return cls(**kw)


@dataclass
class SdpSolution:
    status: str
    free: np.ndarray
    blocks: list[np.ndarray]
    y: np.ndarray
    dual_blocks: list[np.ndarray]
    objective: float
    dual_objective: float
    iterations: int
    residuals: dict
    certificate: dict | None = None
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def vector(self, problem: SdpProblem) -> np.ndarray:
        """Primal solution in the problem's ``v`` layout."""
        parts = [self.free]
        for M in self.blocks:
            parts.append(M[np.triu_indices(M.shape[0])])
        return np.concatenate(parts) if parts else np.zeros(0)

    def usable(self, feastol: float = 1e-6, gaptol: float = 1e-6) -> bool:
        """Optimal, or stopped early with residuals within the looser tolerances."""
        if self.status == OPTIMAL:
            return True
        if self.status not in (MAX_ITER, NUMERICAL_FAILURE):
            return False
        r = self.residuals
        return r.get("primal", np.inf) <= feastol and r.get("dual", np.inf) <= feastol and r.get("gap", np.inf) <= gaptol


# ---------------------------------------------------------------------------
# text dump


def dump(problem: SdpProblem) -> str:
    """Sparse text form::

        sdp 1
        sense min
        free 2
        blocks 3 1
        objective <nnz>
        <col> <value>
        equalities <rows> <nnz>
        <row> <col> <value>
        rhs
        <row> <value>
        end

    Columns index ``v`` (free values, then each block's upper triangle).
    Only non-zero objective and rhs entries are listed.
    """
    lines = ["sdp 1", f"sense {problem.sense}", f"offset {float(problem.offset)!r}", f"free {problem.n_free}",
             "blocks " + " ".join(str(k) for k in problem.blocks)]
    nz = np.flatnonzero(problem.c)
    lines.append(f"objective {nz.size}")
    lines += [f"{j} {float(problem.c[j])!r}" for j in nz]
    A = problem.A.tocoo()
    order = np.lexsort((A.col, A.row))
    lines.append(f"equalities {problem.n_eq} {A.nnz}")
    lines += [f"{A.row[t]} {A.col[t]} {float(A.data[t])!r}" for t in order]
    lines.append("rhs")
    lines += [f"{i} {float(problem.b[i])!r}" for i in np.flatnonzero(problem.b)]
    lines.append("end")
    return "\n".join(lines) + "\n"


def load(text: str) -> SdpProblem:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
    it = iter(enumerate(rows, start=1))

    def expect(keyword):
        lineno, line = next(it)
        parts = line.split()
        if parts[0] != keyword:
            raise SdpFormatError(f"line {lineno}: expected '{keyword}', got '{parts[0]}'")
        return parts[1:]

    try:
        if expect("sdp") != ["1"]:
            raise SdpFormatError("unsupported dump version")
        sense = expect("sense")[0]
        offset = float(expect("offset")[0])
        n_free = int(expect("free")[0])
        blocks = [int(k) for k in expect("blocks")]
        N = n_free + sum(k * (k + 1) // 2 for k in blocks)
        c = np.zeros(N)
        for _ in range(int(expect("objective")[0])):
            _, line = next(it)
            j, val = line.split()
            c[int(j)] = float(val)
        m, nnz = (int(t) for t in expect("equalities"))
        ri, ci, data = [], [], []
        for _ in range(nnz):
            _, line = next(it)
            r, j, val = line.split()
            ri.append(int(r)), ci.append(int(j)), data.append(float(val))
        expect("rhs")
        b = np.zeros(m)
        for lineno, line in it:
            if line == "end":
                break
            r, val = line.split()
            b[int(r)] = float(val)
        else:
            raise SdpFormatError("missing 'end'")
    except StopIteration:
        raise SdpFormatError("truncated dump") from None
    except (IndexError, ValueError) as exc:
        if isinstance(exc, SdpFormatError):
            raise
        raise SdpFormatError(f"malformed dump: {exc}") from None
    A = sp.csr_matrix((data, (ri, ci)), shape=(m, N))
    return SdpProblem(blocks, n_free, A, b, c, sense, offset)


# ---------------------------------------------------------------------------
# cones in scaled-svec coordinates


class _Orthant:
    def __init__(self, size: int):
        self.dim = size
        self.degree = size

    def identity(self):
        return np.ones(self.dim)

    def scaling(self, s, z):
        self.d = np.sqrt(s / z)
        self.lam = np.sqrt(s * z)

    def hessian(self):
        return np.diag(1.0 / self.d**2)

    def scale_matrix(self):
        # D with D^T H D = I
        return np.diag(self.d)

    def lam_sq(self):
        return self.lam**2

    def lam_div(self, r):
        return r / self.lam

    def W(self, v):
        return self.d * v

    def Winv(self, v):
        return v / self.d

    def WinvT(self, v):
        return v / self.d

    def Hop(self, v):
        return v / self.d**2

    def product(self, a, b):
        return a * b

    def max_step(self, x, dx):
        neg = dx < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-x[neg] / dx[neg]))

    def min_eig(self, x):
        return float(np.min(x)) if self.dim else np.inf

    def inner(self, a, b):
        return float(a @ b)


class _PsdBlock:
    def __init__(self, k: int):
        self.k = k
        self.dim = k * (k + 1) // 2
        self.degree = k
        self.iu = np.triu_indices(k)
        self.off = self.iu[0] != self.iu[1]
        scale = np.where(self.off, SQRT2, 1.0)
        self.scale = scale
        # svec = U vec(M); U has 1 for diagonal, 1/sqrt2 at (i,j) and (j,i)
        U = np.zeros((self.dim, k * k))
        for t, (i, j) in enumerate(zip(*self.iu)):
            if i == j:
                U[t, i * k + i] = 1.0
            else:
                U[t, i * k + j] = U[t, j * k + i] = 1.0 / SQRT2
        self.U = U

    def mat(self, v):
        M = np.zeros((self.k, self.k))
        M[self.iu] = v / self.scale
        return M + np.triu(M, 1).T

    def svec(self, M):
        return M[self.iu] * self.scale

    def identity(self):
        return self.svec(np.eye(self.k))

    def scaling(self, s, z):
        S, Z = self.mat(s), self.mat(z)
        Ls = np.linalg.cholesky(S)
        Lz = np.linalg.cholesky(Z)
        U, lam, Vt = np.linalg.svd(Lz.T @ Ls)
        self.lam = lam
        isq = 1.0 / np.sqrt(lam)
        self.R = Ls @ Vt.T * isq[None, :]
        self.Rinv = (np.sqrt(lam)[:, None] * Vt) @ la.solve_triangular(Ls, np.eye(self.k), lower=True)
        self.P = self.Rinv.T @ self.Rinv

    def hessian(self):
        return self.U @ np.kron(self.P, self.P) @ self.U.T

    def scale_matrix(self):
        # svec(R V R^T) as a matrix; inverse of WinvT, so D^T H D = I
        return self.U @ np.kron(self.R, self.R) @ self.U.T

    def lam_sq(self):
        return self.svec(np.diag(self.lam**2))

    def lam_div(self, r):
        R = self.mat(r)
        D = 2.0 * R / (self.lam[:, None] + self.lam[None, :])
        return self.svec(D)

    def W(self, v):
        return self.svec(self.R.T @ self.mat(v) @ self.R)

    def Winv(self, v):
        return self.svec(self.Rinv.T @ self.mat(v) @ self.Rinv)

    def WinvT(self, v):
        return self.svec(self.Rinv @ self.mat(v) @ self.Rinv.T)

    def Hop(self, v):
        return self.svec(self.P @ self.mat(v) @ self.P)

    def product(self, a, b):
        A, B = self.mat(a), self.mat(b)
        return self.svec(0.5 * (A @ B + B @ A))

    def max_step(self, x, dx):
        X = self.mat(x)
        try:
            L = np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            return 0.0
        Li = la.solve_triangular(L, np.eye(self.k), lower=True)
        M = Li @ self.mat(dx) @ Li.T
        lmin = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
        return np.inf if lmin >= 0 else -1.0 / lmin

    def min_eig(self, x):
        return float(np.linalg.eigvalsh(self.mat(x))[0])

    def inner(self, a, b):
        return float(a @ b)


# ---------------------------------------------------------------------------
# solver


class _Standardized:
    """Problem rescaled into svec coordinates with 1x1 blocks pooled."""

    def __init__(self, problem: SdpProblem):
        self.problem = problem
        nf = problem.n_free
        offs = problem.block_offsets()
        col_scale = np.ones(problem.n_vars)
        orth_cols, psd_cols = [], []
        for off, k in zip(offs, problem.blocks):
            iu = np.triu_indices(k)
            cols = off + np.arange(k * (k + 1) // 2)
            col_scale[cols[iu[0] != iu[1]]] = 1.0 / SQRT2
            if k == 1:
                orth_cols.append(cols)
            else:
                psd_cols.append((k, cols))
        self.perm = np.concatenate([np.arange(nf)] + orth_cols + [c for _, c in psd_cols]).astype(int)
        self.cones = []
        self.slices = []
        pos = 0
        n_orth = sum(len(c) for c in orth_cols)
        if n_orth:
            self.cones.append(_Orthant(n_orth))
            self.slices.append(slice(pos, pos + n_orth))
            pos += n_orth
        for k, cols in psd_cols:
            cone = _PsdBlock(k)
            self.cones.append(cone)
            self.slices.append(slice(pos, pos + cone.dim))
            pos += cone.dim
        self.m = pos
        self.nf = nf
        sign = 1.0 if problem.sense == "min" else -1.0
        A = problem.A.tocsc()[:, self.perm].toarray() * col_scale[self.perm][None, :]
        self.c = sign * problem.c[self.perm] * col_scale[self.perm]
        self.b = problem.b.copy()
        self.col_scale = col_scale
        self.sign = sign
        self.A, self.row_map, self.infeasible_rows = self._reduce_rows(A, self.b)
        self.b = self.b[self.row_map]
        self.degree = sum(c.degree for c in self.cones)

    @staticmethod
    def _reduce_rows(A, b):
        """Drop linearly dependent equality rows; flag inconsistent ones."""
        if A.shape[0] == 0:
            return A, np.arange(0), False
        norms = np.linalg.norm(A, axis=1)
        nonzero = norms > 0
        bad = bool(np.any(np.abs(b[~nonzero]) > 1e-12))
        idx = np.flatnonzero(nonzero)
        if idx.size == 0:
            return A[idx], idx, bad
        Q, R, piv = la.qr(A[idx].T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else 1.0) * 1e3
        rank = int(np.sum(diag > tol))
        keep = np.sort(piv[:rank])
        if rank < idx.size:
            sub = A[idx]
            xls, *_ = np.linalg.lstsq(sub[keep], b[idx][keep], rcond=None)
            resid = sub @ xls - b[idx]
            if np.max(np.abs(resid)) > 1e-8 * max(1.0, np.max(np.abs(b))):
                bad = True
        return A[idx][keep], idx[keep], bad

    def cone_part(self, v):
        return v[self.nf:]


def solve(problem: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve with the built-in interior-point method."""
    opts = opts or SolverOptions.from_env()
    t0 = time.perf_counter()
    st = _Standardized(problem)
    if st.infeasible_rows:
        sol = _empty_solution(problem, INFEASIBLE, {"reason": "inconsistent equality rows"})
        sol.solve_time = time.perf_counter() - t0
        return sol
    sol = _hsd(st, opts)
    sol.solve_time = time.perf_counter() - t0
    if opts.verbose:
        logger.info("sdp %s in %d iterations (%.2fs)", sol.status, sol.iterations, sol.solve_time)
    return sol


def _empty_solution(problem, status, certificate=None):
    return SdpSolution(status, np.zeros(problem.n_free), [np.zeros((k, k)) for k in problem.blocks],
                       np.zeros(problem.n_eq), [np.zeros((k, k)) for k in problem.blocks],
                       float("nan"), float("nan"), 0, {}, certificate)


def _hsd(st: _Standardized, opts: SolverOptions) -> SdpSolution:
    A, b, c = st.A, st.b, st.c
    p, n = A.shape
    nf, m = st.nf, st.m
    cones, slices = st.cones, st.slices

    x = np.zeros(n)
    z = np.zeros(m)
    for cone, sl in zip(cones, slices):
        x[nf:][sl] = cone.identity()
        z[sl] = cone.identity()
    y = np.zeros(p)
    tau, kappa = 1.0, 1.0

    bnorm = max(1.0, np.linalg.norm(b))
    cnorm = max(1.0, np.linalg.norm(c))
    status = MAX_ITER
    resid = {}
    cert = None
    best = None
    stall = 0
    prev_mu = np.inf
    it = 0

    def cone_apply(fn_name, v, *extra):
        out = np.empty_like(v)
        for cone, sl in zip(cones, slices):
            args = [e[sl] for e in extra]
            out[sl] = getattr(cone, fn_name)(v[sl], *args)
        return out

    def max_step(s, ds, zz, dz, t, dt, k, dk):
        a = np.inf
        for cone, sl in zip(cones, slices):
            a = min(a, cone.max_step(s[sl], ds[sl]), cone.max_step(zz[sl], dz[sl]))
        if dt < 0:
            a = min(a, -t / dt)
        if dk < 0:
            a = min(a, -k / dk)
        return a

    for it in range(opts.max_iters + 1):
        s = x[nf:]
        R1 = A.T @ y - np.concatenate([np.zeros(nf), z]) + c * tau
        R2 = A @ x - b * tau
        R3 = kappa + c @ x + b @ y
        gap = float(s @ z)
        mu = (gap + tau * kappa) / (st.degree + 1)

        xh, yh, zh = x / tau, y / tau, z / tau
        pcost = float(c @ xh)
        dcost = float(-b @ yh)
        pres = np.linalg.norm(A @ xh - b) / bnorm
        dres = np.linalg.norm(A.T @ yh - np.concatenate([np.zeros(nf), zh]) + c) / cnorm
        rgap = (gap / tau**2) / (1.0 + abs(pcost) + abs(dcost))
        resid = {"primal": float(pres), "dual": float(dres), "gap": float(rgap),
                 "pcost": pcost, "dcost": dcost, "mu": float(mu), "tau": float(tau), "kappa": float(kappa)}
        if opts.verbose:
            logger.debug("it %3d pcost % .6e dcost % .6e pres %.1e dres %.1e gap %.1e tau %.1e kappa %.1e",
                         it, pcost, dcost, pres, dres, rgap, tau, kappa)

        if best is None or max(pres, dres, rgap) < max(best[0]["primal"], best[0]["dual"], best[0]["gap"]):
            best = (dict(resid), x.copy(), y.copy(), z.copy(), tau)

        if pres <= opts.feastol and dres <= opts.feastol and rgap <= opts.gaptol:
            status = OPTIMAL
            break
        by, cx = float(b @ y), float(c @ x)
        if by < 0:
            pinf = np.linalg.norm(A.T @ y - np.concatenate([np.zeros(nf), z])) / cnorm / -by
            if pinf <= opts.feastol:
                status = INFEASIBLE
                cert = {"y": -y / -by, "residual": float(pinf)}
                break
        if cx < 0:
            dinf = np.linalg.norm(A @ x) / bnorm / -cx
            if dinf <= opts.feastol:
                status = UNBOUNDED
                cert = {"x": x / -cx, "residual": float(dinf)}
                break
        if it == opts.max_iters:
            break

        if mu > 0.5 * prev_mu or not np.isfinite(mu):
            stall += 1
        else:
            stall = 0
        prev_mu = min(prev_mu, mu)
        if stall > 25 or not np.isfinite(mu) or mu < 1e-30:
            status = NUMERICAL_FAILURE
            break

        try:
            for cone, sl in zip(cones, slices):
                cone.scaling(s[sl], z[sl])
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break

        # KKT in scaled coordinates dx = D dxi, where D^T H D = I on the cone part
        D = np.eye(n)
        for cone, sl in zip(cones, slices):
            rng = np.arange(sl.start, sl.stop) + nf
            D[np.ix_(rng, rng)] = cone.scale_matrix()
        AD = A @ D
        K = np.zeros((n + p, n + p))
        K[np.arange(nf, n), np.arange(nf, n)] = 1.0
        K[:n, n:] = AD.T
        K[n:, :n] = AD
        reg = 1e-12
        Kreg = K.copy()
        Kreg[np.arange(nf), np.arange(nf)] += reg
        Kreg[np.arange(n, n + p), np.arange(n, n + p)] -= reg
        try:
            lu = la.lu_factor(Kreg, check_finite=True)
        except (ValueError, la.LinAlgError):
            status = NUMERICAL_FAILURE
            break

        def ksolve(rhs):
            srhs = np.concatenate([D.T @ rhs[:n], rhs[n:]])
            sol = la.lu_solve(lu, srhs)
            for _ in range(2):
                sol = sol + la.lu_solve(lu, srhs - K @ sol)
            return np.concatenate([D @ sol[:n], sol[n:]])

        u1 = ksolve(np.concatenate([-c, b]))
        dx1, dy1 = u1[:n], u1[n:]
        lam_sq = np.zeros(m)
        for cone, sl in zip(cones, slices):
            lam_sq[sl] = cone.lam_sq()

        def direction(eta, rc, rtau):
            d = cone_apply("lam_div", rc)
            wd = cone_apply("Winv", d)
            rhs = np.concatenate([-eta * R1 + np.concatenate([np.zeros(nf), wd]), -eta * R2])
            u0 = ksolve(rhs)
            dx0, dy0 = u0[:n], u0[n:]
            denom = c @ dx1 + b @ dy1 - kappa / tau
            dtau = (-eta * R3 - rtau / tau - c @ dx0 - b @ dy0) / denom
            dx = dx0 + dtau * dx1
            dy = dy0 + dtau * dy1
            # dz from the linearized dual equation keeps dual feasibility exact
            dz = (A.T @ dy + c * dtau + eta * R1)[nf:]
            dkappa = (rtau - kappa * dtau) / tau
            return dx, dy, dz, dtau, dkappa

        # predictor
        dxa, dya, dza, dtaua, dkappaa = direction(1.0, -lam_sq, -tau * kappa)
        alpha_a = min(1.0, max_step(s, dxa[nf:], z, dza, tau, dtaua, kappa, dkappaa))
        sigma = min(1.0, max(0.0, (1.0 - alpha_a))) ** 3
        # corrector
        ws = cone_apply("WinvT", dxa[nf:])
        wz = cone_apply("W", dza)
        corr = cone_apply("product", ws, wz)
        e = np.zeros(m)
        for cone, sl in zip(cones, slices):
            e[sl] = cone.identity()
        rc = sigma * mu * e - lam_sq - corr
        rtau = sigma * mu - tau * kappa - dtaua * dkappaa
        dx, dy, dz, dtau, dkappa = direction(1.0 - sigma, rc, rtau)
        amax = max_step(s, dx[nf:], z, dz, tau, dtau, kappa, dkappa)
        alpha = min(1.0, opts.step_fraction * amax)
        if not np.isfinite(alpha) or alpha < 1e-12:
            status = NUMERICAL_FAILURE
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status in (MAX_ITER, NUMERICAL_FAILURE) and best is not None:
        resid, x, y, z, tau = best
    return _package(st, status, x, y, z, tau, resid, cert, it)


def _package(st: _Standardized, status, x, y, z, tau, resid, cert, iterations) -> SdpSolution:
    problem = st.problem
    if status in (INFEASIBLE, UNBOUNDED):
        scale = 1.0
    else:
        scale = 1.0 / tau
    v = np.zeros(problem.n_vars)
    v[st.perm] = x * scale * st.col_scale[st.perm]
    free, blocks = problem.split(v)
    # dual slack in the same layout; off-diagonal svec entries map back with 1/sqrt2
    zfull = np.zeros(problem.n_vars)
    zfull[st.perm[st.nf:]] = z * scale * st.col_scale[st.perm[st.nf:]]
    _, dual_blocks = problem.split(zfull)
    yfull = np.zeros(problem.n_eq)
    yfull[st.row_map] = -y * scale * st.sign
    obj = float(problem.c @ v) + problem.offset
    dobj = float(problem.b @ yfull) + problem.offset
    if status in (INFEASIBLE, UNBOUNDED):
        obj = dobj = float("nan")
        if status == UNBOUNDED:
            ray = np.zeros(problem.n_vars)
            ray[st.perm] = cert["x"] * st.col_scale[st.perm]
            cert = {"ray": ray, "residual": cert["residual"]}
        else:
            yc = np.zeros(problem.n_eq)
            yc[st.row_map] = cert["y"]
            cert = {"y": yc, "residual": cert["residual"]}
    return SdpSolution(status, free, blocks, yfull, dual_blocks, obj, dobj, iterations, resid, cert)


# ---------------------------------------------------------------------------
# optional external backend


def solve_cvxpy(problem: SdpProblem, solver: str = "CLARABEL", **kwargs) -> SdpSolution:
    """Solve through cvxpy; a cross-check path with the same contract."""
    import cvxpy as cp

    t0 = time.perf_counter()
    w = cp.Variable(problem.n_free) if problem.n_free else None
    Xs = [cp.Variable((k, k), symmetric=True) for k in problem.blocks]
    parts = [w] if w is not None else []
    for X, k in zip(Xs, problem.blocks):
        iu = np.triu_indices(k)
        parts.append(cp.hstack([X[i, j] for i, j in zip(*iu)]))
    v = cp.hstack(parts)
    cons = [problem.A @ v == problem.b] + [X >> 0 for X in Xs]
    obj = problem.c @ v
    prob = cp.Problem(cp.Minimize(obj) if problem.sense == "min" else cp.Maximize(obj), cons)
    prob.solve(solver=solver, **kwargs)
    mapping = {"optimal": OPTIMAL, "optimal_inaccurate": OPTIMAL, "infeasible": INFEASIBLE,
               "infeasible_inaccurate": INFEASIBLE, "unbounded": UNBOUNDED, "unbounded_inaccurate": UNBOUNDED}
    status = mapping.get(prob.status, NUMERICAL_FAILURE)
    if status == OPTIMAL:
        free = np.asarray(w.value) if w is not None else np.zeros(0)
        blocks = [np.asarray(X.value) for X in Xs]
        y = -np.asarray(cons[0].dual_value) if cons[0].dual_value is not None else np.zeros(problem.n_eq)
        duals = [np.asarray(cn.dual_value) for cn in cons[1:]]
        val = float(prob.value) + problem.offset
        return SdpSolution(status, free, blocks, y, duals, val, val, 0, {}, None, time.perf_counter() - t0)
    sol = _empty_solution(problem, status)
    sol.solve_time = time.perf_counter() - t0
    return sol


BACKENDS: dict[str, Callable[..., SdpSolution]] = {"ipm": solve, "cvxpy": solve_cvxpy}


def get_backend(name: str) -> Callable[..., SdpSolution]:
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown SDP backend {name!r}; choose from {sorted(BACKENDS)}") from None
