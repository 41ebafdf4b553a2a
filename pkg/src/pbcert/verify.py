"""Independent numerical checks of synthesized certificates.

Nothing here trusts the SOS solver: inequalities are re-checked by
sampling, invariance and convergence by simulation, and region size by
Monte Carlo (with a closed form for ellipsoids).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .polynomial import Polynomial, PolyVectorField

logger = logging.getLogger(__name__)

THRESHOLD = -1e-6
ORIGIN_RADIUS = 1e-3
BLOWUP = 1e6


class DomainBoxError(ValueError):
    """The sampling box does not contain the region."""


class EmptyRegionError(ValueError):
    pass


class QPInfeasibleError(RuntimeError):
    def __init__(self, x, message="CLF/CBF quadratic program infeasible"):
        self.x = np.asarray(x)
        super().__init__(f"{message} at x = {self.x.tolist()} (certificate violation)")


class DivergenceError(RuntimeError):
    def __init__(self, trajectory: "Trajectory"):
        self.trajectory = trajectory
        super().__init__(f"state norm exceeded {BLOWUP:g} at t = {trajectory.times[-1]:.4g}")


# -- report types ------------------------------------------------------------


@dataclass
class Check:
    name: str
    samples: int
    worst_margin: float
    threshold: float
    passed: bool


@dataclass
class TrajectorySummary:
    x0: list[float]
    min_h: float
    min_q: float | None
    final_norm: float
    invariant: bool
    safe: bool
    converged: bool
    diverged: bool = False


@dataclass
class VolumeEstimate:
    volume: float
    stderr: float
    samples: int
    box: list[list[float]]
    seed: int


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)
    trajectories: list[TrajectorySummary] = field(default_factory=list)
    volumes: dict[str, VolumeEstimate] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "trajectories": [asdict(t) for t in self.trajectories],
            "volumes": {k: asdict(v) for k, v in self.volumes.items()},
            "info": self.info,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray | None = None
    diverged: bool = False


# -- boxes and sampling -------------------------------------------------------


def _unit_directions(n: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.vstack([d, np.eye(n), -np.eye(n)])


def _homogeneous_parts(p: Polynomial) -> dict[int, Polynomial]:
    parts: dict[int, dict] = {}
    for m, c in p.items():
        parts.setdefault(sum(m), {})[m] = c
    return {k: Polynomial(t, p.vars) for k, t in parts.items()}


def ray_extent(p: Polynomial, directions: np.ndarray) -> np.ndarray:
    """Largest ``t >= 0`` with ``p(t d) >= 0`` for each direction ``d``.

    Raises :class:`DomainBoxError` if ``{p >= 0}`` is unbounded along some
    sampled direction.
    """
    deg = p.degree()
    if deg < 1:
        if p.coefficient((0,) * p.n) >= 0:
            raise DomainBoxError("region is unbounded (constant non-negative polynomial)")
        return np.zeros(len(directions))
    parts = _homogeneous_parts(p)
    coefs = np.zeros((len(directions), deg + 1))  # highest power first
    for k, part in parts.items():
        coefs[:, deg - k] = part.evaluate(directions)
    lead = coefs[:, 0]
    scale = np.max(np.abs(coefs), axis=1)
    if np.any(lead >= -1e-12 * scale):
        raise DomainBoxError("region {h >= 0} is unbounded along a sampled direction")
    out = np.zeros(len(directions))
    for i, row in enumerate(coefs):
        roots = np.roots(row)
        real = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots))].real
        real = real[real > 0]
        out[i] = real.max() if real.size else 0.0
    return out


def region_box(h: Polynomial, scale: float = 1.5, n_directions: int = 4096, seed: int = 0) -> np.ndarray:
    """Box ``scale`` times the sampled extent of ``{h >= 0}``, as ``(n, 2)`` bounds."""
    n = h.n
    dirs = _unit_directions(n, n_directions, seed)
    t = ray_extent(h, dirs)
    pts = dirs * t[:, None]
    if h.coefficient((0,) * n) >= 0:
        pts = np.vstack([pts, np.zeros(n)])
    if not np.any(t > 0):
        raise EmptyRegionError("no sampled ray from the origin meets {h >= 0}")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    half = np.maximum(half, 1e-6 * max(1.0, half.max()))
    return np.stack([center - scale * half, center + scale * half], axis=1)


def union_box(*boxes: np.ndarray) -> np.ndarray:
    b = np.asarray(boxes[0], dtype=float).copy()
    for other in boxes[1:]:
        b[:, 0] = np.minimum(b[:, 0], other[:, 0])
        b[:, 1] = np.maximum(b[:, 1], other[:, 1])
    return b


def check_box(h: Polynomial, box, samples_per_face: int = 4000, seed: int = 0):
    """Raise :class:`DomainBoxError` if ``h >= 0`` anywhere on sampled box faces."""
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    rng = np.random.default_rng(seed)
    for i in range(n):
        for side in (0, 1):
            pts = box[:, 0] + rng.random((samples_per_face, n)) * (box[:, 1] - box[:, 0])
            pts[:, i] = box[i, side]
            if np.any(h.evaluate(pts) >= 0):
                raise DomainBoxError(f"region touches the box boundary on face x{i + 1}={box[i, side]:g}")


def sample_region(h: Polynomial, box, n: int, seed: int = 0, max_draws: int = 10**8) -> np.ndarray:
    """``n`` scrambled-Sobol points of the box that satisfy ``h >= 0``."""
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    sob = qmc.Sobol(d, scramble=True, seed=seed)
    out, have, drawn = [], 0, 0
    batch = 1 << 16
    while have < n:
        if drawn >= max_draws:
            raise EmptyRegionError(f"only {have} of {n} samples found inside {{h >= 0}}")
        u = sob.random(batch)
        drawn += batch
        pts = box[:, 0] + u * (box[:, 1] - box[:, 0])
        keep = pts[h.evaluate(pts) >= 0]
        out.append(keep)
        have += len(keep)
        if drawn >= 4 * batch and have == 0:
            raise EmptyRegionError("no samples found inside {h >= 0}")
    return np.vstack(out)[:n]


def uniform_region_samples(h: Polynomial, box, n: int, seed: int = 0) -> np.ndarray:
    """``n`` i.i.d. uniform samples of ``{h >= 0}`` by rejection."""
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    out, have, tries = [], 0, 0
    while have < n:
        pts = box[:, 0] + rng.random((max(1024, 4 * n), box.shape[0])) * (box[:, 1] - box[:, 0])
        keep = pts[h.evaluate(pts) >= 0]
        out.append(keep)
        have += len(keep)
        tries += 1
        if tries > 1000:
            raise EmptyRegionError("rejection sampling found too few points in {h >= 0}")
    return np.vstack(out)[:n]


# -- inequality checks ------------------------------------------------------


def _lie_values(p: Polynomial, fieldv: PolyVectorField, X: np.ndarray, U: np.ndarray | None = None) -> np.ndarray:
    grad = np.stack([g.evaluate(X) for g in p.gradient()], axis=1)
    return np.sum(grad * fieldv.evaluate(X, U), axis=1)


def check_barrier_conditions(h: Polynomial, fieldv: PolyVectorField, V: Polynomial, gamma: float = 1.0,
                             u: Sequence[Polynomial] | None = None, unsafe: Sequence[Polynomial] = (),
                             box=None, n_samples: int = 100_000, seed: int = 0,
                             origin_radius: float = ORIGIN_RADIUS, threshold: float = THRESHOLD,
                             samples: np.ndarray | None = None) -> VerificationReport:
    """Sampled Lyapunov decrease, barrier condition and containment on ``{h >= 0}``.

    With a controller ``u`` the closed loop ``f + g u`` is checked.
    """
    loop = fieldv.closed_loop(u) if u is not None else fieldv.drift()
    if samples is None:
        if box is None:
            box = region_box(h)
        check_box(h, box, seed=seed)
        samples = sample_region(h, box, n_samples, seed)
    X = samples
    report = VerificationReport()
    away = np.linalg.norm(X, axis=1) > origin_radius
    vdot = _lie_values(V, loop, X[away])
    worst = float(np.min(-vdot)) if vdot.size else float("inf")
    report.checks.append(Check("lyapunov_decrease", int(away.sum()), worst, threshold, worst >= threshold))
    bar = _lie_values(h, loop, X) + gamma * h.evaluate(X)
    worst = float(np.min(bar))
    report.checks.append(Check("barrier", len(X), worst, threshold, worst >= threshold))
    for i, q in enumerate(unsafe):
        worst = float(np.min(q.evaluate(X)))
        report.checks.append(Check(f"containment_{i + 1}", len(X), worst, threshold, worst >= threshold))
    report.info["box"] = np.asarray(box).tolist() if box is not None else None
    return report


# -- QP controller ------------------------------------------------------------


def qp_rows(X, V: Polynomial, h: Polynomial, fieldv: PolyVectorField, gamma: float = 1.0):
    """Constraint rows ``a_k . u <= b_k`` of the CLF/CBF program for a batch of states.

    Each row is divided by the largest coefficient magnitude of its
    polynomial (``V`` or ``h``), which leaves the feasible set unchanged
    and makes slacks independent of the certificate's arbitrary scale.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    G = fieldv.g_matrix(X)
    F = fieldv.drift().evaluate(X)
    gV = np.stack([g.evaluate(X) for g in V.gradient()], axis=1)
    gh = np.stack([g.evaluate(X) for g in h.gradient()], axis=1)
    a1 = np.einsum("ni,nij->nj", gV, G)
    b1 = -np.sum(gV * F, axis=1)
    a2 = -np.einsum("ni,nij->nj", gh, G)
    b2 = np.sum(gh * F, axis=1) + gamma * h.evaluate(X)
    sV, sh = _coef_scale(V), _coef_scale(h)
    return np.stack([a1 / sV, a2 / sh], axis=1), np.stack([b1 / sV, b2 / sh], axis=1)


def _coef_scale(p: Polynomial) -> float:
    return max((abs(c) for _, c in p.items()), default=1.0) or 1.0


def qp_controller_batch(X, V: Polynomial, h: Polynomial, fieldv: PolyVectorField, gamma: float = 1.0,
                        tol: float = 1e-9):
    """Minimum-norm ``u`` with both rows satisfied, by active-set enumeration.

    Returns ``(U, feasible, slack)`` where ``slack`` is ``b - A u`` per row.
    """
    A, b = qp_rows(X, V, h, fieldv, gamma)
    N, _, m = A.shape
    best_u = np.zeros((N, m))
    best_norm = np.full(N, np.inf)
    feasible = np.zeros(N, dtype=bool)

    def consider(U):
        nonlocal best_u, best_norm, feasible
        slack = b - np.einsum("nkj,nj->nk", A, U)
        scale = 1.0 + np.abs(b) + np.linalg.norm(A, axis=2) * np.linalg.norm(U, axis=1, keepdims=True)
        ok = np.all(slack >= -tol * scale, axis=1) & np.all(np.isfinite(U), axis=1)
        nrm = np.linalg.norm(U, axis=1)
        better = ok & (nrm < best_norm)
        best_u[better] = U[better]
        best_norm[better] = nrm[better]
        feasible |= ok

    consider(np.zeros((N, m)))
    for k in range(2):
        a = A[:, k, :]
        aa = np.sum(a * a, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            U = a * (b[:, k] / aa)[:, None]
        U[aa <= 1e-300] = np.nan
        consider(U)
    # both rows active: minimum-norm solution of the 2 x m system
    U = np.full((N, m), np.nan)
    for i in range(N):
        Ai = A[i]
        if np.linalg.matrix_rank(Ai) == 2:
            Pi = np.linalg.pinv(Ai)
            ui = Pi @ b[i]
            U[i] = ui + Pi @ (b[i] - Ai @ ui)
    consider(U)
    slack = b - np.einsum("nkj,nj->nk", A, best_u)
    return best_u, feasible, slack


def qp_controller(x, V: Polynomial, h: Polynomial, fieldv: PolyVectorField, gamma: float = 1.0) -> np.ndarray:
    """Pointwise CLF/CBF quadratic program with zero relaxation."""
    U, ok, _ = qp_controller_batch(np.asarray(x, dtype=float)[None, :], V, h, fieldv, gamma)
    if not ok[0]:
        raise QPInfeasibleError(x)
    return U[0]


# -- simulation ---------------------------------------------------------------


def _rhs(fieldv: PolyVectorField, controller: Callable | None):
    if controller is None:
        return lambda X: fieldv.drift().evaluate(X)
    return lambda X: fieldv.evaluate(X, controller(X))


def simulate_batch(fieldv: PolyVectorField, X0, dt: float = 0.01, T: float = 10.0,
                   controller: Callable | None = None, blowup: float = BLOWUP):
    """Fixed-step RK4 for a batch of initial states.

    ``controller`` maps an ``(N, n)`` batch to ``(N, m)`` inputs and is
    evaluated at every stage. Returns ``(times, states, diverged)`` with
    ``states`` of shape ``(steps + 1, N, n)``; diverged rows are frozen.
    """
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    X = np.atleast_2d(np.asarray(X0, dtype=float)).copy()
    steps = int(round(T / dt))
    rhs = _rhs(fieldv, controller)
    out = np.empty((steps + 1,) + X.shape)
    out[0] = X
    diverged = np.zeros(len(X), dtype=bool)
    for k in range(steps):
        live = ~diverged
        Y = X[live]
        k1 = rhs(Y)
        k2 = rhs(Y + 0.5 * dt * k1)
        k3 = rhs(Y + 0.5 * dt * k2)
        k4 = rhs(Y + dt * k3)
        with np.errstate(over="ignore", invalid="ignore"):
            Y = Y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        bad = ~np.all(np.isfinite(Y), axis=1) | (np.linalg.norm(np.nan_to_num(Y, nan=np.inf), axis=1) > blowup)
        idx = np.flatnonzero(live)
        X[idx[~bad]] = Y[~bad]
        diverged[idx[bad]] = True
        out[k + 1] = X
    return np.arange(steps + 1) * dt, out, diverged


def simulate(fieldv: PolyVectorField, x0, dt: float = 0.01, T: float = 10.0,
             controller: Callable | None = None, blowup: float = BLOWUP) -> Trajectory:
    """Single RK4 trajectory; raises :class:`DivergenceError` past ``blowup``."""
    wrapped = None
    if controller is not None:
        def wrapped(X):
            return np.atleast_2d(np.stack([np.asarray(controller(x), dtype=float) for x in X]))
    times, states, div = simulate_batch(fieldv, np.asarray(x0, dtype=float)[None, :], dt, T, wrapped, blowup)
    S = states[:, 0, :]
    U = None
    if wrapped is not None:
        U = wrapped(S)
    if div[0]:
        last = int(np.argmax(np.all(S == S[-1], axis=1)))
        raise DivergenceError(Trajectory(times[: last + 1], S[: last + 1], None, True))
    return Trajectory(times, S, U)


def polynomial_controller(u: Sequence[Polynomial]) -> Callable:
    def ctrl(X):
        return np.stack([p.evaluate(X) for p in u], axis=1)
    return ctrl


def horizon(fieldv: PolyVectorField, u: Sequence[Polynomial] | None = None, factor: float = 20.0) -> float:
    """``factor / |Re lambda|`` for the least stable eigenvalue of the linearization."""
    loop = fieldv.closed_loop(u) if u is not None else fieldv.drift()
    n = loop.n
    zero = np.zeros((1, n))
    J = np.array([[d.evaluate(zero)[0] for d in fi.gradient()] for fi in loop.f])
    re = np.linalg.eigvals(J).real.max()
    if re >= 0:
        raise ValueError(f"linearization is not asymptotically stable (max Re = {re:g})")
    return factor / abs(re)


# -- volumes ------------------------------------------------------------------


def estimate_volume(h: Polynomial, box, n: int = 1_000_000, seed: int = 0, check: bool = True,
                    chunk: int = 200_000) -> VolumeEstimate:
    """Monte-Carlo volume of ``{h >= 0}`` inside ``box`` with binomial standard error."""
    box = np.asarray(box, dtype=float)
    if check:
        check_box(h, box, seed=seed)
    rng = np.random.default_rng(seed)
    width = box[:, 1] - box[:, 0]
    hits = 0
    left = n
    while left > 0:
        k = min(chunk, left)
        pts = box[:, 0] + rng.random((k, box.shape[0])) * width
        hits += int(np.count_nonzero(h.evaluate(pts) >= 0))
        left -= k
    bv = float(np.prod(width))
    p = hits / n
    return VolumeEstimate(p * bv, bv * math.sqrt(p * (1 - p) / n), n, box.tolist(), seed)


def quadratic_parts(h: Polynomial):
    """``(c, b, A)`` with ``h = c + b.x + x.A.x``; error if degree > 2."""
    if h.degree() > 2:
        raise ValueError("not a quadratic polynomial")
    n = h.n
    c = 0.0
    b = np.zeros(n)
    A = np.zeros((n, n))
    for m, coef in h.items():
        idx = [i for i, e in enumerate(m) for _ in range(e)]
        if not idx:
            c = coef
        elif len(idx) == 1:
            b[idx[0]] = coef
        elif idx[0] == idx[1]:
            A[idx[0], idx[0]] = coef
        else:
            A[idx[0], idx[1]] = A[idx[1], idx[0]] = coef / 2
    return c, b, A


def ellipsoid_volume(h: Polynomial) -> float:
    """Closed-form volume of ``{h >= 0}`` for quadratic ``h`` with negative-definite part."""
    c, b, A = quadratic_parts(h)
    P = -A
    eig = np.linalg.eigvalsh(P)
    if eig[0] <= 0:
        raise ValueError("quadratic part is not negative definite; {h >= 0} is not an ellipsoid")
    n = h.n
    r2 = c + 0.25 * b @ np.linalg.solve(P, b)
    if r2 <= 0:
        return 0.0
    unit = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return float(unit * r2 ** (n / 2) / math.sqrt(np.prod(eig)))


def box_for(h: Polynomial) -> np.ndarray:
    box = region_box(h)
    check_box(h, box)
    return box


# -- zero sets ----------------------------------------------------------------


def zero_set_samples(p: Polynomial, box, n_lines: int = 20000, seed: int = 0) -> np.ndarray:
    """Points of ``{p = 0}`` inside ``box`` found as roots along random lines."""
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    deg = p.degree()
    if deg < 1:
        return np.zeros((0, n))
    rng = np.random.default_rng(seed)
    a = box[:, 0] + rng.random((n_lines, n)) * (box[:, 1] - box[:, 0])
    d = rng.normal(size=(n_lines, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    span = float(np.linalg.norm(box[:, 1] - box[:, 0]))
    nodes = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1)) * span
    vals = np.stack([p.evaluate(a + t * d) for t in nodes], axis=1)
    vand = np.vander(nodes / span, deg + 1)
    coefs = np.linalg.solve(vand, vals.T).T  # in s = t / span, highest power first
    pts = []
    for i in range(n_lines):
        row = coefs[i]
        if not np.any(row):
            continue
        r = np.roots(row)
        r = r[np.abs(r.imag) <= 1e-9].real * span
        q = a[i] + r[:, None] * d[i]
        inside = np.all((q >= box[:, 0]) & (q <= box[:, 1]), axis=1)
        pts.append(q[inside])
    return np.vstack(pts) if pts else np.zeros((0, n))


def boundary_distance(h: Polynomial, q: Polynomial, box, n_lines: int = 20000, seed: int = 0) -> float:
    """Smallest sampled distance between ``{h = 0}`` and ``{q = 0}`` inside ``box``."""
    P = zero_set_samples(h, box, n_lines, seed)
    Q = zero_set_samples(q, box, n_lines, seed + 1)
    if len(P) == 0 or len(Q) == 0:
        return float("inf")
    dist, _ = cKDTree(Q).query(P)
    return float(dist.min())


# -- full suite ------------------------------------------------------------------


def verify_result(result, fieldv: PolyVectorField, gamma: float = 1.0, unsafe: Sequence[Polynomial] = (),
                  n_samples: int = 100_000, n_trajectories: int = 100, n_volume: int = 1_000_000,
                  n_qp: int = 10_000, seed: int = 0, dt: float = 0.01, T: float | None = None,
                  invariance_tol: float = 1e-4, final_tol: float = 1e-2) -> VerificationReport:
    """Sampling checks, closed-loop simulations, QP feasibility and volumes."""
    h, V, u = result.h, result.V, result.u
    unsafe = list(unsafe)
    box = region_box(h)
    check_box(h, box, seed=seed)
    report = check_barrier_conditions(h, fieldv, V, gamma, u, unsafe, box, n_samples, seed)

    loop_u = list(u) if u is not None else None
    if T is None:
        T = horizon(fieldv, loop_u)
    ctrl = polynomial_controller(loop_u) if loop_u is not None else None
    if n_trajectories:
        X0 = uniform_region_samples(h, box, n_trajectories, seed)
        _, states, div = simulate_batch(fieldv, X0, dt, T, ctrl)
        flat = states.reshape(-1, states.shape[-1])
        hmin = h.evaluate(flat).reshape(states.shape[:2]).min(axis=0)
        if unsafe:
            qmin = np.min([q.evaluate(flat).reshape(states.shape[:2]).min(axis=0) for q in unsafe], axis=0)
        else:
            qmin = np.full(len(X0), np.nan)
        final = np.linalg.norm(states[-1], axis=1)
        for i in range(len(X0)):
            safe = bool(not unsafe or qmin[i] >= -invariance_tol)
            report.trajectories.append(TrajectorySummary(
                X0[i].tolist(), float(hmin[i]), None if not unsafe else float(qmin[i]), float(final[i]),
                bool(hmin[i] >= -invariance_tol), safe, bool(final[i] < final_tol and not div[i]), bool(div[i])))
        worst_h = float(hmin.min())
        report.checks.append(Check("trajectory_invariance", len(X0), worst_h, -invariance_tol,
                                   bool(worst_h >= -invariance_tol and (not unsafe or np.nanmin(qmin) >= -invariance_tol))))
        report.checks.append(Check("trajectory_convergence", len(X0), float(final_tol - final.max()), 0.0,
                                   bool(final.max() < final_tol and not div.any())))
    if fieldv.g is not None and n_qp:
        Xq = sample_region(h, box, n_qp, seed + 7)
        _, feas, slack = qp_controller_batch(Xq, V, h, fieldv, gamma)
        worst = float(slack[feas].min()) if feas.any() else float("-inf")
        report.checks.append(Check("qp_feasibility", len(Xq), worst if feas.all() else float("-inf"), -1e-9,
                                   bool(feas.all() and worst >= -1e-9)))

    if n_volume:
        # externally supplied certificates may come without a sublevel level
        h0 = getattr(result, "h_initial", None)
        regions = {"certified": h} if h0 is None else {"certified": h, "sublevel": h0}
        vbox = box if h0 is None else union_box(box, region_box(h0))
        for k, (key, poly) in enumerate(regions.items()):
            report.volumes[key] = estimate_volume(poly, vbox, n_volume, seed + k)
        for key, poly in regions.items():
            try:
                report.info[f"{key}_ellipsoid_volume"] = ellipsoid_volume(poly)
            except ValueError:
                pass
    report.info.update({"box": box.tolist(), "horizon": T, "dt": dt, "seed": seed})
    return report
