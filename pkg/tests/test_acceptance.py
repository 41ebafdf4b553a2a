"""Acceptance suite: one test per criterion, each also logging a PASS/FAIL line.

The lines are collected in ``conftest.ACCEPTANCE_LINES`` and printed in the
terminal summary, so ``pytest tests/test_acceptance.py`` ends with a table.
"""

import time

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import ACCEPTANCE_LINES, example_spec, synthesized
from pbcert.certify import max_sublevel, max_sublevel_controlled
from pbcert.polynomial import Polynomial, VariableSet, random_polynomial
from pbcert.sdp import INFEASIBLE, OPTIMAL, SdpProblem, solve
from pbcert.sos import SosProblem
from pbcert.verify import boundary_distance, ellipsoid_volume, estimate_volume, region_box, union_box

EXAMPLES = ("example1", "example2", "example3", "example4")
LEVELS = {"example1": 0.9759, "example2": 8.0, "example3": 5.8628, "example4": 13.0124}


def record(k: int, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_sublevel_levels():
    parts, ok = [], True
    for name in EXAMPLES:
        spec = example_spec(name)
        t0 = time.perf_counter()
        if spec.field.g is None:
            c = max_sublevel(spec.field.drift(), spec.V).c_star
        else:
            c = max_sublevel_controlled(spec.field, spec.V, spec.unsafe).c_star
        secs = time.perf_counter() - t0
        rel = abs(c - LEVELS[name]) / LEVELS[name]
        ok &= rel <= 0.02 and secs < 60 and c == pytest.approx(synthesized(name).c_star)
        parts.append(f"{name} c*={c:.6g} (rel {rel:.1e}, {secs:.1f}s)")
    record(1, ok, "; ".join(parts))


def test_criterion_2_volume_dominance():
    parts, ok = [], True
    for name in EXAMPLES:
        vol = synthesized(name).verification.volumes
        cert, sub = vol["certified"], vol["sublevel"]
        good = cert.samples == 1_000_000 and cert.volume >= sub.volume - 2 * cert.stderr
        ok &= good
        parts.append(f"{name} {cert.volume:.4g} vs {sub.volume:.4g}")
    # same seed, same estimate
    res = synthesized("example1")
    box = union_box(region_box(res.h), region_box(res.h_initial))
    ok &= estimate_volume(res.h, box, 100_000, 4) == estimate_volume(res.h, box, 100_000, 4)
    record(2, ok, "; ".join(parts))


def test_criterion_3_three_state_volume_gain():
    res = synthesized("example2")
    gain = ellipsoid_volume(res.h) / ellipsoid_volume(res.h_initial) - 1.0
    record(3, 2.5 <= gain <= 3.5, f"gain {100 * gain:.1f}% (reference 297.4%)")


def test_criterion_4_certificate_validity():
    parts, ok = [], True
    for name in EXAMPLES:
        rep = synthesized(name).verification
        names = ["lyapunov_decrease", "barrier"] + [f"containment_{i + 1}" for i in range(len(example_spec(name).unsafe))]
        checks = [rep.check(n) for n in names]
        good = all(c.passed and c.threshold == -1e-6 for c in checks) and checks[1].samples == 100_000
        ok &= good
        worst = min(c.worst_margin for c in checks)
        parts.append(f"{name} {'ok' if good else 'FAIL'} (worst {worst:.2e})")
    record(4, ok, "; ".join(parts))


def test_criterion_5_invariance_and_convergence():
    parts, ok = [], True
    for name in EXAMPLES:
        rep = synthesized(name).verification
        inv, conv = rep.check("trajectory_invariance"), rep.check("trajectory_convergence")
        good = inv.passed and conv.passed and inv.samples == 100
        ok &= good
        final = max(t.final_norm for t in rep.trajectories)
        parts.append(f"{name} min h {inv.worst_margin:.1e}, max |x(T)| {final:.1e}")
    record(5, ok, "; ".join(parts))


def test_criterion_6_qp_feasibility():
    parts, ok = [], True
    for name in ("example3", "example4"):
        c = synthesized(name).verification.check("qp_feasibility")
        good = c.passed and c.samples == 10_000
        ok &= good
        parts.append(f"{name} min slack {c.worst_margin:.1e}")
    record(6, ok, "; ".join(parts))


def _sos_status(p: Polynomial) -> str:
    prob = SosProblem(p.vars)
    prob.add_sos(p)
    return prob.solve().status


def _two_by_two_oracle(C, A):
    # minimum of the generalized Rayleigh quotient on a fine angle grid
    t = np.linspace(0.0, np.pi, 200_001)
    v = np.stack([np.cos(t), np.sin(t)])
    num = np.einsum("ik,ij,jk->k", v, C, v)
    den = np.einsum("ik,ij,jk->k", v, A, v)
    return float(np.min(num / den))


def test_criterion_7_sos_stack_soundness():
    rng = np.random.default_rng(2024)
    feasible = 0
    for _ in range(50):
        v = VariableSet.standard(int(rng.integers(1, 4)))
        p = Polynomial.zero(v)
        for _ in range(int(rng.integers(1, 4))):
            q = random_polynomial(v, int(rng.integers(1, 3)), rng)
            p = p + q * q
        feasible += _sos_status(p) == OPTIMAL
    infeasible, tried = 0, 0
    while tried < 50:
        v = VariableSet.standard(int(rng.integers(1, 4)))
        p = random_polynomial(v, int(rng.choice([2, 4])), rng)
        if p.evaluate(rng.uniform(-2, 2, size=(200, v.n))).min() >= 0:
            continue
        tried += 1
        infeasible += _sos_status(p) == INFEASIBLE
    worst = 0.0
    iu = np.triu_indices(2)
    w = np.where(iu[0] == iu[1], 1.0, 2.0)
    for _ in range(25):
        M, R = rng.normal(size=(2, 2, 2))
        C, A = M + M.T, R @ R.T + 0.2 * np.eye(2)
        sol = solve(SdpProblem([2], 0, sp.csr_matrix((A[iu] * w)[None, :]), [1.0], C[iu] * w))
        worst = max(worst, abs(sol.objective - _two_by_two_oracle(C, A)))
    ok = feasible == 50 and infeasible == 50 and worst <= 1e-6
    record(7, ok, f"(a) {feasible}/50 feasible, (b) {infeasible}/50 infeasible, (c) max error {worst:.1e}")


def test_criterion_8_boundary_touching():
    spec, res = example_spec("example3"), synthesized("example3")
    box = union_box(region_box(res.h), region_box(res.h_initial), np.array([[-6.0, 6.0], [-6.0, 7.0]]))
    d_sub = [boundary_distance(res.h_initial, q, box) for q in spec.unsafe]
    d_fin = [boundary_distance(res.h, q, box) for q in spec.unsafe]
    ok = sum(d <= 0.05 for d in d_sub) == 1 and all(d <= 0.05 for d in d_fin)
    record(8, ok, "sublevel " + ", ".join(f"{d:.3f}" for d in d_sub) + "; final " + ", ".join(f"{d:.3f}" for d in d_fin))
