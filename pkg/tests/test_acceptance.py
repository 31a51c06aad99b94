"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""
import time

import numpy as np
import pytest
from scipy.special import j0

from infbend.bending import (
    bendability_flag, bending_space_dimension, pointwise_constraint_kernel, ruled_bending, synthesize,
    triviality_test, verify_bending,
)
from infbend.examples import build_example, clifford_family, nonbendable_family, random_rotation
from infbend.grid_calculus import ScalarField, make_grid
from infbend.hypersurface import classify, envelope_crosscheck, gate, hyperbolic_check, to_orthonormal
from infbend.pde_solvers import GoursatProblem, solve_goursat


@pytest.fixture
def report(capsys, request):
    def emit(number, title, checks, elapsed, budget=None):
        ok = all(v for _, v in checks)
        if budget is not None:
            checks = checks + [(f"runtime {elapsed:.2f}s < {budget}s", elapsed < budget)]
            ok = ok and elapsed < budget
        detail = "; ".join(f"{name}{'' if v else ' [FAILED]'}" for name, v in checks)
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} {title}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def clifford65():
    t0 = time.perf_counter()
    ex = build_example("clifford", 65, 9)
    return ex, time.perf_counter() - t0


def _goursat_corner(n):
    g = make_grid((0, 1), (0, 1), n, n)
    sol = solve_goursat(GoursatProblem(ScalarField(g, np.ones(g.shape)), np.ones(n), np.ones(n)))
    return sol.values[-1, -1]


def test_criterion_1_goursat_convergence(report):
    t0 = time.perf_counter()
    exact = j0(2.0)        # sum_k (-1)^k / (k!)^2
    e65 = abs(_goursat_corner(65) - exact)
    e129 = abs(_goursat_corner(129) - exact)
    ratio = e65 / e129
    report(1, "Goursat convergence", [
        (f"|err| on 129^2 = {e129:.2e} <= 1e-3", e129 <= 1e-3),
        (f"error ratio 65/129 = {ratio:.3f} in [3.2, 4.8]", 3.2 <= ratio <= 4.8),
    ], time.perf_counter() - t0, 5)


def test_criterion_2_gauss_parametrization(report, clifford65):
    ex, build_time = clifford65
    t0 = time.perf_counter()
    hyp = ex.hyp
    tol = gate(hyp.chart.h)
    d = hyp.diagnostics
    report(2, "Gauss-parametrization consistency (65x65x9)", [
        (f"<N, psi_i> = {d['normal-tangent']:.2e} <= 1e-8", d["normal-tangent"] <= 1e-8),
        (f"independent normal = {d['normal-independent']:.2e} <= {tol:.3g}", d["normal-independent"] <= tol),
        (f"|A j + j P_w^-1| = {d['shape-crosscheck']:.2e} <= {tol:.3g}", d["shape-crosscheck"] <= tol),
        (f"regular nodes {hyp.regular_mask.mean():.0%}", hyp.regular_mask.any()),
    ], build_time + time.perf_counter() - t0, 10)


def test_criterion_3_envelope_equivalence(report, clifford65):
    ex, _ = clifford65
    t0 = time.perf_counter()
    env = envelope_crosscheck(ex.hyp, ex.family, count=5)
    report(3, "envelope/parametrization equivalence", [
        (f"max leaf distance over {env['nodes']} nodes = {env['max_distance']:.2e} <= 1e-6",
         env["max_distance"] <= 1e-6 and env["nodes"] == 25),
    ], time.perf_counter() - t0, 5)


@pytest.fixture(scope="module")
def clifford65_bending(clifford65):
    ex, _ = clifford65
    t0 = time.perf_counter()
    cls = classify(ex.hyp)
    bt = synthesize(ex.hyp, cls)
    rep = verify_bending(ex.hyp, bt.Tcal, 0.5, bt.B_chart, bt.Ycal, bt.L_cols)
    return bt, rep, time.perf_counter() - t0


def test_criterion_4_bending_synthesis(report, clifford65_bending):
    bt, rep, elapsed = clifford65_bending
    checks = [(f"{k} = {rep[k]['value']:.2e} <= {rep[k]['gate']:.3g}", rep[k]["pass"])
              for k in ("iif", "var", "tau", "theta", "beta", "recovered-B")]
    checks += [(f"{k} = {bt.residuals[k]:.2e} <= {bt.gates[k]:.3g}", bt.residuals[k] <= bt.gates[k])
               for k in ("S-compat", "T-path")]
    report(4, "bending synthesis and verification (65x65x9)", checks, elapsed, 30)


def test_criterion_5_nontriviality_and_uniqueness(report, clifford65, clifford65_bending):
    ex, _ = clifford65
    bt, _, _ = clifford65_bending
    t0 = time.perf_counter()
    tr = triviality_test(ex.hyp, bt.Tcal)
    dim = bending_space_dimension(ex.hyp)
    counts = tuple(int(c) for c in dim["probe"][1])
    report(5, "non-triviality and uniqueness", [
        (f"triviality residual = {tr.residual:.3f} > 1e-2", tr.residual > 1e-2 and not tr.is_trivial),
        (f"probe {counts[0]}x{counts[1]}x{counts[2]} nullity = {dim['nullity']} == 1",
         dim["nullity"] == 1 and counts == (9, 9, 3)),
        (f"gap ratio = {dim['gap_ratio']:.2e} > 1e3", dim["gap_ratio"] > 1e3),
    ], time.perf_counter() - t0, 60)


def test_criterion_6_rank_three_rigidity(report):
    t0 = time.perf_counter()
    hyp = build_example("sphere-patch").hyp
    Ao = to_orthonormal(hyp.A_chart, hyp.safe_metric).reshape(-1, 3, 3)
    picks = np.random.default_rng(0).choice(Ao.shape[0], 100, replace=False)
    kernels = [pointwise_constraint_kernel(Ao[p]) for p in picks]
    smin = min(float(k.singular_values[-1]) for k in kernels)
    empty = all(k.basis == [] for k in kernels)
    dim = bending_space_dimension(hyp)
    report(6, "rank-3 rigidity (sphere patch)", [
        (f"pointwise kernel {{0}} at 100 points: {empty}", empty),
        (f"smallest constraint singular value = {smin:.3f} > 0.1", smin > 0.1),
        (f"global nullity = {dim['nullity']} == 0", dim["nullity"] == 0),
    ], time.perf_counter() - t0)


def test_criterion_7_classification_dichotomy(report):
    t0 = time.perf_counter()
    Q = random_rotation(4, seed=7)
    checks = []
    results = {}
    for name, expected in (("cone", "surface-like"), ("ruled-demo", "ruled"),
                           ("clifford", "hyperbolic"), ("elliptic-demo", "elliptic")):
        ex = build_example(name)
        cls = classify(ex.hyp)
        rot = classify(build_example(name, rotation=Q).hyp)
        results[name] = (ex, cls)
        checks.append((f"{name} -> {cls.verdict}", cls.verdict == expected))
        dev = 0.0 if cls.J_bar is None else float(np.max(np.abs(cls.J_bar - rot.J_bar)))
        checks.append((f"{name} rotated -> {rot.verdict}, |dJ| = {dev:.1e} <= 1e-10",
                       rot.verdict == cls.verdict and dev <= 1e-10))
    ex, cls = results["ruled-demo"]
    ruled_tol = 100 * ex.hyp.chart.plane().h ** 2
    checks.append((f"ruled det D = {cls.residuals['det-D']:.1e} <= {ruled_tol:.3g}",
                   cls.residuals["det-D"] <= ruled_tol))
    for name, kind in (("clifford", "hyperbolic"), ("elliptic-demo", "elliptic")):
        J = results[name][1].J_bar
        r = hyperbolic_check(J, kind)
        checks.append((f"{name} |J^2 {'-' if kind == 'hyperbolic' else '+'} I| = {r:.1e}", r < 1e-8))
    report(7, "classification dichotomy", checks, time.perf_counter() - t0)


def test_criterion_8_ruled_family(report):
    t0 = time.perf_counter()
    ex = build_example("ruled-demo")
    hyp = ex.hyp
    cls = classify(hyp)
    rb1 = ruled_bending(hyp, cls, 1.0, t_values=(0.1, 1.0))
    rb2 = ruled_bending(hyp, cls, 2.0, t_values=(0.1, 1.0))
    tol = gate(hyp.chart.h)
    dim = bending_space_dimension(hyp)
    seed_nodes = int(dim["probe"][1][0])
    checks = [(f"Codazzi A(t={t:g}) = {v:.2e} <= {tol:.3g}", v <= tol) for t, v in rb1.codazzi.items()]
    checks += [("theta0 -> 2 theta0 doubles theta exactly", np.array_equal(rb2.theta_ruled, 2 * rb1.theta_ruled)),
               (f"nullity = {dim['nullity']} == seed-curve nodes {seed_nodes}", dim["nullity"] == seed_nodes)]
    report(8, "ruled family", checks, time.perf_counter() - t0)


def test_criterion_9_bendability_flag(report):
    t0 = time.perf_counter()
    cl = bendability_flag(clifford_family(make_grid((-0.5, 0.5), (-0.5, 0.5), 33, 33)))
    nb = bendability_flag(nonbendable_family(make_grid((-0.3, 0.3), (-0.3, 0.3), 33, 33)))
    report(9, "bendability flag", [
        (f"Clifford bendable, residual {cl['residual']:.1e}", cl["bendable"] and cl["residual"] == 0),
        (f"(1, u, v, u+v) not bendable, residual {nb['residual']:.3f} >= 1",
         not nb["bendable"] and nb["residual"] >= 1),
    ], time.perf_counter() - t0)
