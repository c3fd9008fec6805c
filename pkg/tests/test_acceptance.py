"""Acceptance checks, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL`` line with the measured
numbers before asserting, so ``pytest -v -s`` (or the captured output on
failure) shows the full scorecard.
"""

import math
import time

import numpy as np
import pytest

from poisonlab import analysis as an
from poisonlab import harness
from poisonlab import linalg_core as lc
from poisonlab.attacks import PerturbBudget, lp_hypergradient, lp_objective, project_ball, run_attack
from poisonlab.datagen import Rng, make_task, sdd_matrix
from poisonlab.solvers import ITERATIVE_KINDS, SolverConfig, solve, solve_iterative

SEEDS_20 = range(20)
SDD_EPS = [0.0, 0.4, 0.8, 1.2, 1.6, 2.0]
DENSE_EPS = [0.01, 0.1, 0.5, 1.0]


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")


# ---------------------------------------------------------------- shared campaigns


@pytest.fixture(scope="module")
def forward():
    cfg = harness.load_config("verify-bounds")
    t0 = time.perf_counter()
    res = harness.forward_campaign(cfg)
    res["seconds"] = time.perf_counter() - t0
    return res


@pytest.fixture(scope="module")
def sdd_deltas():
    t0 = time.perf_counter()
    out = {}
    for seed in SEEDS_20:
        task = make_task("sdd", seed)
        for eps in SDD_EPS:
            for attack in ("LP", "UP"):
                if eps == 0:
                    delta = np.zeros_like(task.x_train)
                else:
                    delta = run_attack(attack, task, PerturbBudget(eps)).delta
                out[(seed, eps, attack)] = (task, delta)
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------- 1


def test_criterion_1_forward_bound_deterministic(capsys, forward):
    cells = forward["cells"]
    usable = sum(c["usable"] for c in cells.values())
    viol = sum(c["violations"] for c in cells.values())
    # the output bound is folded into the violation count; recheck both explicitly
    for c in forward["runs"].values():
        for r in c["runs"]:
            assert r.sol_err_rel <= r.rel_bound and r.out_err <= r.out_bound
    ok = viol == 0 and usable > 0 and forward["seconds"] < 30
    report(capsys, 1, ok, f"{usable} usable runs over 100 seeds x 4 eps x 2 attacks, {viol} violations, "
                          f"{forward['seconds']:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_forward_ttest(capsys, forward):
    lines, ok = [], True
    for key, c in forward["cells"].items():
        if c["usable"] < 30:
            continue
        t = c["ttest"]
        good = t is not None and t["t_stat"] < 0 and t["p_value"] < 0.05
        ok &= good
        lines.append(f"{key}: t={t['t_stat']:.3f} p={t['p_value']:.4f}{'' if good else ' (no reject)'}")
    report(capsys, 2, ok, "; ".join(lines))
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_direct_solver_trend(capsys):
    t0 = time.perf_counter()
    nes = SolverConfig("NES")
    err = {}
    kap = {}
    for seed in SEEDS_20:
        task = make_task("dense", seed)
        for eps in DENSE_EPS:
            for attack in ("LP", "UP"):
                delta = run_attack(attack, task, PerturbBudget(eps)).delta
                m = an.evaluate(task, delta, nes)
                err.setdefault((eps, attack), []).append(m.abs_err)
                kap.setdefault((eps, attack), []).append(m.kappa)
    secs = time.perf_counter() - t0
    med = {k: float(np.median(v)) for k, v in err.items()}
    kmed = {k: float(np.median(v)) for k, v in kap.items()}
    a_ok = med[(1.0, "UP")] > med[(1.0, "LP")]
    b_ok = all(kmed[(e, "UP")] > kmed[(e, "LP")] for e in DENSE_EPS)
    ok = a_ok and b_ok and secs < 120
    detail = (f"(a) eps=1.0 median NES err UP={med[(1.0, 'UP')]:.4g} vs LP={med[(1.0, 'LP')]:.4g} "
              f"[{'ok' if a_ok else 'fails'}]; (b) median kappa UP/LP "
              + ", ".join(f"{e}:{kmed[(e, 'UP')]:.3g}/{kmed[(e, 'LP')]:.3g}" for e in DENSE_EPS)
              + f" [{'ok' if b_ok else 'fails'}]; {secs:.1f}s")
    report(capsys, 3, ok, detail)
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_iterative_trends(capsys, sdd_deltas):
    deltas, attack_secs = sdd_deltas
    t0 = time.perf_counter()
    kinds = ("Jacobi", "GaussSeidel", "SOR", "GD", "GMRES")
    cfgs = {k: SolverConfig(k) for k in kinds}
    err, n_end = {}, {}
    for (seed, eps, attack), (task, delta) in deltas.items():
        # errors are solver independent: the error of the exact perturbed solution
        err.setdefault((eps, attack), []).append(lp_objective(task, delta))
        for k in kinds:
            n_end.setdefault((eps, attack, k), []).append(an.evaluate(task, delta, cfgs[k]).n_end)
    secs = attack_secs + time.perf_counter() - t0
    me = {k: float(np.median(v)) for k, v in err.items()}
    mn = {k: float(np.median(v)) for k, v in n_end.items()}
    a_ok = all(me[(2.0, a)] > me[(0.0, a)] for a in ("LP", "UP"))
    b_ok = all(me[(e, "LP")] > me[(e, "UP")] for e in SDD_EPS if e >= 0.8)
    c_ok = all(mn[(2.0, a, k)] > mn[(0.0, a, k)] for a in ("LP", "UP") for k in ("Jacobi", "GaussSeidel", "SOR", "GD"))
    spans = {a: max(mn[(e, a, "GMRES")] for e in SDD_EPS) - min(mn[(e, a, "GMRES")] for e in SDD_EPS)
             for a in ("LP", "UP")}
    d_ok = all(s <= 2 for s in spans.values())
    ok = a_ok and b_ok and c_ok and d_ok and secs < 600
    detail = (
        "(a) median err eps 0->2: " + ", ".join(f"{a} {me[(0.0, a)]:.3g}->{me[(2.0, a)]:.3g}" for a in ("LP", "UP"))
        + f" [{'ok' if a_ok else 'fails'}]; (b) LP/UP err "
        + ", ".join(f"{e}:{me[(e, 'LP')]:.3g}/{me[(e, 'UP')]:.3g}" for e in SDD_EPS if e >= 0.8)
        + f" [{'ok' if b_ok else 'fails'}]; (c) n_end clean->2.0 "
        + ", ".join(f"{k}/{a} {mn[(0.0, a, k)]:g}->{mn[(2.0, a, k)]:g}" for k in ("Jacobi", "GaussSeidel", "SOR", "GD")
                    for a in ("LP", "UP"))
        + f" [{'ok' if c_ok else 'fails'}]; (d) GMRES median n_end by eps "
        + "; ".join(f"{a}: " + ",".join(f"{mn[(e, a, 'GMRES')]:g}" for e in SDD_EPS) + f" span {spans[a]:g}"
                    for a in ("LP", "UP"))
        + f" [{'ok' if d_ok else 'fails'}]; {secs:.1f}s"
    )
    report(capsys, 4, ok, detail)
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_gd_envelopes(capsys):
    clean = harness.gd_envelope_campaign(range(100))
    up = harness.gd_envelope_campaign(range(100), perturb_eps=0.8)
    ok = clean["violations"] == 0 and up["violations"] == 0 and clean["systems"] == up["systems"] == 100
    report(capsys, 5, ok, f"clean: {clean['violations']} violations over {clean['logged_iterations']} logged "
                          f"iterations; UP-perturbed (eps=0.8, measured alpha): {up['violations']} over "
                          f"{up['logged_iterations']}")
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_6_lp_divergence(capsys):
    res = harness.lp_divergence_campaign(200, seed=0)
    ok = res["failures"] == 0
    report(capsys, 6, ok, f"{res['failures']}/{res['instances']} random instances meeting the hypotheses violate "
                          f"the divergence floor (worst gap/bound = {res['worst_ratio']:.3f})")
    assert ok


# ---------------------------------------------------------------- 7


def _char_poly_roots(a):
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros((n, n))
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.roots(coeffs)


def test_criterion_7_oracle_equivalence(capsys):
    from scipy import integrate

    worst_solver = 0.0
    for seed in range(100):
        a = sdd_matrix(Rng(seed), 20, 0.3, 1.0)
        b = Rng(seed).spawn(7).uniform(20)
        ref = lc.lu_solve(a, b)
        for k in ITERATIVE_KINDS:
            rep = solve_iterative(a, b, SolverConfig(k))
            worst_solver = max(worst_solver, np.linalg.norm(rep.w - ref) / np.linalg.norm(ref) / 1e-8)
    worst_eig = 0.0
    for seed in range(200):
        r = np.random.default_rng(seed)
        a = r.normal(size=(1 + seed % 4,) * 2)
        got = lc.eigvals_general(a)
        worst_eig = max(worst_eig, max(np.min(np.abs(got - z)) for z in _char_poly_roots(a)))
    worst_grad = 0.0
    for seed in range(20):
        task = make_task("sdd", seed, n=6) if seed % 2 else make_task("dense", seed)
        d = project_ball(np.random.default_rng(seed).normal(size=task.x_train.shape), PerturbBudget(0.1))
        ga = lp_hypergradient(task, d, "analytic")
        fd = np.zeros_like(d)
        for idx in np.ndindex(d.shape):
            e = np.zeros_like(d)
            e[idx] = 1e-6
            fd[idx] = (lp_objective(task, d + e) - lp_objective(task, d - e)) / 2e-6
        worst_grad = max(worst_grad, np.max(np.abs(ga - fd)) / np.max(np.abs(fd)))
    worst_t = 0.0
    for df in (2, 5, 10, 99):
        c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(df * math.pi)
        for t in np.linspace(-8, 8, 33):
            val, _ = integrate.quad(lambda x: c * (1 + x * x / df) ** (-(df + 1) / 2), -np.inf, t,
                                    epsabs=1e-13, epsrel=1e-13)
            worst_t = max(worst_t, abs(an.student_t_cdf(t, df) - val))
    ok = worst_solver <= 100 and worst_eig <= 1e-7 and worst_grad <= 1e-4 and worst_t <= 1e-6
    report(capsys, 7, ok, f"solvers worst rel err = {worst_solver:.3g} x tol (limit 100); eig vs char poly "
                          f"{worst_eig:.2e}; hypergradient vs FD {worst_grad:.2e}; t CDF vs quadrature {worst_t:.2e}")
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_8_diagnostics(capsys, sdd_deltas):
    deltas, _ = sdd_deltas
    worst_step = 0.0
    max_rho = 0.0
    for seed in range(100):
        a = sdd_matrix(Rng(seed), 20, 0.3, 1.0)
        b = Rng(seed).spawn(3).uniform(20)
        for kind in ("Jacobi", "GaussSeidel", "SOR"):
            t = an.stationary_iteration_matrix(a, kind)
            c = an.stationary_offset(a, b, kind)
            x1 = solve_iterative(a, b, SolverConfig(kind, max_iter=1, tol=1e-30)).w
            x2 = solve_iterative(a, b, SolverConfig(kind, max_iter=2, tol=1e-30)).w
            worst_step = max(worst_step, np.max(np.abs(x1 - c)), np.max(np.abs(x2 - (t @ x1 + c))))
            max_rho = max(max_rho, lc.spectral_radius(t))
    worst_parseval = 0.0
    for seed in range(50):
        a = sdd_matrix(Rng(seed), 20, 0.3, 1.0)
        r0 = Rng(seed).spawn(5).uniform(20)
        _, total = an.cg_alignment(a, r0, 20)
        worst_parseval = max(worst_parseval, abs(total - r0 @ r0) / (r0 @ r0))
    plain, pre = [], []
    for (seed, eps, attack), (task, delta) in deltas.items():
        if eps != 2.0:
            continue
        plain.append(an.evaluate(task, delta, SolverConfig("GMRES")).n_end)
        pre.append(an.evaluate(task, delta, SolverConfig("GMRES", precondition="ilu0")).n_end)
    ilu_ok = np.median(pre) < np.median(plain)
    ok = worst_step <= 1e-12 and max_rho < 1 and worst_parseval <= 1e-10 and ilu_ok
    report(capsys, 8, ok, f"one-step vs T x + c {worst_step:.1e}; max rho(T) {max_rho:.4f}; Parseval rel "
                          f"{worst_parseval:.1e}; GMRES median n_end at eps=2.0 ILU(0) {np.median(pre):g} vs "
                          f"plain {np.median(plain):g}")
    assert ok
