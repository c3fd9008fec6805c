"""Metrics, perturbation bounds and their verifiers, spectral diagnostics and
the one-sided t-test used to check the forward bound empirically."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import linalg_core as lc
from .datagen import RegressionTask
from .errors import (
    DefectiveMatrix,
    InvalidAlpha,
    InvalidConfig,
    InvalidShape,
    NotSymmetric,
    NumericallySingular,
    PoisonLabError,
    PreconditionFailed,
    TooFewSamples,
    ZeroDiagonal,
    ZeroVariance,
)
from .solvers import SolverConfig, solve, solve_preconditioned

# ---------------------------------------------------------------- metrics


@dataclass
class EvalMetrics:
    abs_err: float
    rsd: float
    sol_err_abs: float
    sol_err_rel: float
    kappa: float
    n_end: int
    converged: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _safe_kappa(a: np.ndarray) -> float:
    try:
        return lc.cond2(a)
    except NumericallySingular:
        return math.inf


def _run(a, b, cfg: SolverConfig, pattern=None):
    if cfg.precondition != "none":
        return solve_preconditioned(a, b, cfg, pattern)
    return solve(a, b, cfg)


def evaluate(task: RegressionTask, delta, solver_cfg: SolverConfig, ilu_pattern=None) -> EvalMetrics:
    """Fit clean and perturbed systems with the same solver and compare.

    A solver failure on the perturbed system is recorded, not raised:
    ``converged`` is false and ``n_end`` is the iteration cap. Iterative
    solvers still contribute their last finite iterate; a direct solve that
    fails leaves no iterate, so its error fields are infinite.
    """
    delta = lc.as_mat(delta, "delta")
    if delta.shape != task.x_train.shape:
        raise InvalidShape("delta shape does not match the training matrix")
    a = task.x_train + delta
    cap = solver_cfg.iteration_cap(a.shape[1])
    try:
        w = _run(task.x_train, task.y_train, solver_cfg, ilu_pattern).w
    except PoisonLabError:
        w = task.w_ref
    try:
        rep = _run(a, task.y_train, solver_cfg, ilu_pattern)
        w2, n_end, ok = rep.w, rep.n_end, rep.converged
        if not ok:
            n_end = cap
    except PoisonLabError:
        w2, n_end, ok = None, cap, False
    yt_norm = float(np.linalg.norm(task.y_test))
    if w2 is None:
        abs_err = sol_abs = math.inf
    else:
        abs_err = float(np.linalg.norm(task.y_test - task.x_test @ w2))
        sol_abs = float(np.linalg.norm(w - w2))
    w_norm = float(np.linalg.norm(w))
    return EvalMetrics(
        abs_err=abs_err,
        rsd=abs_err / yt_norm if yt_norm > 0 else (0.0 if abs_err == 0 else math.inf),
        sol_err_abs=sol_abs,
        sol_err_rel=sol_abs / w_norm if w_norm > 0 else (0.0 if sol_abs == 0 else math.inf),
        kappa=_safe_kappa(a),
        n_end=int(n_end),
        converged=bool(ok),
    )


# ---------------------------------------------------------------- reports


@dataclass
class BoundReport:
    kind: str  # ForwardRel | ForwardOutput | UpRate | LpDivergence
    bound_value: float
    empirical_value: float
    precondition_ok: bool
    holds: bool
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TTestReport:
    t_stat: float
    p_value: float
    df: int
    n_samples: int
    reject_null: bool
    xi: float = 0.05

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- Student t


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        step = d * c
        h *= step
        if abs(step - 1.0) < 1e-15:
            return h
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc_reg(0.5 * df, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def one_sided_ttest(d, xi: float = 0.05) -> TTestReport:
    """H0: mean(d) >= 0 against H1: mean(d) < 0."""
    d = np.asarray(d, dtype=float).reshape(-1)
    n = d.size
    if n < 3:
        raise TooFewSamples(f"need at least 3 samples, got {n}")
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ZeroVariance("all differences are identical; p-value undefined")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    p = student_t_cdf(t, n - 1)
    return TTestReport(t, p, n - 1, n, p < xi, xi)


# ---------------------------------------------------------------- forward bound


def forward_bounds(x, w, epsilon: float) -> tuple[float, float]:
    """(relative solution bound, output bound) for a feature perturbation of
    spectral norm at most ``epsilon``."""
    x = lc._square(x)
    inv = lc.inv_norm2(x)
    q = epsilon * inv
    if not q < 1:
        raise PreconditionFailed(f"epsilon * ||X^-1|| = {q:.6g} is not below 1")
    rel = q / (1 - q)
    out = epsilon * float(np.linalg.norm(w)) * lc.cond2(x) / (1 - q)
    return rel, out


@dataclass
class ForwardRun:
    seed: int
    attack: str
    epsilon: float
    sol_err_rel: float
    rel_bound: float
    out_err: float
    out_bound: float

    @property
    def d(self) -> float:
        return self.sol_err_rel - self.rel_bound


@dataclass
class ForwardCampaign:
    runs: list
    excluded: int
    ttest: TTestReport | None
    error: str | None = None

    def violations(self) -> list:
        return [r for r in self.runs if r.sol_err_rel > r.rel_bound or r.out_err > r.out_bound]


def verify_forward(tasks, epsilon: float, xi: float = 0.05, attack: str = "LP",
                   opt=None, solver_cfg: SolverConfig | None = None) -> ForwardCampaign:
    """Attack each square task, compare the NES solution error with the
    forward bound and t-test the gaps ``d_i = err_i - bound_i``."""
    from .attacks import PerturbBudget, run_attack

    cfg = solver_cfg or SolverConfig("NES")
    runs, excluded = [], 0
    for i, task in enumerate(tasks):
        if not task.square:
            raise InvalidShape("forward-bound verification needs square tasks")
        try:
            rel_b, out_b = forward_bounds(task.x_train, task.w_ref, epsilon)
        except (PreconditionFailed, NumericallySingular):
            excluded += 1
            continue
        out = run_attack(attack, task, PerturbBudget(epsilon, "spectral"), opt)
        w = solve(task.x_train, task.y_train, cfg).w
        w2 = solve(task.x_train + out.delta, task.y_train, cfg).w
        rel = float(np.linalg.norm(w - w2) / np.linalg.norm(w))
        out_err = float(np.linalg.norm(task.x_train @ (w2 - w)))
        runs.append(ForwardRun(int(task.meta.get("seed", i)), attack, epsilon, rel, rel_b, out_err, out_b))
    try:
        report = one_sided_ttest([r.d for r in runs], xi)
        err = None
    except (TooFewSamples, ZeroVariance) as exc:
        report, err = None, f"{type(exc).__name__}: {exc}"
    return ForwardCampaign(runs, excluded, report, err)


# ---------------------------------------------------------------- GD rate


def up_rate_bound(c: float, gamma: float, alpha: float, l_clean: float, beta: float):
    """Suboptimality envelope of GD on a system whose smoothness grew by alpha^2.

    Returns ``(bound, t_min)`` where ``bound(T) = C / (gamma (2 - gamma alpha^2 L) T)``
    and ``t_min`` is the iteration count that guarantees accuracy ``beta``.
    """
    if not (gamma > 0 and l_clean > 0 and alpha > 0 and beta > 0 and c >= 0):
        raise InvalidConfig("c >= 0 and gamma, alpha, l_clean, beta > 0 required")
    denom = gamma * (2.0 - gamma * alpha * alpha * l_clean)
    if denom <= 0:
        raise InvalidAlpha(f"2 - gamma alpha^2 L = {denom / gamma:.6g} is not positive")

    def bound(t):
        return c / (denom * t)

    return bound, c / (denom * beta)


def gd_envelope_check(x, y, gamma: float | None = None, l_clean: float | None = None,
                      alpha: float = 1.0, tol: float = 1e-8) -> dict:
    """Run GD on ``||x w - y||^2`` and compare the best-so-far suboptimality
    with the envelope at every logged iteration.

    ``l_clean`` and ``alpha`` describe the smoothness as ``alpha^2 * l_clean``;
    by default ``l_clean`` is the smoothness of ``x`` itself.
    """
    x = lc.as_mat(x)
    y = lc.as_vect(y)
    l_sys = gd_smoothness(x)
    if l_clean is None:
        l_clean = l_sys / (alpha * alpha)
    gamma = gamma if gamma is not None else 1.0 / (alpha * alpha * l_clean)
    w_star = lc.lstsq(x, y)
    f_star = float(np.sum((x @ w_star - y) ** 2))
    c = float(np.sum(w_star**2))  # x0 = 0
    bound, _ = up_rate_bound(c, gamma, alpha, l_clean, 1.0)
    rep = solve(x, y, SolverConfig("GD", tol=tol, step_size=gamma))
    f = np.asarray(rep.residual_history) ** 2 - f_star
    gaps = np.minimum.accumulate(f)
    t = np.arange(1, gaps.size)
    env = np.array([bound(k) for k in t])
    viol = np.nonzero(gaps[1:] > env)[0]
    return {
        "iterations": int(t.size),
        "violations": int(viol.size),
        "first_violation": int(t[viol[0]]) if viol.size else None,
        "gamma": gamma,
        "alpha": alpha,
        "l_clean": l_clean,
        "c": c,
        "converged": rep.converged,
    }


# ---------------------------------------------------------------- LP divergence


def lp_divergence_bound(x, epsilon: float, eta: float) -> float:
    """Claimed floor (eta / ||X||) / (1 + epsilon ||X^-1||) on ||w* - w'*||."""
    x = lc._square(x)
    if eta < 0 or epsilon < 0:
        raise InvalidConfig("epsilon and eta must be non-negative")
    return (eta / lc.opnorm2(x)) / (1.0 + epsilon * lc.inv_norm2(x))


def verify_lp_divergence(x, dx, dy, y, epsilon: float, eta: float) -> BoundReport:
    """Solve the clean system ``x w = y`` and the perturbed system
    ``(x + dx) w' = y + dy`` and check the divergence floor."""
    x = lc._square(x)
    dx = lc.as_mat(dx, "dx")
    dy = lc.as_vect(dy, "dy")
    y = lc.as_vect(y, "y")
    bound = lp_divergence_bound(x, epsilon, eta)
    pre = (lc.opnorm2(dx) <= epsilon * (1 + 1e-12)) and float(np.linalg.norm(dy)) >= eta * (1 - 1e-12)
    w = lc.lu_solve(x, y)
    w2 = lc.lu_solve(x + dx, y + dy)
    gap = float(np.linalg.norm(w - w2))
    return BoundReport("LpDivergence", bound, gap, pre, (gap >= bound) if pre else True,
                       {"epsilon": epsilon, "eta": eta})


# ---------------------------------------------------------------- diagnostics


def _split(a):
    a = lc._square(a)
    diag = np.diag(a).copy()
    if np.any(diag == 0):
        raise ZeroDiagonal("iteration matrix needs a nonzero diagonal")
    return a, np.diag(diag), np.tril(a, -1), np.triu(a, 1)


def _preconditioner(a, kind: str, omega: float):
    a, d, low, up = _split(a)
    if kind == "Jacobi":
        return d, -(low + up)
    if kind == "GaussSeidel":
        return d + low, -up
    if kind == "SOR":
        if not 0 < omega < 2:
            raise InvalidConfig("omega must lie in (0, 2)")
        return (d + omega * low) / omega, ((1 - omega) * d - omega * up) / omega
    raise InvalidConfig(f"no iteration matrix for {kind!r}")


def _lower_solve(m, b):
    # m is lower triangular (or diagonal) with a nonzero diagonal
    n = m.shape[0]
    out = np.zeros_like(b, dtype=float)
    for i in range(n):
        out[i] = (b[i] - m[i, :i] @ out[:i]) / m[i, i]
    return out


def stationary_iteration_matrix(a, kind: str, omega: float = 1.0) -> np.ndarray:
    """T in the update x <- T x + c for Jacobi, Gauss-Seidel or SOR."""
    m, n = _preconditioner(a, kind, omega)
    return np.column_stack([_lower_solve(m, col) for col in n.T])


def stationary_offset(a, b, kind: str, omega: float = 1.0) -> np.ndarray:
    """c in the update x <- T x + c."""
    m, _ = _preconditioner(a, kind, omega)
    return _lower_solve(m, lc.as_vect(b))


def iteration_spectral_radius(a, kind: str, omega: float = 1.0) -> float:
    return lc.spectral_radius(stationary_iteration_matrix(a, kind, omega))


def cg_alignment(a, r0, k: int = 5, symmetrize: bool = False) -> tuple[float, float]:
    """Squared projections of ``r0`` on the eigenvectors of the smallest
    eigenvalues: (first one, sum over the first ``k``)."""
    a = lc._square(a)
    r0 = lc.as_vect(r0, "r0")
    if not lc.is_symmetric(a, 1e-9):
        if not symmetrize:
            raise NotSymmetric("cg_alignment needs a symmetric matrix")
        a = 0.5 * (a + a.T)
    _, vecs = lc.eigh_sym(a)
    coef = (vecs.T @ r0) ** 2
    return float(coef[0]), float(np.sum(coef[: min(k, a.shape[0])]))


def gd_smoothness(x) -> float:
    return 2.0 * lc.opnorm2(x) ** 2


def eigvec_condition(a) -> float:
    vecs = lc.eig_general(a).vectors
    # singular values of a complex V are those of its real embedding, each twice
    re, im = vecs.real, vecs.imag
    s = lc.singular_values(np.block([[re, -im], [im, re]]))
    if s[-1] <= 1e-12 * s[0]:
        raise DefectiveMatrix("eigenvector matrix is numerically singular")
    return float(s[0] / s[-1])


def spearman(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)
