"""Feature-poisoning attacks on least-squares systems.

Both attacks search over perturbations ``delta`` of the training features in
a norm ball of radius ``epsilon``:

* **LP** (label-guided) maximizes the test error ``||y_t - X_t w'||`` of the
  solution ``w'`` fitted on ``(X + delta, y)``;
* **UP** (unconditioning) maximizes ``kappa(X + delta)`` and needs no labels.

The optimizer is projected gradient ascent on normalized gradient steps with
step halving on non-improvement and a keep-best iterate, started at
``delta = 0`` so the clean objective is always attainable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import linalg_core as lc
from .datagen import RegressionTask
from .errors import InnerSolveFailure, InvalidConfig, NumericallySingular, SingularMatrix

NORMS = ("spectral", "frobenius")
TIKHONOV = 1e-10


@dataclass(frozen=True)
class PerturbBudget:
    epsilon: float
    norm: str = "spectral"
    symmetric: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidConfig("epsilon must be positive")
        if self.norm not in NORMS:
            raise InvalidConfig(f"norm must be one of {NORMS}")


@dataclass(frozen=True)
class OptimizerParams:
    max_iter: int = 1000
    step_frac: float = 0.1  # initial step as a fraction of epsilon
    tol: float = 1e-10  # absolute improvement needed to accept a step
    max_halvings: int = 20
    grad_mode: str = "auto"  # auto | analytic | finite_diff
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.grad_mode not in ("auto", "analytic", "finite_diff"):
            raise InvalidConfig(f"unknown grad_mode {self.grad_mode!r}")
        if self.max_iter < 0 or self.max_halvings < 0 or not self.step_frac > 0:
            raise InvalidConfig("invalid optimizer parameters")


@dataclass
class AttackOutcome:
    delta: np.ndarray
    objective_trace: list
    iters: int
    grad_mode: str
    attack: str = ""
    budget: PerturbBudget | None = None
    notes: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        lc.mat_to_csv(self.delta, out / "delta.csv")
        payload = {
            "attack": self.attack,
            "objective_trace": [float(v) for v in self.objective_trace],
            "iters": self.iters,
            "grad_mode": self.grad_mode,
            "budget": asdict(self.budget) if self.budget else None,
            "notes": self.notes,
        }
        (out / "attack.json").write_text(json.dumps(payload, indent=2) + "\n")


def load_outcome(directory) -> AttackOutcome:
    src = Path(directory)
    meta = json.loads((src / "attack.json").read_text())
    budget = PerturbBudget(**meta["budget"]) if meta.get("budget") else None
    return AttackOutcome(
        lc.mat_from_csv(src / "delta.csv"), meta["objective_trace"], meta["iters"],
        meta["grad_mode"], meta.get("attack", ""), budget, meta.get("notes", []),
    )


# ---------------------------------------------------------------- projection


def perturbation_norm(delta, norm: str) -> float:
    return lc.opnorm2(delta) if norm == "spectral" else lc.fnorm(delta)


def project_ball(delta, budget: PerturbBudget) -> np.ndarray:
    """Euclidean (Frobenius-metric) projection onto the budget ball.

    Inputs already inside the ball (up to a 1e-12 relative slack) come back
    unchanged, which makes the map idempotent bit for bit.
    """
    d = lc.as_mat(delta, "delta")
    if budget.symmetric:
        if d.shape[0] != d.shape[1]:
            raise InvalidConfig("symmetric budget needs a square perturbation")
        d = 0.5 * (d + d.T)
    eps = budget.epsilon
    if budget.norm == "frobenius":
        nrm = lc.fnorm(d)
        if nrm <= eps * (1 + 1e-12):
            return d
        return d * (eps / nrm)
    dec = lc.svd(d)
    if dec.sigma[0] <= eps * (1 + 1e-12):
        return d
    out = (dec.u * np.minimum(dec.sigma, eps)) @ dec.v.T
    if budget.symmetric:
        out = 0.5 * (out + out.T)
    return out


# ---------------------------------------------------------------- optimizer


def _ascend(objective, gradient, shape, budget, opt):
    """Projected normalized-gradient ascent with halving and keep-best."""
    best = np.zeros(shape)
    f_best = objective(best)
    trace = [f_best]
    step0 = opt.step_frac * budget.epsilon
    step = step0
    iters = 0
    for _ in range(opt.max_iter):
        iters += 1
        g = gradient(best)
        gn = lc.fnorm(g) if g is not None and np.all(np.isfinite(g)) else 0.0
        if gn == 0.0:
            break
        direction = g / gn
        accepted = None
        for _ in range(opt.max_halvings + 1):
            cand = project_ball(best + step * direction, budget)
            try:
                f_cand = objective(cand)
            except (NumericallySingular, SingularMatrix, InnerSolveFailure):
                f_cand = -np.inf
            if f_cand > f_best + opt.tol:
                accepted = (cand, f_cand)
                break
            step *= 0.5
        if accepted is None:
            break
        best, f_best = accepted
        trace.append(f_best)
        step = min(2.0 * step, step0)
    return best, trace, iters


# ---------------------------------------------------------------- UP


def _kappa_gradient(a: np.ndarray):
    """Subgradient of sigma_max / sigma_min, or None when the extreme
    singular values are not simple."""
    dec = lc.svd(a)
    s = dec.sigma
    k = s.size
    if k < 2:
        return np.zeros_like(a)
    gap_top = s[0] - s[1]
    gap_bot = s[k - 2] - s[k - 1]
    if gap_top < 1e-10 * s[0] or gap_bot < 1e-10 * s[0]:
        return None
    smax, smin = s[0], s[k - 1]
    return (np.outer(dec.u[:, 0], dec.v[:, 0]) / smin
            - (smax / smin**2) * np.outer(dec.u[:, k - 1], dec.v[:, k - 1]))


def _fd_gradient(f, a: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        e = np.zeros_like(a)
        e[idx] = h
        g[idx] = (f(a + e) - f(a - e)) / (2 * h)
    return g


def attack_up(x, budget: PerturbBudget, opt: OptimizerParams | None = None) -> AttackOutcome:
    """Maximize kappa(x + delta) over the budget ball."""
    opt = opt or OptimizerParams()
    x = lc.as_mat(x)
    lc.cond2(x)  # precondition: x itself must be well defined
    used_fd = opt.grad_mode == "finite_diff"
    h = opt.fd_step * max(1.0, lc.opnorm2(x))

    def objective(delta):
        return lc.cond2(x + delta)

    def gradient(delta):
        nonlocal used_fd
        a = x + delta
        g = None if opt.grad_mode == "finite_diff" else _kappa_gradient(a)
        if g is None:
            used_fd = True
            try:
                g = _fd_gradient(lambda m: lc.cond2(m), a, h)
            except NumericallySingular:
                g = None
        return g

    best, trace, iters = _ascend(objective, gradient, x.shape, budget, opt)
    return AttackOutcome(best, trace, iters, "finite_diff" if used_fd else "analytic", "UP", budget)


# ---------------------------------------------------------------- LP


def inner_solve(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """w' = argmin ||y - a w||; Tikhonov-regularized only if the plain solve fails."""
    if a.shape[0] == a.shape[1]:
        lu, piv, status = K.lu_factor(a, lc.SINGULAR_RTOL)
        if status == K.OK:
            return K.lu_apply(lu, piv, y)
    gram = a.T @ a
    l, status = K.cholesky(gram, lc.SINGULAR_RTOL)
    if status != K.OK:
        l, status = K.cholesky(gram + TIKHONOV * np.eye(gram.shape[0]), 0.0)
        if status != K.OK:
            raise InnerSolveFailure("perturbed system is numerically singular")
    return K.cholesky_apply(l, a.T @ y)


def lp_objective(task: RegressionTask, delta: np.ndarray) -> float:
    w = inner_solve(task.x_train + delta, task.y_train)
    return float(np.linalg.norm(task.y_test - task.x_test @ w))


def solution_jacobian(a: np.ndarray, y: np.ndarray, mode: str = "analytic", h: float = 1e-6) -> np.ndarray:
    """d w' / d a as a (d, n, d) array, where w' solves the least-squares problem."""
    n, d = a.shape
    if mode == "finite_diff":
        jac = np.zeros((d, n, d))
        for i in range(n):
            for j in range(d):
                e = np.zeros_like(a)
                e[i, j] = h
                jac[:, i, j] = (inner_solve(a + e, y) - inner_solve(a - e, y)) / (2 * h)
        return jac
    w = inner_solve(a, y)
    r = y - a @ w
    g = _gram_inverse(a)
    ga = g @ a.T  # (d, n)
    # dw = G (dA^T r - A^T dA w)  for dA = E_ij
    return np.einsum("i,kj->kij", r, g) - np.einsum("j,ki->kij", w, ga)


def _gram_inverse(a: np.ndarray) -> np.ndarray:
    d = a.shape[1]
    return np.column_stack([inner_solve_gram(a, e) for e in np.eye(d)])


def inner_solve_gram(a: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Solve (a^T a) z = s, consistent with :func:`inner_solve`'s regularization."""
    gram = a.T @ a
    l, status = K.cholesky(gram, lc.SINGULAR_RTOL)
    if status != K.OK:
        l, status = K.cholesky(gram + TIKHONOV * np.eye(gram.shape[0]), 0.0)
        if status != K.OK:
            raise InnerSolveFailure("perturbed system is numerically singular")
    return K.cholesky_apply(l, s)


def lp_hypergradient(task: RegressionTask, delta: np.ndarray, mode: str = "analytic",
                     h: float = 1e-6) -> np.ndarray:
    """Gradient of the test error with respect to the training features.

    Where the test residual vanishes the error is a cone in ``delta``; the
    returned direction is then the steepest first-order ascent direction of
    that cone (top right singular vector of ``X_t dw'/dX``).
    """
    a = task.x_train + delta
    y = task.y_train
    w = inner_solve(a, y)
    e = task.x_test @ w - task.y_test
    err = float(np.linalg.norm(e))
    n, d = a.shape
    if err <= 1e-8 * max(float(np.linalg.norm(task.y_test)), 1e-300):
        jac = solution_jacobian(a, y, mode, h)
        m = task.x_test @ jac.reshape(d, n * d)
        top = lc.svd(m).v[:, 0]
        return top.reshape(n, d)
    s = task.x_test.T @ e / err
    if mode == "finite_diff":
        jac = solution_jacobian(a, y, mode, h)
        return np.einsum("k,kij->ij", s, jac)
    if n == d:
        q = lc.lu_solve(a.T, s)  # A^{-T} s
        return -np.outer(q, w)
    z = inner_solve_gram(a, s)
    r = y - a @ w
    return np.outer(r, z) - np.outer(a @ z, w)


def attack_lp(task: RegressionTask, budget: PerturbBudget,
              opt: OptimizerParams | None = None) -> AttackOutcome:
    """Maximize the test error of the solution fitted on perturbed features."""
    opt = opt or OptimizerParams()
    mode = opt.grad_mode
    if mode == "auto":
        mode = "analytic" if task.square else "finite_diff"
    h = opt.fd_step

    def objective(delta):
        return lp_objective(task, delta)

    def gradient(delta):
        try:
            return lp_hypergradient(task, delta, mode, h)
        except (InnerSolveFailure, SingularMatrix, NumericallySingular):
            return None

    best, trace, iters = _ascend(objective, gradient, task.x_train.shape, budget, opt)
    return AttackOutcome(best, trace, iters, mode, "LP", budget)


def run_attack(kind: str, task: RegressionTask, budget: PerturbBudget,
               opt: OptimizerParams | None = None) -> AttackOutcome:
    if kind == "LP":
        return attack_lp(task, budget, opt)
    if kind == "UP":
        return attack_up(task.x_train, budget, opt)
    raise InvalidConfig(f"unknown attack {kind!r}")
