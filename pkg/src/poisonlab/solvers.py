"""Direct and iterative solvers with residual tracking.

Every iterative method starts from x0 = 0 and records the true residual
norm ``||b - A x_k||_2`` at each iterate, so reports from different methods
(and preconditioned vs. plain runs) are directly comparable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import linalg_core as lc
from .errors import InvalidConfig, InvalidShape, NumericallySingular, ZeroDiagonal, ZeroPivot

KINDS = ("NES", "GD", "Jacobi", "GaussSeidel", "SOR", "CG", "GMRES")
ITERATIVE_KINDS = KINDS[1:]
STATIONARY = ("Jacobi", "GaussSeidel", "SOR")


@dataclass(frozen=True)
class SolverConfig:
    kind: str
    tol: float = 1e-8
    max_iter: int | None = None  # None: 10 n, or 1e5 for GD
    omega: float = 1.0
    step_size: float | None = None  # None: 1/L
    restart: int | None = None
    precondition: str = "none"  # or "ilu0"
    symmetrize: bool = False  # CG only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown solver kind {self.kind!r}")
        if not self.tol > 0:
            raise InvalidConfig("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise InvalidConfig("max_iter must be >= 1")
        if self.kind == "SOR" and not 0 < self.omega < 2:
            raise InvalidConfig("SOR needs 0 < omega < 2")
        if self.precondition not in ("none", "ilu0"):
            raise InvalidConfig(f"unknown preconditioner {self.precondition!r}")
        if self.restart is not None and self.restart < 1:
            raise InvalidConfig("restart must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise InvalidConfig("step_size must be positive")

    def iteration_cap(self, n: int) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 100_000 if self.kind == "GD" else 10 * n

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        return cls(**d)


@dataclass
class SolveReport:
    w: np.ndarray
    residual_history: list = field(default_factory=list)
    converged: bool = False
    breakdown: str | None = None
    b_norm: float = 1.0

    @property
    def n_end(self) -> int:
        return len(self.residual_history) - 1

    @property
    def relative_history(self) -> np.ndarray:
        return np.asarray(self.residual_history) / (self.b_norm or 1.0)

    def to_json(self) -> str:
        return json.dumps({
            "w": self.w.tolist(),
            "residual_history": [float(r) for r in self.residual_history],
            "n_end": self.n_end,
            "converged": self.converged,
            "breakdown": self.breakdown,
        })

    def history_csv(self, path) -> None:
        rows = ["iter,residual,relative_residual"]
        for k, (r, rel) in enumerate(zip(self.residual_history, self.relative_history)):
            rows.append(f"{k},{r:.17g},{rel:.17g}")
        Path(path).write_text("\n".join(rows) + "\n")


# ---------------------------------------------------------------- direct


def solve_nes(x, y) -> np.ndarray:
    """Least squares through the normal equations and a Cholesky factor."""
    x = lc.as_mat(x)
    y = lc.as_vect(y)
    if y.size != x.shape[0]:
        raise InvalidShape("label length does not match rows")
    gram = x.T @ x
    l, status = K.cholesky(gram, lc.SINGULAR_RTOL)
    if status != K.OK:
        raise NumericallySingular("X^T X is numerically singular")
    return K.cholesky_apply(l, x.T @ y)


# ---------------------------------------------------------------- ILU(0)


@dataclass(frozen=True)
class Ilu0:
    l: np.ndarray
    u: np.ndarray
    pattern: np.ndarray
    packed: np.ndarray

    def apply_inverse(self, r: np.ndarray) -> np.ndarray:
        return K.unit_lower_upper_apply(self.packed, r)


def ilu0(a, pattern=None) -> Ilu0:
    """Incomplete LU restricted to ``pattern`` (default: nonzeros of ``a``)."""
    a = lc.as_mat(a)
    if a.shape[0] != a.shape[1]:
        raise InvalidShape("ILU(0) needs a square matrix")
    mask = (a != 0.0) if pattern is None else np.asarray(pattern, dtype=bool)
    mask = mask | np.eye(a.shape[0], dtype=bool)
    packed, status = K.ilu0(a, mask)
    if status != K.OK:
        raise ZeroPivot("zero pivot in restricted elimination")
    l = np.tril(packed, -1) + np.eye(a.shape[0])
    u = np.triu(packed)
    return Ilu0(l=l, u=u, pattern=mask, packed=packed)


# ---------------------------------------------------------------- iterative


class _Tracker:
    """Residual bookkeeping shared by the iterative methods."""

    def __init__(self, a, b, tol, cap):
        self.a = a
        self.b = b
        self.bnorm = float(np.linalg.norm(b))
        self.tol = tol
        self.cap = cap
        self.history = [self.bnorm]
        self.x = np.zeros_like(b)

    def record(self, x) -> bool:
        """Store iterate x; return True when the run should stop."""
        if not np.all(np.isfinite(x)):
            return True
        r = float(np.linalg.norm(self.b - self.a @ x))
        if not np.isfinite(r):
            return True
        self.x = x.copy()
        self.history.append(r)
        return self.done

    @property
    def done(self) -> bool:
        return self.history[-1] <= self.tol * self.bnorm

    @property
    def exhausted(self) -> bool:
        return len(self.history) - 1 >= self.cap

    def report(self, breakdown=None) -> SolveReport:
        return SolveReport(self.x, self.history, self.done, breakdown, self.bnorm)


def _check_diag(a):
    if np.any(np.diag(a) == 0.0):
        raise ZeroDiagonal("zero on the diagonal")


def _stationary(a, b, cfg, t: _Tracker):
    _check_diag(a)
    d = np.diag(a)
    x = np.zeros_like(b)
    while not t.done and not t.exhausted:
        if cfg.kind == "Jacobi":
            x = (b - a @ x + d * x) / d
        elif cfg.kind == "GaussSeidel":
            K.gauss_seidel_sweep(a, b, x)
        else:
            K.sor_sweep(a, b, x, cfg.omega)
        if t.record(x) and not t.done:
            return t.report("diverged")
    return t.report()


def _gd(a, b, cfg, t: _Tracker):
    # f(w) = ||A w - b||^2, grad = 2 A^T (A w - b), L = 2 sigma_max(A)^2
    step = cfg.step_size
    if step is None:
        step = 1.0 / (2.0 * lc.opnorm2(a) ** 2)
    x, hist, status = K.gd_run(np.ascontiguousarray(a), b, step, t.tol, t.cap)
    t.x = x
    t.history = [float(h) for h in hist]
    return t.report(None if status == K.OK else "diverged")


def _cg(a, b, cfg, t: _Tracker, precond=None):
    if cfg.symmetrize:
        a = 0.5 * (a + a.T)
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r) if precond else r
    p = z.copy()
    rz = float(r @ z)
    while not t.done and not t.exhausted:
        ap = a @ p
        pap = float(p @ ap)
        if not pap > 0.0:
            return t.report("CgBreakdown: p^T A p <= 0")
        alpha = rz / pap
        x = x + alpha * p
        r = r - alpha * ap
        if t.record(x) and not t.done:
            return t.report("diverged")
        z = precond(r) if precond else r
        rz_new = float(r @ z)
        if rz == 0.0:
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return t.report()


def _gmres(a, b, cfg, t: _Tracker, precond=None):
    n = b.size
    m = cfg.restart or n
    apply = (lambda v: precond(a @ v)) if precond else (lambda v: a @ v)
    x0 = np.zeros_like(b)
    while not t.done and not t.exhausted:
        r0 = b - a @ x0
        if precond:
            r0 = precond(r0)
        beta = float(np.linalg.norm(r0))
        if beta == 0.0:
            break
        v = np.zeros((n, m + 1))
        h = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        v[:, 0] = r0 / beta
        x = x0
        for j in range(m):
            w = apply(v[:, j])
            for i in range(j + 1):  # modified Gram-Schmidt
                h[i, j] = w @ v[:, i]
                w = w - h[i, j] * v[:, i]
            h[j + 1, j] = np.linalg.norm(w)
            lucky = h[j + 1, j] <= 1e-14 * beta
            if not lucky:
                v[:, j + 1] = w / h[j + 1, j]
            for i in range(j):
                hi = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
                h[i + 1, j] = -sn[i] * h[i, j] + cs[i] * h[i + 1, j]
                h[i, j] = hi
            rho = np.hypot(h[j, j], h[j + 1, j])
            if rho == 0.0:
                return t.report("GMRES: singular Hessenberg")
            cs[j] = h[j, j] / rho
            sn[j] = h[j + 1, j] / rho
            h[j, j] = rho
            h[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            y = _back_substitute(h[: j + 1, : j + 1], g[: j + 1])
            x = x0 + v[:, : j + 1] @ y
            stop = t.record(x)
            if stop and not t.done:
                return t.report("diverged")
            if stop or t.exhausted:
                return t.report()
            if lucky:
                # invariant subspace reached: the Krylov solution is exact
                return t.report(None if t.done else "Arnoldi breakdown")
        x0 = x
    return t.report()


def _back_substitute(r, g):
    k = g.size
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - r[i, i + 1:] @ y[i + 1:]) / r[i, i]
    return y


def solve_iterative(a, b, cfg: SolverConfig) -> SolveReport:
    a = lc.as_mat(a)
    b = lc.as_vect(b)
    if a.shape[0] != a.shape[1] or b.size != a.shape[0]:
        raise InvalidShape("iterative solvers need a square system")
    if cfg.kind == "NES":
        raise InvalidConfig("NES is a direct solver; use solve_nes")
    if cfg.precondition != "none":
        return solve_preconditioned(a, b, cfg)
    t = _Tracker(a, b, cfg.tol, cfg.iteration_cap(b.size))
    if t.done:
        return t.report()
    if cfg.kind in STATIONARY:
        return _stationary(a, b, cfg, t)
    if cfg.kind == "GD":
        return _gd(a, b, cfg, t)
    if cfg.kind == "CG":
        return _cg(a, b, cfg, t)
    return _gmres(a, b, cfg, t)


def solve_preconditioned(a, b, cfg: SolverConfig, pattern=None) -> SolveReport:
    """ILU(0)-preconditioned GMRES (left) or CG; stopping uses the true residual."""
    a = lc.as_mat(a)
    b = lc.as_vect(b)
    if cfg.kind not in ("GMRES", "CG"):
        raise InvalidConfig("preconditioning is supported for GMRES and CG only")
    fac = ilu0(0.5 * (a + a.T) if cfg.kind == "CG" and cfg.symmetrize else a, pattern)
    t = _Tracker(a, b, cfg.tol, cfg.iteration_cap(b.size))
    if t.done:
        return t.report()
    if cfg.kind == "CG":
        return _cg(a, b, cfg, t, precond=fac.apply_inverse)
    return _gmres(a, b, cfg, t, precond=fac.apply_inverse)


def solve(x, y, cfg: SolverConfig) -> SolveReport:
    """Uniform entry point: NES for any shape, iterative methods for square."""
    if cfg.kind == "NES":
        w = solve_nes(x, y)
        r = float(np.linalg.norm(np.asarray(y) - np.asarray(x) @ w))
        return SolveReport(w, [r], True, None, float(np.linalg.norm(y)))
    return solve_iterative(x, y, cfg)


def config_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)
