"""Dense real linear algebra used by the rest of the package.

Matrices and vectors are plain float64 ``numpy`` arrays. The decompositions
(LU, Cholesky, one-sided Jacobi SVD, Hessenberg + Francis QR) are implemented
here rather than delegated to LAPACK so that results are a deterministic
function of the input bits; the inner loops live in :mod:`._kernels`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import (
    InvalidShape,
    NoConvergence,
    NonFiniteInput,
    NumericallySingular,
    SingularMatrix,
)

#: relative pivot / singular-value cutoff used throughout
SINGULAR_RTOL = 1e-13
MAX_SWEEPS = 80
MAX_QR_ITS = 60
MAX_DIM = 512


def as_mat(a, name: str = "matrix") -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidShape(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} has non-finite entries")
    return arr


def as_vect(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(-1) if np.ndim(v) <= 1 else None
    if arr is None or arr.size < 1:
        raise InvalidShape(f"{name} must be a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} has non-finite entries")
    return arr


def _square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = as_mat(a, name)
    if a.shape[0] != a.shape[1]:
        raise InvalidShape(f"{name} must be square, got {a.shape}")
    return a


@dataclass(frozen=True)
class Svd:
    u: np.ndarray  # n x k, orthonormal columns
    sigma: np.ndarray  # k, descending
    v: np.ndarray  # d x k, orthonormal columns

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


@dataclass(frozen=True)
class EigenDecomp:
    values: np.ndarray  # complex, length n
    vectors: np.ndarray  # complex n x n, unit-norm columns


# ---------------------------------------------------------------- solves


def lu_solve(a, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting.

    Raises :class:`SingularMatrix` when a pivot is at or below
    ``1e-13 * ||a||_inf``.
    """
    a = _square(a)
    b = as_vect(b, "rhs")
    if b.size != a.shape[0]:
        raise InvalidShape("rhs length does not match matrix")
    lu, piv, status = K.lu_factor(a, SINGULAR_RTOL)
    if status != K.OK:
        raise SingularMatrix("pivot below relative threshold")
    return K.lu_apply(lu, piv, b)


def cholesky_solve(s, b) -> np.ndarray:
    """Solve ``s x = b`` for symmetric positive definite ``s``."""
    s = _square(s)
    b = as_vect(b, "rhs")
    l, status = K.cholesky(s, SINGULAR_RTOL)
    if status != K.OK:
        raise NumericallySingular("Cholesky pivot below relative threshold")
    return K.cholesky_apply(l, b)


def lstsq(a, b) -> np.ndarray:
    """Minimum-norm least-squares solution through the SVD pseudoinverse."""
    a = as_mat(a)
    b = as_vect(b, "rhs")
    if b.size != a.shape[0]:
        raise InvalidShape("rhs length does not match matrix rows")
    dec = svd(a)
    if dec.sigma[0] == 0.0:
        return np.zeros(a.shape[1])
    keep = dec.sigma > SINGULAR_RTOL * dec.sigma[0]
    coef = (dec.u[:, keep].T @ b) / dec.sigma[keep]
    return dec.v[:, keep] @ coef


# ---------------------------------------------------------------- SVD


def _complete_orthonormal(q: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns of ``q`` not flagged in ``good`` by an orthonormal completion."""
    m, k = q.shape
    out = q.copy()
    basis = [out[:, j] for j in range(k) if good[j]]
    candidates = iter(np.eye(m))
    for j in range(k):
        if good[j]:
            continue
        for e in candidates:
            vec = e.copy()
            for _ in range(2):
                for b in basis:
                    vec -= (b @ vec) * b
            nrm = np.linalg.norm(vec)
            if nrm > 1e-8:
                vec /= nrm
                out[:, j] = vec
                basis.append(vec)
                break
    return out


def svd(a) -> Svd:
    """Thin SVD by one-sided Jacobi rotations (fixed cyclic pair order)."""
    a = as_mat(a)
    m, n = a.shape
    transposed = m < n
    work = a.T.copy() if transposed else a.copy()
    w, v, sweeps = K.jacobi_svd(np.ascontiguousarray(work), MAX_SWEEPS)
    if sweeps < 0:
        raise NoConvergence("Jacobi SVD exceeded its sweep limit")
    sigma = np.sqrt(np.sum(w * w, axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    w = w[:, order]
    v = v[:, order]
    smax = sigma[0] if sigma.size else 0.0
    good = sigma > max(SINGULAR_RTOL * smax, np.finfo(float).tiny)
    u = np.zeros_like(w)
    u[:, good] = w[:, good] / sigma[good]
    if not np.all(good):
        u = _complete_orthonormal(u, good)
    if transposed:
        return Svd(u=v, sigma=sigma, v=u)
    return Svd(u=u, sigma=sigma, v=v)


def singular_values(a) -> np.ndarray:
    return svd(a).sigma


def cond2(a) -> float:
    """2-norm condition number sigma_max / sigma_min."""
    s = singular_values(a)
    smax, smin = s[0], s[-1]
    if smax == 0.0 or smin <= SINGULAR_RTOL * smax:
        raise NumericallySingular("sigma_min below relative threshold")
    return float(smax / smin)


def opnorm2(a) -> float:
    return float(singular_values(a)[0])


def fnorm(a) -> float:
    a = as_mat(a)
    return float(np.sqrt(np.sum(a * a)))


def inv_norm2(a) -> float:
    """Spectral norm of the inverse, 1 / sigma_min."""
    s = singular_values(_square(a))
    if s[0] == 0.0 or s[-1] <= SINGULAR_RTOL * s[0]:
        raise NumericallySingular("matrix is numerically singular")
    return float(1.0 / s[-1])


# ---------------------------------------------------------------- eigen


def is_symmetric(a: np.ndarray, rtol: float = 0.0) -> bool:
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - a.T)) <= rtol * scale)


def eigh_sym(a) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition, eigenvalues ascending, orthonormal vectors."""
    a = _square(a)
    sym = 0.5 * (a + a.T)
    s, v, sweeps = K.jacobi_eigh(sym, MAX_SWEEPS)
    if sweeps < 0:
        raise NoConvergence("Jacobi eigenvalue iteration exceeded its sweep limit")
    vals = np.diag(s).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], v[:, order]


def eigvals_general(a) -> np.ndarray:
    """Eigenvalues via balancing, Hessenberg reduction and Francis QR."""
    a = _square(a)
    n = a.shape[0]
    if n > MAX_DIM:
        raise InvalidShape(f"eigensolver limited to n <= {MAX_DIM}")
    if n == 1:
        return np.array([complex(a[0, 0])])
    if is_symmetric(a):
        return eigh_sym(a)[0].astype(complex)
    h = K.hessenberg(K.balance(a))
    wr, wi, status = K.hqr(h, MAX_QR_ITS)
    if status != K.OK:
        raise NoConvergence("Francis QR exceeded its iteration cap")
    vals = wr + 1j * wi
    order = np.lexsort((-vals.imag, -vals.real))
    return vals[order]


def eig_general(a) -> EigenDecomp:
    """Eigenvalues and unit-norm eigenvectors of a general real matrix.

    Symmetric input is routed to the Jacobi eigenvalue method, which yields
    real eigenvalues and an orthonormal basis. Otherwise eigenvectors come
    from inverse iteration on the original matrix; vectors belonging to
    (numerically) repeated eigenvalues are kept mutually orthogonal when the
    eigenspace allows it; for a defective matrix the repeated vectors come
    back (nearly) parallel.
    """
    a = _square(a)
    n = a.shape[0]
    if is_symmetric(a):
        vals, vecs = eigh_sym(a)
        return EigenDecomp(values=vals.astype(complex), vectors=vecs.astype(complex))
    vals = eigvals_general(a)
    anorm = max(np.max(np.sum(np.abs(a), axis=1)), 1e-300)
    vecs = np.zeros((n, n), dtype=complex)
    idx = np.arange(n)
    done = np.zeros(n, dtype=bool)
    for j in range(n):
        if done[j]:
            continue
        lam = vals[j]
        cluster = [i for i in range(j) if abs(vals[i] - lam) <= 1e-8 * anorm]
        basis = np.zeros((n, max(len(cluster), 1)), dtype=complex)
        for c, i in enumerate(cluster):
            basis[:, c] = vecs[:, i]
        start = 1.0 + 0.5 * np.cos((j + 1) * (idx + 1.0))
        x = K.inverse_iteration(a, complex(lam), basis, len(cluster), start, 3)
        if cluster and np.linalg.norm(a @ x - lam * x) > 1e-7 * anorm:
            # no independent eigenvector left in the cluster: defective, keep the true one
            x = K.inverse_iteration(a, complex(lam), basis, 0, start, 3)
        vecs[:, j] = x
        done[j] = True
        if abs(lam.imag) > 0:
            # real matrix: the conjugate eigenvalue carries the conjugate vector
            for k in range(j + 1, n):
                if not done[k] and abs(vals[k] - np.conj(lam)) <= 1e-10 * anorm:
                    vecs[:, k] = np.conj(x)
                    done[k] = True
                    break
    return EigenDecomp(values=vals, vectors=vecs)


def spectral_radius(a) -> float:
    return float(np.max(np.abs(eigvals_general(a))))


# ---------------------------------------------------------------- I/O


def mat_to_csv(a, path) -> None:
    a = as_mat(a)
    lines = [",".join(f"{x:.17g}" for x in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def mat_from_csv(path) -> np.ndarray:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return as_mat([[float(x) for x in ln.split(",")] for ln in rows])


def vect_to_csv(v, path) -> None:
    v = as_vect(v)
    Path(path).write_text("\n".join(f"{x:.17g}" for x in v) + "\n")


def vect_from_csv(path) -> np.ndarray:
    return as_vect([float(ln) for ln in Path(path).read_text().splitlines() if ln.strip()])


def mat_to_json(a) -> str:
    a = as_mat(a)
    return json.dumps({"rows": a.shape[0], "cols": a.shape[1], "data": a.reshape(-1).tolist()})


def mat_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    data = np.array(obj["data"], dtype=float)
    if data.size != obj["rows"] * obj["cols"]:
        raise InvalidShape("data length does not match rows*cols")
    return as_mat(data.reshape(obj["rows"], obj["cols"]))
