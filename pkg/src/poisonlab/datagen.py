"""Seeded synthesis of regression tasks.

Two recipes:

* ``dense``: small Gaussian regression data for the direct solver
  (default 6 train rows, 9 test rows, 3 features).
* ``sdd``: square, sparse-pattern, symmetric and strictly diagonally
  dominant systems for the iterative solvers (default n = 20).

In both cases the test labels are generated from the clean fitted solution,
``y_test = x_test @ w_ref``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg_core as lc
from .errors import InvalidShape

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class Rng:
    """xorshift64* stream seeded through splitmix64.

    Implemented here (not ``numpy.random``) so a seed maps to the same stream
    on every platform and numpy version.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.state = _splitmix64(self.seed & _MASK) or 0x9E3779B97F4A7C15
        self._spare: float | None = None

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def random(self) -> float:
        """Uniform double on [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, size) -> np.ndarray:
        n = int(np.prod(size))
        return np.array([self.random() for _ in range(n)]).reshape(size)

    def standard_normal(self, size) -> np.ndarray:
        n = int(np.prod(size))
        out = np.empty(n)
        for i in range(n):
            out[i] = self._normal()
        return out.reshape(size)

    def _normal(self) -> float:
        # Box-Muller, caching the second variate
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def spawn(self, key: int) -> "Rng":
        """Independent child stream; does not advance this one."""
        return Rng(_splitmix64((self.seed * 0x100000001B3 + key + 1) & _MASK))


@dataclass
class RegressionTask:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    w_ref: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.x_train.shape[1]
        if self.x_test.shape[1] != d or self.w_ref.size != d:
            raise InvalidShape("feature dimension mismatch in task")
        if self.y_train.size != self.x_train.shape[0] or self.y_test.size != self.x_test.shape[0]:
            raise InvalidShape("label length mismatch in task")

    @property
    def square(self) -> bool:
        return self.x_train.shape[0] == self.x_train.shape[1]


def gen_dense_regression(
    rng: Rng,
    n_train: int = 6,
    n_test: int = 9,
    d: int = 3,
    noise_std: float = 0.0,
    coef_scale: float = 100.0,
) -> RegressionTask:
    """Gaussian features, uniform coefficients scaled by ``coef_scale``."""
    if d < 1 or n_train < d or n_test < 1:
        raise InvalidShape(f"need n_train >= d >= 1 and n_test >= 1 (got {n_train}, {d}, {n_test})")
    if noise_std < 0:
        raise InvalidShape("noise_std must be non-negative")
    x_train = rng.standard_normal((n_train, d))
    x_test = rng.standard_normal((n_test, d))
    coef = coef_scale * rng.uniform(d)
    y_train = x_train @ coef
    if noise_std > 0:
        y_train = y_train + noise_std * rng.standard_normal(n_train)
    w_ref = lc.lstsq(x_train, y_train)
    meta = {
        "generator": "dense",
        "seed": rng.seed,
        "params": {"n_train": n_train, "n_test": n_test, "d": d, "noise_std": noise_std,
                   "coef_scale": coef_scale},
    }
    return RegressionTask(x_train, y_train, x_test, x_test @ w_ref, w_ref, meta)


def sdd_matrix(rng: Rng, n: int, density: float, delta: float) -> np.ndarray:
    """Random sparse pattern, symmetrized, diagonal lifted to strict dominance."""
    mask = rng.uniform((n, n)) < density
    vals = rng.uniform((n, n))
    a = np.where(mask, vals, 0.0)
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, np.sum(np.abs(a), axis=1) + delta)
    return a


def gen_sdd_square(rng: Rng, n: int = 20, density: float = 0.3, delta: float = 1.0) -> RegressionTask:
    if n < 2:
        raise InvalidShape("n must be at least 2")
    if not 0 < density <= 1:
        raise InvalidShape("density must lie in (0, 1]")
    if delta <= 0:
        raise InvalidShape("diagonal margin must be positive")
    x_train = sdd_matrix(rng, n, density, delta)
    y_train = rng.uniform(n)
    x_test = sdd_matrix(rng.spawn(1), n, density, delta)
    w_ref = lc.lu_solve(x_train, y_train)
    meta = {
        "generator": "sdd",
        "seed": rng.seed,
        "params": {"n": n, "density": density, "delta": delta},
    }
    return RegressionTask(x_train, y_train, x_test, x_test @ w_ref, w_ref, meta)


GENERATORS = {"dense": gen_dense_regression, "sdd": gen_sdd_square}


def make_task(generator: str, seed: int, **params) -> RegressionTask:
    try:
        gen = GENERATORS[generator]
    except KeyError:
        raise InvalidShape(f"unknown generator {generator!r}") from None
    return gen(Rng(seed), **params)


# ---------------------------------------------------------------- bundles

BUNDLE_FILES = ("x_train.csv", "y_train.csv", "x_test.csv", "y_test.csv", "meta.json")


def write_bundle(task: RegressionTask, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    lc.mat_to_csv(task.x_train, out / "x_train.csv")
    lc.vect_to_csv(task.y_train, out / "y_train.csv")
    lc.mat_to_csv(task.x_test, out / "x_test.csv")
    lc.vect_to_csv(task.y_test, out / "y_test.csv")
    meta = dict(task.meta)
    meta["shapes"] = {"x_train": list(task.x_train.shape), "x_test": list(task.x_test.shape)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def read_bundle(directory) -> RegressionTask:
    src = Path(directory)
    x_train = lc.mat_from_csv(src / "x_train.csv")
    y_train = lc.vect_from_csv(src / "y_train.csv")
    meta = json.loads((src / "meta.json").read_text())
    if x_train.shape[0] == x_train.shape[1] and meta.get("generator") == "sdd":
        w_ref = lc.lu_solve(x_train, y_train)
    else:
        w_ref = lc.lstsq(x_train, y_train)
    return RegressionTask(
        x_train, y_train, lc.mat_from_csv(src / "x_test.csv"), lc.vect_from_csv(src / "y_test.csv"),
        w_ref, meta,
    )
