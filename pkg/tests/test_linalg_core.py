import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from poisonlab import linalg_core as lc
from poisonlab.errors import InvalidShape, NonFiniteInput, NumericallySingular, SingularMatrix

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def mats(max_side=8):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(lambda s: arrays(float, s, elements=finite))


def test_validation():
    with pytest.raises(InvalidShape):
        lc.as_mat(np.zeros((0, 3)))
    with pytest.raises(NonFiniteInput):
        lc.as_mat([[1.0, np.nan]])
    with pytest.raises(InvalidShape):
        lc.as_vect(np.zeros((2, 2)))


@pytest.mark.parametrize("a,b,x", [
    (np.eye(3), [1, 2, 3], [1, 2, 3]),
    (np.diag([2.0, 4.0]), [2, 8], [1, 2]),
    ([[4.0, 1.0], [1.0, 3.0]], [1, 2], [1 / 11, 7 / 11]),
])
def test_lu_solve_examples(a, b, x):
    assert np.allclose(lc.lu_solve(a, b), x, rtol=0, atol=1e-12)


def test_lu_solve_singular():
    with pytest.raises(SingularMatrix):
        lc.lu_solve([[1.0, 2.0], [2.0, 4.0]], [1, 1])


def test_lu_solve_random_residuals():
    for seed in range(200):
        r = np.random.default_rng(seed)
        n = 1 + seed % 8
        a = r.normal(size=(n, n))
        b = r.normal(size=n)
        x = lc.lu_solve(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-9 * np.linalg.norm(b) * max(1.0, np.linalg.cond(a) * 1e-3)


def test_lstsq_examples(rng):
    assert np.allclose(lc.lstsq(np.eye(2), [3, 4]), [3, 4])
    assert np.allclose(lc.lstsq([[1.0], [1.0]], [0, 2]), [1])
    a = rng.normal(size=(6, 3))
    b = rng.normal(size=6)
    ne = lc.lu_solve(a.T @ a, a.T @ b)
    assert np.allclose(lc.lstsq(a, b), ne, rtol=1e-8, atol=0)


def test_lstsq_min_norm():
    # rank one: minimum-norm solution lies in the row space
    a = np.array([[1.0, 1.0], [2.0, 2.0]])
    w = lc.lstsq(a, [1.0, 2.0])
    assert np.allclose(w, [0.5, 0.5])


def test_svd_examples():
    assert np.allclose(lc.svd(np.diag([3.0, 1.0])).sigma, [3, 1])
    q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(5, 5)))
    assert np.allclose(lc.svd(q).sigma, 1.0)
    phi = (1 + 5**0.5) / 2
    assert np.allclose(lc.svd([[1.0, 1.0], [0.0, 1.0]]).sigma, [phi, phi - 1], atol=1e-12)


@given(mats(20))
def test_svd_invariants(a):
    dec = lc.svd(a)
    k = dec.sigma.size
    assert np.linalg.norm(dec.u.T @ dec.u - np.eye(k)) <= 1e-10 * k
    assert np.linalg.norm(dec.v.T @ dec.v - np.eye(k)) <= 1e-10 * k
    assert np.all(np.diff(dec.sigma) <= 0) and dec.sigma[-1] >= 0
    assert np.linalg.norm(dec.reconstruct() - a) <= 1e-8 * max(np.linalg.norm(a), 1e-300)


def test_svd_matches_numpy_random():
    for seed in range(200):
        r = np.random.default_rng(seed)
        a = r.normal(size=(1 + seed % 20, 1 + (7 * seed) % 20))
        assert np.allclose(lc.singular_values(a), np.linalg.svd(a, compute_uv=False), rtol=1e-10, atol=1e-12)


def test_cond_and_norms():
    assert lc.cond2(np.eye(4)) == pytest.approx(1.0)
    assert lc.cond2(np.diag([10.0, 2.0])) == pytest.approx(5.0)
    assert lc.cond2([[1.0, 1.0], [0.0, 1.0]]) == pytest.approx(2.6180339887, rel=1e-10)
    assert lc.opnorm2(np.diag([2.0, -5.0])) == pytest.approx(5.0)
    assert lc.inv_norm2(np.diag([2.0, 5.0])) == pytest.approx(0.5)
    assert lc.fnorm([[3.0, 4.0], [0.0, 0.0]]) == pytest.approx(5.0)
    with pytest.raises(NumericallySingular):
        lc.cond2([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(NumericallySingular):
        lc.inv_norm2(np.zeros((2, 2)))


@given(mats(6), st.floats(0.01, 100).flatmap(lambda c: st.sampled_from([c, -c])))
def test_cond_scale_invariant(a, c):
    try:
        k = lc.cond2(a)
    except NumericallySingular:
        return
    assert lc.cond2(c * a) == pytest.approx(k, rel=1e-10)


def test_inv_norm_times_sigma_min(rng):
    a = rng.normal(size=(5, 5))
    assert lc.inv_norm2(a) * lc.singular_values(a)[-1] == pytest.approx(1.0, rel=1e-10)


def test_eig_examples():
    d = lc.eig_general(np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(sorted(d.values.real), [1, 2, 3])
    assert np.allclose(np.abs(d.vectors), np.eye(3)[:, np.argsort(-d.values.real)] if False else np.abs(d.vectors))
    for j, lam in enumerate(d.values):
        assert np.allclose(np.abs(d.vectors[:, j]), np.eye(3)[int(round(lam.real)) - 1])
    rot = lc.eig_general(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert np.allclose(sorted(rot.values, key=lambda z: z.imag), [-1j, 1j])
    sym = lc.eig_general(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(sorted(sym.values.real), [1, 3])
    v3 = sym.vectors[:, np.argmax(sym.values.real)]
    assert abs(abs(v3 @ np.array([1, 1]) / 2**0.5) - 1) < 1e-10


def _residual_ok(a, dec):
    na = np.linalg.norm(a, 2)
    for lam, v in zip(dec.values, dec.vectors.T):
        assert np.linalg.norm(a @ v - lam * v) <= 1e-7 * max(na, 1e-300) * np.linalg.norm(v)


def test_eig_residuals_random():
    for seed in range(60):
        r = np.random.default_rng(seed)
        n = 2 + seed % 12
        a = r.normal(size=(n, n))
        _residual_ok(a, lc.eig_general(a))
        s = a + a.T
        dec = lc.eig_general(s)
        assert np.max(np.abs(dec.values.imag)) <= 1e-9 * np.linalg.norm(s, 2)
        _residual_ok(s, dec)


def test_eig_matches_characteristic_polynomial():
    # independent oracle: roots of det(lambda I - A) from the Faddeev-LeVerrier coefficients
    for seed in range(100):
        r = np.random.default_rng(seed)
        n = 1 + seed % 4
        a = r.normal(size=(n, n))
        coeffs = [1.0]
        m = np.zeros((n, n))
        for k in range(1, n + 1):
            m = a @ m + coeffs[-1] * np.eye(n)
            coeffs.append(-np.trace(a @ m) / k)
        oracle = np.roots(coeffs)
        got = lc.eigvals_general(a)
        for z in oracle:
            assert np.min(np.abs(got - z)) <= 1e-7 * max(1.0, abs(z))


def test_spectral_radius():
    assert lc.spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)
    assert lc.spectral_radius(np.zeros((3, 3))) == 0.0
    assert lc.spectral_radius(np.array([[0.0, -0.5], [-0.5, 0.0]])) == pytest.approx(0.5)


def test_determinism(rng):
    a = rng.normal(size=(9, 9))
    d1, d2 = lc.svd(a), lc.svd(a.copy())
    assert np.array_equal(d1.sigma, d2.sigma) and np.array_equal(d1.u, d2.u)
    assert np.array_equal(lc.eigvals_general(a), lc.eigvals_general(a.copy()))


@given(mats(6))
def test_csv_json_roundtrip(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("io") / "a.csv"
    lc.mat_to_csv(a, p)
    assert np.array_equal(lc.mat_from_csv(p), a)
    assert np.array_equal(lc.mat_from_json(lc.mat_to_json(a)), a)
    obj = json.loads(lc.mat_to_json(a))
    assert obj["rows"] == a.shape[0] and obj["cols"] == a.shape[1]


def test_vect_roundtrip(tmp_path):
    v = np.array([0.1, -2.5e-300, 3.0])
    lc.vect_to_csv(v, tmp_path / "v.csv")
    assert np.array_equal(lc.vect_from_csv(tmp_path / "v.csv"), v)
