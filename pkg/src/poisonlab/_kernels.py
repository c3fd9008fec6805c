"""Compiled inner loops for the dense decompositions.

Every kernel returns a status code instead of raising so it can stay in
nopython mode; the wrappers in :mod:`poisonlab.linalg_core` turn codes into
exceptions.
"""

import numpy as np
from numba import njit

OK = 0
FAIL = 1


@njit(cache=True)
def lu_factor(a, rel_tol):
    n = a.shape[0]
    lu = a.copy()
    piv = np.arange(n)
    scale = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += abs(a[i, j])
        scale = max(scale, row)
    thresh = rel_tol * scale
    for k in range(n):
        p = k
        best = abs(lu[k, k])
        for i in range(k + 1, n):
            if abs(lu[i, k]) > best:
                best = abs(lu[i, k])
                p = i
        if best <= thresh or best == 0.0:
            return lu, piv, FAIL
        if p != k:
            for j in range(n):
                tmp = lu[k, j]
                lu[k, j] = lu[p, j]
                lu[p, j] = tmp
            tmp_i = piv[k]
            piv[k] = piv[p]
            piv[p] = tmp_i
        for i in range(k + 1, n):
            lu[i, k] /= lu[k, k]
            f = lu[i, k]
            if f != 0.0:
                for j in range(k + 1, n):
                    lu[i, j] -= f * lu[k, j]
    return lu, piv, OK


@njit(cache=True)
def lu_apply(lu, piv, b):
    n = lu.shape[0]
    x = np.empty(n)
    for i in range(n):
        x[i] = b[piv[i]]
    for i in range(n):
        s = x[i]
        for j in range(i):
            s -= lu[i, j] * x[j]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            s -= lu[i, j] * x[j]
        x[i] = s / lu[i, i]
    return x


@njit(cache=True)
def cholesky(s, rel_tol):
    n = s.shape[0]
    l = np.zeros((n, n))
    dmax = 0.0
    for i in range(n):
        dmax = max(dmax, abs(s[i, i]))
    thresh = rel_tol * dmax
    for j in range(n):
        d = s[j, j]
        for k in range(j):
            d -= l[j, k] * l[j, k]
        if d <= thresh or d <= 0.0:
            return l, FAIL
        l[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            v = s[i, j]
            for k in range(j):
                v -= l[i, k] * l[j, k]
            l[i, j] = v / l[j, j]
    return l, OK


@njit(cache=True)
def cholesky_apply(l, b):
    n = l.shape[0]
    z = np.empty(n)
    for i in range(n):
        v = b[i]
        for k in range(i):
            v -= l[i, k] * z[k]
        z[i] = v / l[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        v = z[i]
        for k in range(i + 1, n):
            v -= l[k, i] * x[k]
        x[i] = v / l[i, i]
    return x


@njit(cache=True)
def _sign(x):
    return 1.0 if x >= 0.0 else -1.0


@njit(cache=True)
def jacobi_svd(a, max_sweeps):
    """One-sided (Hestenes) Jacobi on a tall matrix, m >= n.

    Returns (w, v, sweeps) where the columns of ``w`` are the rotated columns
    (u_j * sigma_j, unsorted) and ``v`` holds the accumulated rotations.
    ``sweeps`` is -1 on failure to converge.
    """
    m, n = a.shape
    w = a.copy()
    v = np.eye(n)
    # columns below this squared norm are rounding noise of a null direction
    floor = 1e-30 * np.sum(a * a)
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += w[i, p] * w[i, p]
                    beta += w[i, q] * w[i, q]
                    gamma += w[i, p] * w[i, q]
                if gamma == 0.0 or abs(gamma) <= 1e-15 * np.sqrt(alpha * beta):
                    continue
                if alpha <= floor or beta <= floor:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = _sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    wp = w[i, p]
                    wq = w[i, q]
                    w[i, p] = c * wp - s * wq
                    w[i, q] = s * wp + c * wq
                for i in range(n):
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = c * vp - s * vq
                    v[i, q] = s * vp + c * vq
        if not rotated:
            return w, v, sweep + 1
    return w, v, -1


@njit(cache=True)
def jacobi_eigh(a, max_sweeps):
    """Cyclic Jacobi eigenvalue iteration for a symmetric matrix."""
    n = a.shape[0]
    s = a.copy()
    v = np.eye(n)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += s[i, j] * s[i, j]
    total = np.sqrt(total)
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += s[p, q] * s[p, q]
        if np.sqrt(off) <= 1e-16 * total or off == 0.0:
            return s, v, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                gamma = s[p, q]
                if gamma == 0.0:
                    continue
                zeta = (s[q, q] - s[p, p]) / (2.0 * gamma)
                t = _sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = c * t
                for k in range(n):
                    skp = s[k, p]
                    skq = s[k, q]
                    s[k, p] = c * skp - sn * skq
                    s[k, q] = sn * skp + c * skq
                for k in range(n):
                    spk = s[p, k]
                    sqk = s[q, k]
                    s[p, k] = c * spk - sn * sqk
                    s[q, k] = sn * spk + c * sqk
                s[p, q] = 0.0
                s[q, p] = 0.0
                for k in range(n):
                    vp = v[k, p]
                    vq = v[k, q]
                    v[k, p] = c * vp - sn * vq
                    v[k, q] = sn * vp + c * vq
    return s, v, -1


@njit(cache=True)
def balance(a):
    """Diagonal similarity with powers of two so row and column norms match."""
    n = a.shape[0]
    b = a.copy()
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            r = 0.0
            c = 0.0
            for j in range(n):
                if j != i:
                    c += abs(b[j, i])
                    r += abs(b[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    for j in range(n):
                        b[i, j] *= g
                    for j in range(n):
                        b[j, i] *= f
    return b


@njit(cache=True)
def hessenberg(a):
    """Householder reduction to upper Hessenberg form."""
    n = a.shape[0]
    h = a.copy()
    for k in range(n - 2):
        m = n - k - 1
        v = np.empty(m)
        norm = 0.0
        for i in range(m):
            v[i] = h[k + 1 + i, k]
            norm += v[i] * v[i]
        norm = np.sqrt(norm)
        if norm == 0.0:
            continue
        alpha = -_sign(v[0]) * norm
        v[0] -= alpha
        vn = 0.0
        for i in range(m):
            vn += v[i] * v[i]
        vn = np.sqrt(vn)
        if vn == 0.0:
            continue
        for i in range(m):
            v[i] /= vn
        for j in range(n):
            d = 0.0
            for i in range(m):
                d += v[i] * h[k + 1 + i, j]
            for i in range(m):
                h[k + 1 + i, j] -= 2.0 * v[i] * d
        for i in range(n):
            d = 0.0
            for j in range(m):
                d += h[i, k + 1 + j] * v[j]
            for j in range(m):
                h[i, k + 1 + j] -= 2.0 * d * v[j]
        for i in range(k + 2, n):
            h[i, k] = 0.0
    return h


@njit(cache=True)
def hqr(h0, max_its):
    """Francis implicit double-shift QR on an upper Hessenberg matrix.

    Eigenvalues only. Written 1-indexed internally to keep the deflation and
    bulge-chasing bookkeeping close to the classical formulation.
    """
    n = h0.shape[0]
    a = np.zeros((n + 1, n + 1))
    for i in range(n):
        for j in range(n):
            a[i + 1, j + 1] = h0[i, j]
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    x = 0.0
    y = 0.0
    z = 0.0
    w = 0.0
    p = 0.0
    q = 0.0
    r = 0.0
    s = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = np.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + (z if p >= 0.0 else -z)
                    wr[nn - 1] = x + z
                    wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = 0.0
                    wi[nn] = 0.0
                else:
                    wr[nn - 1] = x + p
                    wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its >= max_its:
                return wr[1:], wi[1:], FAIL
            if its > 0 and its % 10 == 0:
                t += x
                for i in range(1, nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = 0.75 * s
                y = x
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = 0.0
                    if k != nn - 1:
                        r = a[k + 2, k - 1]
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = np.sqrt(p * p + q * q + r * r)
                if p < 0.0:
                    s = -s
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k, k - 1] = -a[k, k - 1]
                    else:
                        a[k, k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k, j] + q * a[k + 1, j]
                        if k != nn - 1:
                            p += r * a[k + 2, j]
                            a[k + 2, j] -= p * z
                        a[k + 1, j] -= p * y
                        a[k, j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i, k] + y * a[i, k + 1]
                        if k != nn - 1:
                            p += z * a[i, k + 2]
                            a[i, k + 2] -= p * r
                        a[i, k + 1] -= p * q
                        a[i, k] -= p
            if l >= nn - 1:
                break
    return wr[1:], wi[1:], OK


@njit(cache=True)
def inverse_iteration(a, lam, basis, nbasis, start, its):
    """Eigenvector of ``a`` for (complex) eigenvalue ``lam``.

    The shift is nudged off the eigenvalue so the factorization stays
    regular; iterates are kept orthogonal to the first ``nbasis`` columns of
    ``basis`` (vectors already found for the same eigenvalue cluster).
    """
    n = a.shape[0]
    anorm = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += abs(a[i, j])
        anorm = max(anorm, row)
    if anorm == 0.0:
        anorm = 1.0
    mu = lam + 1e-13 * anorm
    lu = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            lu[i, j] = a[i, j]
        lu[i, i] -= mu
    piv = np.arange(n)
    tiny = 1e-16 * anorm
    for k in range(n):
        p = k
        best = abs(lu[k, k])
        for i in range(k + 1, n):
            if abs(lu[i, k]) > best:
                best = abs(lu[i, k])
                p = i
        if p != k:
            for j in range(n):
                tmp = lu[k, j]
                lu[k, j] = lu[p, j]
                lu[p, j] = tmp
            ti = piv[k]
            piv[k] = piv[p]
            piv[p] = ti
        if abs(lu[k, k]) < tiny:
            lu[k, k] = tiny
        for i in range(k + 1, n):
            lu[i, k] /= lu[k, k]
            f = lu[i, k]
            for j in range(k + 1, n):
                lu[i, j] -= f * lu[k, j]
    x = start.astype(np.complex128)
    for it in range(its):
        for b in range(nbasis):
            d = 0.0 + 0.0j
            for i in range(n):
                d += np.conj(basis[i, b]) * x[i]
            for i in range(n):
                x[i] -= d * basis[i, b]
        nrm = 0.0
        for i in range(n):
            nrm += abs(x[i]) ** 2
        nrm = np.sqrt(nrm)
        if nrm == 0.0:
            for i in range(n):
                x[i] = start[(i + it + 1) % n]
            continue
        y = np.empty(n, dtype=np.complex128)
        for i in range(n):
            y[i] = x[piv[i]] / nrm
        for i in range(n):
            s = y[i]
            for j in range(i):
                s -= lu[i, j] * y[j]
            y[i] = s
        for i in range(n - 1, -1, -1):
            s = y[i]
            for j in range(i + 1, n):
                s -= lu[i, j] * y[j]
            y[i] = s / lu[i, i]
        x = y
    for b in range(nbasis):
        d = 0.0 + 0.0j
        for i in range(n):
            d += np.conj(basis[i, b]) * x[i]
        for i in range(n):
            x[i] -= d * basis[i, b]
    nrm = 0.0
    for i in range(n):
        nrm += abs(x[i]) ** 2
    nrm = np.sqrt(nrm)
    if nrm > 0.0:
        for i in range(n):
            x[i] /= nrm
    return x


@njit(cache=True)
def gauss_seidel_sweep(a, b, x):
    n = a.shape[0]
    for i in range(n):
        s = b[i]
        for j in range(n):
            if j != i:
                s -= a[i, j] * x[j]
        x[i] = s / a[i, i]


@njit(cache=True)
def sor_sweep(a, b, x, omega):
    n = a.shape[0]
    for i in range(n):
        s = b[i]
        for j in range(n):
            if j != i:
                s -= a[i, j] * x[j]
        x[i] = (1.0 - omega) * x[i] + omega * s / a[i, i]


@njit(cache=True)
def ilu0(a, pattern):
    n = a.shape[0]
    f = a.copy()
    for i in range(1, n):
        for k in range(i):
            if not pattern[i, k]:
                continue
            if f[k, k] == 0.0:
                return f, FAIL
            f[i, k] /= f[k, k]
            for j in range(k + 1, n):
                if pattern[i, j]:
                    f[i, j] -= f[i, k] * f[k, j]
    for i in range(n):
        if f[i, i] == 0.0:
            return f, FAIL
    return f, OK


@njit(cache=True)
def unit_lower_upper_apply(f, b):
    """Solve (L U) x = b with L, U packed in ``f`` (L unit diagonal)."""
    n = f.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= f[i, j] * y[j]
        y[i] = s
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for j in range(i + 1, n):
            s -= f[i, j] * x[j]
        x[i] = s / f[i, i]
    return x


@njit(cache=True)
def gd_run(a, b, step, tol, cap):
    """Gradient descent on ||A x - b||^2 from x = 0.

    Returns (x, history, status): ``history`` holds the true residual norm of
    every finite iterate (entry 0 is ||b||), ``x`` is the last finite iterate
    and status is OK, or FAIL when an iterate stopped being finite.
    """
    n = b.shape[0]
    x = np.zeros(n)
    hist = np.empty(cap + 1)
    bnorm = np.sqrt(np.sum(b * b))
    hist[0] = bnorm
    k = 0
    r = -b.copy()  # A x - b
    while k < cap and hist[k] > tol * bnorm:
        g = a.T @ r
        xn = x - 2.0 * step * g
        rn = a @ xn - b
        res = np.sqrt(np.sum(rn * rn))
        if not np.isfinite(res) or not np.all(np.isfinite(xn)):
            return x, hist[: k + 1], FAIL
        x = xn
        r = rn
        k += 1
        hist[k] = res
    return x, hist[: k + 1], OK
