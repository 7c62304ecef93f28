"""Dense nonsymmetric eigenvalues: balancing, Hessenberg reduction and the
Francis double-shift QR iteration (real arithmetic, complex pairs read off
2x2 diagonal blocks).
"""
from __future__ import annotations

import math

import numpy as np

RADIX = 2.0
EPS = np.finfo(float).eps


class EigenvalueError(RuntimeError):
    pass


def balance(a: np.ndarray) -> np.ndarray:
    """Diagonal similarity scaling so row and column norms are comparable."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    sqrdx = RADIX * RADIX
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / RADIX
            f = 1.0
            s = c + r
            while c < g:
                f *= RADIX
                c *= sqrdx
            g = r * RADIX
            while c > g:
                f /= RADIX
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Upper Hessenberg form by Householder reflections."""
    h = np.array(a, dtype=float)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(alpha, x[0])
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def hqr(h: np.ndarray, max_total_iter: int | None = None) -> np.ndarray:
    """Eigenvalues of an upper Hessenberg matrix (destroys a copy of ``h``)."""
    a = np.array(h, dtype=float)
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    if n == 0:
        return wr.astype(complex)
    cap = max_total_iter if max_total_iter is not None else 100 * n
    anorm = np.sum(np.abs(np.triu(a, -1)))
    total = 0
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            # look for a single small subdiagonal element
            l = nn
            while l > 0:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= EPS * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + math.copysign(z, p)
                        wr[nn - 1] = wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = wi[nn] = 0.0
                    else:
                        wr[nn - 1] = wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if total >= cap:
                        raise EigenvalueError(f"QR iteration did not converge within {cap} iterations")
                    if its > 0 and its % 10 == 0:
                        # exceptional shift
                        t += x
                        a[np.arange(nn + 1), np.arange(nn + 1)] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        y = x = 0.75 * s
                        w = -0.4375 * s * s
                    its += 1
                    total += 1
                    _francis_step(a, l, nn, x, y, w)
            if l >= nn - 1:
                break
    return wr + 1j * wi


def _francis_step(a, l, nn, x, y, w):
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
        if u <= EPS * v:
            break
        m -= 1
    for i in range(m, nn - 1):
        a[i + 2, i] = 0.0
        if i != m:
            a[i + 2, i - 1] = 0.0
    for k in range(m, nn):
        if k != m:
            p = a[k, k - 1]
            q = a[k + 1, k - 1]
            r = a[k + 2, k - 1] if k + 1 != nn else 0.0
            x = abs(p) + abs(q) + abs(r)
            if x != 0.0:
                p /= x
                q /= x
                r /= x
        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
        if s == 0.0:
            continue
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
        # row transformation
        if k + 1 != nn:
            rows = a[k:k + 3, k:nn + 1]
            pv = rows[0] + q * rows[1] + r * rows[2]
            rows[2] -= pv * z
        else:
            rows = a[k:k + 2, k:nn + 1]
            pv = rows[0] + q * rows[1]
        rows[1] -= pv * y
        rows[0] -= pv * x
        # column transformation
        mmin = min(nn, k + 3)
        if k + 1 != nn:
            cols = a[l:mmin + 1, k:k + 3]
            pv = x * cols[:, 0] + y * cols[:, 1] + z * cols[:, 2]
            cols[:, 2] -= pv * r
        else:
            cols = a[l:mmin + 1, k:k + 2]
            pv = x * cols[:, 0] + y * cols[:, 1]
        cols[:, 1] -= pv * q
        cols[:, 0] -= pv


def eigenvalues(matrix) -> np.ndarray:
    """All eigenvalues (with multiplicity) of a real square matrix."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return hqr(hessenberg(balance(a)))


def charpoly(matrix) -> np.ndarray:
    """Characteristic polynomial coefficients (highest degree first) by
    the Faddeev-LeVerrier recursion."""
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(a)
    c = 1.0
    for k in range(1, n + 1):
        M = a @ M + c * np.eye(n)
        c = -np.trace(a @ M) / k
        coeffs.append(c)
    return np.array(coeffs)
