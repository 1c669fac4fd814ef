"""Compiled inner loops for the dense eigensolver.

Arrays passed to the Householder kernels must be Fortran ordered so that the
innermost loops walk down columns.
"""
import math

import numba
import numpy as np

EPS = np.finfo(np.float64).eps


@numba.njit(cache=True)
def householder_real(a):
    """Reduce a symmetric matrix in place; Householder vectors overwrite column k below k+1.

    Returns (diag, subdiag, taus).  Reflector k is I - tau_k v v^T acting on
    rows/cols k+1.., with v stored in a[k+1:, k].
    """
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(max(n - 1, 0))
    taus = np.zeros(max(n - 1, 0))
    for k in range(n - 2):
        m = n - k - 1
        x0 = a[k + 1, k]
        sigma = 0.0
        for i in range(1, m):
            sigma += a[k + 1 + i, k] * a[k + 1 + i, k]
        d[k] = a[k, k]
        if sigma == 0.0:
            e[k] = x0
            taus[k] = 0.0
            continue
        xnorm = math.sqrt(x0 * x0 + sigma)
        alpha = -xnorm if x0 >= 0 else xnorm
        a[k + 1, k] = x0 - alpha
        vnorm2 = a[k + 1, k] * a[k + 1, k] + sigma
        tau = 2.0 / vnorm2
        p = np.zeros(m)
        for j in range(m):
            vj = a[k + 1 + j, k]
            for i in range(m):
                p[i] += a[k + 1 + i, k + 1 + j] * vj
        kk = 0.0
        for i in range(m):
            p[i] *= tau
            kk += p[i] * a[k + 1 + i, k]
        kk *= 0.5 * tau
        for i in range(m):
            p[i] -= kk * a[k + 1 + i, k]
        for j in range(m):
            pj = p[j]
            vj = a[k + 1 + j, k]
            for i in range(m):
                a[k + 1 + i, k + 1 + j] -= a[k + 1 + i, k] * pj + p[i] * vj
        e[k] = alpha
        taus[k] = tau
    if n >= 2:
        d[n - 2] = a[n - 2, n - 2]
        e[n - 2] = a[n - 1, n - 2]
    if n >= 1:
        d[n - 1] = a[n - 1, n - 1]
    return d, e, taus


@numba.njit(cache=True)
def householder_complex(a):
    """Hermitian version of :func:`householder_real`; subdiagonal comes back complex."""
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(max(n - 1, 0), dtype=np.complex128)
    taus = np.zeros(max(n - 1, 0))
    for k in range(n - 2):
        m = n - k - 1
        x0 = a[k + 1, k]
        sigma = 0.0
        for i in range(1, m):
            z = a[k + 1 + i, k]
            sigma += z.real * z.real + z.imag * z.imag
        d[k] = a[k, k].real
        if sigma == 0.0:
            e[k] = x0
            taus[k] = 0.0
            continue
        ax0 = abs(x0)
        xnorm = math.sqrt(ax0 * ax0 + sigma)
        phase = x0 / ax0 if ax0 > 0 else 1.0 + 0.0j
        alpha = -phase * xnorm
        a[k + 1, k] = x0 - alpha
        v0 = a[k + 1, k]
        vnorm2 = v0.real * v0.real + v0.imag * v0.imag + sigma
        tau = 2.0 / vnorm2
        p = np.zeros(m, dtype=np.complex128)
        for j in range(m):
            vj = a[k + 1 + j, k]
            for i in range(m):
                p[i] += a[k + 1 + i, k + 1 + j] * vj
        kk = 0.0 + 0.0j
        for i in range(m):
            p[i] *= tau
            kk += a[k + 1 + i, k].conjugate() * p[i]
        kk *= 0.5 * tau
        for i in range(m):
            p[i] -= kk.real * a[k + 1 + i, k]
        for j in range(m):
            pjc = p[j].conjugate()
            vjc = a[k + 1 + j, k].conjugate()
            for i in range(m):
                a[k + 1 + i, k + 1 + j] -= a[k + 1 + i, k] * pjc + p[i] * vjc
        e[k] = alpha
        taus[k] = tau
    if n >= 2:
        d[n - 2] = a[n - 2, n - 2].real
        e[n - 2] = a[n - 1, n - 2]
    if n >= 1:
        d[n - 1] = a[n - 1, n - 1].real
    return d, e, taus


@numba.njit(cache=True)
def tql_eigenvalues(diag, offdiag, max_sweeps):
    """Implicit QL with Wilkinson-type shifts, eigenvalues only.

    Returns (eigenvalues, ok) where ok is False when some eigenvalue needed
    more than ``max_sweeps`` QL sweeps.
    """
    n = diag.shape[0]
    d = diag.copy()
    e = np.zeros(n)
    for i in range(n - 1):
        e[i] = offdiag[i]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= EPS * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_sweeps:
                return d, False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, True


@numba.njit(cache=True)
def tridiag_solve(sub, diag, sup, rhs):
    """Solve a general tridiagonal system by elimination with partial pivoting."""
    n = diag.shape[0]
    d = diag.copy()
    u1 = sup.copy()
    u2 = np.zeros(max(n - 2, 0))
    lo = sub.copy()
    piv = np.zeros(max(n - 1, 0), dtype=np.bool_)
    tiny = 1e-300
    for i in range(n - 1):
        if abs(d[i]) >= abs(lo[i]):
            if d[i] == 0.0:
                d[i] = tiny
            fact = lo[i] / d[i]
            lo[i] = fact
            d[i + 1] -= fact * u1[i]
        else:
            fact = d[i] / lo[i]
            d[i] = lo[i]
            lo[i] = fact
            temp = u1[i]
            u1[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                u2[i] = u1[i + 1]
                u1[i + 1] = -fact * u2[i]
            piv[i] = True
    if d[n - 1] == 0.0:
        d[n - 1] = tiny
    x = rhs.copy()
    for i in range(n - 1):
        if piv[i]:
            temp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = temp - lo[i] * x[i]
        else:
            x[i + 1] -= lo[i] * x[i]
    x[n - 1] /= d[n - 1]
    if n >= 2:
        x[n - 2] = (x[n - 2] - u1[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - u1[i] * x[i + 1] - u2[i] * x[i + 2]) / d[i]
    return x
