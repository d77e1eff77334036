# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the loops in ``_pykernels``.

Signatures and return values match the pure-Python module exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, exp, log, copysign, INFINITY, isfinite

cnp.import_array()

CONVERGED = 0
STALLED = 1
SWEEP_CAP = 2


def jacobi_eigh(a, double tol=1e-12, int max_sweeps=100):
    cdef cnp.ndarray[double, ndim=2] A_arr = np.array(a, dtype=np.float64, copy=True, order="C")
    cdef Py_ssize_t n = A_arr.shape[0]
    cdef cnp.ndarray[double, ndim=2] V_arr = np.eye(n)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] V = V_arr
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double apq, theta, t, c, s, xp, xq, off
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q and fabs(A[p, q]) > off:
                    off = fabs(A[p, q])
        if off < tol or sweep == max_sweeps:
            return np.diag(A_arr).copy(), V_arr, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if fabs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = copysign(1.0, theta) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    xp = A[k, p]
                    xq = A[k, q]
                    A[k, p] = c * xp - s * xq
                    A[k, q] = s * xp + c * xq
                for k in range(n):
                    xp = A[p, k]
                    xq = A[q, k]
                    A[p, k] = c * xp - s * xq
                    A[q, k] = s * xp + c * xq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    xp = V[k, p]
                    xq = V[k, q]
                    V[k, p] = c * xp - s * xq
                    V[k, q] = s * xp + c * xq
    return np.diag(A_arr).copy(), V_arr, max_sweeps


cdef double _take_step(Py_ssize_t i, Py_ssize_t j, double[:, ::1] K, double[::1] y,
                       double[::1] alpha, double[::1] F, double C,
                       double eps) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t k
    cdef double ai, aj, yi, yj, s, L, H, kii, kjj, kij, eta, slope
    cdef double aj_new, ai_new, tl, th, wl, wh, t, gain, dai, daj
    if i == j:
        return -1.0
    ai = alpha[i]
    aj = alpha[j]
    yi = y[i]
    yj = y[j]
    s = yi * yj
    if s < 0:
        L = aj - ai if aj - ai > 0.0 else 0.0
        H = C + aj - ai if C + aj - ai < C else C
    else:
        L = ai + aj - C if ai + aj - C > 0.0 else 0.0
        H = ai + aj if ai + aj < C else C
    if H - L < eps:
        return -1.0
    kii = K[i, i]
    kjj = K[j, j]
    kij = K[i, j]
    eta = kii + kjj - 2.0 * kij
    slope = yj * (F[i] - F[j])
    if eta > eps:
        aj_new = aj + slope / eta
        if aj_new < L:
            aj_new = L
        elif aj_new > H:
            aj_new = H
    else:
        tl = L - aj
        th = H - aj
        wl = tl * slope - 0.5 * eta * tl * tl
        wh = th * slope - 0.5 * eta * th * th
        if wl > wh + eps:
            aj_new = L
        elif wh > wl + eps:
            aj_new = H
        else:
            return -1.0
    if fabs(aj_new - aj) < eps * (aj_new + aj + eps):
        return -1.0
    t = aj_new - aj
    gain = t * slope - 0.5 * eta * t * t
    ai_new = ai - s * t
    if ai_new < 1e-12 * C:
        ai_new = 0.0
    elif ai_new > C * (1.0 - 1e-12):
        ai_new = C
    if aj_new < 1e-12 * C:
        aj_new = 0.0
    elif aj_new > C * (1.0 - 1e-12):
        aj_new = C
    dai = ai_new - ai
    daj = aj_new - aj
    for k in range(n):
        F[k] += yi * dai * K[i, k] + yj * daj * K[j, k]
    alpha[i] = ai_new
    alpha[j] = aj_new
    return gain


cdef inline bint _in_up(double a, double yl, double C) noexcept nogil:
    return (yl > 0 and a < C) or (yl < 0 and a > 0.0)


cdef inline bint _in_low(double a, double yl, double C) noexcept nogil:
    return (yl > 0 and a > 0.0) or (yl < 0 and a < C)


cdef void _extremes(double[::1] a, double[::1] y, double[::1] F, double C,
                    double* b_up, double* b_low) noexcept nogil:
    cdef Py_ssize_t l
    b_up[0] = INFINITY
    b_low[0] = -INFINITY
    for l in range(y.shape[0]):
        if _in_up(a[l], y[l], C) and F[l] < b_up[0]:
            b_up[0] = F[l]
        if _in_low(a[l], y[l], C) and F[l] > b_low[0]:
            b_low[0] = F[l]


cdef double _bias(double[::1] a, double[::1] y, double[::1] F, double C) noexcept nogil:
    cdef double b_up, b_low
    _extremes(a, y, F, C, &b_up, &b_low)
    if not isfinite(b_up):
        b_up = b_low
    if not isfinite(b_low):
        b_low = b_up
    return -0.5 * (b_up + b_low)


def smo_solve(K, y, double C, double tol=1e-3, int max_passes=3, int max_sweeps=10000,
              double eps=1e-12):
    cdef cnp.ndarray[double, ndim=2] K_arr = np.ascontiguousarray(K, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] y_arr = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = y_arr.shape[0]
    cdef cnp.ndarray[double, ndim=1] alpha_arr = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] F_arr = -y_arr.copy()
    cdef double[:, ::1] Kv = K_arr
    cdef double[::1] yv = y_arr
    cdef double[::1] av = alpha_arr
    cdef double[::1] Fv = F_arr
    cdef int passes = 0, sweeps = 0, stall = 0, changed, pool
    cdef int stall_limit = 10 * max_passes
    cdef Py_ssize_t i, j, jj, off, l, m
    cdef double best, step, gain, obj, quad
    while passes < max_passes:
        if sweeps >= max_sweeps:
            return alpha_arr, _bias(av, yv, Fv, C), sweeps, SWEEP_CAP
        changed = 0
        gain = 0.0
        for i in range(n):
            j = -1
            if _in_up(av[i], yv[i], C):
                best = -INFINITY
                for l in range(n):
                    if l != i and _in_low(av[l], yv[l], C) and Fv[l] > best:
                        best = Fv[l]
                        j = l
                if j >= 0 and not Fv[i] < best - tol:
                    j = -1
            if j < 0 and _in_low(av[i], yv[i], C):
                best = INFINITY
                for l in range(n):
                    if l != i and _in_up(av[l], yv[l], C) and Fv[l] < best:
                        best = Fv[l]
                        j = l
                if j >= 0 and not Fv[i] > best + tol:
                    j = -1
            if j < 0:
                continue
            step = _take_step(i, j, Kv, yv, av, Fv, C, eps)
            if step < 0.0:
                for pool in range(2):
                    for off in range(1, n):
                        jj = (i + off) % n
                        if pool == 0 and not (0.0 < av[jj] < C):
                            continue
                        step = _take_step(i, jj, Kv, yv, av, Fv, C, eps)
                        if step >= 0.0:
                            break
                    if step >= 0.0:
                        break
            if step >= 0.0:
                changed += 1
                gain += step
        sweeps += 1
        if changed == 0:
            passes += 1
            stall = 0
        else:
            passes = 0
            quad = 0.0
            obj = 0.0
            for l in range(n):
                obj += av[l]
                if av[l] == 0.0:
                    continue
                for m in range(n):
                    quad += av[l] * yv[l] * Kv[l, m] * av[m] * yv[m]
            obj -= 0.5 * quad
            if gain <= 1e-12 * max(1.0, fabs(obj)):
                stall += 1
                if stall >= stall_limit:
                    return alpha_arr, _bias(av, yv, Fv, C), sweeps, STALLED
            else:
                stall = 0
    return alpha_arr, _bias(av, yv, Fv, C), sweeps, CONVERGED


cdef double _row_entropy(double[::1] d, double beta, double[::1] p) noexcept nogil:
    cdef Py_ssize_t k, m = d.shape[0]
    cdef double total = 0.0, dot = 0.0
    for k in range(m):
        p[k] = exp(-d[k] * beta)
        total += p[k]
    for k in range(m):
        dot += d[k] * p[k]
    for k in range(m):
        p[k] /= total
    return log(total) + beta * dot / total


def perplexity_search(D, double perplexity, double tol=1e-5, int max_iter=100):
    cdef cnp.ndarray[double, ndim=2] D_arr = np.ascontiguousarray(D, dtype=np.float64)
    cdef Py_ssize_t n = D_arr.shape[0]
    cdef cnp.ndarray[double, ndim=2] P_arr = np.zeros((n, n))
    cdef cnp.ndarray[double, ndim=1] beta_arr = np.ones(n)
    cdef double[:, ::1] Dv = D_arr
    cdef double[:, ::1] Pv = P_arr
    cdef double[::1] d = np.empty(max(n - 1, 1))
    cdef double[::1] p = np.empty(max(n - 1, 1))
    cdef double log_target = log(perplexity)
    cdef double beta, lo, hi, H, dmin
    cdef Py_ssize_t i, k, m, it
    cdef bint ok
    failed = []
    for i in range(n):
        m = 0
        for k in range(n):
            if k != i:
                d[m] = Dv[i, k]
                m += 1
        dmin = INFINITY
        for k in range(n - 1):
            if d[k] < dmin:
                dmin = d[k]
        for k in range(n - 1):
            d[k] = d[k] - dmin
        beta = 1.0
        lo = -INFINITY
        hi = INFINITY
        ok = False
        for it in range(max_iter):
            H = _row_entropy(d[:n - 1], beta, p[:n - 1])
            if fabs(exp(H) - perplexity) < tol:
                ok = True
                break
            if H > log_target:
                lo = beta
                beta = beta * 2.0 if hi == INFINITY else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = beta * 0.5 if lo == -INFINITY else 0.5 * (beta + lo)
        if not ok:
            failed.append(i)
            if isfinite(lo) and isfinite(hi):
                beta = 0.5 * (lo + hi)
            _row_entropy(d[:n - 1], beta, p[:n - 1])
        beta_arr[i] = beta
        m = 0
        for k in range(n):
            if k != i:
                Pv[i, k] = p[m]
                m += 1
    return P_arr, beta_arr, failed
