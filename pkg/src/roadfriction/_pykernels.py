"""Pure numpy implementations of the hot inner loops.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``ROADFRICTION_PURE=1`` is set. Every function here has a twin with the
same signature and semantics in ``_ckernels.pyx``.
"""

import math

import numpy as np

# SMO exit codes
CONVERGED = 0
STALLED = 1
SWEEP_CAP = 2


def jacobi_eigh(a, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues in
    the order they sit on the final diagonal (unsorted).
    """
    A = np.array(a, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    for sweep in range(max_sweeps + 1):
        off = _max_offdiag(A)
        if off < tol or sweep == max_sweeps:
            return np.diag(A).copy(), V, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q]
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :]
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                v_p = V[:, p].copy()
                v_q = V[:, q]
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    return np.diag(A).copy(), V, max_sweeps


def _max_offdiag(A):
    n = A.shape[0]
    if n < 2:
        return 0.0
    off = np.abs(A - np.diag(np.diag(A)))
    return float(off.max())


def smo_solve(K, y, C, tol=1e-3, max_passes=3, max_sweeps=10000, eps=1e-12):
    """Sequential minimal optimization on a precomputed Gram matrix.

    Maximises ``sum(a) - a' Q a / 2`` with ``Q = (y y') * K`` over
    ``0 <= a <= C``, ``y'a = 0``. A multiplier is a KKT violator when its
    bias-free error ``F_i = sum_l a_l y_l K_li - y_i`` sits more than
    ``tol`` outside the interval the other multipliers allow; its partner
    is the j maximising ``|F_i - F_j|`` among those that can move the
    pair uphill. Returns
    ``(alpha, b, sweeps, status)`` with status CONVERGED, STALLED or
    SWEEP_CAP.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    F = -y.copy()
    passes = 0
    sweeps = 0
    stall = 0
    stall_limit = 10 * max_passes
    while passes < max_passes:
        if sweeps >= max_sweeps:
            return alpha, _bias(alpha, y, F, C), sweeps, SWEEP_CAP
        changed = 0
        gain = 0.0
        for i in range(n):
            j = _partner(i, alpha, y, F, C, tol)
            if j < 0:
                continue
            step = _take_step(i, j, K, y, alpha, F, C, eps)
            if step < 0.0:
                # second choice: unbounded multipliers, then everything,
                # both scanned cyclically from i + 1
                for pool in (True, False):
                    for off in range(1, n):
                        jj = (i + off) % n
                        if pool and not (0.0 < alpha[jj] < C):
                            continue
                        step = _take_step(i, jj, K, y, alpha, F, C, eps)
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
            obj = float(alpha.sum() - 0.5 * (alpha * y) @ K @ (alpha * y))
            if gain <= 1e-12 * max(1.0, abs(obj)):
                stall += 1
                if stall >= stall_limit:
                    return alpha, _bias(alpha, y, F, C), sweeps, STALLED
            else:
                stall = 0
    return alpha, _bias(alpha, y, F, C), sweeps, CONVERGED


def _up_low(alpha, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0.0))
    low = ((y > 0) & (alpha > 0.0)) | ((y < 0) & (alpha < C))
    return up, low


def _partner(i, alpha, y, F, C, tol):
    """Index of the partner for a violating i, or -1 when i satisfies the
    KKT conditions to within tol. The partner is the admissible j that
    maximises |F_i - F_j| in the direction the violation points."""
    up, low = _up_low(alpha, y, C)
    up[i] = False
    low[i] = False
    if _up_low(alpha[i:i + 1], y[i:i + 1], C)[0][0] and low.any():
        j = int(np.flatnonzero(low)[np.argmax(F[low])])
        if F[i] < F[j] - tol:
            return j
    if _up_low(alpha[i:i + 1], y[i:i + 1], C)[1][0] and up.any():
        j = int(np.flatnonzero(up)[np.argmin(F[up])])
        if F[i] > F[j] + tol:
            return j
    return -1


def _bias(alpha, y, F, C):
    up, low = _up_low(alpha, y, C)
    b_up = F[up].min() if up.any() else F[low].max()
    b_low = F[low].max() if low.any() else F[up].min()
    return float(-0.5 * (b_up + b_low))


def _take_step(i, j, K, y, alpha, F, C, eps):
    """Joint update of (alpha_i, alpha_j); returns the dual objective
    gain, or -1 when no progress was made."""
    if i == j:
        return -1.0
    ai, aj = alpha[i], alpha[j]
    yi, yj = y[i], y[j]
    s = yi * yj
    if s < 0:
        L = max(0.0, aj - ai)
        H = min(C, C + aj - ai)
    else:
        L = max(0.0, ai + aj - C)
        H = min(C, ai + aj)
    if H - L < eps:
        return -1.0
    kii, kjj, kij = K[i, i], K[j, j], K[i, j]
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
    if abs(aj_new - aj) < eps * (aj_new + aj + eps):
        return -1.0
    t = aj_new - aj
    gain = t * slope - 0.5 * eta * t * t
    ai_new = ai - s * t
    # snap onto the box to keep the bound tests exact
    if ai_new < 1e-12 * C:
        ai_new = 0.0
    elif ai_new > C * (1.0 - 1e-12):
        ai_new = C
    if aj_new < 1e-12 * C:
        aj_new = 0.0
    elif aj_new > C * (1.0 - 1e-12):
        aj_new = C
    F += yi * (ai_new - ai) * K[i] + yj * (aj_new - aj) * K[j]
    alpha[i] = ai_new
    alpha[j] = aj_new
    return gain


def perplexity_search(D, perplexity, tol=1e-5, max_iter=100):
    """Per-row bisection on the Gaussian precision so that the
    conditional distribution of each row has the requested perplexity.

    ``D`` holds squared distances. Returns ``(P, beta, failed)`` where
    ``beta = 1 / (2 sigma^2)`` and ``failed`` lists rows whose search
    did not reach ``tol`` (those use the bracket midpoint).
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    n = D.shape[0]
    P = np.zeros((n, n))
    betas = np.ones(n)
    failed = []
    log_target = math.log(perplexity)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        d = D[i, mask]
        d = d - d.min()
        beta = 1.0
        lo = -math.inf
        hi = math.inf
        ok = False
        for _ in range(max_iter):
            p, H = _row_entropy(d, beta)
            if abs(math.exp(H) - perplexity) < tol:
                ok = True
                break
            if H > log_target:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = beta * 0.5 if lo == -math.inf else 0.5 * (beta + lo)
        if not ok:
            failed.append(i)
            if math.isfinite(lo) and math.isfinite(hi):
                beta = 0.5 * (lo + hi)
            p, _ = _row_entropy(d, beta)
        betas[i] = beta
        P[i, mask] = p
        mask[i] = True
    return P, betas, failed


def _row_entropy(d, beta):
    p = np.exp(-d * beta)
    total = p.sum()
    H = math.log(total) + beta * float(d @ p) / total
    return p / total, H
