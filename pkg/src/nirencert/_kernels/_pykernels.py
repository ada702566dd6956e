"""Pure-Python reference kernels.

Same signatures and results as the compiled ``_ckernels`` module; used
when the extension is not built or ``NIRENCERT_PURE=1`` is set.
"""
import math

import numpy as np

MAX_SWEEPS = 100


def _jacobi_inplace(a, m):
    """Cyclic Jacobi on the list-of-lists ``a`` (size m); returns eigenvalues."""
    for _ in range(MAX_SWEEPS):
        off = 0.0
        scale = 0.0
        for i in range(m):
            scale += a[i][i] * a[i][i]
            for j in range(i + 1, m):
                off += a[i][j] * a[i][j]
        scale += 2.0 * off
        if off <= 1e-32 * scale or off == 0.0:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                h = t * apq
                a[p][p] -= h
                a[q][q] += h
                a[p][q] = a[q][p] = 0.0
                for r in range(m):
                    if r == p or r == q:
                        continue
                    g = a[r][p]
                    hh = a[r][q]
                    a[r][p] = a[p][r] = g - s * (hh + g * tau)
                    a[r][q] = a[q][r] = hh + s * (g - hh * tau)
    return [a[i][i] for i in range(m)]


def symmetric_eigenvalues(mat):
    mat = np.asarray(mat, dtype=float)
    a = [list(map(float, row)) for row in mat]
    return np.sort(np.array(_jacobi_inplace(a, len(a))))


def least_eigenvalue(mat):
    mat = np.asarray(mat, dtype=float)
    if mat.shape[0] == 1:
        return float(mat[0, 0])
    a = [list(map(float, row)) for row in mat]
    return min(_jacobi_inplace(a, len(a)))


def subset_spectra(full, masks):
    """(rho, spectral radius) of the principal submatrix for each bitmask."""
    full = np.asarray(full, dtype=float)
    rows = [list(map(float, r)) for r in full]
    m = len(rows)
    rho = np.empty(len(masks))
    radius = np.empty(len(masks))
    for k, mask in enumerate(masks):
        mask = int(mask)
        idx = [i for i in range(m) if mask >> i & 1]
        a = [[rows[i][j] for j in idx] for i in idx]
        ev = _jacobi_inplace(a, len(idx)) if len(idx) > 1 else [a[0][0]]
        rho[k] = min(ev)
        radius[k] = max(abs(x) for x in ev)
    return rho, radius


def pair_interactions(lambdas, points, n, sigma):
    """Bubble interactions for every ordered pair (i, j), i != j.

    Returns ``eps`` (p x p, symmetric, zero diagonal), ``lam_deps`` with
    ``lam_deps[i, j] = lambda_i * d eps_ij / d lambda_i`` and ``da`` of
    shape (p, p, n+1) with the ambient gradient of eps_ij in a_i.
    """
    lam = [float(x) for x in lambdas]
    pts = np.asarray(points, dtype=float)
    rows = [list(map(float, r)) for r in pts]
    p = len(lam)
    dim = pts.shape[1]
    expo = (2.0 * sigma - n) / 2.0
    eps = np.zeros((p, p))
    lam_deps = np.zeros((p, p))
    da = np.zeros((p, p, dim))
    for i in range(p):
        for j in range(i + 1, p):
            li, lj = lam[i], lam[j]
            diff = [rows[i][k] - rows[j][k] for k in range(dim)]
            d2 = sum(x * x for x in diff)
            t = li / lj + lj / li + li * lj * d2
            e = t ** expo
            eps[i, j] = eps[j, i] = e
            # lambda_i dT/dlambda_i = li/lj - lj/li + li lj d2
            common = li * lj * d2
            lam_deps[i, j] = expo * e / t * (li / lj - lj / li + common)
            lam_deps[j, i] = expo * e / t * (lj / li - li / lj + common)
            f = expo * e / t * 2.0 * li * lj
            for k in range(dim):
                da[i, j, k] = f * diff[k]
                da[j, i, k] = -f * diff[k]
    return eps, lam_deps, da
