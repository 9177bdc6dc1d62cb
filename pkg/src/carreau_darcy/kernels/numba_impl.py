"""numba-compiled kernels; same contracts as :mod:`numpy_impl`."""
import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, fastmath=False)
def _strain_at(grads, wloc, e, q, D):
    na = grads.shape[2]
    for i in range(3):
        for j in range(3):
            D[i, j] = 0.0
    for a in range(na):
        for i in range(3):
            wi = wloc[e, a, i]
            if wi != 0.0:
                for j in range(3):
                    D[i, j] += wi * grads[e, q, a, j]
    for i in range(3):
        for j in range(i + 1, 3):
            s = 0.5 * (D[i, j] + D[j, i])
            D[i, j] = s
            D[j, i] = s


@njit(cache=True)
def strain_sq(grads, wloc):
    ne, nq = grads.shape[0], grads.shape[1]
    out = np.empty((ne, nq))
    D = np.empty((3, 3))
    for e in range(ne):
        for q in range(nq):
            _strain_at(grads, wloc, e, q, D)
            s = 0.0
            for i in range(3):
                for j in range(3):
                    s += D[i, j] * D[i, j]
            out[e, q] = s
    return out


@njit(cache=True)
def carreau_residual(grads, wdet, wloc, r, lam, eta0, eta_inf, mu):
    ne, nq, na = grads.shape[0], grads.shape[1], grads.shape[2]
    out = np.zeros((ne, 3 * na))
    D = np.empty((3, 3))
    for e in range(ne):
        for q in range(nq):
            _strain_at(grads, wloc, e, q, D)
            s = 0.0
            for i in range(3):
                for j in range(3):
                    s += D[i, j] * D[i, j]
            eta = (eta0 - eta_inf) * (1.0 + lam * s) ** (0.5 * r - 1.0) + eta_inf
            wt = mu * wdet[e, q] * eta
            for a in range(na):
                for i in range(3):
                    acc = 0.0
                    for l in range(3):
                        acc += D[i, l] * grads[e, q, a, l]
                    out[e, 3 * a + i] += wt * acc
    return out


@njit(cache=True)
def carreau_jacobian(grads, wdet, wloc, r, lam, eta0, eta_inf, mu):
    ne, nq, na = grads.shape[0], grads.shape[1], grads.shape[2]
    n = 3 * na
    K = np.zeros((ne, n, n))
    D = np.empty((3, 3))
    DG = np.empty((na, 3))
    for e in range(ne):
        for q in range(nq):
            _strain_at(grads, wloc, e, q, D)
            s = 0.0
            for i in range(3):
                for j in range(3):
                    s += D[i, j] * D[i, j]
            base = 1.0 + lam * s
            eta = (eta0 - eta_inf) * base ** (0.5 * r - 1.0) + eta_inf
            c = lam * (r - 2.0) * (eta0 - eta_inf) * base ** (0.5 * r - 2.0)
            we = 0.5 * mu * wdet[e, q] * eta
            wc = mu * wdet[e, q] * c
            for a in range(na):
                for i in range(3):
                    acc = 0.0
                    for l in range(3):
                        acc += D[i, l] * grads[e, q, a, l]
                    DG[a, i] = acc
            for a in range(na):
                ga0 = grads[e, q, a, 0]
                ga1 = grads[e, q, a, 1]
                ga2 = grads[e, q, a, 2]
                for b in range(a, na):
                    gb0 = grads[e, q, b, 0]
                    gb1 = grads[e, q, b, 1]
                    gb2 = grads[e, q, b, 2]
                    gg = ga0 * gb0 + ga1 * gb1 + ga2 * gb2
                    ga = (ga0, ga1, ga2)
                    gb = (gb0, gb1, gb2)
                    for i in range(3):
                        for j in range(3):
                            v = we * ga[j] * gb[i] + wc * DG[a, i] * DG[b, j]
                            if i == j:
                                v += we * gg
                            K[e, 3 * a + i, 3 * b + j] += v
            # mirror the upper block triangle
        for a in range(na):
            for b in range(a + 1, na):
                for i in range(3):
                    for j in range(3):
                        K[e, 3 * b + j, 3 * a + i] = K[e, 3 * a + i, 3 * b + j]
    return K
