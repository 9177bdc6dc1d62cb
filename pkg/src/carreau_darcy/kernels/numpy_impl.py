"""Vectorised numpy kernels (reference path, no compilation)."""
import numpy as np

NAME = "numpy"


def _strain(grads, wloc):
    # grad w at quadrature points: (ne, nq, 3 comps, 3 dirs)
    Gw = np.einsum("eai,eqaj->eqij", wloc, grads, optimize=True)
    return 0.5 * (Gw + Gw.transpose(0, 1, 3, 2))


def _law(D, r, lam, eta0, eta_inf):
    s = np.einsum("eqij,eqij->eq", D, D)
    base = 1.0 + lam * s
    eta = (eta0 - eta_inf) * base ** (0.5 * r - 1.0) + eta_inf
    c = lam * (r - 2.0) * (eta0 - eta_inf) * base ** (0.5 * r - 2.0)
    return eta, c


def strain_sq(grads, wloc):
    D = _strain(grads, wloc)
    return np.einsum("eqij,eqij->eq", D, D)


def carreau_residual(grads, wdet, wloc, r, lam, eta0, eta_inf, mu):
    """``mu * int eta(D w) D w : D phi`` for every local P2 vector basis function."""
    D = _strain(grads, wloc)
    eta, _ = _law(D, r, lam, eta0, eta_inf)
    wt = mu * wdet * eta
    # D w : D(phi_a e_i) = (D w grad phi_a)_i
    out = np.einsum("eq,eqil,eqal->eai", wt, D, grads, optimize=True)
    return out.reshape(len(grads), -1)


def carreau_jacobian(grads, wdet, wloc, r, lam, eta0, eta_inf, mu):
    """Element matrices of the linearised Carreau operator at ``wloc``."""
    ne, nq, na, _ = grads.shape
    D = _strain(grads, wloc)
    eta, c = _law(D, r, lam, eta0, eta_inf)
    w_eta = mu * wdet * eta
    w_c = mu * wdet * c
    gg = np.einsum("eqad,eqbd->eqab", grads, grads, optimize=True)
    K = np.zeros((ne, na, 3, na, 3))
    # eta * D(phi_a e_i) : D(phi_b e_j) = eta/2 (delta_ij g_a.g_b + g_a[j] g_b[i])
    diag = 0.5 * np.einsum("eq,eqab->eab", w_eta, gg)
    for i in range(3):
        K[:, :, i, :, i] += diag
    K += 0.5 * np.einsum("eq,eqaj,eqbi->eaibj", w_eta, grads, grads, optimize=True)
    DG = np.einsum("eqil,eqal->eqai", D, grads, optimize=True)
    K += np.einsum("eq,eqai,eqbj->eaibj", w_c, DG, DG, optimize=True)
    return K.reshape(ne, 3 * na, 3 * na)
