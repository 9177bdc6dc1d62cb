"""Carreau viscosity law and its directional derivative.

Tensors are numpy arrays of shape ``(..., 3, 3)``; the norm is the
Frobenius norm, ``|D|^2 = tr(D D^T)``.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class CarreauParams:
    """Rheology parameters (all nondimensional).

    ``mu`` scales the whole viscous term of the cell problem and is not part
    of the viscosity itself.
    """

    r: float = 1.3
    lam: float = 1.0
    mu: float = 1.0
    eta0: float = 1.0
    eta_inf: float = 0.0

    def __post_init__(self):
        if not self.r > 1:
            raise ValueError(f"flow index r must exceed 1, got {self.r}")
        if not self.lam > 0:
            raise ValueError(f"time constant lambda must be positive, got {self.lam}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.eta0 > self.eta_inf >= 0:
            raise ValueError(f"need eta0 > eta_inf >= 0, got {self.eta0}, {self.eta_inf}")
        if self.eta_inf == 0:
            warnings.warn("eta_inf = 0: the law degenerates at infinite shear", stacklevel=3)

    @property
    def regime(self):
        if self.r < 2:
            return "shear-thinning"
        if self.r > 2:
            return "shear-thickening"
        return "newtonian"

    @classmethod
    def quiet(cls, **kw):
        """Construct without the ``eta_inf = 0`` warning (for programmatic use)."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return cls(**kw)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return CarreauParams.quiet(**d)

    def as_dict(self):
        return asdict(self)


def _ddot(A, B):
    return np.einsum("...ij,...ij->...", A, B)


def viscosity_from_sq(p: CarreauParams, s):
    """Viscosity as a function of ``s = |D|^2``."""
    return (p.eta0 - p.eta_inf) * (1.0 + p.lam * s) ** (0.5 * p.r - 1.0) + p.eta_inf


def viscosity_slope(p: CarreauParams, s):
    """Factor ``c`` with ``<eta'(D), H> = c * D:H``."""
    return p.lam * (p.r - 2.0) * (p.eta0 - p.eta_inf) * (1.0 + p.lam * s) ** (0.5 * p.r - 2.0)


def viscosity(p: CarreauParams, D):
    D = np.asarray(D, dtype=float)
    return viscosity_from_sq(p, _ddot(D, D))


def viscosity_derivative(p: CarreauParams, D, H):
    """Directional derivative of the viscosity at ``D`` in direction ``H``."""
    D = np.asarray(D, dtype=float)
    return viscosity_slope(p, _ddot(D, D)) * _ddot(D, np.asarray(H, dtype=float))


def stress_kernel(p: CarreauParams, D):
    D = np.asarray(D, dtype=float)
    return viscosity(p, D)[..., None, None] * D


def stress_kernel_derivative(p: CarreauParams, D, H):
    """Gateaux derivative of :func:`stress_kernel`: ``eta(D) H + <eta'(D), H> D``."""
    D = np.asarray(D, dtype=float)
    H = np.asarray(H, dtype=float)
    return viscosity(p, D)[..., None, None] * H + viscosity_derivative(p, D, H)[..., None, None] * D


def sym(G):
    G = np.asarray(G, dtype=float)
    return 0.5 * (G + np.swapaxes(G, -1, -2))
