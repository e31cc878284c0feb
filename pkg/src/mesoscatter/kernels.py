"""Helmholtz Green's functions, the electromagnetic dyadic, and plane waves.

All kernels broadcast over leading axes: ``x`` and ``z`` may be arrays of shape
``(..., 3)``. Coincident source/target points are rejected rather than
regularized; self-interaction is the business of the callers.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from mesoscatter._validation import as_points
from mesoscatter.errors import DomainError

FOUR_PI = 4.0 * np.pi


def _separation(x, z):
    d = as_points(x, "x") - as_points(z, "z")
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0.0):
        raise DomainError("kernel evaluated at coincident points")
    return d, r


def _check_k(k: float) -> float:
    k = float(k)
    if not np.isfinite(k) or k < 0:
        raise DomainError(f"wavenumber must be finite and non-negative, got {k}")
    return k


def phi_k(k: float, x, z):
    """Outgoing Helmholtz fundamental solution ``exp(ik|x-z|) / (4 pi |x-z|)``."""
    k = _check_k(k)
    _, r = _separation(x, z)
    return np.exp(1j * k * r) / (FOUR_PI * r)


def grad_phi_k(k: float, x, z):
    """Gradient of :func:`phi_k` with respect to ``x``."""
    k = _check_k(k)
    d, r = _separation(x, z)
    phi = np.exp(1j * k * r) / (FOUR_PI * r)
    return (phi * (1j * k - 1.0 / r) / r)[..., None] * d


def pi_k(k: float, x, z):
    """Dyadic Green's function ``k^2 phi I + grad grad phi`` (shape ``(..., 3, 3)``)."""
    k = _check_k(k)
    d, r = _separation(x, z)
    return _dyadic_from_separation(k, d, r)


def _dyadic_from_separation(k: float, d: np.ndarray, r: np.ndarray) -> np.ndarray:
    phi = np.exp(1j * k * r) / (FOUR_PI * r)
    ikr = 1j * k * r
    # grad grad phi = phi/r^2 [(3 - 3ikr - k^2 r^2) rr - (1 - ikr) I]
    a = phi * (k * k * r * r + ikr - 1.0) / (r * r)
    b = phi * (3.0 - 3.0 * ikr - k * k * r * r) / (r * r)
    rhat = d / r[..., None]
    out = b[..., None, None] * (rhat[..., :, None] * rhat[..., None, :])
    out = out + a[..., None, None] * np.eye(3)
    return out


def cross_matrix(g: np.ndarray) -> np.ndarray:
    """Antisymmetric matrix ``[g]_x`` with ``[g]_x @ w == cross(g, w)``."""
    g = np.asarray(g)
    out = np.zeros(g.shape[:-1] + (3, 3), dtype=g.dtype)
    out[..., 0, 1] = -g[..., 2]
    out[..., 0, 2] = g[..., 1]
    out[..., 1, 0] = g[..., 2]
    out[..., 1, 2] = -g[..., 0]
    out[..., 2, 0] = -g[..., 1]
    out[..., 2, 1] = g[..., 0]
    return out


@dataclasses.dataclass(frozen=True)
class PlaneWave:
    """Incident plane wave with wavenumber ``k``, direction ``theta``, polarization ``P``."""

    k: float
    theta: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        k = float(self.k)
        if not np.isfinite(k) or k <= 0:
            raise DomainError(f"wavenumber k must be positive, got {self.k}")
        theta = as_points(self.theta, "theta").reshape(3)
        P = as_points(self.P, "P").reshape(3)
        if abs(np.linalg.norm(theta) - 1.0) > 1e-14:
            raise DomainError("theta must be a unit vector")
        if abs(theta @ P) > 1e-14 * max(1.0, np.linalg.norm(P)):
            raise DomainError("P must be orthogonal to theta")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "P", P)

    @property
    def H_polarization(self) -> np.ndarray:
        return np.cross(self.theta, self.P)


def incident_fields(pw: PlaneWave, x):
    """Returns ``(E_in, H_in)`` at points ``x``.

    ``E_in = P exp(ik theta.x)`` and ``H_in = theta x P exp(ik theta.x)``, so that
    ``curl E_in = ik H_in`` and ``curl H_in = -ik E_in``.
    """
    x = as_points(x)
    phase = np.exp(1j * pw.k * (x @ pw.theta))[..., None]
    return phase * pw.P, phase * pw.H_polarization
