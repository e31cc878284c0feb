"""Polarization tensors of the reference particle shape.

Every particle is ``D_m = a B + z_m`` with the same reference shape ``B`` inside
the unit ball, so a single pair of tensors (electric, magnetic) describes the
whole cluster and the particle tensors are ``a^3`` times the reference ones.
Closed forms are provided for spheres (Clausius-Mossotti) and ellipsoids
(depolarization factors); anything else enters as a user-supplied tensor.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np
from scipy import integrate

from mesoscatter._validation import as_tensor3, check_spd, check_symmetric
from mesoscatter.errors import DomainError, MesoscatterError

UNIT_BALL_VOLUME = 4.0 * np.pi / 3.0


@dataclasses.dataclass(frozen=True)
class ContrastSpec:
    """Relative permittivity/permeability and their declared a-priori bounds.

    ``c_inf``, ``c_eps_minus`` and ``c_mu_minus`` are bounds the user declares;
    they are checked against the tensors but never derived from them.
    """

    eps_r: np.ndarray
    mu_r: np.ndarray
    c_inf: Optional[float] = None
    c_eps_minus: Optional[float] = None
    c_mu_minus: Optional[float] = None

    def __post_init__(self):
        eps = as_tensor3(self.eps_r, "eps_r")
        mu = as_tensor3(self.mu_r, "mu_r")
        check_spd(eps, "eps_r")
        check_spd(mu, "mu_r")
        object.__setattr__(self, "eps_r", eps)
        object.__setattr__(self, "mu_r", mu)
        c_eps, c_mu = eps - np.eye(3), mu - np.eye(3)
        if self.c_inf is not None:
            worst = max(np.linalg.norm(c_eps, 2), np.linalg.norm(c_mu, 2))
            if worst > self.c_inf * (1 + 1e-12):
                raise DomainError(f"contrast norm {worst:.6g} exceeds declared c_inf")
        for name, c, bound in (
            ("eps_r", c_eps, self.c_eps_minus),
            ("mu_r", c_mu, self.c_mu_minus),
        ):
            lo = np.linalg.eigvalsh(0.5 * (c + c.T)).min()
            if bound is not None and lo < bound * (1 - 1e-12):
                raise DomainError(f"{name} - I violates declared coercivity bound")
            if lo <= 0:
                raise DomainError(f"{name} - I must be positive definite")


@dataclasses.dataclass(frozen=True)
class PolarizationPair:
    """Electric and magnetic polarization tensors of the reference shape."""

    P0_eps: np.ndarray
    P0_mu: np.ndarray
    shape_tag: str = "custom"

    def __post_init__(self):
        pe = as_tensor3(self.P0_eps, "P0_eps")
        pm = as_tensor3(self.P0_mu, "P0_mu")
        check_symmetric(pe, "P0_eps")
        check_symmetric(pm, "P0_mu")
        object.__setattr__(self, "P0_eps", pe)
        object.__setattr__(self, "P0_mu", pm)

    @property
    def lambda_minus(self) -> float:
        return float(min(np.linalg.eigvalsh(self.P0_eps).min(), np.linalg.eigvalsh(self.P0_mu).min()))

    @property
    def lambda_plus(self) -> float:
        return float(max(np.linalg.eigvalsh(self.P0_eps).max(), np.linalg.eigvalsh(self.P0_mu).max()))

    @property
    def c_P0_eps(self) -> float:
        return float(np.linalg.norm(self.P0_eps, 2))

    @property
    def c_P0_mu(self) -> float:
        return float(np.linalg.norm(self.P0_mu, 2))

    @property
    def c_inf(self) -> float:
        """``max(||P0_eps||, ||P0_mu||)``, the constant entering the regularity condition."""
        return max(self.c_P0_eps, self.c_P0_mu)

    def require_spd(self) -> None:
        """Checks positive definiteness; an exactly zero tensor (no contrast) passes."""
        for name, t in (("P0_eps", self.P0_eps), ("P0_mu", self.P0_mu)):
            if np.any(t):
                check_spd(t, name)


def sphere_polarization(eps) -> np.ndarray:
    """Clausius-Mossotti tensor ``3|B| (eps-1)/(eps+2) I`` of the unit ball.

    ``eps`` may be a scalar or an isotropic 3x3 tensor; anisotropic tensors have
    no closed form here and must go through :func:`custom_pair`.
    """
    if np.ndim(eps) == 2:
        t = as_tensor3(eps, "eps")
        if np.max(np.abs(t - t[0, 0] * np.eye(3))) > 1e-12 * max(1.0, abs(t[0, 0])):
            raise DomainError("sphere_polarization only handles isotropic material tensors")
        eps = t[0, 0]
    eps = float(eps)
    if not np.isfinite(eps) or eps <= 0:
        raise DomainError(f"relative parameter must be positive, got {eps}")
    return 3.0 * UNIT_BALL_VOLUME * (eps - 1.0) / (eps + 2.0) * np.eye(3)


def depolarization_factors(semi_axes) -> np.ndarray:
    """Depolarization integrals ``L_i`` of an ellipsoid (they sum to one)."""
    ax = np.asarray(semi_axes, dtype=float)
    if ax.shape != (3,) or np.any(ax <= 0):
        raise DomainError("semi_axes must be three positive numbers")
    if np.allclose(ax, ax[0], rtol=0, atol=0):
        return np.full(3, 1.0 / 3.0)
    scale = ax.max()
    a2 = (ax / scale) ** 2
    prod = float(np.prod(ax / scale))
    out = np.empty(3)
    for i in range(3):
        # s = t / (1 - t) maps [0, inf) onto [0, 1).
        def f(t, i=i):
            if t >= 1.0:
                return 0.0
            s = t / (1.0 - t)
            q = np.sqrt((s + a2[0]) * (s + a2[1]) * (s + a2[2]))
            return 1.0 / ((s + a2[i]) * q * (1.0 - t) ** 2)

        val, err = integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
        if not np.isfinite(val) or err > 1e-9:
            raise MesoscatterError(f"depolarization quadrature did not converge (err={err:.2e})")
        out[i] = 0.5 * prod * val
    return out


def ellipsoid_polarization(semi_axes, eps: float, rotation=None) -> np.ndarray:
    """Polarization tensor of an ellipsoid with isotropic material parameter ``eps``.

    In the principal frame the tensor is diagonal with entries
    ``|B| (eps-1) / (1 + L_i (eps-1))``. ``rotation`` (a 3x3 orthogonal matrix
    whose columns are the principal axes) conjugates the result.
    """
    ax = np.asarray(semi_axes, dtype=float)
    if ax.shape != (3,) or np.any(ax <= 0):
        raise DomainError("semi_axes must be three positive numbers")
    if ax.max() > 1.0 + 1e-12:
        raise DomainError("reference ellipsoid must fit in the unit ball")
    eps = float(eps)
    if eps <= 0:
        raise DomainError(f"relative parameter must be positive, got {eps}")
    L = depolarization_factors(ax)
    vol = UNIT_BALL_VOLUME * float(np.prod(ax))
    diag = vol * (eps - 1.0) / (1.0 + L * (eps - 1.0))
    P = np.diag(diag)
    if rotation is not None:
        R = as_tensor3(rotation, "rotation")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10:
            raise DomainError("rotation must be orthogonal")
        P = R @ P @ R.T
    return P


def scale_to_particle(P0, a: float) -> np.ndarray:
    """Particle tensor ``a^3 P0`` for a particle of size ``a``."""
    a = float(a)
    if a <= 0:
        raise DomainError("particle size must be positive")
    return a**3 * as_tensor3(P0, "P0")


def pair_from_json(doc: dict) -> PolarizationPair:
    """Builds a :class:`PolarizationPair` from the JSON shape spec."""
    shape = doc.get("shape")
    if shape == "sphere":
        pair = PolarizationPair(
            sphere_polarization(doc["eps"]), sphere_polarization(doc["mu"]), "sphere"
        )
    elif shape == "ellipsoid":
        rot = doc.get("rotation")
        pair = PolarizationPair(
            ellipsoid_polarization(doc["axes"], doc["eps"], rot),
            ellipsoid_polarization(doc["axes"], doc["mu"], rot),
            "ellipsoid",
        )
    elif shape == "custom":
        pair = PolarizationPair(np.asarray(doc["P0_eps"]), np.asarray(doc["P0_mu"]), "custom")
    else:
        raise DomainError(f"unknown shape {shape!r}")
    pair.require_spd()
    return pair
