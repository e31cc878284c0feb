"""Averaging operator ``K0``, corrected tensors ``C_T`` and effective parameters.

``K0`` is the ball-averaged static dyadic over a cube of edge 2 with its
inscribed unit ball ``S``::

    K0 = 1/|S| int_cube int_S grad grad Phi_0(x, z) dx dz

For ``z`` inside ``S`` the inner integral is the Hessian of the Newtonian
potential of the ball, ``-I/3``; outside ``S`` the mean-value property turns it
into ``|S| Pi_0(0, z)``. What remains is a smooth integral over the cube minus
the ball, done face by face in cone coordinates.

Two conventions link ``C_T``, ``P0`` and ``K``:

* ``"depolarizing"``: ``C_T = (I - c^-3 P0 K0)^-1 P0`` and ``K = -c^-3 K0 C_T``.
* ``"lorentz"``: ``C_T = (I + c^-3 P0 K0)^-1 P0`` and ``K = c^-3 K0 C_T``.

Both satisfy ``C_T (I - K)^-1 = P0``. With ``K0 = -I/3`` the second one is the
Clausius-Mossotti / Maxwell-Garnett local-field form.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

from mesoscatter._validation import as_tensor3
from mesoscatter.errors import BornConditionError, ConvergenceError, DomainError
from mesoscatter.polarization import PolarizationPair

CONVENTIONS = ("depolarizing", "lorentz")


def _cube_minus_ball_dyadic(order: int) -> np.ndarray:
    """``int_{[-1,1]^3 minus B_1} (3 zz - I)/(4 pi |z|^3) dz`` with ``order`` GL nodes per axis."""
    t, w = np.polynomial.legendre.leggauss(order)
    u, v = np.meshgrid(t, t, indexing="ij")
    wt = np.outer(w, w)
    rho = np.sqrt(1.0 + u * u + v * v)
    # Cone over the face x = 1: z = s (1, u, v), s in [1/rho, 1], dV = s^2 ds du dv.
    radial = np.log(rho) / rho**3
    total = np.zeros((3, 3))
    for axis in range(3):
        for sign in (1.0, -1.0):
            d = np.zeros(u.shape + (3,))
            d[..., axis] = sign
            d[..., (axis + 1) % 3] = u
            d[..., (axis + 2) % 3] = v
            zhat = d / rho[..., None]
            kern = 3.0 * zhat[..., :, None] * zhat[..., None, :] - np.eye(3)
            total += np.einsum("ij,ijab->ab", wt * radial, kern)
    return total / (4.0 * np.pi)


@functools.lru_cache(maxsize=8)
def _k0_cached(order: int, tol: float, max_order: int) -> tuple:
    prev = _cube_minus_ball_dyadic(order)
    n = order
    while True:
        n2 = 2 * n
        cur = _cube_minus_ball_dyadic(n2)
        err = float(np.max(np.abs(cur - prev)))
        if err <= tol:
            return tuple(map(tuple, cur - np.eye(3) / 3.0)), err
        if n2 >= max_order:
            raise ConvergenceError(f"K0 quadrature stalled at error {err:.2e}", [err])
        prev, n = cur, n2


def compute_K0(quadrature_order: int = 8, tol: float = 1e-13, max_order: int = 1024) -> np.ndarray:
    """The ``delta``-independent averaging operator on constants (a 3x3 matrix).

    Gauss-Legendre order is doubled from ``quadrature_order`` until successive
    results agree to ``tol``.
    """
    if quadrature_order < 4:
        raise DomainError("quadrature_order must be >= 4")
    k0, _ = _k0_cached(int(quadrature_order), float(tol), int(max_order))
    return np.array(k0)


def spectral_radius(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m))))


@dataclasses.dataclass(frozen=True)
class EffectiveOperators:
    """Corrected tensors and the associated ``K`` matrices for one dilution ``c_r``."""

    K0: np.ndarray
    P0_eps: np.ndarray
    P0_mu: np.ndarray
    C_T_eps: np.ndarray
    C_T_mu: np.ndarray
    K_eps: np.ndarray
    K_mu: np.ndarray
    c_r: float
    spectral_radius_eps: float
    spectral_radius_mu: float
    convention: str = "depolarizing"

    @property
    def spectral_radius(self) -> float:
        return max(self.spectral_radius_eps, self.spectral_radius_mu)

    @property
    def contrast_eps(self) -> np.ndarray:
        """``c_r^-3 C_T_eps``, the permittivity contrast of the effective medium."""
        return self.C_T_eps / self.c_r**3

    @property
    def contrast_mu(self) -> np.ndarray:
        return self.C_T_mu / self.c_r**3

    def condition_a_residual(self) -> float:
        """``max ||C_T (I - K)^-1 - P0||`` over both materials."""
        I = np.eye(3)
        r1 = self.C_T_eps @ np.linalg.inv(I - self.K_eps) - self.P0_eps
        r2 = self.C_T_mu @ np.linalg.inv(I - self.K_mu) - self.P0_mu
        return float(max(np.linalg.norm(r1), np.linalg.norm(r2)))

    def to_json(self) -> dict:
        return {
            "K0": self.K0.tolist(),
            "C_T_eps": self.C_T_eps.tolist(),
            "C_T_mu": self.C_T_mu.tolist(),
            "K_eps": self.K_eps.tolist(),
            "K_mu": self.K_mu.tolist(),
            "c_r": self.c_r,
            "spectral_radius": self.spectral_radius,
            "convention": self.convention,
        }


def _sign(convention: str) -> float:
    if convention not in CONVENTIONS:
        raise DomainError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return 1.0 if convention == "depolarizing" else -1.0


def _corrected(P0, K0, c_r, convention, label):
    s = _sign(convention)
    c3 = float(c_r) ** -3
    M = s * c3 * P0 @ K0
    rho = spectral_radius(M)
    if rho >= 1.0:
        raise BornConditionError(
            f"spectral radius of c_r^-3 P0 K0 for {label} is {rho:.4f} >= 1; "
            "c_r is too small for the corrected tensor"
        )
    C = np.linalg.solve(np.eye(3) - M, P0)
    K = -s * c3 * K0 @ C
    if np.linalg.norm(K, 2) >= 1.0:
        raise BornConditionError(f"||K_{label}|| >= 1")
    return C, K, rho


def compute_C_tensors(pol: PolarizationPair, c_r: float, K0=None,
                      convention: str = "depolarizing") -> EffectiveOperators:
    """Corrected tensors ``C_T`` and ``K`` matrices at dilution ``c_r``.

    Raises:
        BornConditionError: ``rho(c_r^-3 P0 K0) >= 1`` or ``||K|| >= 1``.
    """
    c_r = float(c_r)
    if c_r <= 0:
        raise DomainError("c_r must be positive")
    K0 = compute_K0() if K0 is None else as_tensor3(K0, "K0")
    Ce, Ke, re = _corrected(pol.P0_eps, K0, c_r, convention, "eps")
    Cm, Km, rm = _corrected(pol.P0_mu, K0, c_r, convention, "mu")
    return EffectiveOperators(K0, pol.P0_eps, pol.P0_mu, Ce, Cm, Ke, Km, c_r, re, rm, convention)


@dataclasses.dataclass(frozen=True)
class EffectiveMedium:
    eps_ring: np.ndarray
    mu_ring: np.ndarray
    c_r: float
    mode: str

    def to_json(self) -> dict:
        return {"eps_ring": self.eps_ring.tolist(), "mu_ring": self.mu_ring.tolist(),
                "c_r": self.c_r, "mode": self.mode}


def effective_parameters(ops: EffectiveOperators, mode: str = "corrected") -> EffectiveMedium:
    """``I + c_r^-3 C_T`` (``"corrected"``) or ``I + c_r^-3 P0`` (``"leading"``)."""
    c3 = ops.c_r**-3
    if mode == "corrected":
        te, tm = ops.C_T_eps, ops.C_T_mu
    elif mode == "leading":
        te, tm = ops.P0_eps, ops.P0_mu
    else:
        raise DomainError(f"mode must be 'corrected' or 'leading', got {mode!r}")
    return EffectiveMedium(np.eye(3) + c3 * te, np.eye(3) + c3 * tm, ops.c_r, mode)


def born_series_tensors(P0, c_r: float, terms: int, K0=None, convention: str = "depolarizing"):
    """Truncated Neumann series ``sum_{t<terms} (s c_r^-3 P0 K0)^t P0`` for ``C_T``.

    ``s`` is +1 for the depolarizing convention and -1 for the Lorentz one.

    Raises:
        BornConditionError: the series diverges (spectral radius >= 1 or the
            term norms grow).
    """
    P0 = as_tensor3(P0, "P0")
    if terms < 1:
        raise DomainError("terms must be >= 1")
    K0 = compute_K0() if K0 is None else as_tensor3(K0, "K0")
    M = _sign(convention) * float(c_r) ** -3 * P0 @ K0
    rho = spectral_radius(M)
    if rho >= 1.0:
        raise BornConditionError(f"Born series diverges: spectral radius {rho:.4f} >= 1")
    term = P0.copy()
    total = P0.copy()
    prev_norm = np.linalg.norm(term)
    for t in range(1, terms):
        term = M @ term
        norm = np.linalg.norm(term)
        if t > 8 and norm > prev_norm > 0:
            raise BornConditionError(f"Born series term norms grow at term {t}")
        prev_norm = norm
        total = total + term
    return total
