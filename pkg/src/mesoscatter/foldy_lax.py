"""Foldy-Lax point-interaction system for a cluster of small particles.

Unknowns are the rescaled moments ``U_m = [P_{D_m}^eps]^{-1} R_m`` and
``V_m = [P_{D_m}^mu]^{-1} Q_m``; they solve

    U_m - a^3 sum_{j!=m} [Pi_k(z_m,z_j) P0_eps U_j + ik grad Phi_k(z_m,z_j) x (P0_mu V_j)] = E_in(z_m)
    V_m - a^3 sum_{j!=m} [Pi_k(z_m,z_j) P0_mu V_j - ik grad Phi_k(z_m,z_j) x (P0_eps U_j)] = H_in(z_m)

The stacked vector stores all ``U`` first and then all ``V`` (``6M`` complex
entries).
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from mesoscatter import _lattice
from mesoscatter.cluster import Cluster
from mesoscatter.errors import ConvergenceError, DomainError
from mesoscatter.farfield import FarFieldSamples, far_field_from_moments
from mesoscatter.kernels import PlaneWave, cross_matrix, grad_phi_k, incident_fields, pi_k
from mesoscatter.polarization import PolarizationPair

logger = logging.getLogger(__name__)

# Dense LU is used up to this many unknowns (6M); above, restarted GMRES.
DIRECT_MAX_UNKNOWNS = 4000


@dataclasses.dataclass(frozen=True)
class FoldyLaxSolution:
    U: np.ndarray  # (M, 3)
    V: np.ndarray  # (M, 3)
    residual_norm: float
    solver_iterations: int
    method: str
    residual_history: tuple = ()

    def moments(self, cluster: Cluster, pol: PolarizationPair):
        """The physical moments ``(R_m, Q_m) = a^3 (P0_eps U_m, P0_mu V_m)``."""
        a3 = cluster.a**3
        return a3 * self.U @ pol.P0_eps.T, a3 * self.V @ pol.P0_mu.T


class FoldyLaxOperator:
    """Matrix-free ``I - A`` for a given cluster, polarization pair and wavenumber.

    Args:
        use_fft: ``None`` picks the FFT path whenever the cluster fills a
            complete lattice box; ``True`` forces it (and fails otherwise).
    """

    def __init__(self, cluster: Cluster, pol: PolarizationPair, k: float,
                 use_fft: Optional[bool] = None):
        self.cluster = cluster
        self.pol = pol
        self.k = float(k)
        self.M = cluster.M
        self.weight = cluster.a**3
        if use_fft is None:
            use_fft = cluster.is_full_lattice and self.M > 1
        if use_fft and not cluster.is_full_lattice:
            raise DomainError("the FFT path needs a cluster filling a lattice box")
        self.use_fft = bool(use_fft)
        self._conv = None
        if self.use_fft:
            self._conv = _lattice.LatticeConvolution(
                cluster.lattice_shape, cluster.delta, self.k, self.weight
            )
            self._order = np.ravel_multi_index(cluster.lattice_index.T, cluster.lattice_shape)

    @property
    def shape(self):
        return (6 * self.M, 6 * self.M)

    def split(self, x):
        x = np.asarray(x, dtype=complex).reshape(2, self.M, 3)
        return x[0], x[1]

    def coupling(self, U, V, fft: Optional[bool] = None):
        """The coupling sums ``(A_E, A_H)`` (everything except the identity)."""
        src_E = U @ self.pol.P0_eps.T
        src_H = V @ self.pol.P0_mu.T
        if self.M <= 1:
            return np.zeros_like(src_E), np.zeros_like(src_H)
        use_fft = self.use_fft if fft is None else fft
        if use_fft:
            if self._conv is None:
                raise DomainError("FFT path not available for this cluster")
            shape = self.cluster.lattice_shape
            gE = np.zeros((int(np.prod(shape)), 3), dtype=complex)
            gH = np.zeros_like(gE)
            gE[self._order] = src_E
            gH[self._order] = src_H
            oE, oH = self._conv.apply(gE.reshape(shape + (3,)), gH.reshape(shape + (3,)))
            return oE.reshape(-1, 3)[self._order], oH.reshape(-1, 3)[self._order]
        return _lattice.direct_apply(self.cluster.centers, self.k, self.weight, src_E, src_H)

    def apply(self, x, fft: Optional[bool] = None):
        """``(I - A) x`` on the stacked vector."""
        U, V = self.split(x)
        aE, aH = self.coupling(U, V, fft)
        return np.concatenate([(U - aE).ravel(), (V - aH).ravel()])

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self.apply, dtype=complex)

    def dense(self) -> np.ndarray:
        """Explicit ``6M x 6M`` matrix of ``I - A``."""
        M, z, k = self.M, self.cluster.centers, self.k
        mat = np.eye(6 * M, dtype=complex)
        if M <= 1:
            return mat
        mi, ji = np.nonzero(~np.eye(M, dtype=bool))
        pi = pi_k(k, z[mi], z[ji])
        gx = cross_matrix(grad_phi_k(k, z[mi], z[ji]))
        w = self.weight
        Pe, Pm = self.pol.P0_eps, self.pol.P0_mu
        blocks = {
            (0, 0): -w * pi @ Pe,
            (0, 1): -w * 1j * k * gx @ Pm,
            (1, 0): w * 1j * k * gx @ Pe,
            (1, 1): -w * pi @ Pm,
        }
        view = mat.reshape(2, M, 3, 2, M, 3)
        for (bi, bj), vals in blocks.items():
            view[bi, mi, :, bj, ji, :] += vals
        return mat


def rhs(cluster: Cluster, pw: PlaneWave) -> np.ndarray:
    E, H = incident_fields(pw, cluster.centers)
    return np.concatenate([E.ravel(), H.ravel()])


def far_field_remainder_metadata(k: float, c_r: float) -> dict:
    """Describes the neglected far-field remainder; its constant is unknown, so no
    number is attached and nothing is added to the computed pattern."""
    return {
        "order": "k * c_inf * (1/c_eps_minus + 1/c_mu_minus) * c_r^-7",
        "k": k,
        "c_r": c_r,
        "constant": "unspecified",
        "added_to_far_field": False,
    }


def invertibility_margin(cluster: Cluster, pol: PolarizationPair, k: float) -> float:
    """``c_r / (3 k lambda_plus)``; values >= 1 meet the sufficient invertibility condition."""
    lam = pol.lambda_plus
    return np.inf if lam == 0 else cluster.c_r / (3.0 * k * lam)


def solve(cluster: Cluster, pol: PolarizationPair, pw: PlaneWave, method: str = "auto",
          tol: float = 1e-10, restart: int = 50, max_iter: int = 2000,
          use_fft: Optional[bool] = None) -> FoldyLaxSolution:
    """Solves the Foldy-Lax system.

    Args:
        method: ``"direct"`` (dense LU), ``"iterative"`` (matrix-free GMRES) or
            ``"auto"`` (direct up to ``DIRECT_MAX_UNKNOWNS`` unknowns).
        tol: relative residual target ``||(I-A)x - b|| <= tol ||b||``.
        restart, max_iter: GMRES restart length and total iteration cap.

    Raises:
        ConvergenceError: GMRES missed ``tol`` within ``max_iter`` iterations.
    """
    if cluster.M < 1:
        raise DomainError("cluster has no particles")
    if invertibility_margin(cluster, pol, pw.k) < 1.0:
        logger.warning(
            "c_r=%.3g is below 3 k lambda+ = %.3g; invertibility of the Foldy-Lax "
            "system is not guaranteed", cluster.c_r, 3 * pw.k * pol.lambda_plus,
        )
    op = FoldyLaxOperator(cluster, pol, pw.k, use_fft=use_fft)
    b = rhs(cluster, pw)
    bnorm = np.linalg.norm(b)
    if method == "auto":
        method = "direct" if 6 * cluster.M <= DIRECT_MAX_UNKNOWNS else "iterative"
    history: list = []
    if method == "direct":
        x = np.linalg.solve(op.dense(), b)
        iterations = 0
    elif method == "iterative":
        x, iterations, history = gmres(op.as_linear_operator(), b, tol, restart, max_iter)
    else:
        raise DomainError(f"unknown method {method!r}")
    res = np.linalg.norm(op.apply(x) - b) / bnorm
    if res > tol:
        raise ConvergenceError(
            f"Foldy-Lax residual {res:.3e} exceeds tol {tol:.1e}", history or [res]
        )
    U, V = op.split(x)
    return FoldyLaxSolution(U.copy(), V.copy(), float(res), int(iterations), method, tuple(history))


def gmres(A, b, tol, restart, max_iter, x0=None):
    """Restarted GMRES with a recorded residual history.

    Returns ``(x, iterations, history)``; raises :class:`ConvergenceError`.
    """
    history: list = []
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, [0.0]
    if x0 is not None:
        r0 = np.linalg.norm(A.matvec(x0) - b) / bnorm
        history.append(float(r0))
        if r0 <= tol:
            return np.asarray(x0, dtype=complex), 0, history

    def record(pr_norm):
        history.append(float(pr_norm))

    # The inner tolerance is tightened so the true residual also meets tol.
    x, info = spla.gmres(
        A, b, x0=x0, rtol=0.2 * tol, atol=0.0, restart=restart,
        maxiter=max(1, int(np.ceil(max_iter / restart))),
        callback=record, callback_type="pr_norm",
    )
    if info < 0:
        raise ConvergenceError(f"GMRES breakdown (info={info})", history)
    if info > 0:
        res = np.linalg.norm(A.matvec(x) - b) / bnorm
        if res > tol:
            raise ConvergenceError(
                f"GMRES did not converge in {max_iter} iterations (residual {res:.3e})", history
            )
    return x, len(history), history


def discrete_far_field(sol: FoldyLaxSolution, cluster: Cluster, pol: PolarizationPair,
                       k: float, directions) -> FarFieldSamples:
    """Dipole-level far field ``E_inf`` radiated by the cluster moments."""
    R, Q = sol.moments(cluster, pol)
    return far_field_from_moments(k, cluster.centers, R, Q, directions)


def apriori_bounds(sol: FoldyLaxSolution, cluster: Cluster, pol: PolarizationPair,
                   pw: PlaneWave) -> dict:
    """Both sides of the l2 a-priori bounds on the moments ``R`` and ``Q``.

    ``||R|| <= 9 lam+ a^3 / 8 (||H_in||/3 + ||E_in||)`` and
    ``||Q|| <= 9 lam+ a^3 / 8 (||H_in|| + ||E_in||/3)``, norms over particles.
    """
    R, Q = sol.moments(cluster, pol)
    E, H = incident_fields(pw, cluster.centers)
    nE, nH = np.linalg.norm(E), np.linalg.norm(H)
    pref = 9.0 * pol.lambda_plus * cluster.a**3 / 8.0
    out = {
        "R_norm": float(np.linalg.norm(R)),
        "R_bound": float(pref * (nH / 3.0 + nE)),
        "Q_norm": float(np.linalg.norm(Q)),
        "Q_bound": float(pref * (nH + nE / 3.0)),
    }
    out["holds"] = out["R_norm"] <= out["R_bound"] and out["Q_norm"] <= out["Q_bound"]
    return out
