"""Block dyadic interactions on point sets and on regular lattices.

Both the Foldy-Lax system and the voxelized Lippmann-Schwinger system need the
same coupled operator

    out_E[m] = sum_j w_j [Pi_k(z_m, z_j) src_E[j] + ik grad Phi_k(z_m, z_j) x src_H[j]]
    out_H[m] = sum_j w_j [Pi_k(z_m, z_j) src_H[j] - ik grad Phi_k(z_m, z_j) x src_E[j]]

with an optional diagonal ``self_pi`` replacing the (singular) j == m term.
On a lattice the kernel depends only on the index offset, so the sums are
discrete convolutions evaluated with zero-padded FFTs.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.fft

from mesoscatter.kernels import FOUR_PI

_PI_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

THREADS_ENV = "MESOSCATTER_THREADS"


def default_workers():
    """FFT worker cap from ``MESOSCATTER_THREADS`` (``None`` lets scipy decide)."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        return None
    return max(1, n)


def _pi_and_grad(k: float, d: np.ndarray, r: np.ndarray):
    """Dyadic (6 symmetric components) and gradient of Phi_k for separations ``d``."""
    phi = np.exp(1j * k * r) / (FOUR_PI * r)
    ikr = 1j * k * r
    a = phi * (k * k * r * r + ikr - 1.0) / (r * r)
    b = phi * (3.0 - 3.0 * ikr - k * k * r * r) / (r * r)
    rhat = d / r[..., None]
    comps = []
    for i, j in _PI_PAIRS:
        c = b * rhat[..., i] * rhat[..., j]
        if i == j:
            c = c + a
        comps.append(c)
    grad = (phi * (1j * k - 1.0 / r))[..., None] * rhat
    return comps, grad


def _sym_apply(comps, src):
    """Applies a symmetric tensor given by 6 components to a (..., 3) source."""
    xx, yy, zz, xy, xz, yz = comps
    sx, sy, sz = src[..., 0], src[..., 1], src[..., 2]
    return np.stack(
        [xx * sx + xy * sy + xz * sz, xy * sx + yy * sy + yz * sz, xz * sx + yz * sy + zz * sz],
        axis=-1,
    )


def _cross(g, w):
    return np.stack(
        [
            g[..., 1] * w[..., 2] - g[..., 2] * w[..., 1],
            g[..., 2] * w[..., 0] - g[..., 0] * w[..., 2],
            g[..., 0] * w[..., 1] - g[..., 1] * w[..., 0],
        ],
        axis=-1,
    )


def direct_apply(points, k, weight, src_E, src_H, self_pi=None, chunk=256):
    """O(M^2) evaluation of the block operator on an arbitrary point set.

    Args:
        points: ``(M, 3)`` source/target locations.
        k: wavenumber.
        weight: scalar quadrature weight multiplying every off-diagonal term.
        src_E, src_H: ``(M, 3)`` complex densities (already multiplied by the
            material tensors).
        self_pi: optional ``(3, 3)`` matrix used for the diagonal ``j == m`` term
            of the dyadic part. The gradient part has no diagonal term.
        chunk: number of targets processed at once (bounds memory).

    Returns:
        ``(out_E, out_H)``, each ``(M, 3)``.
    """
    points = np.asarray(points, dtype=float)
    src_E = np.asarray(src_E, dtype=complex)
    src_H = np.asarray(src_H, dtype=complex)
    M = points.shape[0]
    out_E = np.zeros((M, 3), dtype=complex)
    out_H = np.zeros((M, 3), dtype=complex)
    for start in range(0, M, chunk):
        stop = min(M, start + chunk)
        d = points[start:stop, None, :] - points[None, :, :]
        r = np.linalg.norm(d, axis=-1)
        diag = r == 0.0
        r_safe = np.where(diag, 1.0, r)
        comps, grad = _pi_and_grad(k, d, r_safe)
        comps = [np.where(diag, 0.0, c) for c in comps]
        grad = np.where(diag[..., None], 0.0, grad)
        pi_E = np.einsum("tsi->ti", _sym_apply(comps, src_E[None, :, :]))
        pi_H = np.einsum("tsi->ti", _sym_apply(comps, src_H[None, :, :]))
        g_H = np.einsum("tsi->ti", _cross(grad, src_H[None, :, :]))
        g_E = np.einsum("tsi->ti", _cross(grad, src_E[None, :, :]))
        out_E[start:stop] = weight * (pi_E + 1j * k * g_H)
        out_H[start:stop] = weight * (pi_H - 1j * k * g_E)
    if self_pi is not None:
        out_E += src_E @ np.asarray(self_pi).T
        out_H += src_H @ np.asarray(self_pi).T
    return out_E, out_H


def _log_sum(y, r):
    """``log(y + r)`` for ``r = |corner|``, without cancellation when ``y < 0``."""
    rest = np.maximum(r * r - y * y, 0.0)
    with np.errstate(divide="ignore"):
        neg = np.log(rest) - np.log(r - y)
    return np.where(y >= 0.0, np.log(np.where(y >= 0.0, y + r, 1.0)), neg)


def box_static_dyadic(d, h):
    """Exact integral of the Hessian of ``1/(4 pi |y|)`` over cubes of edge ``h``.

    ``d`` has shape ``(..., 3)`` and holds the cube centers relative to the
    evaluation point. A cube that contains the evaluation point yields the
    principal value, so the centered cube gives ``-I/3``. The result is a
    ``(..., 3, 3)`` real array.

    The corner sum is evaluated for ``|d|`` and mapped back by reflection, which
    makes the table exactly even in ``d``.
    """
    d = np.asarray(d, dtype=float)
    signs = np.sign(d)
    d = np.abs(d)
    out = np.zeros(d.shape[:-1] + (3, 3))
    half = 0.5 * h
    for corner in np.ndindex(2, 2, 2):
        step = np.where(np.array(corner) == 1, half, -half)
        y = d + step
        sign = float(np.prod(np.where(np.array(corner) == 1, 1.0, -1.0)))
        r = np.linalg.norm(y, axis=-1)
        for i in range(3):
            a, b = (m for m in range(3) if m != i)
            yi = y[..., i]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = y[..., a] * y[..., b] / (yi * r)
            # atan(p / 0) is +-pi/2 by the sign of p; a zero numerator gives 0.
            angle = np.where(yi == 0.0, 0.5 * np.pi * np.sign(y[..., a] * y[..., b]),
                             np.arctan(np.where(yi == 0.0, 0.0, ratio)))
            out[..., i, i] -= sign * angle
            out[..., a, b] += sign * _log_sum(yi, r)
    for i in range(3):
        a, b = (m for m in range(3) if m != i)
        out[..., a, b] *= signs[..., a] * signs[..., b]
        out[..., b, a] = out[..., a, b]
    return out / FOUR_PI


def offset_kernels(shape, spacing, k, weight, self_pi=None, cell_static=False):
    """Tabulates the translation-invariant kernels on all index offsets.

    Returns:
        ``(pi, grad)`` with shapes ``(2n0-1, 2n1-1, 2n2-1, 3, 3)`` and
        ``(..., 3)``; index ``n-1`` along each axis is the zero offset.
        ``pi`` and ``grad`` already include ``weight`` (and ``ik`` is *not*
        folded into ``grad``). ``self_pi`` goes to the zero offset as given,
        without the weight.

        With ``cell_static`` the static part of ``Pi`` is integrated exactly over
        each cell (edge ``spacing``) and only the remainder ``Pi_k - Pi_0`` uses
        the midpoint rule. ``weight`` is then taken as the cell volume.
    """
    axes = [np.arange(-(n - 1), n) * spacing for n in shape]
    d = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    r = np.linalg.norm(d, axis=-1)
    zero = r == 0.0
    r_safe = np.where(zero, 1.0, r)
    comps, grad = _pi_and_grad(k, d, r_safe)
    pi = np.zeros(r.shape + (3, 3), dtype=complex)
    if cell_static:
        static, _ = _pi_and_grad(0.0, d, r_safe)
        comps = [c - s0 for c, s0 in zip(comps, static)]
    for c, (i, j) in zip(comps, _PI_PAIRS):
        pi[..., i, j] = weight * c
        pi[..., j, i] = weight * c
    if cell_static:
        pi += box_static_dyadic(d, spacing) * (weight / spacing**3)
    grad = weight * np.where(zero[..., None], 0.0, grad)
    center = tuple(n - 1 for n in shape)
    pi[center] = 0.0 if self_pi is None else np.asarray(self_pi)
    return pi, grad


class LatticeConvolution:
    """FFT evaluation of the block operator on an ``n0 x n1 x n2`` lattice.

    The kernel is tabulated once on the ``(2n-1)^3`` offsets and stored in
    Fourier space on a ``2n`` zero-padded grid (circular convolution then equals
    the linear one on the original lattice).
    """

    def __init__(self, shape, spacing, k, weight, self_pi=None, workers=None, cell_static=False):
        self.shape = tuple(int(n) for n in shape)
        self.spacing = float(spacing)
        self.k = float(k)
        self.workers = default_workers() if workers is None else workers
        self._padded = tuple(2 * n for n in self.shape)

        pi, grad = offset_kernels(self.shape, self.spacing, self.k, weight, self_pi, cell_static)
        self.pi, self.grad = pi, grad
        self._pi_hat = [self._embed_fft(pi[..., i, j]) for i, j in _PI_PAIRS]
        self._grad_hat = np.stack([self._embed_fft(grad[..., i]) for i in range(3)], axis=-1)

    def _embed_fft(self, offsets: np.ndarray) -> np.ndarray:
        # Offset d in [-(n-1), n-1] goes to padded index d mod 2n.
        buf = np.zeros(self._padded, dtype=complex)
        idx = [np.arange(-(n - 1), n) % (2 * n) for n in self.shape]
        buf[np.ix_(*idx)] = offsets
        return scipy.fft.fftn(buf, workers=self.workers)

    def _fft_field(self, f: np.ndarray) -> np.ndarray:
        return scipy.fft.fftn(f, s=self._padded, axes=(0, 1, 2), workers=self.workers)

    def _ifft_crop(self, f_hat: np.ndarray) -> np.ndarray:
        out = scipy.fft.ifftn(f_hat, axes=(0, 1, 2), workers=self.workers)
        n0, n1, n2 = self.shape
        return out[:n0, :n1, :n2]

    def apply(self, src_E: np.ndarray, src_H: np.ndarray):
        """Applies the operator to lattice densities of shape ``(n0, n1, n2, 3)``."""
        e_hat = self._fft_field(src_E)
        h_hat = self._fft_field(src_H)
        ik = 1j * self.k
        out_E = _sym_apply(self._pi_hat, e_hat) + ik * _cross(self._grad_hat, h_hat)
        out_H = _sym_apply(self._pi_hat, h_hat) - ik * _cross(self._grad_hat, e_hat)
        return self._ifft_crop(out_E), self._ifft_crop(out_H)


def table_apply(pi, grad, k, src_E, src_H, chunk=64):
    """Direct summation with tabulated offset kernels (reference for the FFT path).

    ``pi`` and ``grad`` are as returned by :func:`offset_kernels`; the sources
    have shape ``(n0, n1, n2, 3)``. Cost is quadratic in the number of cells.
    """
    shape = src_E.shape[:3]
    idx = np.stack(np.meshgrid(*[np.arange(n) for n in shape], indexing="ij"), -1).reshape(-1, 3)
    sE, sH = src_E.reshape(-1, 3), src_H.reshape(-1, 3)
    center = np.array(shape) - 1
    out_E = np.empty_like(sE, dtype=complex)
    out_H = np.empty_like(sH, dtype=complex)
    ik = 1j * k
    for start in range(0, len(idx), chunk):
        tgt = idx[start : start + chunk]
        off = tgt[:, None, :] - idx[None, :, :] + center
        P = pi[off[..., 0], off[..., 1], off[..., 2]]
        g = grad[off[..., 0], off[..., 1], off[..., 2]]
        out_E[start : start + chunk] = np.einsum("tsij,sj->ti", P, sE) + ik * _cross(g, sH[None]).sum(1)
        out_H[start : start + chunk] = np.einsum("tsij,sj->ti", P, sH) - ik * _cross(g, sE[None]).sum(1)
    return out_E.reshape(src_E.shape), out_H.reshape(src_H.shape)
