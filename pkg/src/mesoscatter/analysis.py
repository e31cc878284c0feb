"""Discrete-versus-effective comparisons and the c_r sweep driver."""

from __future__ import annotations

import dataclasses
import functools
import logging
import time
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from mesoscatter import foldy_lax
from mesoscatter.cluster import Cluster, cluster_from_json, loglog_slope
from mesoscatter.config import ExperimentConfig, require
from mesoscatter.effective import EffectiveOperators, compute_C_tensors, compute_K0
from mesoscatter.errors import DomainError
from mesoscatter.farfield import FarFieldSamples, directions_from_json, lebedev_86
from mesoscatter.ls_solver import (
    VolumeField,
    effective_far_field,
    ls_solve,
    regularity_diagnostic,
)

logger = logging.getLogger(__name__)

# Ball averages use exact voxel weights once a ball diameter spans this many voxels.
EXACT_WEIGHT_MIN_RATIO = 4.0
_CHORD_ORDER = 12


def compare_far_fields(E_disc: FarFieldSamples, E_eff: FarFieldSamples):
    """Sup-norm absolute and relative far-field errors over the shared directions.

    The relative error is normalized by ``max |E_eff|``; it is ``inf`` when the
    effective pattern vanishes while the discrete one does not.
    """
    if E_disc.directions.shape != E_eff.directions.shape or not np.allclose(
        E_disc.directions, E_eff.directions, rtol=0, atol=1e-14
    ):
        raise DomainError("far fields are sampled on different direction sets")
    abs_err = float(np.linalg.norm(E_disc.values - E_eff.values, axis=1).max(initial=0.0))
    scale = float(np.linalg.norm(E_eff.values, axis=1).max(initial=0.0))
    if scale == 0.0:
        return abs_err, (0.0 if abs_err == 0.0 else np.inf)
    return abs_err, abs_err / scale


@functools.lru_cache(maxsize=64)
def _ball_stencil(offset: tuple, radius: float, h: float):
    """Voxel weights of a ball whose center sits at ``offset`` (in units of ``h``)
    from the corner of voxel ``(0, 0, 0)``.

    Each candidate voxel's intersection volume is the integral of the clipped
    ``z``-chord length over its ``x, y`` face, done with Gauss-Legendre rules.
    """
    c = np.asarray(offset) * h
    lo = np.floor((c - radius) / h).astype(int)
    hi = np.ceil((c + radius) / h).astype(int)
    idx = np.stack(
        np.meshgrid(*(np.arange(a, b) for a, b in zip(lo, hi)), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    t, w = np.polynomial.legendre.leggauss(_CHORD_ORDER)
    t = 0.5 * (t + 1.0) * h
    w = 0.5 * w * h
    x = idx[:, 0, None, None] * h + t[None, :, None] - c[0]
    y = idx[:, 1, None, None] * h + t[None, None, :] - c[1]
    half = np.sqrt(np.clip(radius**2 - x**2 - y**2, 0.0, None))
    z0 = idx[:, 2, None, None] * h - c[2]
    chord = np.clip(np.minimum(z0 + h, half) - np.maximum(z0, -half), 0.0, None)
    vol = np.einsum("vij,i,j->v", chord, w, w)
    keep = vol > 0
    return idx[keep], vol[keep]


def ball_average_weights(grid, center, radius: float):
    """Voxel indices and intersection volumes for the ball ``B(center, radius)``."""
    rel = (np.asarray(center, dtype=float) - grid.origin) / grid.h
    base = np.floor(rel).astype(int)
    frac = tuple(np.round(rel - base, 12))
    idx, vol = _ball_stencil(frac, float(radius), float(grid.h))
    idx = idx + base
    inside = np.all((idx >= 0) & (idx < grid.N), axis=1)
    if not np.any(inside):
        raise DomainError(f"ball around {center} misses the volume grid")
    return idx[inside], vol[inside]


def _sphere_rule(radius: float):
    dirs, dw = lebedev_86()
    r, rw = np.polynomial.legendre.leggauss(4)
    r = 0.5 * (r + 1.0) * radius
    rw = 0.5 * rw * radius * r**2
    pts = (r[:, None, None] * dirs[None]).reshape(-1, 3)
    wts = (rw[:, None] * dw[None]).ravel()
    return pts, wts / wts.sum()


def ball_averages(field: VolumeField, centers, radius: float):
    """Averages of ``U`` and ``V`` over balls of ``radius`` around ``centers``.

    Returns:
        ``(avg_U, avg_V, interpolated)``; ``interpolated`` is True when the grid
        was too coarse for exact voxel weights and trilinear interpolation of
        the voxel values was used instead.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    grid = field.grid
    if centers.shape[0] == 0:
        raise DomainError("no balls to average over")
    exact = 2.0 * radius / grid.h >= EXACT_WEIGHT_MIN_RATIO
    if exact:
        avg_U = np.empty((len(centers), 3), dtype=complex)
        avg_V = np.empty_like(avg_U)
        for m, z in enumerate(centers):
            idx, vol = ball_average_weights(grid, z, radius)
            wn = vol / vol.sum()
            avg_U[m] = wn @ field.U[idx[:, 0], idx[:, 1], idx[:, 2]]
            avg_V[m] = wn @ field.V[idx[:, 0], idx[:, 1], idx[:, 2]]
        return avg_U, avg_V, False
    axis = (np.arange(grid.N) + 0.5) * grid.h
    axes = tuple(axis + o for o in grid.origin)
    pts, wts = _sphere_rule(radius)
    sample = (centers[:, None, :] + pts[None]).reshape(-1, 3)
    out = []
    for f in (field.U, field.V):
        if grid.N == 1:
            vals = np.broadcast_to(f[0, 0, 0], (sample.shape[0], 3))
        else:
            interp = RegularGridInterpolator(axes, f, bounds_error=False, fill_value=None)
            vals = interp(sample)
        out.append(np.einsum("mp,mpc->mc", np.broadcast_to(wts, (len(centers), len(wts))),
                             vals.reshape(len(centers), len(wts), 3)))
    return out[0], out[1], True


def l2_comparison_vectors(sol, field: VolumeField, cluster: Cluster, ops: EffectiveOperators):
    """l2 norms over particles of ``(I - K) <U>_{S_m} - U_m`` (and the ``V`` analogue).

    Returns:
        ``(eps_norm, mu_norm, interpolated)``.
    """
    avg_U, avg_V, interpolated = ball_averages(field, cluster.centers, cluster.ball_radius)
    I = np.eye(3)
    d_eps = avg_U @ (I - ops.K_eps).T - sol.U
    d_mu = avg_V @ (I - ops.K_mu).T - sol.V
    return float(np.linalg.norm(d_eps)), float(np.linalg.norm(d_mu)), interpolated


def compensation_factor(cluster: Cluster) -> float:
    """``c_r^(9/2) a^(3/2)``, which makes the l2 comparison norms O(1)."""
    return cluster.c_r**4.5 * cluster.a**1.5


def holder_estimate(field: VolumeField, alpha: float) -> float:
    """Empirical Hoelder quotient ``max |U(x)-U(y)| / |x-y|^alpha`` over axis-aligned
    voxel pairs at dyadic separations. An estimate only; it is not a bound."""
    best = 0.0
    U, h = field.U, field.grid.h
    step = 1
    while step < field.grid.N:
        for axis in range(3):
            n = U.shape[axis]
            diff = np.take(U, range(step, n), axis) - np.take(U, range(n - step), axis)
            q = np.linalg.norm(diff, axis=-1).max() / (step * h) ** alpha
            best = max(best, float(q))
        step *= 2
    return best


@dataclasses.dataclass(frozen=True)
class SweepPoint:
    c_r: float
    abs_err: float
    rel_err: float
    l2_eps: float
    l2_mu: float
    l2_eps_compensated: float
    l2_mu_compensated: float
    ball_average_interpolated: bool
    transversality_discrete: float
    transversality_effective: float
    fl_residual: float
    ls_residual: float
    regularity: dict
    holder_estimate: Optional[float]
    runtime_s: float

    def to_json(self, include_timing: bool) -> dict:
        out = {
            "c_r": self.c_r,
            "abs_err": self.abs_err,
            "rel_err": self.rel_err,
            "rel_err_infinite": bool(np.isinf(self.rel_err)),
            "l2_eps": self.l2_eps,
            "l2_mu": self.l2_mu,
            "l2_eps_compensated": self.l2_eps_compensated,
            "l2_mu_compensated": self.l2_mu_compensated,
            "ball_average_interpolated": self.ball_average_interpolated,
            "transversality_discrete": self.transversality_discrete,
            "transversality_effective": self.transversality_effective,
            "fl_residual": self.fl_residual,
            "ls_residual": self.ls_residual,
            "regularity_diagnostic": self.regularity,
        }
        if self.holder_estimate is not None:
            out["holder_estimate"] = {"alpha": self.regularity["alpha"],
                                      "value": self.holder_estimate, "is_estimate": True}
        if include_timing:
            out["runtime_s"] = self.runtime_s
        return out


@dataclasses.dataclass(frozen=True)
class PipelineResult:
    cluster: Cluster
    ops: EffectiveOperators
    solution: object
    field: VolumeField
    E_disc: FarFieldSamples
    E_eff: FarFieldSamples
    point: SweepPoint


def run_pipeline(cfg: ExperimentConfig, c_r: float) -> PipelineResult:
    """Foldy-Lax solve, effective tensors, LS solve and all comparisons at one ``c_r``."""
    require(cfg, "cluster")
    require(cfg, "shape")
    start = time.perf_counter()
    cluster = cluster_from_json(cfg.cluster, c_r=c_r)
    pw = cfg.wave
    dirs = directions_from_json(cfg.directions, cfg.seed)
    sol = foldy_lax.solve(cluster, cfg.pol, pw, method=cfg.solver.method, tol=cfg.solver.tol,
                          restart=cfg.solver.restart, max_iter=cfg.solver.max_iter)
    E_disc = foldy_lax.discrete_far_field(sol, cluster, cfg.pol, pw.k, dirs)
    ops = compute_C_tensors(cfg.pol, c_r, compute_K0(), convention=cfg.convention)
    field = ls_solve(cfg.ls.N, ops, pw, tol=cfg.ls.tol, restart=cfg.solver.restart,
                     max_iter=cfg.solver.max_iter)
    E_eff = effective_far_field(field, ops, pw.k, dirs)
    abs_err, rel_err = compare_far_fields(E_disc, E_eff)
    l2e, l2m, interp = l2_comparison_vectors(sol, field, cluster, ops)
    comp = compensation_factor(cluster)
    alpha = cfg.holder_alpha if cfg.holder_alpha is not None else 0.5
    point = SweepPoint(
        c_r=float(c_r), abs_err=abs_err, rel_err=rel_err, l2_eps=l2e, l2_mu=l2m,
        l2_eps_compensated=l2e * comp, l2_mu_compensated=l2m * comp,
        ball_average_interpolated=interp,
        transversality_discrete=E_disc.transversality(),
        transversality_effective=E_eff.transversality(),
        fl_residual=sol.residual_norm, ls_residual=field.residual_norm,
        regularity=regularity_diagnostic(pw.k, c_r, cfg.pol.c_inf, alpha),
        holder_estimate=None if cfg.holder_alpha is None else holder_estimate(field, alpha),
        runtime_s=time.perf_counter() - start,
    )
    logger.info("c_r=%g: rel_err %.3e, l2 (%.3e, %.3e)", c_r, rel_err, l2e, l2m)
    return PipelineResult(cluster, ops, sol, field, E_disc, E_eff, point)


@dataclasses.dataclass(frozen=True)
class ComparisonReport:
    c_r_sweep: tuple
    errors_abs: tuple
    errors_rel: tuple
    fitted_slope: float
    l2_comparison_eps: tuple
    l2_comparison_mu: tuple
    runtime_s: float
    points: tuple
    config_echo: dict

    def to_json(self, include_timing: bool = False) -> dict:
        out = {
            "sweep": [p.to_json(include_timing) for p in self.points],
            "fitted_slope": self.fitted_slope,
            "monotone_decrease": bool(np.all(np.diff(self.errors_rel) < 0)),
            "config_echo": self.config_echo,
        }
        if include_timing:
            out["runtime_s"] = self.runtime_s
        return out


def convergence_study(cfg: ExperimentConfig) -> ComparisonReport:
    """Runs the pipeline at every swept ``c_r`` (ascending) and fits the decay
    slope of the relative far-field error on log-log axes."""
    require(cfg, "sweep")
    c_values = tuple(sorted(set(cfg.sweep_c_r)))
    if len(c_values) < 3:
        raise DomainError("a convergence study needs at least three distinct c_r values")
    start = time.perf_counter()
    points = tuple(run_pipeline(cfg, c).point for c in c_values)
    rel = tuple(p.rel_err for p in points)
    finite = all(np.isfinite(rel)) and all(r > 0 for r in rel)
    slope = loglog_slope(c_values, rel) if finite else float("nan")
    return ComparisonReport(
        c_r_sweep=c_values,
        errors_abs=tuple(p.abs_err for p in points),
        errors_rel=rel,
        fitted_slope=slope,
        l2_comparison_eps=tuple(p.l2_eps for p in points),
        l2_comparison_mu=tuple(p.l2_mu for p in points),
        runtime_s=time.perf_counter() - start,
        points=points,
        config_echo=cfg.echo(),
    )
