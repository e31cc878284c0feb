"""Periodic particle clusters: cube partition, centers, inscribed balls, boundary layer.

The unit-volume domain is tiled by cubes of edge ``delta = 1/n_per_side``; one
particle of diameter ``a = delta / c_r`` sits at the center of every cube that
fits in the domain. For the unit cube the tiling is exact and the boundary
layer is empty; for curved masks the cubes cut by the boundary are dropped and
their volume is reported as ``layer_volume``.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Optional

import numpy as np

from mesoscatter._validation import as_points
from mesoscatter.errors import DomainError, EmptyClusterError

BALL_RADIUS_UNIT_VOLUME = (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)


@dataclasses.dataclass(frozen=True)
class Cluster:
    """Immutable description of a particle cluster.

    Attributes:
        a: maximal particle diameter.
        delta: cube edge, which is also the minimal center-to-center distance.
        c_r: dilution parameter ``delta / a``.
        centers: ``(M, 3)`` particle centers.
        domain: JSON-able description of the domain.
        layer_volume: volume of the part of the domain not covered by cubes.
        lattice_index: ``(M, 3)`` integer cube indices when the centers sit on
            a regular lattice anchored at ``origin``; ``None`` otherwise.
        origin: corner of cube ``(0, 0, 0)``.
        n_per_side: number of cubes per unit length.
    """

    a: float
    delta: float
    c_r: float
    centers: np.ndarray
    domain: dict
    layer_volume: float = 0.0
    lattice_index: Optional[np.ndarray] = None
    origin: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(3))
    n_per_side: Optional[int] = None

    @property
    def M(self) -> int:
        return int(self.centers.shape[0])

    @property
    def cube_half_width(self) -> float:
        return 0.5 * self.delta

    @property
    def ball_radius(self) -> float:
        """Radius of the inscribed balls ``S_m`` (centered at ``z_m``)."""
        return 0.5 * self.delta

    @property
    def lattice_shape(self):
        if self.lattice_index is None or self.M == 0:
            return None
        return tuple(int(v) for v in self.lattice_index.max(axis=0) + 1)

    @property
    def is_full_lattice(self) -> bool:
        """True when the particles fill a complete box of lattice cells."""
        shape = self.lattice_shape
        return shape is not None and int(np.prod(shape)) == self.M

    def to_json(self) -> dict:
        out = {"n_per_side": self.n_per_side, "c_r": self.c_r, "domain": self.domain}
        if self.domain.get("kind") == "explicit":
            out["centers"] = self.centers.tolist()
            out["delta"] = self.delta
        return out


def _validate_cr(c_r: float) -> float:
    c_r = float(c_r)
    if not np.isfinite(c_r) or c_r < 1.0:
        raise DomainError(f"c_r must be >= 1, got {c_r}")
    return c_r


def build_lattice_cluster(n_per_side: int, c_r: float) -> Cluster:
    """Unit cube ``[0, 1]^3`` split into ``n_per_side^3`` cubes, one particle per cube."""
    n = int(n_per_side)
    if n < 1:
        raise DomainError("n_per_side must be >= 1")
    c_r = _validate_cr(c_r)
    delta = 1.0 / n
    idx = np.stack(np.meshgrid(*(np.arange(n),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    centers = (idx + 0.5) * delta
    return Cluster(
        a=delta / c_r,
        delta=delta,
        c_r=c_r,
        centers=centers,
        domain={"kind": "cube"},
        layer_volume=0.0,
        lattice_index=idx,
        origin=np.zeros(3),
        n_per_side=n,
    )


def _mask_function(mask: dict):
    """Returns ``(inside(points) -> bool array, center, half_extent, volume)``."""
    kind = mask.get("shape", "ball")
    center = np.asarray(mask.get("center", (0.5, 0.5, 0.5)), dtype=float)
    if kind == "cube":
        half = np.full(3, 0.5)

        def inside(p):
            return np.all(np.abs(p - center) <= half + 1e-12, axis=-1)

        return inside, center, half, 1.0
    if kind == "ball":
        axes = np.full(3, BALL_RADIUS_UNIT_VOLUME)
    elif kind == "ellipsoid":
        axes = np.asarray(mask["axes"], dtype=float)
        if axes.shape != (3,) or np.any(axes <= 0):
            raise DomainError("ellipsoid mask needs three positive semi-axes")
    else:
        raise DomainError(f"unknown mask shape {kind!r}")
    volume = 4.0 / 3.0 * np.pi * float(np.prod(axes))

    def inside(p):
        return np.sum(((p - center) / axes) ** 2, axis=-1) <= 1.0 + 1e-12

    return inside, center, axes, volume


def build_clipped_cluster(n_per_side: int, c_r: float, mask: dict) -> Cluster:
    """Tiles the bounding box of a unit-volume mask and keeps cubes fully inside.

    ``mask`` is ``{"shape": "cube" | "ball" | "ellipsoid", "axes": [...],
    "center": [...]}``. For convex masks a cube is inside iff its 8 corners are.
    """
    n = int(n_per_side)
    if n < 1:
        raise DomainError("n_per_side must be >= 1")
    c_r = _validate_cr(c_r)
    inside, center, half, volume = _mask_function(mask)
    if abs(volume - 1.0) > 0.01:
        raise DomainError(f"mask volume must be 1 (to 1%), got {volume:.4f}")
    delta = 1.0 / n
    cells = np.ceil(2 * half / delta - 1e-9).astype(int)
    box_origin = center - 0.5 * cells * delta
    idx = np.stack(np.meshgrid(*(np.arange(c) for c in cells), indexing="ij"), axis=-1)
    idx = idx.reshape(-1, 3)
    corners = np.array([[i, j, l] for i in (0, 1) for j in (0, 1) for l in (0, 1)])
    corner_pts = box_origin + (idx[:, None, :] + corners[None, :, :]) * delta
    keep = np.all(inside(corner_pts), axis=1)
    if not np.any(keep):
        raise EmptyClusterError(f"no cube of edge {delta} fits inside the mask")
    kept_raw = idx[keep]
    base = kept_raw.min(axis=0)
    origin = box_origin + base * delta
    kept_centers = origin + (kept_raw - base + 0.5) * delta
    M = kept_centers.shape[0]
    return Cluster(
        a=delta / c_r,
        delta=delta,
        c_r=c_r,
        centers=kept_centers,
        domain={"kind": "mask", "mask": dict(mask)},
        layer_volume=float(volume - M * delta**3),
        lattice_index=kept_raw - base,
        origin=origin,
        n_per_side=n,
    )


def cluster_from_centers(centers, delta: float, c_r: float) -> Cluster:
    """Cluster with user-supplied centers (non-periodic distributions).

    ``delta`` is the cube edge assigned to each particle; it must not exceed
    the minimal center distance.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    if centers.shape[0]:
        as_points(centers, "centers")
    c_r = _validate_cr(c_r)
    delta = float(delta)
    if delta <= 0:
        raise DomainError("delta must be positive")
    if centers.shape[0] >= 2:
        d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        if d.min() < delta * (1 - 1e-12):
            raise DomainError("particle centers closer than delta")
    return Cluster(
        a=delta / c_r,
        delta=delta,
        c_r=c_r,
        centers=centers,
        domain={"kind": "explicit"},
        layer_volume=0.0,
        lattice_index=None,
    )


def cluster_from_json(doc: dict, c_r: Optional[float] = None) -> Cluster:
    """Builds a cluster from ``{n_per_side, c_r, domain, centers?}``.

    ``c_r`` overrides the document value (used by sweeps).
    """
    c_r = doc["c_r"] if c_r is None else c_r
    n = doc.get("n_per_side")
    if "centers" in doc and doc["centers"] is not None:
        delta = doc.get("delta", 1.0 / n if n else None)
        if delta is None:
            raise DomainError("explicit centers need 'delta' or 'n_per_side'")
        return cluster_from_centers(doc["centers"], delta, c_r)
    domain = doc.get("domain", "cube")
    if domain == "cube" or (isinstance(domain, dict) and domain.get("kind", "cube") == "cube"
                            and "mask" not in domain):
        return build_lattice_cluster(n, c_r)
    mask = domain["mask"] if isinstance(domain, dict) else domain
    if isinstance(mask, str):
        mask = {"shape": mask}
    return build_clipped_cluster(n, c_r, mask)


def dumps(cluster: Cluster) -> str:
    return json.dumps(cluster.to_json(), sort_keys=True)


def counting_sums(cluster: Cluster, exponent: float) -> np.ndarray:
    """Per-particle lattice sums ``sum_{j != m} |z_j - z_m|^(-exponent)``."""
    if cluster.M < 2:
        raise DomainError("counting sums need at least two particles")
    z = cluster.centers
    out = np.empty(cluster.M)
    chunk = 512
    for s in range(0, cluster.M, chunk):
        d = np.linalg.norm(z[s : s + chunk, None, :] - z[None, :, :], axis=-1)
        with np.errstate(divide="ignore"):
            terms = d ** (-float(exponent))
        terms[d == 0.0] = 0.0
        out[s : s + chunk] = terms.sum(axis=1)
    return out


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if x.size < 2:
        raise DomainError("slope fit needs at least two points")
    return float(np.polyfit(x, y, 1)[0])


def counting_exponent_fit(n_values, exponent: float, c_r: float = 1.0):
    """Fits ``max_m counting_sums`` against ``delta`` over a lattice sweep.

    Returns:
        ``(slope, deltas, maxima)``.
    """
    deltas, maxima = [], []
    for n in n_values:
        cl = build_lattice_cluster(n, c_r)
        deltas.append(cl.delta)
        maxima.append(counting_sums(cl, exponent).max())
    return loglog_slope(deltas, maxima), np.array(deltas), np.array(maxima)
