"""Far-field samples, observation direction sets and the CSV exchange format."""

from __future__ import annotations

import csv
import dataclasses
import itertools
from pathlib import Path

import numpy as np

from mesoscatter._validation import as_unit_directions
from mesoscatter.errors import DomainError

CSV_COLUMNS = ("dir_x", "dir_y", "dir_z", "ReEx", "ImEx", "ReEy", "ImEy", "ReEz", "ImEz")


@dataclasses.dataclass(frozen=True)
class FarFieldSamples:
    """Far-field pattern sampled on a set of unit directions."""

    directions: np.ndarray  # (D, 3) real
    values: np.ndarray  # (D, 3) complex

    def transversality(self) -> float:
        """``max_d |x_d . E(x_d)| / max_d |E(x_d)|`` (0 for an all-zero pattern)."""
        dots = np.abs(np.einsum("di,di->d", self.directions, self.values))
        scale = np.linalg.norm(self.values, axis=1).max(initial=0.0)
        return 0.0 if scale == 0.0 else float(dots.max() / scale)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for d, e in zip(self.directions, self.values):
                row = list(d) + [v for c in e for v in (c.real, c.imag)]
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "FarFieldSamples":
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != CSV_COLUMNS:
            raise DomainError(f"unexpected far-field CSV header {rows[0]}")
        data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 9)
        vals = data[:, 3::2] + 1j * data[:, 4::2]
        return cls(data[:, :3], vals)


def far_field_from_moments(k, points, moments_E, moments_H, directions, weight=1.0):
    """Radiated far field of electric/magnetic point moments.

    ``E(x) = sum_m w [k^2/4pi e^{-ik x.z_m} x (R_m x x) + ik/4pi e^{-ik x.z_m} x Q_m]``
    with ``R_m = moments_E[m]``, ``Q_m = moments_H[m]``.
    """
    dirs = as_unit_directions(directions)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if points.shape[0] == 0:
        return FarFieldSamples(dirs, np.zeros(dirs.shape, dtype=complex))
    phase = np.exp(-1j * k * (dirs @ points.T))
    sum_R = weight * (phase @ np.asarray(moments_E).reshape(-1, 3))
    sum_Q = weight * (phase @ np.asarray(moments_H).reshape(-1, 3))
    e_part = np.cross(dirs, np.cross(sum_R, dirs))
    h_part = np.cross(dirs, sum_Q)
    vals = (k * k / (4 * np.pi)) * e_part + (1j * k / (4 * np.pi)) * h_part
    return FarFieldSamples(dirs, vals)


def _octahedral_orbit(point) -> np.ndarray:
    """All distinct images of ``point`` under coordinate permutations and sign flips."""
    out = set()
    for perm in itertools.permutations(range(3)):
        q = np.asarray(point, dtype=float)[list(perm)]
        for signs in itertools.product((1.0, -1.0), repeat=3):
            out.add(tuple(np.round(q * signs, 15) + 0.0))
    return np.array(sorted(out))


def lebedev_86():
    """The 86-point Lebedev-Laikov spherical design (degree 15).

    Returns:
        ``(directions, weights)`` with weights summing to one.
    """
    s3 = np.sqrt(1.0 / 3.0)
    a1, a2, a3 = 0.3696028464541502, 0.6943540066026664, 0.3742430390903412
    spec = [
        ((1.0, 0.0, 0.0), 0.1154401154401154e-1),
        ((s3, s3, s3), 0.1194390908585628e-1),
        ((a1, a1, np.sqrt(1 - 2 * a1 * a1)), 0.1111055571060340e-1),
        ((a2, a2, np.sqrt(1 - 2 * a2 * a2)), 0.1187650129453714e-1),
        ((a3, np.sqrt(1 - a3 * a3), 0.0), 0.1181230374690448e-1),
    ]
    dirs, wts = [], []
    for point, v in spec:
        orbit = _octahedral_orbit(point)
        dirs.append(orbit)
        wts.append(np.full(len(orbit), v))
    d = np.vstack(dirs)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d, np.concatenate(wts)


def fibonacci_directions(count: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform directions on the sphere with a seeded random rotation."""
    count = int(count)
    if count < 1:
        raise DomainError("need at least one direction")
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    r = np.sqrt(1.0 - z * z)
    d = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    return d @ q.T


def directions_from_json(doc, seed: int = 0) -> np.ndarray:
    """``"lebedev86"`` | ``{"fibonacci": n}`` | explicit ``[[x, y, z], ...]``."""
    if doc is None or doc == "lebedev86":
        return lebedev_86()[0]
    if isinstance(doc, dict) and "fibonacci" in doc:
        return fibonacci_directions(doc["fibonacci"], seed)
    d = np.asarray(doc, dtype=float).reshape(-1, 3)
    return as_unit_directions(d / np.linalg.norm(d, axis=1, keepdims=True))
