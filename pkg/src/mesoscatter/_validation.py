"""Input validation helpers."""

from __future__ import annotations

import numpy as np

from mesoscatter.errors import DomainError


def as_points(x, name: str = "x") -> np.ndarray:
    """Returns ``x`` as a float array with trailing dimension 3."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (3,):
        raise DomainError(f"{name} must have trailing dimension 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def as_tensor3(t, name: str = "tensor") -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(3)
    if arr.shape != (3, 3):
        raise DomainError(f"{name} must be 3x3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def check_symmetric(t: np.ndarray, name: str = "tensor", rtol: float = 1e-12) -> None:
    scale = max(1.0, float(np.max(np.abs(t))))
    if np.max(np.abs(t - t.T)) > rtol * scale:
        raise DomainError(f"{name} is not symmetric")


def check_spd(t: np.ndarray, name: str = "tensor") -> None:
    """Raises unless ``t`` is symmetric positive definite (Cholesky test)."""
    check_symmetric(t, name)
    try:
        np.linalg.cholesky(0.5 * (t + t.T))
    except np.linalg.LinAlgError:
        raise DomainError(f"{name} is not positive definite") from None


def as_unit_directions(d, name: str = "directions", atol: float = 1e-12) -> np.ndarray:
    arr = np.atleast_2d(as_points(d, name))
    norms = np.linalg.norm(arr, axis=-1)
    if np.any(np.abs(norms - 1.0) > atol):
        raise DomainError(f"{name} must be unit vectors")
    return arr
