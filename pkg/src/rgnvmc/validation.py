"""Input validation shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigError, ShapeError


def check_configs(X, n: int) -> np.ndarray:
    """Validate a batch of spin configurations and return it as ``int8``.

    Accepts anything array-like with shape ``(B, n)`` (or ``(n,)``, treated as
    one row) whose entries are exactly +1 or -1.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=None, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != n:
        raise ShapeError(f"expected {n} spins per configuration, got {X.shape[1]}")
    if not np.all(np.abs(X) == 1):
        raise ConfigError("configurations must contain only +1 and -1")
    return X.astype(np.int8)


def check_dims(dims) -> tuple:
    """Normalise ``10``, ``"10"``, ``"4x4"``, ``"4,4"`` or ``(4, 4)`` to a tuple of ints."""
    if isinstance(dims, str):
        parts = dims.lower().replace("x", ",").replace("×", ",").split(",")
        parts = [p.strip() for p in parts if p.strip()]
    elif np.isscalar(dims):
        parts = [dims]
    else:
        parts = list(dims)
    try:
        out = tuple(int(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse lattice dims {dims!r}") from exc
    if not out:
        raise ConfigError("lattice dims are empty")
    if any(d < 1 for d in out):
        raise ConfigError(f"lattice extents must be positive, got {out}")
    return out


def check_positive(name: str, value, integer: bool = False):
    try:
        v = int(value) if integer else float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number, got {value!r}") from exc
    if integer and v != float(value):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not (np.isfinite(v) and v > 0):
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return v
