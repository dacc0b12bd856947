"""Periodic 1-D and 2-D lattice geometry.

Sites are indexed row-major: on a lattice with extents ``(d0, d1)`` the site
at coordinates ``(i0, i1)`` has index ``i0 * d1 + i1``.  The last axis is the
``x`` direction; bonds are listed per site in index order, ``+x`` first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import GeometryError, ShapeError, TranslationError, UnsupportedDimensionError


@dataclass(frozen=True)
class LatticeSpec:
    """Immutable periodic lattice.

    Attributes
    ----------
    dims : tuple of int
        Extents, one or two entries.
    n : int
        Number of sites.
    bonds : ndarray of shape (n_bonds, 2)
        Nearest-neighbour pairs ``(i, j)`` with ``i < j``, deduplicated.
    translations : ndarray of shape (n, n)
        ``translations[t]`` is the site permutation of translation ``t``;
        the translated configuration is ``config[translations[t]]``.
    sublattice : ndarray of shape (n,) or None
        0 for sublattice A, 1 for B.  ``None`` when some bond joins two sites
        of equal coordinate parity (odd extents).
    """

    dims: tuple
    n: int
    bonds: np.ndarray = field(repr=False)
    translations: np.ndarray = field(repr=False)
    sublattice: np.ndarray | None = field(repr=False)

    @property
    def is_bipartite(self) -> bool:
        return self.sublattice is not None

    def coordinates(self) -> np.ndarray:
        return np.stack(np.unravel_index(np.arange(self.n), self.dims), axis=1)


def build_lattice(dims) -> LatticeSpec:
    """Build the periodic lattice with the given extents.

    >>> build_lattice([4]).bonds.tolist()
    [[0, 1], [1, 2], [2, 3], [0, 3]]
    """
    if np.isscalar(dims):
        dims = [dims]
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise GeometryError("at least one extent is required")
    if len(dims) > 2:
        raise UnsupportedDimensionError(f"only 1-D and 2-D lattices are supported, got {len(dims)} dims")
    if any(d <= 0 for d in dims):
        raise GeometryError(f"extents must be positive, got {dims}")
    if any(d < 2 for d in dims):
        raise GeometryError(f"extents must be at least 2, got {dims}")

    n = int(np.prod(dims))
    coords = np.stack(np.unravel_index(np.arange(n), dims), axis=1)
    index = lambda c: int(np.ravel_multi_index(tuple(np.mod(c, dims)), dims))

    bonds, seen = [], set()
    for site in range(n):
        # +x is the last axis, then +y
        for axis in reversed(range(len(dims))):
            step = np.zeros(len(dims), dtype=int)
            step[axis] = 1
            other = index(coords[site] + step)
            pair = (min(site, other), max(site, other))
            if pair[0] != pair[1] and pair not in seen:
                seen.add(pair)
                bonds.append(pair)

    translations = np.empty((n, n), dtype=np.intp)
    for t in range(n):
        shift = coords[t]
        translations[t] = np.ravel_multi_index(tuple(np.mod(coords + shift, dims).T), dims)

    parity = coords.sum(axis=1) % 2
    bonds = np.asarray(bonds, dtype=np.intp).reshape(-1, 2)
    sublattice = parity if np.all(parity[bonds[:, 0]] != parity[bonds[:, 1]]) else None

    for arr in (bonds, translations) + ((sublattice,) if sublattice is not None else ()):
        arr.setflags(write=False)
    return LatticeSpec(dims=dims, n=n, bonds=bonds, translations=translations, sublattice=sublattice)


def apply_translation(lattice: LatticeSpec, t: int, config) -> np.ndarray:
    """Return ``T_t config``; works on a single configuration or a batch."""
    if not 0 <= int(t) < lattice.n:
        raise TranslationError(f"translation index {t} out of range [0, {lattice.n})")
    config = np.asarray(config)
    if config.shape[-1] != lattice.n:
        raise ShapeError(f"configuration length {config.shape[-1]} != {lattice.n}")
    return config[..., lattice.translations[int(t)]]
