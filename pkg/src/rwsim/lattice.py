"""Periodic cubic lattices (tori) standing in for Z^d.

Conventions used by every other module:

* sites are flat indices into an array of shape ``(L,) * d`` in C order, so
  the last coordinate varies fastest;
* the neighbour order of a site is ``+e_1, -e_1, +e_2, -e_2, ...``;
* bond ``(i, x)`` joins ``x`` and ``x + e_i``; its flat index is ``i * L**d + x``;
* the centered representative of a coordinate lies in ``(-L/2, L/2]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np


@dataclass(frozen=True)
class Torus:
    d: int
    L: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.L < 2:
            raise ValueError(f"side length must be >= 2, got {self.L}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def n_bonds(self) -> int:
        return self.d * self.L**self.d

    def index(self, coords) -> int | np.ndarray:
        """Flat index of integer coordinates (wrapped modulo L)."""
        c = np.mod(np.asarray(coords, dtype=np.int64), self.L)
        if c.shape[-1] != self.d:
            raise ValueError(f"expected {self.d} coordinates, got shape {c.shape}")
        idx = np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), self.shape)
        return int(idx) if np.ndim(idx) == 0 else idx

    def coords(self, site) -> np.ndarray:
        """Coordinates in ``[0, L)`` of one site or an array of sites."""
        site = np.asarray(site, dtype=np.int64)
        self._check_sites(site)
        return np.stack(np.unravel_index(site, self.shape), axis=-1)

    def centered(self, site) -> np.ndarray:
        """Coordinates of the centered representative in ``(-L/2, L/2]``."""
        c = self.coords(site)
        return np.where(c > self.L // 2, c - self.L, c)

    def all_centered(self) -> np.ndarray:
        """Centered coordinates of every site, shape ``(L**d, d)``."""
        return self.centered(np.arange(self.n_sites))

    def _check_sites(self, site):
        if np.any(site < 0) or np.any(site >= self.n_sites):
            raise IndexError(f"site index out of range [0, {self.n_sites})")

    def neighbor_table(self) -> np.ndarray:
        """Array ``nb[x, k]`` of the 2d neighbours of every site."""
        grid = np.arange(self.n_sites).reshape(self.shape)
        cols = []
        for i in range(self.d):
            cols.append(np.roll(grid, -1, axis=i).ravel())
            cols.append(np.roll(grid, 1, axis=i).ravel())
        return np.stack(cols, axis=1)

    def bonds(self) -> np.ndarray:
        """Endpoints of all unoriented bonds, shape ``(d * L**d, 2)`` in bond order."""
        nb = self.neighbor_table()
        x = np.arange(self.n_sites)
        return np.concatenate([np.stack([x, nb[:, 2 * i]], axis=1) for i in range(self.d)])

    def incident_bonds(self) -> np.ndarray:
        """Bond index ``inc[x, k]`` of the bond joining x to its k-th neighbour."""
        N = self.n_sites
        nb = self.neighbor_table()
        x = np.arange(N)
        cols = []
        for i in range(self.d):
            cols.append(i * N + x)
            cols.append(i * N + nb[:, 2 * i + 1])
        return np.stack(cols, axis=1)


def neighbors(torus: Torus, site: int) -> list[int]:
    """The 2d neighbours of ``site`` in the order +e_1, -e_1, ..., +e_d, -e_d."""
    c = torus.coords(site)
    out = []
    for i in range(torus.d):
        for step in (1, -1):
            nc = c.copy()
            nc[i] += step
            out.append(torus.index(nc))
    return out


def translate_site(torus: Torus, site, z: Sequence[int]):
    """Shift a site (or array of sites) by the integer vector z, modulo L."""
    c = torus.coords(site)
    return torus.index(c + np.asarray(z, dtype=np.int64))


@dataclass(frozen=True)
class Window:
    """A compact set in R^d: a closed Euclidean ball or a closed cube."""

    shape: Literal["ball", "box"]
    K: float
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.shape not in ("ball", "box"):
            raise ValueError(f"unknown window shape {self.shape!r}")
        if not self.K > 0:
            raise ValueError("window radius must be positive")

    def _center(self, d: int) -> np.ndarray:
        if self.center is None:
            return np.zeros(d)
        c = np.asarray(self.center, dtype=float)
        if c.shape != (d,):
            raise ValueError(f"window center has wrong dimension for d={d}")
        return c

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership of points of R^d (array of shape ``(..., d)``)."""
        points = np.asarray(points, dtype=float)
        diff = points - self._center(points.shape[-1])
        if self.shape == "ball":
            return np.einsum("...i,...i->...", diff, diff) <= self.K**2
        return np.max(np.abs(diff), axis=-1) <= self.K

    def extent(self, d: int) -> float:
        """Largest sup-norm distance from the origin of a window point."""
        return float(np.max(np.abs(self._center(d)))) + self.K


def window_sites(torus: Torus, window: Window, n: int) -> np.ndarray:
    """Sites x whose centered representative satisfies x / n in the window.

    Requires ``n * extent < L / 2`` so the scaled window does not wrap.
    """
    if n < 1:
        raise ValueError("scale n must be >= 1")
    if n * window.extent(torus.d) >= torus.L / 2:
        raise ValueError("window exceeds torus: n * K must be < L / 2")
    pts = torus.all_centered() / n
    return np.flatnonzero(window.contains(pts))
