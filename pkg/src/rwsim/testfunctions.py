"""Test functions and initial profiles on R^d.

All callables act on arrays of points of shape ``(m, d)`` and return ``m``
values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Bump:
    """``height * (1 - |x - center|**2 / radius**2)_+**3``: C^2, compact support."""

    radius: float = 1.0
    height: float = 1.0
    center: tuple[float, ...] | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = np.zeros(x.shape[-1]) if self.center is None else np.asarray(self.center, dtype=float)
        r2 = np.sum((x - c) ** 2, axis=-1) / self.radius**2
        return self.height * np.clip(1.0 - r2, 0.0, None) ** 3

    @property
    def sup(self) -> float:
        return abs(self.height)

    @property
    def lipschitz(self) -> float:
        # max over u in [0, 1] of 6 u (1 - u^2)^2, attained at u = 1/sqrt(5)
        return abs(self.height) * 6 / np.sqrt(5) * (4 / 5) ** 2 / self.radius

    def support_extent(self, d: int) -> float:
        c = np.zeros(d) if self.center is None else np.asarray(self.center, dtype=float)
        return float(np.max(np.abs(c))) + self.radius

    def integral(self, d: int) -> float:
        """Exact integral over R^d: ``h r^d |S^{d-1}| * 48 / (d (d+2) (d+4) (d+6))``."""
        from math import gamma, pi

        sphere = 2 * pi ** (d / 2) / gamma(d / 2)
        # int_0^1 (1 - u^2)^3 u^(d-1) du = 48 / (d (d+2) (d+4) (d+6))
        radial = 48.0 / (d * (d + 2) * (d + 4) * (d + 6))
        return self.height * self.radius**d * sphere * radial

    def describe(self) -> dict:
        return {"kind": "bump", "radius": self.radius, "height": self.height,
                "center": None if self.center is None else list(self.center)}


@dataclass(frozen=True)
class ConstantFunction:
    value: float = 1.0

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(x.shape[0], float(self.value))

    @property
    def sup(self) -> float:
        return abs(self.value)

    lipschitz = 0.0

    def support_extent(self, d: int) -> float:
        return 0.0 if self.value == 0 else np.inf

    def describe(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class CosineProfile:
    """``mean + amplitude * cos(2 pi mode . x / period)``, a single Fourier mode.

    Values stay in [0, 1] when ``|amplitude| <= min(mean, 1 - mean)``.
    """

    period: float
    mode: tuple[int, ...]
    mean: float = 0.5
    amplitude: float = 0.5

    def __post_init__(self):
        if abs(self.amplitude) > min(self.mean, 1 - self.mean) + 1e-15:
            raise ValueError("cosine profile would leave [0, 1]")

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = 2 * np.pi * np.asarray(self.mode, dtype=float) / self.period
        return self.mean + self.amplitude * np.cos(x @ k)

    @property
    def band_limit(self) -> int:
        return int(max(abs(m) for m in self.mode))

    @property
    def k2(self) -> float:
        k = 2 * np.pi * np.asarray(self.mode, dtype=float) / self.period
        return float(k @ k)

    @property
    def lipschitz(self) -> float:
        return abs(self.amplitude) * np.sqrt(self.k2)

    def describe(self) -> dict:
        return {"kind": "cosine", "period": self.period, "mode": list(self.mode),
                "mean": self.mean, "amplitude": self.amplitude}


@dataclass(frozen=True)
class ConstantProfile:
    value: float

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise ValueError("profile value must lie in [0, 1]")

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(x.shape[0], float(self.value))

    band_limit = 0
    lipschitz = 0.0

    def describe(self) -> dict:
        return {"kind": "constant_profile", "value": self.value}


def from_dict(spec: dict):
    """Build a test function or profile from its ``describe()`` form."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "bump":
        if spec.get("center") is not None:
            spec["center"] = tuple(spec["center"])
        return Bump(**spec)
    if kind == "cosine":
        spec["mode"] = tuple(spec["mode"])
        return CosineProfile(**spec)
    if kind == "constant":
        return ConstantFunction(**spec)
    if kind == "constant_profile":
        return ConstantProfile(**spec)
    raise ValueError(f"unknown function kind {kind!r}")
