"""Limiting objects: Brownian and fractional-kinetics semigroups and PDE solvers.

Convention: the Brownian limit has generator ``sigma**2 * Laplacian``, so each
coordinate has variance ``2 sigma**2 t``. The fractional equation
``D_t^beta rho = sigma**(2/beta) Laplacian rho`` (Caputo derivative) is
solved mode by mode with the Mittag-Leffler multiplier
``E_beta(-sigma**(2/beta) |k|**2 t**beta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from . import rng

# |z| at or below which E_beta(z) is summed as a power series.
ML_SERIES_CROSSOVER = 1.0


@dataclass(frozen=True)
class DiffusionParams:
    sigma: float
    d: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")


@dataclass(frozen=True)
class FractionalParams:
    beta: float
    sigma: float
    d: int

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie strictly in (0, 1), got {self.beta}; use DiffusionParams for beta = 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def diffusivity(self) -> float:
        """Coefficient ``sigma**(2/beta)`` in front of the Laplacian."""
        return self.sigma ** (2.0 / self.beta)


# --------------------------------------------------------------------------
# Brownian semigroup on R^d

def heat_semigroup(params: DiffusionParams, t: float, f: Callable, x, tol: float = 1e-10) -> float:
    """``E f(x + B_t)`` with ``B_t ~ N(0, 2 sigma**2 t I)`` by adaptive quadrature.

    ``f`` takes a length-d array. Intended for d <= 3.
    """
    x = np.asarray(x, dtype=float).reshape(params.d)
    if t < 0:
        raise ValueError("time must be >= 0")
    if t == 0:
        val = float(f(x))
        if not math.isfinite(val):
            raise ValueError("f returned a non-finite value")
        return val
    s = math.sqrt(2.0 * params.sigma**2 * t)
    d = params.d
    norm = (2 * math.pi) ** (-d / 2)

    def integrand(*z):
        z = np.asarray(z)
        val = f(x + s * z)
        if not np.isfinite(val):
            raise ValueError("f returned a non-finite value")
        return float(val) * norm * math.exp(-0.5 * float(z @ z))

    # the Gaussian weight is below 1e-16 outside |z| <= 9
    lim = 9.0
    res, _ = integrate.nquad(integrand, [(-lim, lim)] * d, opts={"epsabs": tol, "epsrel": tol, "limit": 200})
    return float(res)


def gaussian_density(x, var: float) -> np.ndarray:
    """Isotropic centered Gaussian density with per-coordinate variance ``var``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[-1]
    return (2 * np.pi * var) ** (-d / 2) * np.exp(-np.sum(x**2, axis=-1) / (2 * var))


# --------------------------------------------------------------------------
# periodic profiles

@dataclass
class Profile:
    """Samples on the periodic grid ``x_j = j * period / M`` of ``[0, period)^d``.

    ``band_limit`` optionally declares the largest Fourier index present in
    the profile, which the solvers check against the Nyquist index.
    """

    values: np.ndarray
    period: float
    band_limit: int | None = None
    lipschitz: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(set(self.values.shape)) != 1:
            raise ValueError("profile grid must be cubic")
        if not self.period > 0:
            raise ValueError("period must be > 0")

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return self.period / self.M

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], period: float, M: int, d: int,
                      band_limit: int | None = None, lipschitz: float | None = None) -> "Profile":
        """Sample ``func`` (acting on points of shape ``(m, d)``) at the grid, using
        centered representatives in ``(-period/2, period/2]``."""
        pts = grid_points(period, M, d)
        vals = np.asarray(func(pts.reshape(-1, d)), dtype=float).reshape((M,) * d)
        return cls(vals, period, band_limit, lipschitz)

    def check_unit_range(self):
        if self.values.min() < -1e-12 or self.values.max() > 1 + 1e-12:
            raise ValueError("profile values must lie in [0, 1]")

    def check_nyquist(self):
        if self.band_limit is not None and 2 * self.band_limit >= self.M:
            raise ValueError(f"grid of {self.M} points is too coarse for band limit {self.band_limit}")

    def mass(self) -> float:
        return float(self.values.sum() * self.spacing**self.d)

    def __call__(self, points) -> np.ndarray:
        """Trigonometric interpolation at arbitrary points (shape ``(m, d)``)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coef = np.fft.fftn(self.values) / self.values.size
        idx = np.fft.fftfreq(self.M, 1.0 / self.M)
        out = np.zeros(pts.shape[0], dtype=complex)
        grids = np.meshgrid(*([idx] * self.d), indexing="ij")
        ks = np.stack([g.ravel() for g in grids], axis=1)
        c = coef.ravel()
        if self.M % 2 == 0:
            # split the Nyquist mode symmetrically so real data interpolate to real values
            nyq = np.abs(ks) == self.M // 2
            c = c * 0.5 ** nyq.sum(axis=1)
            for axis in range(self.d):
                mirror = ks.copy()
                mirror[nyq[:, axis], axis] *= -1
                sel = nyq[:, axis]
                ks = np.concatenate([ks, mirror[sel]])
                c = np.concatenate([c, c[sel]])
        for lo in range(0, pts.shape[0], 256):
            phase = 2j * np.pi * pts[lo:lo + 256] @ ks.T / self.period
            out[lo:lo + 256] = np.exp(phase) @ c
        return out.real


def grid_points(period: float, M: int, d: int) -> np.ndarray:
    """Centered coordinates of the grid, shape ``(M,)*d + (d,)``."""
    j = np.arange(M)
    x1 = np.where(j > M // 2, j - M, j) * (period / M)
    return np.stack(np.meshgrid(*([x1] * d), indexing="ij"), axis=-1)


def _wavenumber_sq(M: int, d: int, period: float) -> np.ndarray:
    k1 = 2 * np.pi * np.fft.fftfreq(M, period / M)
    grids = np.meshgrid(*([k1**2] * d), indexing="ij")
    return np.sum(grids, axis=0)


def _apply_multiplier(gamma: Profile, mult: Callable[[np.ndarray], np.ndarray]) -> Profile:
    gamma.check_nyquist()
    k2 = _wavenumber_sq(gamma.M, gamma.d, gamma.period)
    uniq, inv = np.unique(k2, return_inverse=True)
    m = mult(uniq)[inv].reshape(k2.shape)
    vals = np.fft.ifftn(np.fft.fftn(gamma.values) * m).real
    return Profile(vals, gamma.period, gamma.band_limit, gamma.lipschitz, dict(gamma.meta))


def solve_heat(params: DiffusionParams, gamma: Profile, t: float) -> Profile:
    """Periodic solution of ``d rho/dt = sigma**2 Laplacian rho``, ``rho_0 = gamma``."""
    if t < 0:
        raise ValueError("time must be >= 0")
    if gamma.d != params.d:
        raise ValueError("profile dimension does not match the diffusion parameters")
    return _apply_multiplier(gamma, lambda k2: np.exp(-params.sigma**2 * k2 * t))


def solve_fractional_heat(params: FractionalParams | DiffusionParams, gamma: Profile, t: float) -> Profile:
    """Periodic solution of the Caputo equation; DiffusionParams selects beta = 1."""
    if isinstance(params, DiffusionParams):
        return solve_heat(params, gamma, t)
    if t < 0:
        raise ValueError("time must be >= 0")
    if gamma.d != params.d:
        raise ValueError("profile dimension does not match the fractional parameters")
    c = params.diffusivity
    return _apply_multiplier(gamma, lambda k2: mittag_leffler(params.beta, -c * k2 * t**params.beta))


# --------------------------------------------------------------------------
# Mittag-Leffler function on the negative half-line

def _ml_series(beta: float, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return np.zeros_like(z)
    zmax = float(np.max(np.abs(z)))
    k = np.arange(4000)
    logg = special.gammaln(beta * k + 1.0)
    K = 1
    if zmax > 0:
        # last k whose term can still exceed 1e-18
        big = np.flatnonzero(k * math.log(zmax) - logg > math.log(1e-18))
        K = int(big.max()) + 2 if big.size else 2
    with np.errstate(divide="ignore"):
        logz = np.log(np.abs(z))
    sign = np.sign(z)
    total = np.ones_like(z)
    for kk in range(1, K):
        total += np.where(z != 0, np.exp(kk * logz - logg[kk]), 0.0) * sign**kk
    return total


def _ml_integral(beta: float, x: np.ndarray) -> np.ndarray:
    """``E_beta(-x)`` for x > 0 from its Laplace-type integral representation

    ``E_beta(-x) = sin(beta pi) / (pi beta) * int_0^inf g(u) / D(u) du`` with
    ``g(u) = x exp(-u**(1/beta))`` and ``D(u) = (u - m)**2 + a**2``,
    ``m = -x cos(beta pi)``, ``a = x sin(beta pi)``. As beta -> 1 the kernel
    1/D becomes a spike of width a around m, so the first-order Taylor part
    of g at ``u0 = clip(m)`` is integrated in closed form and quadrature only
    sees the bounded remainder.
    """
    x = np.asarray(x, dtype=float)
    s, cb = math.sin(beta * math.pi), math.cos(beta * math.pi)
    inv_b = 1.0 / beta
    # exp(-u**(1/beta)) < 1e-30 beyond this point
    umax = 70.0**beta
    m = -x * cb
    a = x * s
    u0 = np.clip(m, 0.0, umax)
    g0 = x * np.exp(-u0**inv_b)
    with np.errstate(divide="ignore", invalid="ignore"):
        dg0 = np.where(u0 > 0, -inv_b * u0 ** (inv_b - 1.0) * g0, 0.0)

    def remainder(u):
        return (x * np.exp(-u**inv_b) - g0 - dg0 * (u - u0)) / ((u - m) ** 2 + a**2)

    rem, _ = integrate.quad_vec(remainder, 0.0, umax, epsabs=1e-15, epsrel=1e-13, limit=4000)
    # a * int 1/D and int (u - m)/D over [0, umax]
    arc = np.arctan((umax - m) / a) - np.arctan(-m / a)
    logs = 0.5 * np.log(((umax - m) ** 2 + a**2) / (m**2 + a**2))
    pref = s / (math.pi * beta)
    return g0 * arc / (math.pi * beta * x) + pref * (dg0 * (logs + (m - u0) * arc / a) + rem)


def mittag_leffler(beta: float, z) -> np.ndarray | float:
    """``E_beta(z) = sum_k z**k / Gamma(beta k + 1)`` for ``0 < beta <= 1``, ``z <= 0``.

    Series for ``|z| <= ML_SERIES_CROSSOVER``, integral representation beyond.
    """
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr > 0):
        raise ValueError("only z <= 0 is supported")
    if beta == 1:
        out = np.exp(z_arr)
        return float(out) if out.ndim == 0 else out
    flat = z_arr.ravel()
    out = np.empty_like(flat)
    small = np.abs(flat) <= ML_SERIES_CROSSOVER
    out[small] = _ml_series(beta, flat[small])
    big = ~small
    if np.any(big):
        xs, inv = np.unique(-flat[big], return_inverse=True)
        vals = _ml_integral(beta, xs)
        out[big] = vals[inv]
    out = out.reshape(z_arr.shape)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Caputo derivative

def caputo_derivative(beta: float, h: Callable, t: float, tol: float = 1e-10, max_order: int = 256) -> float:
    """Caputo derivative of order beta of ``h`` at time t.

    Uses the derivative-free form
    ``(h(t) - h(0)) / (Gamma(1-beta) t**beta)
    + beta / Gamma(1-beta) * int_0^t (h(t) - h(s)) (t - s)**(-1-beta) ds``,
    so ``h`` only needs to be continuous with an integrable derivative
    (e.g. ``s**beta`` behaviour at 0 is fine). The integral over ``[0, t/2]``
    uses Gauss-Legendre panels on a geometric mesh graded towards 0; the
    weakly singular part over ``[t/2, t]`` uses Gauss-Jacobi with weight
    ``(t - s)**-beta``. The order doubles until successive values agree
    within ``tol``. ``h`` must accept numpy arrays.
    """
    if not tol > 0:
        raise ValueError("tolerance must be > 0")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if t < 0:
        raise ValueError("time must be >= 0")
    if t == 0:
        return 0.0

    def H(s):
        s = np.asarray(s, dtype=float)
        return np.asarray(h(s), dtype=float) * np.ones_like(s)

    ht = float(H(np.array([t]))[0])
    h0 = float(H(np.array([0.0]))[0])
    g1b = special.gamma(1.0 - beta)
    n_panels = 60
    edges = 0.5 * t * 0.5 ** np.arange(n_panels + 1)[::-1]  # 2**-60 t/2, ..., t/2
    lo, hi = edges[:-1], edges[1:]

    def integral(order):
        xg, wg = special.roots_legendre(order)
        s = (0.5 * (hi - lo))[:, None] * xg[None, :] + (0.5 * (hi + lo))[:, None]
        w = (0.5 * (hi - lo))[:, None] * wg[None, :]
        left = np.sum(w * (ht - H(s.ravel()).reshape(s.shape)) * (t - s) ** (-1.0 - beta))
        # the omitted sliver [0, 2**-61 t] contributes at most ~ |h(t) - h(0)| t**-beta 2**-61
        xj, wj = special.roots_jacobi(order, -beta, 0.0)
        s = 0.75 * t + 0.25 * t * xj
        right = (0.25 * t) ** (1.0 - beta) * np.sum(wj * (ht - H(s)) / (t - s))
        return left + right

    order = 8
    prev = integral(order)
    while True:
        order *= 2
        cur = integral(order)
        if abs(cur - prev) * beta / g1b <= tol or order >= max_order:
            break
        prev = cur
    return float((ht - h0) / (g1b * t**beta) + beta / g1b * cur)


# --------------------------------------------------------------------------
# subordination sampling

def positive_stable(beta: float, size, gen: np.random.Generator) -> np.ndarray:
    """Kanter's sampler for ``D >= 0`` with ``E exp(-lam D) = exp(-lam**beta)``."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    u = gen.uniform(0.0, np.pi, size)
    w = gen.exponential(1.0, size)
    a = np.sin(beta * u) / np.sin(u) ** (1.0 / beta)
    b = (np.sin((1.0 - beta) * u) / w) ** ((1.0 - beta) / beta)
    return a * b


def inverse_stable_time(beta: float, t: float, size, gen: np.random.Generator) -> np.ndarray:
    """First passage time of the standard beta-stable subordinator above t.

    Uses self-similarity: ``E_t = (t / D_1)**beta``.
    """
    if t == 0:
        return np.zeros(size)
    return (t / positive_stable(beta, size, gen)) ** beta


def fk_marginal_sample(params: FractionalParams, t: float, replicas: int, seed: int, x0=None) -> np.ndarray:
    """Samples of ``B(E_t)`` where B has generator ``sigma**(2/beta) Laplacian``."""
    if replicas < 1:
        raise ValueError("need at least one replica")
    gen = rng.generator(seed, label="fk-marginal")
    x0 = np.zeros(params.d) if x0 is None else np.asarray(x0, dtype=float)
    if t == 0:
        return np.tile(x0, (replicas, 1))
    e = inverse_stable_time(params.beta, t, replicas, gen)
    z = gen.standard_normal((replicas, params.d))
    return x0 + np.sqrt(2.0 * params.diffusivity * e)[:, None] * z


def brownian_marginal_sample(params: DiffusionParams, t: float, replicas: int, seed: int) -> np.ndarray:
    gen = rng.generator(seed, label="bm-marginal")
    return math.sqrt(2.0 * params.sigma**2 * t) * gen.standard_normal((replicas, params.d))
