"""Quenched L1 distance between the rescaled walk semigroup and its limit.

On a torus of side L the rescaled walk lives on the macroscopic torus of
period ``L / n``, so the limit expectation is evaluated for the periodised
test function on that torus. For test functions supported well inside the
torus this coincides with the R^d expectation up to the Gaussian (or
fractional-kinetics) mass leaking past the half-period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng
from .environment import Environment, EnvironmentLaw, sample_environment
from .lattice import Torus, Window, window_sites
from .limits import (DiffusionParams, FractionalParams, Profile, brownian_marginal_sample, fk_marginal_sample,
                     solve_fractional_heat, solve_heat)
from .percolation import ClusterLabeling
from .walk import DIFFUSIVE, ScalingSequence, Uniformizer, walk_displacements

Limit = DiffusionParams | FractionalParams

# Largest state space handled with the exact semigroup before switching to Monte Carlo.
EXACT_STATE_CAP = 1 << 18
# Largest Poisson mean (total rate x time) accepted by the exact semigroup.
EXACT_POISSON_CAP = 5.0e6
# Target grid spacing for the limit solvers, in macroscopic units.
LIMIT_GRID_SPACING = 1.0 / 32


# --------------------------------------------------------------------------
# discrete and limit expectations on the lattice

def site_points(torus: Torus, n: int) -> np.ndarray:
    """Rescaled centered positions x / n of every site, shape ``(L**d, d)``."""
    return torus.all_centered() / n


def limit_expectation_on_lattice(limit: Limit, g: Callable, torus: Torus, n: int, t: float,
                                 spacing: float = LIMIT_GRID_SPACING) -> np.ndarray:
    """``E_{x/n}[g(X_t)]`` of the limit process at every site, on the torus of period L/n.

    The periodic solver runs on a grid that refines the rescaled lattice by
    an integer factor, so lattice points are grid points.
    """
    if limit.d != torus.d:
        raise ValueError("limit dimension does not match the torus")
    m = max(1, math.ceil(1.0 / (n * spacing)))
    M = torus.L * m
    prof = Profile.from_function(g, torus.L / n, M, torus.d)
    if isinstance(limit, FractionalParams):
        out = solve_fractional_heat(limit, prof, t)
    else:
        out = solve_heat(limit, prof, t)
    idx = np.mod(torus.all_centered() * m, M)
    return out.values[tuple(idx.T)]


def discrete_expectation(env: Environment, g: Callable, n: int, t: float, theta: ScalingSequence,
                         tol: float = 1e-10, uniformizer: Uniformizer | None = None) -> np.ndarray:
    """``E^omega_x[g(X_{t theta_n} / n)]`` at every site via the exact semigroup."""
    tor = env.torus
    if tor.n_sites > EXACT_STATE_CAP:
        raise ValueError(f"state space {tor.n_sites} exceeds the exact-semigroup cap {EXACT_STATE_CAP}")
    u = uniformizer or Uniformizer.from_env(env)
    if u.rate * t * theta(n) > EXACT_POISSON_CAP:
        raise ValueError("infeasible horizon: rate * t * theta_n exceeds the exact-semigroup cap")
    gvals = np.asarray(g(site_points(tor, n)), dtype=float)
    return u.apply(gvals, t * theta(n), tol)


def monte_carlo_expectation(env: Environment, g: Callable, n: int, t: float, theta: ScalingSequence,
                            sites, replicas: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo ``E^omega_x[g(X_{t theta_n} / n)]`` for the given sites, with standard errors."""
    tor = env.torus
    sites = np.asarray(sites, dtype=np.int64)
    starts = np.repeat(sites, replicas)
    disp = walk_displacements(env, starts, [t * theta(n)], seed, label="mc-expectation")[:, 0, :]
    final = tor.index(tor.coords(starts) + disp.astype(np.int64))
    vals = np.asarray(g(tor.centered(final) / n), dtype=float).reshape(sites.size, replicas)
    return vals.mean(axis=1), vals.std(axis=1, ddof=1) / math.sqrt(replicas)


# --------------------------------------------------------------------------
# statistics

@dataclass
class StatisticValue:
    value: float
    se: float = 0.0
    method: str = "exact"


def l1_statistic_one_time(env: Environment, labeling: ClusterLabeling | None, n: int, t: float,
                          theta: ScalingSequence, g: Callable, window: Window, limit: Limit,
                          method: str = "auto", replicas: int = 200, seed: int = 0,
                          tol: float = 1e-10) -> StatisticValue:
    """``n**-d sum_{x/n in window, x in Omega_0} |E_x g(X_{t theta_n}/n) - E_{x/n} g(X_t)|``.

    ``labeling=None`` means Omega_0 is the whole space. With Monte Carlo the
    returned ``se`` is the standard error propagated from the per-site means
    (conservatively, as if the absolute value were linear).
    """
    tor = env.torus
    if limit.d != tor.d:
        raise ValueError("unsupported limit: dimension mismatch")
    sites = window_sites(tor, window, n)
    if labeling is not None:
        sites = sites[labeling.in_giant[sites]]
    lim_vals = limit_expectation_on_lattice(limit, g, tor, n, t)[sites]
    if method == "auto":
        method = "exact" if tor.n_sites <= EXACT_STATE_CAP else "mc"
    if method == "exact":
        disc = discrete_expectation(env, g, n, t, theta, tol)[sites]
        return StatisticValue(float(np.sum(np.abs(disc - lim_vals))) / n**tor.d, 0.0, "exact")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    means, ses = monte_carlo_expectation(env, g, n, t, theta, sites, replicas, seed)
    stat = float(np.sum(np.abs(means - lim_vals))) / n**tor.d
    se = float(np.sqrt(np.sum(ses**2))) / n**tor.d
    return StatisticValue(stat, se, "mc")


@dataclass
class FullClusterStatistic:
    signed: float
    tail: dict[float, float]
    absolute: float


def l1_statistic_full_cluster(env: Environment, labeling: ClusterLabeling | None, n: int, t: float,
                              f: Callable, limit: DiffusionParams, ks: Sequence[float] = (1.0, 2.0),
                              theta: ScalingSequence = DIFFUSIVE, tol: float = 1e-10,
                              uniformizer: Uniformizer | None = None) -> FullClusterStatistic:
    """Signed difference, tail masses and absolute L1 distance over the whole cluster.

    * signed: ``n**-d sum_{x in C} (P_t f - S_t f)(x/n)``
    * tail[k]: ``n**-d sum_{x in C, |x| > k n} S_t f(x/n)``
    * absolute: ``n**-d sum_{x in C} |P_t f - S_t f|(x/n)``
    """
    tor = env.torus
    ext = getattr(f, "support_extent", None)
    if ext is not None and n * ext(tor.d) >= tor.L / 2:
        raise ValueError("test function support exceeds the torus")
    mask = np.ones(tor.n_sites, bool) if labeling is None else labeling.in_giant
    disc = discrete_expectation(env, f, n, t, theta, tol, uniformizer)
    lim = limit_expectation_on_lattice(limit, f, tor, n, t)
    diff = (disc - lim)[mask]
    radius = np.linalg.norm(tor.all_centered(), axis=1)[mask]
    lim_c = lim[mask]
    tails = {float(k): float(np.sum(lim_c[radius > k * n])) / n**tor.d for k in ks}
    return FullClusterStatistic(float(diff.sum()) / n**tor.d, tails, float(np.abs(diff).sum()) / n**tor.d)


def mann_kendall(values: Sequence[float]) -> int:
    """Sign statistic ``sum_{i<j} sign(v_j - v_i)``; negative means a downward trend."""
    v = np.asarray(values, dtype=float)
    return int(sum(np.sign(v[j] - v[i]) for i in range(v.size) for j in range(i + 1, v.size)))


@dataclass
class ConvergenceReport:
    ns: list[int]
    values: list[float]
    ses: list[float]
    seed: int | None
    law: dict | None
    test_function: dict | None
    window: dict | None
    limit: dict
    mk_statistic: int = 0
    strictly_decreasing: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.values):
            raise ValueError("statistic values must be >= 0")
        self.mk_statistic = mann_kendall(self.values)
        self.strictly_decreasing = bool(np.all(np.diff(self.values) < 0))

    def to_dict(self) -> dict:
        return {
            "n": list(self.ns), "statistic": list(self.values), "se": list(self.ses), "seed": self.seed,
            "law": self.law, "test_function": self.test_function, "window": self.window, "limit": self.limit,
            "mann_kendall": self.mk_statistic, "strictly_decreasing": self.strictly_decreasing,
            **self.extra,
        }


def limit_descriptor(limit: Limit) -> dict:
    if isinstance(limit, FractionalParams):
        return {"kind": "fractional_kinetics", "beta": limit.beta, "sigma": limit.sigma, "d": limit.d}
    return {"kind": "brownian", "sigma": limit.sigma, "d": limit.d}


def one_time_ladder(env: Environment, labeling: ClusterLabeling | None, ns: Sequence[int], t: float,
                    theta: ScalingSequence, g, window: Window, limit: Limit, **kw) -> ConvergenceReport:
    vals = [l1_statistic_one_time(env, labeling, n, t, theta, g, window, limit, **kw) for n in ns]
    return ConvergenceReport(
        list(ns), [v.value for v in vals], [v.se for v in vals], env.seed,
        None if env.law is None else env.law.to_dict(),
        g.describe() if hasattr(g, "describe") else None,
        {"shape": window.shape, "K": window.K, "center": window.center}, limit_descriptor(limit),
        extra={"t": t, "theta": theta.to_dict()})


# --------------------------------------------------------------------------
# sigma estimation

@dataclass
class SigmaEstimate:
    sigma2: float
    se: float
    ci: tuple[float, float]
    n: int
    t_grid: list[float]
    msd: list[float]

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def _slope_through_origin(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(x, y) / np.dot(x, x))


def estimate_sigma(law: EnvironmentLaw, torus: Torus, t_grid: Sequence[float], n: int, replicas: int, seed: int,
                   n_envs: int = 1, mode: str | None = None, n_boot: int = 400) -> SigmaEstimate:
    """Fit ``MSD(t n**2) / n**2 = 2 d sigma**2 t`` over ``t_grid``.

    The confidence interval is a 95% bootstrap over environments (over walks
    when a single environment is used).
    """
    if law.tag in ("heavy_tail_conductance", "btm_site_weights"):
        raise ValueError("sub-diffusive law: use estimate_fk_sigma")
    if mode is not None and mode != law.speed_mode:
        from dataclasses import replace
        law = replace(law, speed_mode=mode)
    t_grid = np.asarray(t_grid, dtype=float)
    times = t_grid * DIFFUSIVE(n)
    msd, per_env, sq = _msd_samples(law, torus, times, replicas, seed, n_envs)
    d = torus.d
    y = msd / n**2
    s2 = _slope_through_origin(t_grid, y) / (2 * d)
    gen = rng.generator(seed, label="sigma-bootstrap")
    groups = per_env if n_envs >= 2 else sq
    boots = []
    for _ in range(n_boot):
        pick = gen.integers(0, groups.shape[0], groups.shape[0])
        boots.append(_slope_through_origin(t_grid, groups[pick].mean(axis=0) / n**2) / (2 * d))
    boots = np.array(boots)
    return SigmaEstimate(s2, float(boots.std(ddof=1)), (float(np.quantile(boots, 0.025)),
                                                        float(np.quantile(boots, 0.975))),
                         n, t_grid.tolist(), msd.tolist())


def _msd_samples(law, torus, times, replicas, seed, n_envs):
    """Squared displacements per walk and per-environment means, same streams as ``msd_curve``."""
    from .walk import walk_starts

    restrict = law.tag == "percolating_iid"
    per_env, sqs = [], []
    for e in range(n_envs):
        env = sample_environment(law, torus, rng.numba_seed(seed, e, label="msd-env"))
        starts = walk_starts(env, replicas, rng.generator(seed, e, label="msd-start"), restrict)
        disp = walk_displacements(env, starts, times, rng.numba_seed(seed, e, label="msd-walk"))
        sq = np.sum(disp**2, axis=2)
        sqs.append(sq)
        per_env.append(sq.mean(axis=0))
    sq = np.concatenate(sqs)
    return sq.mean(axis=0), np.array(per_env), sq


def estimate_fk_sigma(law: EnvironmentLaw, torus: Torus, t_grid: Sequence[float], n: int, replicas: int, seed: int,
                      n_envs: int = 1) -> tuple[float, list[float]]:
    """Effective sigma of a fractional-kinetics limit from
    ``MSD(t theta_n) / n**2 = 2 d sigma**(2/beta) t**beta / Gamma(1 + beta)``."""
    if law.beta is None:
        raise ValueError("law has no tail exponent")
    theta = ScalingSequence("subdiffusive", law.beta, torus.d)
    t_grid = np.asarray(t_grid, dtype=float)
    msd, _, _ = _msd_samples(law, torus, t_grid * theta(n), replicas, seed, n_envs)
    x = 2 * torus.d * t_grid**law.beta / math.gamma(1 + law.beta)
    c = _slope_through_origin(x, msd / n**2)
    return c ** (law.beta / 2), msd.tolist()


# --------------------------------------------------------------------------
# marginal QIP diagnostics

def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    a = np.sort(a)
    b = np.sort(b)
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def permutation_ks(a: np.ndarray, b: np.ndarray, n_perm: int, gen: np.random.Generator) -> tuple[float, float]:
    """Two-sample KS distance and its permutation p-value ``(1 + #{D* >= D}) / (1 + n_perm)``."""
    obs = ks_statistic(a, b)
    pooled = np.concatenate([a, b])
    hits = 0
    for _ in range(n_perm):
        perm = gen.permutation(pooled)
        if ks_statistic(perm[:a.size], perm[a.size:]) >= obs - 1e-12:
            hits += 1
    return obs, (1 + hits) / (1 + n_perm)


@dataclass
class QIPResult:
    distance: float
    p_value: float
    n: int
    t: float


def limit_marginal_sample(limit: Limit, t: float, replicas: int, seed: int) -> np.ndarray:
    if isinstance(limit, FractionalParams):
        return fk_marginal_sample(limit, t, replicas, seed)
    return brownian_marginal_sample(limit, t, replicas, seed)


def qip_marginal_test(env: Environment, labeling: ClusterLabeling | None, n: int, t: float,
                      theta: ScalingSequence, limit: Limit, replicas: int, seed: int, x0: int | None = None,
                      coordinate: int = 0, n_perm: int = 200) -> QIPResult:
    """KS distance between one coordinate of ``(X_{t theta_n} - x0) / n`` and the limit marginal."""
    tor = env.torus
    if x0 is None:
        cand = np.flatnonzero(labeling.in_giant) if labeling is not None else np.arange(tor.n_sites)
        x0 = int(cand[np.argmin(np.linalg.norm(tor.centered(cand), axis=1))])
    if labeling is not None and not labeling.in_giant[x0]:
        raise ValueError("start is not in the giant cluster")
    if env.oriented_rates()[x0].sum() == 0:
        raise ValueError("frozen start: every incident bond is closed")
    disp = walk_displacements(env, np.full(replicas, x0), [t * theta(n)], seed, label="qip")[:, 0, coordinate] / n
    ref = limit_marginal_sample(limit, t, replicas, rng.numba_seed(seed, label="qip-limit"))[:, coordinate]
    dist, p = permutation_ks(disp, ref, n_perm, rng.generator(seed, label="qip-perm"))
    return QIPResult(dist, p, n, t)


# --------------------------------------------------------------------------
# ergodic averages over translations

def ergodic_average(env: Environment, labeling: ClusterLabeling | None, h: Callable,
                    vectorized: bool = False) -> float:
    """``L**-d sum_z 1_{Omega_0}(tau_z omega) h(tau_z omega)``.

    With ``vectorized=True``, ``h(env)`` returns the whole field
    ``z -> h(tau_z omega)``; otherwise ``h`` is evaluated on each translate.
    """
    from .environment import translate_environment

    tor = env.torus
    mask = np.ones(tor.n_sites, bool) if labeling is None else labeling.in_giant
    if vectorized:
        field_ = np.asarray(h(env), dtype=float)
    else:
        coords = tor.coords(np.arange(tor.n_sites))
        field_ = np.array([h(translate_environment(env, c)) if mask[z] else 0.0 for z, c in enumerate(coords)])
    return float(np.sum(np.where(mask, field_, 0.0))) / tor.n_sites


def local_bond_average(env: Environment) -> float:
    """Mean weight of the 2d bonds at the origin."""
    return float(env.incident_weights()[0].mean())


def local_bond_average_field(env: Environment) -> np.ndarray:
    return env.incident_weights().mean(axis=1)
