"""The continuous-time walk in a fixed environment.

Kinetic Monte Carlo for sample paths and uniformization for the exact
semigroup ``P_t f = exp(tA) f`` on the torus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy import stats

from . import rng
from .environment import Environment, EnvironmentLaw, sample_environment
from .lattice import Torus
from .percolation import label_clusters


@dataclass(frozen=True)
class ScalingSequence:
    """Time scale theta_n: ``n**2`` (diffusive) or the trap-model scale.

    The sub-diffusive scale is ``n**(d/beta)`` for d >= 3 and
    ``n**(d/beta) * log(n)**(1 - 1/beta)`` for d = 2.
    """

    mode: Literal["diffusive", "subdiffusive"] = "diffusive"
    beta: float | None = None
    d: int | None = None

    def __post_init__(self):
        if self.mode == "subdiffusive":
            if self.beta is None or not 0 < self.beta < 1:
                raise ValueError("subdiffusive scaling needs beta in (0, 1)")
            if self.d is None or self.d < 2:
                raise ValueError("subdiffusive scaling is defined for d >= 2")
        elif self.mode != "diffusive":
            raise ValueError(f"unknown scaling mode {self.mode!r}")

    def __call__(self, n: float) -> float:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.mode == "diffusive":
            return float(n) ** 2
        base = float(n) ** (self.d / self.beta)
        if self.d == 2:
            if n == 1:
                return base  # log(1) = 0; the d = 2 formula is only meaningful for n >= 2
            return base * math.log(n) ** (1.0 - 1.0 / self.beta)
        return base

    def to_dict(self) -> dict:
        return {"mode": self.mode, "beta": self.beta, "d": self.d}


DIFFUSIVE = ScalingSequence()


def jump_rates(env: Environment, site: int) -> list[tuple[int, float]]:
    """Outgoing ``(neighbour, rate)`` pairs of a site, zero rates omitted.

    For L = 2 both directions of an axis reach the same neighbour; they are
    reported separately.
    """
    if not 0 <= site < env.torus.n_sites:
        raise IndexError(f"site {site} out of range")
    rates = env.oriented_rates()[site]
    nb = env.neighbor_table[site]
    return [(int(y), float(r)) for y, r in zip(nb, rates) if r > 0]


# --------------------------------------------------------------------------
# kinetic Monte Carlo

@njit(cache=True, nogil=True)
def _pick(rates_x, u):
    acc = 0.0
    k_last = 0
    for k in range(rates_x.shape[0]):
        if rates_x[k] > 0:
            acc += rates_x[k]
            k_last = k
            if u < acc:
                return k
    return k_last


@njit(cache=True, nogil=True)
def _path_kernel(rates, nb, x0, T, seed):
    np.random.seed(seed)
    cap = 64
    times = np.empty(cap)
    sites = np.empty(cap, dtype=np.int64)
    n = 0
    x = x0
    t = 0.0
    while True:
        total = rates[x].sum()
        if total <= 0.0:
            break
        t += np.random.exponential(1.0 / total)
        if t > T:
            break
        k = _pick(rates[x], np.random.random() * total)
        x = nb[x, k]
        if n == cap:
            cap *= 2
            nt = np.empty(cap)
            ns = np.empty(cap, dtype=np.int64)
            nt[:n] = times[:n]
            ns[:n] = sites[:n]
            times, sites = nt, ns
        times[n] = t
        sites[n] = x
        n += 1
    return times[:n].copy(), sites[:n].copy()


@njit(cache=True, nogil=True)
def _displacement_kernel(rates, nb, starts, seeds, qtimes, d):
    """Unwrapped displacement of independent walks at sorted query times."""
    R = starts.shape[0]
    Q = qtimes.shape[0]
    out = np.zeros((R, Q, d))
    disp = np.zeros(d)
    for r in range(R):
        np.random.seed(seeds[r])
        x = starts[r]
        disp[:] = 0.0
        t = 0.0
        q = 0
        while q < Q:
            total = rates[x].sum()
            if total <= 0.0:
                break
            t_next = t + np.random.exponential(1.0 / total)
            while q < Q and qtimes[q] < t_next:
                out[r, q, :] = disp
                q += 1
            if q == Q:
                break
            t = t_next
            k = _pick(rates[x], np.random.random() * total)
            x = nb[x, k]
            if k % 2 == 0:
                disp[k // 2] += 1.0
            else:
                disp[k // 2] -= 1.0
        while q < Q:
            out[r, q, :] = disp
            q += 1
    return out


@dataclass
class WalkPath:
    """Piecewise-constant trajectory; times are in unrescaled units."""

    torus: Torus
    start: int
    jump_times: np.ndarray
    jump_sites: np.ndarray
    horizon: float

    def position(self, t) -> np.ndarray | int:
        """Site occupied at time(s) t (right-continuous)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon):
            raise ValueError(f"time outside [0, {self.horizon}]")
        i = np.searchsorted(self.jump_times, t_arr, side="right")
        sites = np.concatenate([[self.start], self.jump_sites])
        out = sites[i]
        return int(out) if out.ndim == 0 else out

    def to_rows(self) -> list[tuple]:
        """Rows ``(t, x_1, ..., x_d)`` of centered coordinates, starting at t = 0."""
        sites = np.concatenate([[self.start], self.jump_sites])
        times = np.concatenate([[0.0], self.jump_times])
        coords = self.torus.centered(sites)
        return [(float(t), *map(int, c)) for t, c in zip(times, coords)]


def simulate_walk(env: Environment, x0: int, T: float, seed: int) -> WalkPath:
    """Exact event-by-event path on [0, T]; a site with no open bond is absorbing."""
    if not 0 <= x0 < env.torus.n_sites:
        raise IndexError(f"start {x0} out of range")
    if not T > 0:
        raise ValueError("horizon must be > 0")
    times, sites = _path_kernel(env.oriented_rates(), env.neighbor_table, int(x0), float(T),
                                rng.numba_seed(seed, label="walk-path"))
    return WalkPath(env.torus, int(x0), times, sites, float(T))


def walk_displacements(env: Environment, starts, times, seed: int, label: str = "walk") -> np.ndarray:
    """Unwrapped displacements, shape ``(len(starts), len(times), d)``.

    Walk r uses the stream ``(seed, r, label)``.
    """
    starts = np.asarray(starts, dtype=np.int64)
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    seeds = np.array([rng.numba_seed(seed, r, label=label) for r in range(starts.size)], dtype=np.int64)
    out = _displacement_kernel(env.oriented_rates(), env.neighbor_table, starts, seeds, times[order], env.torus.d)
    res = np.empty_like(out)
    res[:, order, :] = out
    return res


def rescale_path(path: WalkPath, n: int, theta: ScalingSequence) -> Callable[[float], np.ndarray]:
    """The sampler ``t -> X_{t theta_n} / n`` (centered coordinates)."""
    scale = theta(n)

    def sample(t):
        tt = np.asarray(t, dtype=float) * scale
        if np.any(tt > path.horizon * (1 + 1e-12)):
            raise ValueError(f"t * theta_n exceeds the path horizon {path.horizon}")
        return path.torus.centered(path.position(np.minimum(tt, path.horizon))) / n

    return sample


# --------------------------------------------------------------------------
# exact semigroup

def generator_matrix(env: Environment) -> sp.csr_matrix:
    """Sparse generator ``A[x, y]`` (rows sum to zero)."""
    N = env.torus.n_sites
    rates = env.oriented_rates()
    nb = env.neighbor_table
    rows = np.repeat(np.arange(N), nb.shape[1])
    Q = sp.csr_matrix((rates.ravel(), (rows, nb.ravel())), shape=(N, N))
    Q.sum_duplicates()
    return (Q - sp.diags(rates.sum(axis=1))).tocsr()


class Uniformizer:
    """Evaluates ``exp(tA) f`` as a Poisson mixture of powers of ``I + A/Lambda``."""

    def __init__(self, A: sp.spmatrix):
        self.A = sp.csr_matrix(A)
        self.rate = float(np.max(-self.A.diagonal())) if self.A.shape[0] else 0.0
        if self.rate > 0:
            self.P = (sp.identity(self.A.shape[0], format="csr") + self.A / self.rate).tocsr()

    @classmethod
    def from_env(cls, env: Environment) -> "Uniformizer":
        return cls(generator_matrix(env))

    def apply(self, f, t: float, tol: float = 1e-12) -> np.ndarray:
        if not tol > 0:
            raise ValueError("tolerance must be > 0")
        if t < 0:
            raise ValueError("time must be >= 0")
        f = np.asarray(f, dtype=float)
        if t == 0 or self.rate == 0:
            return f.copy()
        sup = float(np.max(np.abs(f))) if f.size else 0.0
        if sup == 0:
            return np.zeros_like(f)
        mu = self.rate * t
        eps = tol / (2.0 * sup)
        lo = int(stats.poisson.ppf(eps / 2, mu))
        hi = int(stats.poisson.isf(eps / 2, mu)) + 1
        ks = np.arange(lo, hi + 1)
        w = stats.poisson.pmf(ks, mu)
        w /= w.sum()
        v = f.copy()
        for _ in range(lo):
            v = self.P @ v
        out = w[0] * v
        for wk in w[1:]:
            v = self.P @ v
            out += wk * v
        return out


def exact_semigroup(env: Environment, t: float, f, tol: float = 1e-12) -> np.ndarray:
    """``P_t f`` with sup-norm error at most ``tol``; f may have extra columns."""
    return Uniformizer.from_env(env).apply(f, t, tol)


# --------------------------------------------------------------------------
# mean squared displacement

def walk_starts(env: Environment, count: int, gen: np.random.Generator, restrict_to_giant: bool) -> np.ndarray:
    """Uniform starting sites inside Omega_0, never at an absorbing site."""
    movable = env.oriented_rates().sum(axis=1) > 0
    if restrict_to_giant:
        movable &= label_clusters(env).in_giant
    pool = np.flatnonzero(movable)
    if pool.size == 0:
        raise ValueError("every admissible starting site is frozen")
    return gen.choice(pool, size=count)


@dataclass
class MSDResult:
    times: np.ndarray
    msd: np.ndarray
    se: np.ndarray
    per_env: np.ndarray  # shape (n_envs, len(times))


def msd_curve(law: EnvironmentLaw, torus: Torus, times, replicas: int, seed: int, n_envs: int = 1,
              environments: list[Environment] | None = None) -> MSDResult:
    """Mean of |X_t - X_0|^2 over environments and walks started uniformly in Omega_0."""
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    restrict = law.tag == "percolating_iid"
    if environments is None:
        environments = [sample_environment(law, torus, rng.numba_seed(seed, e, label="msd-env"))
                        for e in range(n_envs)]
    all_sq = []
    per_env = []
    for e, env in enumerate(environments):
        starts = walk_starts(env, replicas, rng.generator(seed, e, label="msd-start"), restrict)
        disp = walk_displacements(env, starts, times, rng.numba_seed(seed, e, label="msd-walk"))
        sq = np.sum(disp**2, axis=2)
        all_sq.append(sq)
        per_env.append(sq.mean(axis=0))
    per_env = np.array(per_env)
    sq = np.concatenate(all_sq)
    msd = sq.mean(axis=0)
    if len(environments) >= 2:
        se = per_env.std(axis=0, ddof=1) / np.sqrt(len(environments))
    else:
        se = sq.std(axis=0, ddof=1) / np.sqrt(sq.shape[0])
    return MSDResult(times, msd, se, per_env)


def mean_squared_displacement(law: EnvironmentLaw, mode: str | None, t: float, replicas: int, seed: int,
                              torus: Torus, n_envs: int = 1) -> tuple[float, float]:
    """MSD at time t and its standard error; ``mode`` overrides the law's speed mode."""
    if mode is not None and mode != law.speed_mode:
        from dataclasses import replace
        law = replace(law, speed_mode=mode)
    if t == 0:
        return 0.0, 0.0
    res = msd_curve(law, torus, [t], replicas, seed, n_envs)
    return float(res.msd[0]), float(res.se[0])
