"""Exclusion-type particle systems on a weighted torus.

SSEP: every bond with positive weight carries a Poisson clock of rate
``omega_xy``; at a ring the occupations of its endpoints are exchanged.
Because the exchange is unconditional, event times and bond choices never
depend on the configuration, so two runs with the same seed share one
graphical construction (this is what the monotone coupling uses).

Interacting trap model: a particle moves x -> y at rate
``eta(x) alpha_x**(a-1) alpha_y**a (1 - eta(y)/alpha_y)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Literal

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numba import njit

from . import rng
from .environment import Environment
from .lattice import Torus
from .limits import DiffusionParams, FractionalParams, Profile, solve_fractional_heat, solve_heat
from .percolation import ClusterLabeling, cluster_density, full_labeling, label_clusters
from .walk import DIFFUSIVE, ScalingSequence, Uniformizer, generator_matrix

Mode = Literal["ssep", "btm"]
DUALITY_MAX_SITES = 12


@dataclass
class ParticleConfiguration:
    """Occupation numbers over torus sites; sites outside the cluster have capacity 0."""

    occupancy: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=np.int64)
        self.capacity = np.asarray(self.capacity, dtype=np.int64)
        if self.occupancy.shape != self.capacity.shape:
            raise ValueError("occupancy and capacity shapes differ")
        if np.any(self.occupancy < 0) or np.any(self.occupancy > self.capacity):
            raise ValueError("occupancy must lie in [0, capacity]")

    @property
    def total(self) -> int:
        return int(self.occupancy.sum())

    def copy(self) -> "ParticleConfiguration":
        return ParticleConfiguration(self.occupancy.copy(), self.capacity.copy())

    def sparse(self) -> list[tuple[int, int]]:
        """``(site, occupancy)`` for occupied sites."""
        idx = np.flatnonzero(self.occupancy)
        return [(int(x), int(self.occupancy[x])) for x in idx]


@dataclass(frozen=True)
class FieldSample:
    t: float
    kind: Literal["density", "frequency"]
    test_function: str
    value: float


def capacities(env: Environment, labeling: ClusterLabeling | None, mode: Mode) -> np.ndarray:
    if mode == "ssep":
        mask = np.ones(env.torus.n_sites, bool) if labeling is None else labeling.in_giant
        return mask.astype(np.int64)
    if mode == "btm":
        if not env.is_btm:
            raise ValueError("btm mode needs trap weights alpha")
        cap = np.rint(env.alpha).astype(np.int64)
        if not np.allclose(cap, env.alpha):
            raise ValueError("btm capacities need integer trap weights")
        return cap
    raise ValueError(f"unknown particle mode {mode!r}")


def sample_initial(profile: Callable, env: Environment, labeling: ClusterLabeling | None, n: int, mode: Mode,
                   seed: int) -> ParticleConfiguration:
    """Product initial law: Bernoulli(gamma(x/n)) (SSEP) or Binomial(alpha_x, gamma(x/n)) (trap model)."""
    tor = env.torus
    cap = capacities(env, labeling, mode)
    gam = np.asarray(profile(tor.all_centered() / n), dtype=float)
    if np.any(gam < -1e-12) or np.any(gam > 1 + 1e-12):
        raise ValueError("profile values must lie in [0, 1]")
    gam = np.clip(gam, 0.0, 1.0)
    gen = rng.generator(seed, label=f"initial-{mode}")
    occ = gen.binomial(cap, gam)
    return ParticleConfiguration(occ, cap)


# --------------------------------------------------------------------------
# SSEP

@njit(cache=True, nogil=True)
def _ssep_kernel(eta, ends, cum, qtimes, seed, log_cap):
    np.random.seed(seed)
    N = eta.shape[0]
    Q = qtimes.shape[0]
    out = np.empty((Q, N), dtype=np.int8)
    log_t = np.empty(log_cap)
    log_b = np.empty(log_cap, dtype=np.int64)
    total = cum[-1]
    B = cum.shape[0]
    n_events = 0
    t = 0.0
    q = 0
    while q < Q:
        if total <= 0.0:
            t_next = np.inf
        else:
            t_next = t + np.random.exponential(1.0 / total)
        while q < Q and qtimes[q] < t_next:
            out[q, :] = eta
            q += 1
        if q == Q:
            break
        t = t_next
        b = np.searchsorted(cum, np.random.random() * total, side="right")
        if b >= B:
            b = B - 1
        x = ends[b, 0]
        y = ends[b, 1]
        tmp = eta[x]
        eta[x] = eta[y]
        eta[y] = tmp
        if n_events < log_cap:
            log_t[n_events] = t
            log_b[n_events] = b
        n_events += 1
    m = min(n_events, log_cap)
    return out, n_events, log_t[:m].copy(), log_b[:m].copy()


@dataclass
class SSEPRun:
    times: np.ndarray
    snapshots: np.ndarray  # (len(times), n_sites) occupations
    n_events: int
    bonds: np.ndarray  # (B, 2) endpoints of the active bonds
    log_times: np.ndarray
    log_bonds: np.ndarray  # indices into ``bonds``

    def configuration(self, i: int, capacity: np.ndarray) -> ParticleConfiguration:
        return ParticleConfiguration(self.snapshots[i].astype(np.int64), capacity)


def active_bonds(env: Environment, labeling: ClusterLabeling | None) -> tuple[np.ndarray, np.ndarray]:
    """Open bonds with both ends in the cluster, and their weights."""
    ends = env.torus.bonds()
    keep = env.bond_weights > 0
    if labeling is not None:
        keep &= labeling.in_giant[ends[:, 0]] & labeling.in_giant[ends[:, 1]]
    return np.ascontiguousarray(ends[keep]), env.bond_weights[keep]


def simulate_ssep(env: Environment, labeling: ClusterLabeling | None, config0: ParticleConfiguration, times,
                  seed: int, log_cap: int = 0) -> SSEPRun:
    """Exact SSEP realization; returns occupations at the sorted query ``times``.

    ``log_cap`` > 0 keeps the first ``log_cap`` events ``(time, bond)``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("time must be >= 0")
    if np.any(np.diff(times) < 0):
        raise ValueError("query times must be sorted")
    if np.any(config0.occupancy > 1):
        raise ValueError("SSEP configurations are binary")
    if labeling is not None and np.any(config0.occupancy[~labeling.in_giant] > 0):
        raise ValueError("initial particles must sit on the cluster")
    ends, w = active_bonds(env, labeling)
    cum = np.cumsum(w) if w.size else np.zeros(1)
    if w.size == 0:
        ends = np.zeros((1, 2), dtype=np.int64)
    eta = config0.occupancy.astype(np.int8)
    snaps, n_ev, lt, lb = _ssep_kernel(eta, ends, cum, times, rng.numba_seed(seed, label="ssep"), int(log_cap))
    return SSEPRun(times, snaps, int(n_ev), ends, lt, lb)


# --------------------------------------------------------------------------
# interacting trap model

@njit(cache=True, nogil=True)
def _fen_add(tree, i, delta):
    n = tree.shape[0] - 1
    i += 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def _fen_build(tree, vals):
    n = vals.shape[0]
    tree[:] = 0.0
    for i in range(n):
        tree[i + 1] += vals[i]
        j = (i + 1) + ((i + 1) & (-(i + 1)))
        if j <= n:
            tree[j] += tree[i + 1]


@njit(cache=True, nogil=True)
def _fen_find(tree, u, top):
    # smallest index i with prefix(i) > u
    pos = 0
    step = top
    while step > 0:
        nxt = pos + step
        if nxt < tree.shape[0] and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        step >>= 1
    return pos


@njit(cache=True, nogil=True)
def _site_rate(x, eta, alpha, a, nb):
    if eta[x] == 0:
        return 0.0
    acc = 0.0
    for k in range(nb.shape[1]):
        y = nb[x, k]
        acc += alpha[y] ** (a - 1.0) * (alpha[y] - eta[y])
    return eta[x] * alpha[x] ** (a - 1.0) * acc


@njit(cache=True, nogil=True)
def _btm_kernel(eta, alpha, a, nb, qtimes, seed):
    np.random.seed(seed)
    N = eta.shape[0]
    Q = qtimes.shape[0]
    out = np.empty((Q, N), dtype=np.int64)
    rates = np.empty(N)
    for x in range(N):
        rates[x] = _site_rate(x, eta, alpha, a, nb)
    tree = np.zeros(N + 1)
    _fen_build(tree, rates)
    top = 1
    while top * 2 <= N:
        top *= 2
    total = rates.sum()
    weights = np.empty(nb.shape[1])
    touched = np.empty(2 + 2 * nb.shape[1], dtype=np.int64)
    n_events = 0
    t = 0.0
    q = 0
    while q < Q:
        if total <= 1e-300:
            t_next = np.inf
        else:
            t_next = t + np.random.exponential(1.0 / total)
        while q < Q and qtimes[q] < t_next:
            out[q, :] = eta
            q += 1
        if q == Q:
            break
        t = t_next
        x = _fen_find(tree, np.random.random() * total, top)
        if x >= N:
            x = N - 1
        while rates[x] <= 0.0:  # guard against round-off at the tree boundaries
            x = (x + N - 1) % N
        wsum = 0.0
        for k in range(nb.shape[1]):
            y = nb[x, k]
            weights[k] = alpha[y] ** (a - 1.0) * (alpha[y] - eta[y])
            wsum += weights[k]
        u = np.random.random() * wsum
        kk = nb.shape[1] - 1
        acc = 0.0
        for k in range(nb.shape[1]):
            acc += weights[k]
            if u < acc and weights[k] > 0:
                kk = k
                break
        while weights[kk] <= 0.0:
            kk -= 1
        y = nb[x, kk]
        eta[x] -= 1
        eta[y] += 1
        m = 0
        touched[m] = x
        m += 1
        touched[m] = y
        m += 1
        for k in range(nb.shape[1]):
            touched[m] = nb[x, k]
            m += 1
            touched[m] = nb[y, k]
            m += 1
        for i in range(m):
            z = touched[i]
            dup = False
            for j in range(i):
                if touched[j] == z:
                    dup = True
                    break
            if dup:
                continue
            r = _site_rate(z, eta, alpha, a, nb)
            _fen_add(tree, z, r - rates[z])
            total += r - rates[z]
            rates[z] = r
        n_events += 1
        if n_events % 65536 == 0:
            _fen_build(tree, rates)
            total = rates.sum()
    return out, n_events


@dataclass
class BTMRun:
    times: np.ndarray
    snapshots: np.ndarray
    n_events: int


def simulate_interacting_btm(env: Environment, config0: ParticleConfiguration, times, seed: int) -> BTMRun:
    """Event-driven interacting trap model; rates are updated on the sites a move touches."""
    if not env.is_btm:
        raise ValueError("interacting trap model needs trap weights alpha")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("time must be >= 0")
    if np.any(np.diff(times) < 0):
        raise ValueError("query times must be sorted")
    cap = capacities(env, None, "btm")
    if np.any(config0.occupancy > cap):
        raise ValueError("occupancy exceeds alpha")
    eta = config0.occupancy.astype(np.int64).copy()
    snaps, n_ev = _btm_kernel(eta, env.alpha.astype(float), float(env.a), env.neighbor_table, times,
                              rng.numba_seed(seed, label="btm"))
    return BTMRun(times, snaps, int(n_ev))


# --------------------------------------------------------------------------
# fields

def density_field(config: ParticleConfiguration | np.ndarray, torus: Torus, n: int, f: Callable,
                  alpha: np.ndarray | None = None) -> float:
    """``n**-d sum_x eta(x) f(x/n)``; with ``alpha`` the frequency field ``eta(x)/alpha_x``."""
    occ = config.occupancy if isinstance(config, ParticleConfiguration) else np.asarray(config)
    idx = np.flatnonzero(occ)
    if idx.size == 0:
        return 0.0
    w = occ[idx].astype(float)
    if alpha is not None:
        w = w / alpha[idx]
    vals = np.asarray(f(torus.centered(idx) / n), dtype=float)
    return float(np.dot(w, vals)) / n**torus.d


def _cluster_values(torus: Torus, labeling: ClusterLabeling | None, n: int, f: Callable) -> np.ndarray:
    vals = np.asarray(f(torus.all_centered() / n), dtype=float)
    if labeling is not None:
        vals = np.where(labeling.in_giant, vals, 0.0)
    return vals


# --------------------------------------------------------------------------
# duality

def _graph_generator(n_sites: int, edges: np.ndarray, weights: np.ndarray) -> sp.csr_matrix:
    A = sp.coo_matrix((np.concatenate([weights, weights]),
                       (np.concatenate([edges[:, 0], edges[:, 1]]), np.concatenate([edges[:, 1], edges[:, 0]]))),
                      shape=(n_sites, n_sites)).tocsr()
    A.sum_duplicates()
    return (A - sp.diags(np.asarray(A.sum(axis=1)).ravel())).tocsr()


def many_particle_expectations(n_sites: int, edges: np.ndarray, weights: np.ndarray, t: float) -> np.ndarray:
    """``E_{eta0}[eta_t(x)]`` for every ``eta0`` (bit mask) and site, by dense exponentials per particle number."""
    out = np.zeros((1 << n_sites, n_sites))
    index = np.zeros(1 << n_sites, dtype=np.int64)
    for k in range(n_sites + 1):
        states = np.array([sum(1 << i for i in c) for c in combinations(range(n_sites), k)], dtype=np.int64)
        index[states] = np.arange(states.size)
        m = states.size
        Q = np.zeros((m, m))
        rows = np.arange(m)
        for (x, y), w in zip(edges, weights):
            move = ((states >> x) & 1) != ((states >> y) & 1)
            j = index[states[move] ^ ((1 << x) | (1 << y))]
            np.add.at(Q, (rows[move], j), w)
            Q[rows[move], rows[move]] -= w
        occ = ((states[:, None] >> np.arange(n_sites)[None, :]) & 1).astype(float)
        out[states] = sla.expm(t * Q) @ occ
    return out


@dataclass
class DualityResult:
    discrepancy: float
    t: float
    n_sites: int


def duality_check_graph(n_sites: int, edges, weights, t: float, tol: float = 1e-13) -> DualityResult:
    """``max_{x, eta0} |E_{eta0}[eta_t(x)] - E_x[eta0(X_t)]|`` on a weighted graph."""
    if n_sites > DUALITY_MAX_SITES:
        raise ValueError(f"instance too large: {n_sites} sites (max {DUALITY_MAX_SITES})")
    if t < 0:
        raise ValueError("time must be >= 0")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float)
    many = many_particle_expectations(n_sites, edges, weights, t)
    configs = ((np.arange(1 << n_sites)[None, :] >> np.arange(n_sites)[:, None]) & 1).astype(float)
    one = Uniformizer(_graph_generator(n_sites, edges, weights)).apply(configs, t, tol)
    return DualityResult(float(np.max(np.abs(many - one.T))), t, n_sites)


def duality_check(env: Environment, t: float, tol: float = 1e-13) -> DualityResult:
    """Duality check on a small environment; the dual walk is the variable-speed walk on the same bonds."""
    if env.speed_mode != "variable":
        raise ValueError("SSEP duality pairs with the variable-speed walk")
    if env.torus.n_sites > DUALITY_MAX_SITES:
        raise ValueError(f"instance too large: {env.torus.n_sites} sites (max {DUALITY_MAX_SITES})")
    ends = env.torus.bonds()
    keep = env.bond_weights > 0
    return duality_check_graph(env.torus.n_sites, ends[keep], env.bond_weights[keep], t, tol)


def random_conductance_graph(n_sites: int, edge_prob: float, gen: np.random.Generator,
                             low: float = 0.1, high: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.array([(x, y) for x in range(n_sites) for y in range(x + 1, n_sites)], dtype=np.int64)
    keep = gen.random(len(pairs)) < edge_prob
    edges = pairs[keep]
    return edges, gen.uniform(low, high, len(edges))


# --------------------------------------------------------------------------
# variance bound and tightness modulus

@dataclass
class VarianceCheck:
    variance: float
    se: float
    bound: float
    mean: float
    replicas: int

    @property
    def ok(self) -> bool:
        return self.variance <= self.bound + 3 * self.se


def variance_bound_check(env: Environment, labeling: ClusterLabeling | None, n: int, t: float, f: Callable,
                         replicas: int, seed: int, profile: Callable | None = None,
                         theta: ScalingSequence = DIFFUSIVE, tol: float = 1e-12) -> VarianceCheck:
    """Second moment of ``Y = X_t(f) - X_0(P_t f)`` against ``n**-d * n**-d sum_{x in C} f(x/n)**2``.

    ``E[Y] = 0`` by duality, so the estimator is the mean of ``Y**2`` and its
    standard error ``std(Y**2)/sqrt(R)``. The initial law is product
    Bernoulli(profile(x/n)) (default 1/2).
    """
    if replicas < 30:
        raise ValueError("need at least 30 replicas")
    tor = env.torus
    fv = _cluster_values(tor, labeling, n, f)
    bound = float(np.sum(fv**2)) / n ** (2 * tor.d)
    if bound == 0:
        return VarianceCheck(0.0, 0.0, 0.0, 0.0, replicas)
    T = t * theta(n)
    pf = Uniformizer(_walk_generator(env)).apply(fv, T, tol)
    profile = profile or (lambda x: np.full(len(x), 0.5))
    ys = np.empty(replicas)
    for r in range(replicas):
        c0 = sample_initial(profile, env, labeling, n, "ssep", rng.numba_seed(seed, r, label="var-init"))
        run = simulate_ssep(env, labeling, c0, [T], rng.numba_seed(seed, r, label="var-run"))
        ys[r] = (np.dot(run.snapshots[0], fv) - np.dot(c0.occupancy, pf)) / n**tor.d
    sq = ys**2
    return VarianceCheck(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(replicas)), bound, float(ys.mean()),
                         replicas)


def _walk_generator(env: Environment) -> sp.csr_matrix:
    """Generator of the walk dual to SSEP: jumps across each bond at rate omega_xy."""
    if env.speed_mode == "variable" and not env.is_btm:
        return generator_matrix(env)
    ends = env.torus.bonds()
    keep = env.bond_weights > 0
    return _graph_generator(env.torus.n_sites, ends[keep], env.bond_weights[keep])


def cluster_norm_sq(values: np.ndarray, n: int, d: int) -> float:
    """``||g||_{2,n}**2 = n**-d sum_{x in C} g(x/n)**2`` for values already zeroed off the cluster."""
    return float(np.sum(values**2)) / n**d


@dataclass
class TightnessModulus:
    h: np.ndarray
    psi: np.ndarray
    energy: np.ndarray  # ||f||^2 - <f, P_h f>

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.psi) >= -1e-12))


def tightness_modulus(env: Environment, labeling: ClusterLabeling | None, n: int, hs, f: Callable,
                      C1: float = 1.0, C2: float = 1.0, theta: ScalingSequence = DIFFUSIVE,
                      tol: float = 1e-13) -> TightnessModulus:
    """``psi_n(h) = C1 sqrt(||f||^2 - ||P_{h/2} f||^2) + C2 n**(-d/2) ||f||``, with
    ``||P_{h/2} f||^2 = n**-d sum f P_h f`` (symmetry of the semigroup)."""
    hs = np.atleast_1d(np.asarray(hs, dtype=float))
    if np.any(hs < 0):
        raise ValueError("h must be >= 0")
    tor = env.torus
    fv = _cluster_values(tor, labeling, n, f)
    norm2 = cluster_norm_sq(fv, n, tor.d)
    U = Uniformizer(_walk_generator(env))
    energy = np.array([norm2 - float(np.dot(fv, U.apply(fv, h * theta(n), tol))) / n**tor.d for h in hs])
    energy = np.where(hs == 0, 0.0, np.maximum(energy, 0.0))
    psi = C1 * np.sqrt(energy) + C2 * n ** (-tor.d / 2) * math.sqrt(norm2)
    return TightnessModulus(hs, psi, energy)


def tightness_limit(limit: DiffusionParams, f: Callable, q: float, h: float, period: float,
                    M: int = 256) -> float:
    """``q * int f (f - S_h f) dx`` on the torus of the given period (f supported inside it)."""
    prof = Profile.from_function(f, period, M, limit.d)
    sf = solve_heat(limit, prof, h)
    return q * float(np.sum(prof.values * (prof.values - sf.values))) * prof.spacing**limit.d


# --------------------------------------------------------------------------
# hydrodynamic experiments

@dataclass
class HydroSpec:
    """One hydrodynamic experiment.

    The torus side is ``torus_factor * n`` so the macroscopic torus has period
    ``torus_factor`` for every n; ``profile`` must be periodic with that period.
    """

    mode: Mode
    law: "EnvironmentLaw"
    d: int
    ns: list[int]
    ts: list[float]
    profile: Callable
    fs: dict[str, Callable]
    seeds: list[int]
    limit: DiffusionParams | FractionalParams
    torus_factor: int = 4
    theta: ScalingSequence = DIFFUSIVE
    grid: int = 256


def pde_reference(spec: HydroSpec, t: float, f: Callable) -> float:
    """``int f rho_t`` over the macroscopic torus, rho solving the limit equation from the profile."""
    period = float(spec.torus_factor)
    prof = Profile.from_function(spec.profile, period, spec.grid, spec.d)
    if isinstance(spec.limit, FractionalParams):
        rho = solve_fractional_heat(spec.limit, prof, t)
    else:
        rho = solve_heat(spec.limit, prof, t)
    fvals = Profile.from_function(f, period, spec.grid, spec.d).values
    return float(np.sum(fvals * rho.values)) * prof.spacing**spec.d


def hydro_rows(spec: HydroSpec, n: int, seed: int) -> list[dict]:
    """Field values at every (t, f) for one environment seed and one n."""
    from .environment import sample_environment

    tor = Torus(spec.d, spec.torus_factor * n)
    env = sample_environment(spec.law, tor, rng.numba_seed(seed, n, label="hydro-env"))
    if spec.mode == "ssep":
        labeling = label_clusters(env) if spec.law.tag == "percolating_iid" else full_labeling(tor)
        q = cluster_density(labeling)
    else:
        labeling, q = None, 1.0
    c0 = sample_initial(spec.profile, env, labeling, n, spec.mode, rng.numba_seed(seed, n, label="hydro-init"))
    qtimes = np.array(sorted(spec.ts)) * spec.theta(n)
    if spec.mode == "ssep":
        snaps = simulate_ssep(env, labeling, c0, qtimes, rng.numba_seed(seed, n, label="hydro-run")).snapshots
        alpha = None
    else:
        snaps = simulate_interacting_btm(env, c0, qtimes, rng.numba_seed(seed, n, label="hydro-run")).snapshots
        alpha = env.alpha
    rows = []
    for i, t in enumerate(sorted(spec.ts)):
        for name, f in spec.fs.items():
            val = density_field(snaps[i], tor, n, f, alpha)
            ref = q * pde_reference(spec, t, f)
            rows.append({"n": n, "seed": seed, "t": t, "f": name, "field": val, "reference": ref,
                         "error": abs(val - ref), "q": q})
    return rows


def hydro_experiment(spec: HydroSpec, workers: int = 1):
    """Run the particle system over the n-ladder and seeds; returns an :class:`ExperimentReport`.

    (n, seed) work items run on a thread pool; rows are assembled in ladder
    and seed order whatever the scheduling.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .convergence import mann_kendall
    from .report import ExperimentReport

    items = [(n, s) for n in spec.ns for s in spec.seeds]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        chunks = list(pool.map(lambda item: hydro_rows(spec, *item), items))
    rows = [r for chunk in chunks for r in chunk]
    summary = []
    verdicts = {}
    for t in sorted(spec.ts):
        for name in spec.fs:
            meds = []
            for n in spec.ns:
                errs = np.array([r["error"] for r in rows if r["n"] == n and r["t"] == t and r["f"] == name])
                med = float(np.median(errs))
                se = float(1.2533 * errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else 0.0
                meds.append(med)
                summary.append({"n": n, "t": t, "f": name, "median_error": med, "se": se})
            verdicts[f"t={t},f={name}"] = {
                "strictly_decreasing": bool(np.all(np.diff(meds) < 0)),
                "mann_kendall": mann_kendall(meds),
            }
    return ExperimentReport(
        kind="ssep-hydro" if spec.mode == "ssep" else "btm-hydro",
        tables={"fields": rows, "summary": summary},
        summary={"verdicts": verdicts},
    )
