"""Acceptance suite: one pass/fail line per criterion at the contract tolerances.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
Every criterion function returns ``(ok, detail)``; nothing is loosened here.
"""
from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla
from scipy import special

from rwsim import rng
from rwsim.cli import main as cli_main
from rwsim.config import PRESETS
from rwsim.convergence import estimate_sigma, l1_statistic_full_cluster, l1_statistic_one_time
from rwsim.environment import Environment, EnvironmentLaw, ValueDist, sample_environment
from rwsim.ips import (HydroSpec, duality_check_graph, hydro_experiment, random_conductance_graph,
                       tightness_limit, tightness_modulus, variance_bound_check)
from rwsim.lattice import Torus, Window
from rwsim.limits import (DiffusionParams, FractionalParams, Profile, caputo_derivative, fk_marginal_sample,
                          gaussian_density, grid_points, mittag_leffler, solve_fractional_heat, solve_heat)
from rwsim.percolation import cluster_density, full_labeling, label_clusters
from rwsim.testfunctions import Bump, CosineProfile
from rwsim.walk import DIFFUSIVE, exact_semigroup, generator_matrix

BUMP = Bump(1.0)


# --------------------------------------------------------------------------
# criteria

def criterion_1():
    """Duality on 50 random conductance graphs with at most 12 sites."""
    t0 = time.perf_counter()
    gen = rng.generator(2024, label="acceptance-duality")
    worst = 0.0
    for _ in range(50):
        size = int(gen.integers(2, 13))
        edges, weights = random_conductance_graph(size, 0.4, gen)
        for t in (0.1, 1.0, 10.0):
            worst = max(worst, duality_check_graph(size, edges, weights, t).discrepancy)
    secs = time.perf_counter() - t0
    return worst <= 1e-9 and secs <= 60, f"max discrepancy {worst:.2e} (<= 1e-9), {secs:.1f}s (<= 60s)"


def criterion_2():
    """Uniformization vs dense expm and reversibility on instances of at most 64 states."""
    law = EnvironmentLaw.elliptic_iid(ValueDist("uniform", (0.2, 2.0)))
    envs = []
    for k, shape in enumerate([(1, 64), (2, 8), (3, 4), (2, 5)]):
        tor = Torus(*shape)
        base = sample_environment(law, tor, rng.numba_seed(7, k, label="acceptance-c2"))
        envs.append(base)
        envs.append(Environment.from_conductances(tor, base.bond_weights, "constant"))
        alpha = rng.generator(7, k, label="acceptance-c2-alpha").pareto(0.6, tor.n_sites) + 1.0
        envs.append(Environment.from_trap_weights(tor, alpha, 0.3))
    sup_err, sym_err = 0.0, 0.0
    for env in envs:
        N = env.torus.n_sites
        A = generator_matrix(env).toarray()
        f = np.random.default_rng(N).normal(size=(N, 3))
        for t in (0.1, 1.0, 10.0):
            dense = sla.expm(t * A)
            sup_err = max(sup_err, float(np.max(np.abs(exact_semigroup(env, t, f, 1e-12) - dense @ f))))
            P = exact_semigroup(env, t, np.eye(N), 1e-12)
            W = env.site_weights[:, None] * P
            sym_err = max(sym_err, float(np.max(np.abs(W - W.T))))
    ok = sup_err <= 1e-10 and sym_err <= 1e-10
    return ok, f"{len(envs)} instances: sup error {sup_err:.1e}, weighted symmetry residual {sym_err:.1e} (<= 1e-10)"


def lattice_sigma2(env: Environment) -> float:
    """sigma**2 from the generator: per-coordinate jump second moment is 2 sigma**2."""
    nb = env.neighbor_table
    rates = env.oriented_rates()
    x = env.torus.centered(np.arange(env.torus.n_sites))[:, 0]
    dx = env.torus.centered(nb)[..., 0] - x[:, None]
    dx = (dx + env.torus.L / 2) % env.torus.L - env.torus.L / 2
    return float(np.mean(np.sum(rates * dx**2, axis=1))) / 2


def criterion_3():
    """Semigroup statistic ladder, constant conductances on a 128**2 torus."""
    tor = Torus(2, 128)
    env = Environment.from_conductances(tor, np.ones(tor.n_bonds), "variable")
    limit = DiffusionParams(math.sqrt(lattice_sigma2(env)), 2)
    window = Window("box", 1.0)
    ns = [4, 8, 16, 32]
    vals = [l1_statistic_one_time(env, None, n, 0.5, DIFFUSIVE, BUMP, window, limit).value for n in ns]
    ok = bool(np.all(np.diff(vals) < 0)) and vals[-1] <= 0.25 * vals[0]
    return ok, (f"sigma^2 {limit.sigma**2:g}; statistic " + ", ".join(f"n={n}: {v:.2e}" for n, v in zip(ns, vals))
                + f"; ratio n=32/n=4 {vals[-1] / vals[0]:.3f} (<= 0.25)")


def criterion_4():
    """Full-cluster statistic on p = 0.7 percolation, 256**2 torus, 10 environments."""
    tor = Torus(2, 256)
    law = EnvironmentLaw.percolating_iid(0.7, ValueDist("constant", (1.0,)))
    est = estimate_sigma(law, tor, [0.25, 0.5, 0.75, 1.0], 32, 2000, 7, n_envs=4)
    limit = DiffusionParams(est.sigma, 2)
    wins = 0
    pairs = []
    for s in range(10):
        env = sample_environment(law, tor, rng.numba_seed(100, s, label="acceptance-c4"))
        lab = label_clusters(env)
        v8 = l1_statistic_full_cluster(env, lab, 8, 0.5, BUMP, limit).absolute
        v32 = l1_statistic_full_cluster(env, lab, 32, 0.5, BUMP, limit).absolute
        wins += v32 < v8
        pairs.append(f"{v8:.3f}>{v32:.3f}" if v32 < v8 else f"{v8:.3f}<={v32:.3f}")
    return wins >= 8, (f"sigma^2 {est.sigma2:.4f} CI [{est.ci[0]:.4f}, {est.ci[1]:.4f}]; "
                       f"n=32 below n=8 for {wins}/10 seeds (>= 8): " + " ".join(pairs))


def criterion_5():
    """Variance bound over 2 laws x 2 n x 2 t x 20 seeds."""
    laws = [EnvironmentLaw.percolating_iid(0.7, ValueDist("constant", (1.0,))),
            EnvironmentLaw.elliptic_iid(ValueDist("uniform", (0.5, 1.5)))]
    cells, bad, worst = 0, [], 0.0
    for li, law in enumerate(laws):
        for n in (8, 16):
            tor = Torus(2, 4 * n)
            for t in (0.25, 0.5):
                for s in range(20):
                    env = sample_environment(law, tor, rng.numba_seed(5, li, n, s, label="acceptance-c5-env"))
                    lab = label_clusters(env)
                    v = variance_bound_check(env, lab, n, t, BUMP, 30,
                                             rng.numba_seed(5, li, n, s, label="acceptance-c5-run"))
                    cells += 1
                    worst = max(worst, v.variance / v.bound)
                    if not v.ok:
                        bad.append((law.tag, n, t, s))
    return not bad, f"{cells - len(bad)}/{cells} cells within bound + 3 SE; max variance/bound {worst:.3f}"


def criterion_6():
    """Tightness modulus monotone in h; energy identity at n = 32 for constant conductances."""
    hs = [0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0]
    instances = []
    tor = Torus(2, 128)
    const = Environment.from_conductances(tor, np.ones(tor.n_bonds), "variable")
    instances.append(("constant n=32", const, None, 32))
    for k, law in enumerate([EnvironmentLaw.percolating_iid(0.7, ValueDist("constant", (1.0,))),
                             EnvironmentLaw.elliptic_iid(ValueDist("uniform", (0.5, 1.5)))]):
        for n in (8, 16):
            env = sample_environment(law, Torus(2, 4 * n), rng.numba_seed(6, k, n, label="acceptance-c6"))
            instances.append((f"{law.tag} n={n}", env, label_clusters(env), n))
    monotone = [tightness_modulus(env, lab, n, hs, BUMP).monotone for _, env, lab, n in instances]
    limit = DiffusionParams(math.sqrt(lattice_sigma2(const)), 2)
    tm = tightness_modulus(const, None, 32, hs[1:], BUMP)
    rel = []
    for h, e in zip(hs[1:], tm.energy):
        ref = tightness_limit(limit, BUMP, cluster_density(full_labeling(tor)), h, tor.L / 32)
        rel.append(abs(e - ref) / ref)
    ok = all(monotone) and max(rel) <= 0.05
    return ok, (f"monotone on {sum(monotone)}/{len(instances)} instances; identity relative error at n=32 "
                f"max {max(rel):.2e} over h in {hs[1:]} (<= 0.05)")


def criterion_7():
    """Hydrodynamic limit of SSEP, constant conductances, one cosine mode."""
    spec = HydroSpec("ssep", EnvironmentLaw.constant(1.0), 2, [8, 16, 32], [0.25, 0.5],
                     CosineProfile(4.0, (1, 0)), {"bump": BUMP}, list(range(10)), DiffusionParams(1.0, 2))
    rep = hydro_experiment(spec)
    bound = 0.05 * BUMP.sup * BUMP.integral(2)
    ok, parts = True, []
    for t in spec.ts:
        meds = [r["median_error"] for r in rep.tables["summary"] if r["t"] == t]
        ok &= bool(np.all(np.diff(meds) < 0)) and meds[-1] <= bound
        parts.append(f"t={t}: " + "/".join(f"{m:.4f}" for m in meds))
    return ok, "median errors n=8/16/32 " + "; ".join(parts) + f" (decreasing, n=32 <= {bound:.4f})"


def criterion_8():
    """Caputo residual, beta = 1 consistency, erfcx identity."""
    resid = 0.0
    tgrid = np.linspace(0.05, 2.0, 20)
    for beta in (0.3, 0.5, 0.8):
        for k2 in (1.0, 4.0):
            u = lambda s, b=beta, k=k2: mittag_leffler(b, -k * np.asarray(s, dtype=float) ** b)
            for t in tgrid:
                r = caputo_derivative(beta, u, float(t), tol=1e-12) + k2 * float(u(t))
                resid = max(resid, abs(r))
    prof = Profile.from_function(CosineProfile(4.0, (1, 2)), 4.0, 64, 2)
    heat = solve_heat(DiffusionParams(0.8, 2), prof, 0.7).values
    frac = solve_fractional_heat(DiffusionParams(0.8, 2), prof, 0.7).values
    # the genuine fractional path just below beta = 1 must land on the heat solution
    almost = solve_fractional_heat(FractionalParams(1 - 1e-10, 0.8, 2), prof, 0.7).values
    z = -np.linspace(0.0, 40.0, 200)
    near = max(float(np.max(np.abs(mittag_leffler(1 - 1e-10, z) - np.exp(z)))),
               float(np.max(np.abs(frac - heat))), float(np.max(np.abs(almost - heat))))
    x = np.linspace(0.0, 30.0, 301)
    erfc_err = float(np.max(np.abs(mittag_leffler(0.5, -x) - special.erfcx(x))))
    ok = resid <= 1e-6 and near <= 1e-8 and erfc_err <= 1e-9
    return ok, (f"Caputo residual {resid:.1e} (<= 1e-6); beta=1 consistency {near:.1e} (<= 1e-8); "
                f"erfcx identity {erfc_err:.1e} (<= 1e-9)")


def criterion_9():
    """FK subordination samples vs the spectral fractional solution, d = 1, beta = 0.5, t = 1."""
    params = FractionalParams(0.5, 1.0, 1)
    period, M, eps, R, per_bin = 40.0, 4000, 0.05, 100_000, 20
    # both sides carry the same Gaussian mollifier of width eps
    x = fk_marginal_sample(params, 1.0, R, 11)[:, 0]
    x = x + eps * rng.generator(11, label="acceptance-mollifier").standard_normal(R)
    prof = Profile.from_function(lambda y: gaussian_density(y, eps**2), period, M, 1)
    u = solve_fractional_heat(params, prof, 1.0)
    g = grid_points(period, M, 1)[..., 0]
    order = np.argsort(g)
    h = period / M
    mass = u.values[order].reshape(-1, per_bin).sum(axis=1) * h
    edges = g[order][0] - h / 2 + np.arange(mass.size + 1) * per_bin * h
    hist, _ = np.histogram(x, edges)
    dist = float(np.abs(hist / R - mass).sum())
    return dist <= 0.05, f"histogram L1 distance {dist:.4f} (<= 0.05), bin width {per_bin * h:g}, {R} replicas"


def _payload(out: Path) -> dict[str, bytes]:
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


def criterion_10(tmp: Path):
    """Every preset rerun with the same config and seed gives byte-identical payloads."""
    bad = []
    for name in sorted(PRESETS):
        a, b = tmp / f"{name}-a", tmp / f"{name}-b"
        codes = [cli_main([name, "--preset", name, "--out", str(a)]),
                 cli_main([name, "--preset", name, "--out", str(b), "--threads", "2"])]
        if codes != [0, 0] or _payload(a) != _payload(b) or not _payload(a):
            bad.append(name)
    return not bad, f"{len(PRESETS) - len(bad)}/{len(PRESETS)} presets byte-identical (report.json, tables/*.csv)" + (
        f"; differing: {bad}" if bad else "")


# --------------------------------------------------------------------------
# pytest entry points

def _report(number: int, result, secs: float):
    ok, detail = result
    print(f"[criterion {number}] {'PASS' if ok else 'FAIL'} ({secs:.1f}s) {detail}")
    return ok


def _check(capsys, number: int, fn, *args):
    t0 = time.perf_counter()
    result = fn(*args)
    with capsys.disabled():
        print()
        ok = _report(number, result, time.perf_counter() - t0)
    assert ok, result[1]


def test_criterion_1_duality(capsys):
    _check(capsys, 1, criterion_1)


def test_criterion_2_exact_semigroup(capsys):
    _check(capsys, 2, criterion_2)


@pytest.mark.slow
def test_criterion_3_semigroup_ladder(capsys):
    _check(capsys, 3, criterion_3)


@pytest.mark.slow
def test_criterion_4_percolation(capsys):
    _check(capsys, 4, criterion_4)


@pytest.mark.slow
def test_criterion_5_variance_bound(capsys):
    _check(capsys, 5, criterion_5)


@pytest.mark.slow
def test_criterion_6_tightness(capsys):
    _check(capsys, 6, criterion_6)


@pytest.mark.slow
def test_criterion_7_hydrodynamics(capsys):
    _check(capsys, 7, criterion_7)


def test_criterion_8_fractional_solver(capsys):
    _check(capsys, 8, criterion_8)


def test_criterion_9_fk_self_consistency(capsys):
    _check(capsys, 9, criterion_9)


@pytest.mark.slow
def test_criterion_10_reproducibility(capsys, tmp_path):
    _check(capsys, 10, criterion_10, tmp_path)


if __name__ == "__main__":
    import tempfile

    chosen = [int(a) for a in sys.argv[1:]] or list(range(1, 11))
    results = []
    for k in chosen:
        fn = globals()[f"criterion_{k}"]
        t0 = time.perf_counter()
        if k == 10:
            with tempfile.TemporaryDirectory() as d:
                res = fn(Path(d))
        else:
            res = fn()
        results.append(_report(k, res, time.perf_counter() - t0))
    sys.exit(0 if all(results) else 1)
