import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from rwsim import rng
from rwsim.environment import Environment, EnvironmentLaw, ValueDist, sample_environment
from rwsim.ips import (HydroSpec, ParticleConfiguration, capacities, density_field, duality_check,
                       duality_check_graph, hydro_experiment, many_particle_expectations, random_conductance_graph,
                       sample_initial, simulate_interacting_btm, simulate_ssep, tightness_limit, tightness_modulus,
                       variance_bound_check)
from rwsim.lattice import Torus
from rwsim.limits import DiffusionParams
from rwsim.percolation import cluster_density, empirical_measure, full_labeling, label_clusters
from rwsim.testfunctions import Bump, ConstantProfile, CosineProfile
from rwsim.walk import generator_matrix

from conftest import constant_env, random_conductance_env

HALF = ConstantProfile(0.5)


def perc_env(L=16, seed=0, p=0.7):
    law = EnvironmentLaw.percolating_iid(p, ValueDist("constant", (1.0,)))
    env = sample_environment(law, Torus(2, L), seed)
    return env, label_clusters(env)


def test_configuration_invariants():
    with pytest.raises(ValueError):
        ParticleConfiguration([2, 0], [1, 1])
    c = ParticleConfiguration([1, 0, 1], [1, 1, 1])
    assert c.total == 2 and c.sparse() == [(0, 1), (2, 1)]


def test_initial_extremes():
    env, lab = perc_env()
    empty = sample_initial(ConstantProfile(0.0), env, lab, 4, "ssep", 0)
    full = sample_initial(ConstantProfile(1.0), env, lab, 4, "ssep", 0)
    assert empty.total == 0
    assert np.array_equal(full.occupancy, lab.in_giant.astype(int))
    btm = sample_environment(EnvironmentLaw.btm_site_weights(0.6, 0.2), Torus(2, 8), 1)
    fb = sample_initial(ConstantProfile(1.0), btm, None, 4, "btm", 0)
    assert np.array_equal(fb.occupancy, btm.alpha.astype(int))


def test_initial_half_law_of_large_numbers():
    env, lab = perc_env(L=64, seed=2)
    n = 8
    f = lambda x: np.ones(len(x))  # noqa: E731
    vals = [density_field(sample_initial(HALF, env, lab, n, "ssep", s), env.torus, n, f) / (64 / n) ** 2
            for s in range(20)]
    q = cluster_density(lab)
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - q / 2) < 3 * se + 1e-3


def test_ssep_conservation_and_cluster():
    env, lab = perc_env(seed=3)
    c0 = sample_initial(HALF, env, lab, 4, "ssep", 1)
    run = simulate_ssep(env, lab, c0, [0.5, 2.0, 10.0], 4)
    for snap in run.snapshots:
        assert snap.sum() == c0.total
        assert np.all(snap[~lab.in_giant] == 0)


def test_ssep_empty_and_full():
    env, lab = perc_env(seed=4)
    empty = ParticleConfiguration(np.zeros(env.torus.n_sites), capacities(env, lab, "ssep"))
    run = simulate_ssep(env, lab, empty, [5.0], 0, log_cap=100)
    assert run.snapshots[0].sum() == 0 and run.n_events > 0 and len(run.log_times) == 100
    full = ParticleConfiguration(lab.in_giant.astype(int), capacities(env, lab, "ssep"))
    run = simulate_ssep(env, lab, full, [5.0], 0)
    assert np.array_equal(run.snapshots[0], full.occupancy)


def test_ssep_two_site_law():
    tor = Torus(1, 2)
    env = Environment.from_conductances(tor, [0.4, 0.3])  # total exchange rate 0.7
    c0 = ParticleConfiguration([1, 0], [1, 1])
    t, R = 1.1, 20_000
    hits = sum(int(simulate_ssep(env, None, c0, [t], s).snapshots[0][0]) for s in range(R))
    p = 0.5 * (1 + math.exp(-2 * 0.7 * t))
    assert abs(hits / R - p) < 4 * math.sqrt(p * (1 - p) / R)


def test_ssep_negative_time():
    env = constant_env(Torus(1, 4))
    with pytest.raises(ValueError):
        simulate_ssep(env, None, ParticleConfiguration([0] * 4, [1] * 4), [-1.0], 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_coupling(seed):
    env = random_conductance_env(Torus(2, 6), seed)
    gen = rng.generator(seed, label="coupling")
    lo = (gen.random(36) < 0.3).astype(int)
    hi = np.maximum(lo, (gen.random(36) < 0.5).astype(int))
    cap = np.ones(36, dtype=int)
    ts = [0.3, 1.0, 4.0]
    a = simulate_ssep(env, None, ParticleConfiguration(lo, cap), ts, seed).snapshots
    b = simulate_ssep(env, None, ParticleConfiguration(hi, cap), ts, seed).snapshots
    assert np.all(a <= b)


def test_btm_frozen_and_empty():
    env = sample_environment(EnvironmentLaw.btm_site_weights(0.6, 0.3), Torus(2, 6), 2)
    cap = capacities(env, None, "btm")
    full = simulate_interacting_btm(env, ParticleConfiguration(cap, cap), [3.0], 0)
    assert full.n_events == 0 and np.array_equal(full.snapshots[0], cap)
    empty = simulate_interacting_btm(env, ParticleConfiguration(0 * cap, cap), [3.0], 0)
    assert empty.snapshots[0].sum() == 0


def test_btm_conservation_and_capacity():
    env = sample_environment(EnvironmentLaw.btm_site_weights(0.6, 0.5), Torus(2, 8), 3)
    c0 = sample_initial(CosineProfile(8.0, (1, 0)), env, None, 1, "btm", 1)
    run = simulate_interacting_btm(env, c0, [0.5, 5.0, 50.0], 2)
    for snap in run.snapshots:
        assert snap.sum() == c0.total and np.all(snap <= c0.capacity) and np.all(snap >= 0)


def test_btm_single_particle_matches_walk():
    tor = Torus(2, 3)
    alpha = np.array([1, 2, 3, 1, 4, 2, 1, 1, 5.0])
    env = Environment.from_trap_weights(tor, alpha, 0.0)
    P = sla.expm(1.0 * generator_matrix(env).toarray())[0]
    c0 = ParticleConfiguration(np.eye(9, dtype=int)[0], alpha.astype(int))
    R = 20_000
    counts = np.zeros(9)
    for s in range(R):
        counts += simulate_interacting_btm(env, c0, [1.0], s).snapshots[0]
    assert np.max(np.abs(counts / R - P)) < 4 * math.sqrt(0.25 / R)


def test_density_field_reductions():
    env, lab = perc_env(L=32, seed=5)
    tor, n, f = env.torus, 4, Bump(1.5)
    cap = capacities(env, lab, "ssep")
    assert density_field(ParticleConfiguration(0 * cap, cap), tor, n, f) == 0
    one = np.zeros(tor.n_sites, dtype=int)
    x = int(lab.giant_sites[3])
    one[x] = 1
    assert math.isclose(density_field(one, tor, n, f), f(tor.centered(x)[None] / n)[0] / n**2)
    assert math.isclose(density_field(ParticleConfiguration(cap, cap), tor, n, f),
                        empirical_measure(lab, tor, n, f))


def test_frequency_field_bounds():
    env = sample_environment(EnvironmentLaw.btm_site_weights(0.6, 0.0), Torus(2, 16), 1)
    cap = capacities(env, None, "btm")
    f = Bump(1.0)
    val = density_field(ParticleConfiguration(cap, cap), env.torus, 4, f, env.alpha)
    upper = np.sum(np.abs(f(env.torus.all_centered() / 4))) / 16
    assert math.isclose(val, upper)


def test_duality_single_particle_and_full():
    env = random_conductance_env(Torus(1, 5), 1)
    many = many_particle_expectations(5, env.torus.bonds(), env.bond_weights, 0.8)
    P = sla.expm(0.8 * generator_matrix(env).toarray())
    for x in range(5):
        assert np.max(np.abs(many[1 << x] - P[:, x])) < 1e-10
    assert np.allclose(many[(1 << 5) - 1], 1.0)


def test_duality_random_graphs():
    gen = rng.generator(7, label="graphs")
    for _ in range(5):
        e, w = random_conductance_graph(6, 0.5, gen)
        for t in (0.1, 1.0, 10.0):
            assert duality_check_graph(6, e, w, t).discrepancy <= 1e-9


def test_duality_on_torus_env_and_limits():
    env = random_conductance_env(Torus(2, 3), 2)
    assert duality_check(env, 1.0).discrepancy <= 1e-9
    with pytest.raises(ValueError, match="too large"):
        duality_check(random_conductance_env(Torus(2, 4), 0), 1.0)


def test_variance_bound_trivial_cases():
    env, lab = perc_env(L=16, seed=1)
    zero = variance_bound_check(env, lab, 4, 0.5, Bump(1.0, 0.0), 30, 0)
    assert (zero.variance, zero.bound) == (0.0, 0.0)
    det = variance_bound_check(env, lab, 4, 0.0, Bump(1.0), 30, 0, profile=ConstantProfile(1.0))
    assert det.variance < 1e-25 and det.ok


def test_variance_bound_percolation():
    env, lab = perc_env(L=64, seed=6)
    v = variance_bound_check(env, lab, 16, 0.25, Bump(1.0), 30, 3)
    assert v.ok and abs(v.mean) < 4 * math.sqrt(v.variance / 30)


def test_tightness_properties():
    env, lab = perc_env(L=32, seed=2)
    n, f = 8, Bump(1.0)
    tm = tightness_modulus(env, lab, n, [0.0, 0.05, 0.1, 0.3, 1.0, 3.0], f, 2.0, 0.5)
    norm = math.sqrt(np.sum(np.where(lab.in_giant, f(env.torus.all_centered() / n), 0) ** 2) / n**2)
    assert math.isclose(tm.psi[0], 0.5 * norm / n)
    assert tm.monotone


def test_tightness_limit_identity():
    env = constant_env(Torus(2, 128))
    tm = tightness_modulus(env, None, 32, [0.25, 0.5], Bump(1.0))
    for h, e in zip(tm.h, tm.energy):
        ref = tightness_limit(DiffusionParams(1.0, 2), Bump(1.0), 1.0, h, 4.0)
        assert abs(e - ref) < 0.05 * ref


def test_hydro_flat_profile_stationary():
    spec = HydroSpec("ssep", EnvironmentLaw.constant(1.0), 2, [8], [0.0, 0.5], ConstantProfile(0.3),
                     {"bump": Bump(1.0)}, [0, 1, 2], DiffusionParams(1.0, 2))
    rep = hydro_experiment(spec)
    for r in rep.tables["fields"]:
        assert math.isclose(r["reference"], 0.3 * Bump(1.0).integral(2), rel_tol=1e-6)
        assert r["error"] < 0.1


def test_hydro_threads_deterministic():
    spec = HydroSpec("ssep", EnvironmentLaw.constant(1.0), 2, [4, 8], [0.25], CosineProfile(4.0, (1, 0)),
                     {"bump": Bump(1.0)}, [0, 1, 2, 3], DiffusionParams(1.0, 2))
    a = hydro_experiment(spec, workers=1).tables
    b = hydro_experiment(spec, workers=4).tables
    assert a == b
