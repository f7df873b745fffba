"""Command-line entry point: ``rwsim <kind> --config PATH | --preset NAME``."""
from __future__ import annotations

import argparse
import io
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import rng, testfunctions
from .config import KINDS, PRESETS, ConfigError, ExperimentConfig, _scaling, load_config, preset
from .environment import EnvironmentLaw, sample_environment, save_environment
from .lattice import Torus, Window
from .limits import DiffusionParams, FractionalParams, Profile, solve_fractional_heat
from .report import ExperimentReport


class ExperimentFailure(RuntimeError):
    def __init__(self, sub_id: str, exc: Exception):
        self.sub_id = sub_id
        super().__init__(f"{sub_id}: {type(exc).__name__}: {exc}")


def _torus(cfg: ExperimentConfig) -> Torus:
    return Torus(cfg.torus["d"], cfg.torus["L"])


def _law(cfg: ExperimentConfig) -> EnvironmentLaw:
    return EnvironmentLaw.from_dict(cfg.law)


def _limit(cfg: ExperimentConfig, d: int, sigma: float | None = None):
    lim = cfg.limit
    s = sigma if sigma is not None else lim["sigma"]
    if lim["kind"] == "fractional_kinetics":
        return FractionalParams(lim["beta"], s, d)
    return DiffusionParams(s, d)


def _sigma(cfg: ExperimentConfig, law, torus) -> tuple[float, dict]:
    if cfg.limit["sigma"] != "estimate":
        return float(cfg.limit["sigma"]), {}
    from .convergence import estimate_sigma

    se = cfg.sigma_estimation
    est = estimate_sigma(law, torus, se["t_grid"], se["n"], se.get("replicas", 1000),
                         rng.numba_seed(cfg.seed, label="sigma"), n_envs=se.get("n_envs", 4))
    return est.sigma, {"sigma2": est.sigma2, "sigma2_ci": list(est.ci), "sigma2_se": est.se}


def run_env_sample(cfg):
    tor = _torus(cfg)
    env = sample_environment(_law(cfg), tor, cfg.seed)
    buf = io.BytesIO()
    save_environment(env, buf)
    ends = tor.bonds()
    rows = [{"bond": i, "x": int(ends[i, 0]), "y": int(ends[i, 1]), "weight": float(w)}
            for i, w in enumerate(env.bond_weights)]
    summary = {"mean_weight": float(env.bond_weights.mean()), "min_weight": float(env.bond_weights.min()),
               "max_weight": float(env.bond_weights.max()), "n_bonds": tor.n_bonds}
    return ExperimentReport("env-sample", {"bonds": rows}, summary), {"environment.bin": buf.getvalue()}


def run_percolate(cfg):
    from .percolation import cluster_density, label_clusters, labeling_table

    env = sample_environment(_law(cfg), _torus(cfg), cfg.seed)
    lab = label_clusters(env)
    rows = [{"site": s, "label": lb, "in_giant": g} for s, lb, g in labeling_table(lab)]
    summary = {"cluster_density": cluster_density(lab), "n_clusters": lab.n_clusters, "giant_id": lab.giant_id}
    return ExperimentReport("percolate", {"labels": rows}, summary), {}


def run_walk(cfg):
    from .walk import msd_curve, simulate_walk, walk_starts

    law, tor = _law(cfg), _torus(cfg)
    env = sample_environment(law, tor, rng.numba_seed(cfg.seed, 0, label="msd-env"))
    x0 = cfg.x0 if cfg.x0 is not None else int(walk_starts(env, 1, rng.generator(cfg.seed, label="x0"),
                                                         law.tag == "percolating_iid")[0])
    path = simulate_walk(env, x0, cfg.horizon, rng.numba_seed(cfg.seed, label="path"))
    path_rows = [{"time": t, **{f"x{i + 1}": c for i, c in enumerate(coords)}} for t, *coords in path.to_rows()]
    tables = {"path": path_rows}
    summary = {"x0": x0, "n_jumps": len(path.jump_times)}
    if cfg.ts:
        res = msd_curve(law, tor, cfg.ts, cfg.replicas, cfg.seed, cfg.n_envs)
        tables["msd"] = [{"t": float(t), "msd": float(m), "se": float(s)} for t, m, s in zip(res.times, res.msd, res.se)]
    return ExperimentReport("walk", tables, summary), {}


def run_semigroup_compare(cfg):
    from .convergence import l1_statistic_full_cluster, l1_statistic_one_time, mann_kendall
    from .percolation import label_clusters

    law, tor = _law(cfg), _torus(cfg)
    env = sample_environment(law, tor, cfg.seed)
    lab = label_clusters(env) if law.tag == "percolating_iid" else None
    sigma, sig_info = _sigma(cfg, law, tor)
    limit = _limit(cfg, tor.d, sigma)
    theta = _scaling(cfg, tor.d)
    tol = cfg.tolerances.get("semigroup", 1e-10)
    win = None if cfg.window is None else Window(cfg.window.get("shape", "ball"), cfg.window["K"],
                                                 None if cfg.window.get("center") is None
                                                 else tuple(cfg.window["center"]))
    rows = []
    for name, spec in cfg.test_functions.items():
        g = testfunctions.from_dict(spec)
        for t in cfg.ts:
            for n in cfg.ns:
                sub = f"{name}/t={t}/n={n}"
                try:
                    if cfg.statistic == "one_time":
                        v = l1_statistic_one_time(env, lab, n, t, theta, g, win, limit, method=cfg.method,
                                                  replicas=cfg.replicas,
                                                  seed=rng.numba_seed(cfg.seed, n, label="mc"), tol=tol)
                        rows.append({"f": name, "t": t, "n": n, "statistic": v.value, "se": v.se,
                                     "method": v.method})
                    else:
                        v = l1_statistic_full_cluster(env, lab, n, t, g, limit, theta=theta, tol=tol)
                        rows.append({"f": name, "t": t, "n": n, "statistic": v.absolute, "signed": v.signed,
                                     **{f"tail_k{k:g}": m for k, m in v.tail.items()}})
                except Exception as exc:
                    raise ExperimentFailure(sub, exc) from exc
    verdicts = {}
    for name in cfg.test_functions:
        for t in cfg.ts:
            vals = [r["statistic"] for r in rows if r["f"] == name and r["t"] == t]
            verdicts[f"f={name},t={t}"] = {"strictly_decreasing": bool(np.all(np.diff(vals) < 0)),
                                            "mann_kendall": mann_kendall(vals)}
    summary = {"sigma": sigma, **sig_info, "verdicts": verdicts, "environment_seed": cfg.seed}
    return ExperimentReport("semigroup-compare", {"statistic": rows}, summary), {}


def run_qip(cfg):
    from .convergence import qip_marginal_test
    from .percolation import label_clusters

    law, tor = _law(cfg), _torus(cfg)
    env = sample_environment(law, tor, cfg.seed)
    lab = label_clusters(env) if law.tag == "percolating_iid" else None
    sigma, sig_info = _sigma(cfg, law, tor)
    limit = _limit(cfg, tor.d, sigma)
    theta = _scaling(cfg, tor.d)
    rows = []
    for t in cfg.ts:
        for n in cfg.ns:
            try:
                r = qip_marginal_test(env, lab, n, t, theta, limit, cfg.replicas,
                                      rng.numba_seed(cfg.seed, n, label="qip"), x0=cfg.x0)
            except Exception as exc:
                raise ExperimentFailure(f"t={t}/n={n}", exc) from exc
            rows.append({"t": t, "n": n, "ks": r.distance, "p_value": r.p_value})
    return ExperimentReport("qip-test", {"qip": rows}, {"sigma": sigma, **sig_info}), {}


def run_hydro(cfg, threads):
    from .ips import HydroSpec, hydro_experiment

    law = _law(cfg)
    d = (cfg.limit or {}).get("d", 2)
    spec = HydroSpec(
        mode="ssep" if cfg.kind == "ssep-hydro" else "btm", law=law, d=d, ns=cfg.ns, ts=cfg.ts,
        profile=testfunctions.from_dict(cfg.profile),
        fs={k: testfunctions.from_dict(v) for k, v in cfg.test_functions.items()},
        seeds=[int(rng.numba_seed(cfg.seed, s, label="hydro-seed")) for s in cfg.seeds],
        limit=_limit(cfg, d), torus_factor=cfg.torus_factor, theta=_scaling(cfg, d), grid=cfg.grid)
    return hydro_experiment(spec, workers=threads), {}


def run_pde(cfg):
    d = cfg.limit.get("d", 2)
    prof = Profile.from_function(testfunctions.from_dict(cfg.profile), cfg.period, cfg.grid, d)
    prof.check_unit_range()
    prof.check_nyquist() if prof.band_limit is not None else None
    lim = _limit(cfg, d)
    rows, values = [], []
    for t in cfg.ts:
        sol = solve_fractional_heat(lim, prof, t)
        rows.append({"t": t, "mass": sol.mass(), "min": float(sol.values.min()), "max": float(sol.values.max())})
        flat = sol.values.ravel()
        values.extend({"t": t, "index": i, "value": float(v)} for i, v in enumerate(flat))
    return ExperimentReport("pde-solve", {"summary": rows, "values": values}, {}), {}


def run_duality(cfg, threads):
    from concurrent.futures import ThreadPoolExecutor

    from .ips import duality_check_graph, random_conductance_graph

    dc = cfg.duality
    gen = rng.generator(cfg.seed, label="duality-graphs")
    graphs = []
    for _ in range(dc["n_graphs"]):
        m = int(gen.integers(2, dc["max_sites"] + 1))
        graphs.append((m, *random_conductance_graph(m, dc.get("edge_prob", 0.4), gen)))

    def one(i):
        m, e, w = graphs[i]
        return [{"graph": i, "sites": m, "edges": len(e), "t": t,
                 "discrepancy": duality_check_graph(m, e, w, t).discrepancy} for t in cfg.ts]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = [r for chunk in pool.map(one, range(len(graphs))) for r in chunk]
    return ExperimentReport("duality", {"duality": rows},
                            {"max_discrepancy": max(r["discrepancy"] for r in rows)}), {}


def run_tightness(cfg):
    from .ips import tightness_limit, tightness_modulus
    from .percolation import cluster_density, label_clusters

    law, tor = _law(cfg), _torus(cfg)
    env = sample_environment(law, tor, cfg.seed)
    lab = label_clusters(env) if law.tag == "percolating_iid" else None
    q = 1.0 if lab is None else cluster_density(lab)
    C = cfg.constants or {"C1": 1.0, "C2": 1.0}
    rows, summary = [], {"monotone": {}}
    for name, spec in cfg.test_functions.items():
        f = testfunctions.from_dict(spec)
        for n in cfg.ns:
            tm = tightness_modulus(env, lab, n, cfg.h_grid, f, C["C1"], C["C2"])
            summary["monotone"][f"f={name},n={n}"] = tm.monotone
            for h, psi, e in zip(tm.h, tm.psi, tm.energy):
                row = {"f": name, "n": n, "h": float(h), "psi": float(psi), "energy": float(e)}
                if cfg.limit is not None:
                    lim = _limit(cfg, tor.d)
                    row["limit_energy"] = tightness_limit(lim, f, q, float(h), tor.L / n)
                rows.append(row)
    return ExperimentReport("tightness", {"tightness": rows}, summary), {}


def run(cfg: ExperimentConfig, threads: int = 1) -> tuple[ExperimentReport, dict[str, bytes]]:
    """Dispatch one validated config to its module."""
    kind = cfg.kind
    if kind in ("ssep-hydro", "btm-hydro"):
        rep, extra = run_hydro(cfg, threads)
    elif kind == "duality":
        rep, extra = run_duality(cfg, threads)
    else:
        rep, extra = {
            "env-sample": run_env_sample, "percolate": run_percolate, "walk": run_walk,
            "semigroup-compare": run_semigroup_compare, "qip-test": run_qip, "pde-solve": run_pde,
            "tightness": run_tightness,
        }[kind](cfg)
    rep.config = cfg.to_dict()
    rep.config.pop("output", None)
    rep.seed = cfg.seed
    return rep, extra


def run_to_dir(cfg: ExperimentConfig, out: Path, threads: int = 1) -> Path:
    import numba
    import scipy

    t0 = time.perf_counter()
    rep, extra = run(cfg, threads)
    meta = {"wall_time_s": round(time.perf_counter() - t0, 3),
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "numba": numba.__version__}}
    return rep.write(out, extra, meta)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rwsim", description="Random walks in random environments and "
                                                           "exclusion processes: experiments and checks.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in (*KINDS, "validate"):
        p = sub.add_parser(kind)
        p.add_argument("--config", type=Path, help="JSON or YAML experiment config")
        p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent work items")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            raw = load_config(args.config)
        elif args.preset is not None:
            raw = preset(args.preset)
        elif args.command in PRESETS:
            raw = preset(args.command)
        else:
            raise ConfigError([("config", "give --config or --preset")])
        if args.command != "validate":
            if raw.get("kind", args.command) != args.command:
                raise ConfigError([("kind", f"config is for {raw.get('kind')!r}, not {args.command!r}")])
            raw["kind"] = args.command
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output"] = str(args.out)
        if args.threads < 1:
            raise ConfigError([("threads", "must be >= 1")])
        cfg = ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        for path, msg in exc.diagnostics:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print("ok")
        return 0
    out = Path(cfg.output or f"runs/{cfg.kind}-{cfg.seed}")
    try:
        run_to_dir(cfg, out, args.threads)
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    print(out / "report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
