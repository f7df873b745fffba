"""Experiment configuration: schema, validation and presets."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .environment import BOND_PC, EnvironmentLaw

SCHEMA_VERSION = 1
KINDS = ("env-sample", "percolate", "walk", "semigroup-compare", "qip-test", "ssep-hydro", "btm-hydro",
         "pde-solve", "duality", "tightness")


class ConfigError(ValueError):
    """Validation failure; ``diagnostics`` lists ``(field path, message)`` pairs."""

    def __init__(self, diagnostics: list[tuple[str, str]]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(f"{p}: {m}" for p, m in diagnostics))


@dataclass
class ExperimentConfig:
    kind: str
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    law: dict | None = None
    torus: dict | None = None  # {"d": int, "L": int}
    torus_factor: int | None = None  # L = torus_factor * n for ladder experiments
    ns: list[int] = field(default_factory=list)
    ts: list[float] = field(default_factory=list)
    test_functions: dict[str, dict] = field(default_factory=dict)
    profile: dict | None = None
    window: dict | None = None
    limit: dict | None = None  # {"kind": "brownian"|"fractional_kinetics", "sigma": float|"estimate", "beta"}
    scaling: dict | None = None  # {"mode": "diffusive"|"subdiffusive", "beta": float}
    statistic: str = "one_time"
    method: str = "auto"
    replicas: int = 100
    n_envs: int = 1
    seeds: list[int] = field(default_factory=list)
    x0: int | None = None
    horizon: float | None = None
    sigma_estimation: dict | None = None  # {"t_grid": [...], "n": int, "replicas": int, "n_envs": int}
    h_grid: list[float] = field(default_factory=list)
    constants: dict | None = None  # {"C1": float, "C2": float}
    grid: int = 256
    period: float | None = None
    duality: dict | None = None  # {"n_graphs": int, "max_sites": int, "edge_prob": float}
    tolerances: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError([("", "config must be a mapping")])
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError([(k, "unknown field") for k in unknown])
        if "kind" not in raw:
            raise ConfigError([("kind", "missing")])
        cfg = cls(**copy.deepcopy(raw))
        diags = validate(cfg)
        if diags:
            raise ConfigError(diags)
        return cfg

    def to_dict(self) -> dict:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}


def load_config(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


def _law(cfg: ExperimentConfig, diags) -> EnvironmentLaw | None:
    if cfg.law is None:
        diags.append(("law", "missing"))
        return None
    try:
        return EnvironmentLaw.from_dict(cfg.law)
    except (TypeError, ValueError, KeyError) as exc:
        diags.append(("law", str(exc)))
        return None


def _support_extent(spec: dict, d: int) -> float:
    from . import testfunctions

    fn = testfunctions.from_dict(spec)
    ext = getattr(fn, "support_extent", None)
    return ext(d) if ext is not None else math.inf


def validate(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    """All cross-field checks; returns ``(field path, message)`` diagnostics (empty when valid)."""
    from . import testfunctions
    from .lattice import Window

    diags: list[tuple[str, str]] = []
    if cfg.schema_version != SCHEMA_VERSION:
        diags.append(("schema_version", f"unsupported version {cfg.schema_version} (expected {SCHEMA_VERSION})"))
    if cfg.kind not in KINDS:
        diags.append(("kind", f"unknown experiment kind {cfg.kind!r}"))
        return diags
    if not isinstance(cfg.seed, int) or cfg.seed < 0 or cfg.seed >= 1 << 64:
        diags.append(("seed", "must be an unsigned 64-bit integer"))
    if cfg.method not in ("auto", "exact", "mc"):
        diags.append(("method", f"unknown method {cfg.method!r}"))
    if cfg.statistic not in ("one_time", "full_cluster"):
        diags.append(("statistic", f"unknown statistic {cfg.statistic!r}"))
    if cfg.replicas < 1:
        diags.append(("replicas", "must be >= 1"))
    for i, n in enumerate(cfg.ns):
        if not isinstance(n, int) or n < 1:
            diags.append((f"ns[{i}]", "must be an integer >= 1"))
    for i, t in enumerate(cfg.ts):
        if not t >= 0:
            diags.append((f"ts[{i}]", "must be >= 0"))
    for key, tol in cfg.tolerances.items():
        if not (isinstance(tol, (int, float)) and tol > 0):
            diags.append((f"tolerances.{key}", "must be > 0"))
    for name, spec in cfg.test_functions.items():
        try:
            testfunctions.from_dict(spec)
        except (TypeError, ValueError, KeyError) as exc:
            diags.append((f"test_functions.{name}", str(exc)))

    needs_law = cfg.kind not in ("pde-solve", "duality")
    law = _law(cfg, diags) if needs_law else None

    d = None
    if cfg.torus is not None:
        d, L = cfg.torus.get("d"), cfg.torus.get("L")
        extra = sorted(set(cfg.torus) - {"d", "L"})
        for k in extra:
            diags.append((f"torus.{k}", "unknown field"))
        if not isinstance(d, int) or d < 1:
            diags.append(("torus.d", "must be an integer >= 1"))
        if not isinstance(L, int) or L < 2:
            diags.append(("torus.L", "must be an integer >= 2"))
    elif cfg.torus_factor is not None:
        d = (cfg.limit or {}).get("d") or (cfg.scaling or {}).get("d") or 2

    # percolation threshold
    if law is not None and law.tag == "percolating_iid" and d is not None and isinstance(d, int):
        pc = BOND_PC.get(d)
        if pc is not None and law.p <= pc:
            diags.append(("law.p", f"p = {law.p} is not above the bond threshold p_c({d}) = {pc}"))

    # scaling
    if cfg.scaling is not None:
        mode = cfg.scaling.get("mode", "diffusive")
        beta = cfg.scaling.get("beta")
        if mode == "subdiffusive" and (beta is None or not 0 < beta < 1):
            diags.append(("scaling.beta", "subdiffusive scaling needs beta in (0, 1)"))
        if mode not in ("diffusive", "subdiffusive"):
            diags.append(("scaling.mode", f"unknown scaling mode {mode!r}"))

    # limit
    if cfg.limit is not None:
        kind = cfg.limit.get("kind")
        if kind not in ("brownian", "fractional_kinetics"):
            diags.append(("limit.kind", f"unsupported limit kind {kind!r}"))
        sigma = cfg.limit.get("sigma")
        if sigma != "estimate" and not (isinstance(sigma, (int, float)) and sigma > 0):
            diags.append(("limit.sigma", "must be > 0 or \"estimate\""))
        if kind == "fractional_kinetics":
            beta = cfg.limit.get("beta")
            if beta is None or not 0 < beta < 1:
                diags.append(("limit.beta", "fractional kinetics needs beta in (0, 1)"))
        if sigma == "estimate" and cfg.sigma_estimation is None:
            diags.append(("sigma_estimation", "needed when limit.sigma is \"estimate\""))

    # window fits torus
    if cfg.window is not None:
        try:
            w = Window(cfg.window.get("shape", "ball"), cfg.window["K"],
                       None if cfg.window.get("center") is None else tuple(cfg.window["center"]))
            if cfg.torus is not None and isinstance(d, int):
                ext = w.extent(d)
                for n in cfg.ns:
                    if n * ext >= cfg.torus["L"] / 2:
                        diags.append(("window", f"window exceeds torus: n * K = {n * ext} must be < L / 2 = "
                                                f"{cfg.torus['L'] / 2}"))
                        break
        except (KeyError, TypeError, ValueError) as exc:
            diags.append(("window", str(exc)))

    # test-function supports inside the (macroscopic) torus
    if cfg.kind in ("semigroup-compare", "ssep-hydro", "btm-hydro", "tightness") and isinstance(d, int):
        for name, spec in cfg.test_functions.items():
            try:
                ext = _support_extent(spec, d)
            except (TypeError, ValueError, KeyError):
                continue
            if cfg.torus is not None:
                bad = [n for n in cfg.ns if n * ext >= cfg.torus["L"] / 2]
            elif cfg.torus_factor is not None:
                bad = cfg.ns if ext >= cfg.torus_factor / 2 else []
            else:
                bad = []
            if bad and not (cfg.kind == "semigroup-compare" and cfg.statistic == "one_time"):
                diags.append((f"test_functions.{name}", "test function support exceeds the torus"))

    # profiles: range and Nyquist
    if cfg.profile is not None:
        try:
            prof = testfunctions.from_dict(cfg.profile)
            band = getattr(prof, "band_limit", None)
            if band is not None and 2 * band >= cfg.grid:
                diags.append(("profile", f"Nyquist: band limit {band} needs grid > {2 * band}"))
            period = getattr(prof, "period", None)
            macro = cfg.torus_factor if cfg.torus_factor is not None else cfg.period
            if period is not None and macro is not None and abs(macro / period - round(macro / period)) > 1e-12:
                diags.append(("profile.period", f"profile period {period} must divide the torus period {macro}"))
        except (TypeError, ValueError, KeyError) as exc:
            diags.append(("profile", str(exc)))

    # horizon feasibility for exact semigroups
    if cfg.kind in ("semigroup-compare", "tightness") and cfg.ns and cfg.method != "mc":
        from .walk import ScalingSequence

        try:
            theta = _scaling(cfg, d)
            tmax = max(cfg.ts or [0.0]) if cfg.kind == "semigroup-compare" else max(cfg.h_grid or [0.0])
            top_rate = _rate_bound(law) if law is not None else 1.0
            from .convergence import EXACT_POISSON_CAP

            if top_rate * (d or 1) * 2 * tmax * theta(max(cfg.ns)) > EXACT_POISSON_CAP:
                diags.append(("ts", "horizon t * theta_n is not feasible for the exact semigroup"))
        except ValueError as exc:
            diags.append(("scaling", str(exc)))

    # kind-specific requirements
    req = {
        "env-sample": ["torus"], "percolate": ["torus"], "walk": ["torus", "horizon"],
        "semigroup-compare": ["torus", "ns", "ts", "test_functions", "window", "limit"],
        "qip-test": ["torus", "ns", "ts", "limit"],
        "ssep-hydro": ["torus_factor", "ns", "ts", "test_functions", "profile", "limit", "seeds"],
        "btm-hydro": ["torus_factor", "ns", "ts", "test_functions", "profile", "limit", "seeds", "scaling"],
        "pde-solve": ["profile", "limit", "ts", "period"], "duality": ["ts", "duality"],
        "tightness": ["torus", "ns", "h_grid", "test_functions"],
    }[cfg.kind]
    for key in req:
        val = getattr(cfg, key)
        if val is None or (isinstance(val, (list, dict)) and not val):
            diags.append((key, f"required for {cfg.kind}"))
    if cfg.kind == "ssep-hydro" and law is not None and law.is_btm:
        diags.append(("law", "SSEP runs on conductance laws"))
    if cfg.kind == "btm-hydro" and law is not None and not law.is_btm:
        diags.append(("law", "btm-hydro needs a trap-weight law"))
    if cfg.kind == "duality" and cfg.duality is not None:
        from .ips import DUALITY_MAX_SITES

        if cfg.duality.get("max_sites", 0) > DUALITY_MAX_SITES:
            diags.append(("duality.max_sites", f"instance too large (max {DUALITY_MAX_SITES})"))
    return diags


def _rate_bound(law: EnvironmentLaw) -> float:
    dist = law.dist
    if law.tag == "constant":
        return law.c
    if dist is not None and dist.kind == "constant":
        return dist.params[0]
    if dist is not None and dist.kind == "uniform":
        return dist.params[1]
    return 1.0


def _scaling(cfg: ExperimentConfig, d):
    from .walk import ScalingSequence

    if cfg.scaling is None or cfg.scaling.get("mode", "diffusive") == "diffusive":
        return ScalingSequence()
    return ScalingSequence("subdiffusive", cfg.scaling.get("beta"), d)


# --------------------------------------------------------------------------
# presets

BUMP = {"kind": "bump", "radius": 1.0, "height": 1.0, "center": None}

PRESETS: dict[str, dict] = {
    "env-sample": {
        "kind": "env-sample", "seed": 1, "law": {"tag": "constant", "c": 1.0, "speed_mode": "variable"},
        "torus": {"d": 2, "L": 16},
    },
    "percolate": {
        "kind": "percolate", "seed": 1,
        "law": {"tag": "percolating_iid", "p": 0.7, "dist": {"kind": "constant", "params": [1.0]}},
        "torus": {"d": 2, "L": 64},
    },
    "walk": {
        "kind": "walk", "seed": 1, "law": {"tag": "constant", "c": 1.0, "speed_mode": "variable"},
        "torus": {"d": 2, "L": 64}, "horizon": 50.0, "replicas": 2000, "ts": [10.0, 20.0, 50.0],
    },
    "semigroup-compare": {
        "kind": "semigroup-compare", "seed": 1, "law": {"tag": "constant", "c": 1.0, "speed_mode": "variable"},
        "torus": {"d": 2, "L": 64}, "ns": [4, 8, 16], "ts": [0.5], "test_functions": {"bump": BUMP},
        "window": {"shape": "ball", "K": 1.0}, "limit": {"kind": "brownian", "sigma": 1.0},
    },
    "qip-test": {
        "kind": "qip-test", "seed": 1, "law": {"tag": "constant", "c": 1.0, "speed_mode": "variable"},
        "torus": {"d": 2, "L": 128}, "ns": [4, 16], "ts": [1.0], "limit": {"kind": "brownian", "sigma": 1.0},
        "replicas": 2000,
    },
    "ssep-hydro": {
        "kind": "ssep-hydro", "seed": 1, "law": {"tag": "constant", "c": 1.0, "speed_mode": "variable"},
        "torus_factor": 4, "ns": [4, 8, 16], "ts": [0.25, 0.5], "test_functions": {"bump": BUMP},
        "profile": {"kind": "cosine", "period": 4.0, "mode": [1, 0], "mean": 0.5, "amplitude": 0.5},
        "limit": {"kind": "brownian", "sigma": 1.0}, "seeds": [0, 1, 2, 3],
    },
    "btm-hydro": {
        "kind": "btm-hydro", "seed": 1,
        "law": {"tag": "btm_site_weights", "beta": 0.8, "a": 0.0, "c1": 1.0, "c2": 1.0},
        "torus_factor": 4, "ns": [4, 8], "ts": [0.5], "test_functions": {"bump": BUMP},
        "profile": {"kind": "cosine", "period": 4.0, "mode": [1, 0], "mean": 0.5, "amplitude": 0.5},
        "limit": {"kind": "fractional_kinetics", "beta": 0.8, "sigma": 1.0, "d": 2},
        "scaling": {"mode": "subdiffusive", "beta": 0.8, "d": 2}, "seeds": [0, 1],
    },
    "pde-solve": {
        "kind": "pde-solve", "seed": 0,
        "profile": {"kind": "cosine", "period": 4.0, "mode": [1, 0], "mean": 0.5, "amplitude": 0.5},
        "limit": {"kind": "fractional_kinetics", "beta": 0.5, "sigma": 1.0, "d": 2}, "ts": [0.0, 0.5, 1.0],
        "period": 4.0, "grid": 64,
    },
    "duality": {
        "kind": "duality", "seed": 1, "ts": [0.1, 1.0, 10.0],
        "duality": {"n_graphs": 10, "max_sites": 8, "edge_prob": 0.4},
    },
    "tightness": {
        "kind": "tightness", "seed": 1, "law": {"tag": "constant", "c": 1.0, "speed_mode": "variable"},
        "torus": {"d": 2, "L": 64}, "ns": [8, 16], "h_grid": [0.0, 0.1, 0.25, 0.5, 1.0],
        "test_functions": {"bump": BUMP}, "limit": {"kind": "brownian", "sigma": 1.0},
        "constants": {"C1": 1.0, "C2": 1.0},
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError([("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")])
    return copy.deepcopy(PRESETS[name])
