"""Random environments: bond conductances and site weights on a torus."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np

from . import rng
from .lattice import Torus

SpeedMode = Literal["variable", "constant", "explicit"]

# Bond percolation thresholds on Z^d (d = 2 exact, otherwise numerical estimates).
BOND_PC = {1: 1.0, 2: 0.5, 3: 0.2488126, 4: 0.1601314, 5: 0.1181718, 6: 0.0942019}

FORMAT_VERSION = 1
_MAGIC = b"RWSIMENV"


@dataclass(frozen=True)
class ValueDist:
    """Distribution of a positive weight, sampled by inverse CDF.

    kinds: ``constant(c)``, ``uniform(lo, hi)``, ``exponential(scale)`` and
    ``pareto(beta, c1, c2)`` with ``P(w > u) = c1 * u**-beta`` above
    ``max(c2, c1**(1/beta))`` and ``w >= c2`` almost surely.
    """

    kind: Literal["constant", "uniform", "exponential", "pareto"]
    params: tuple[float, ...]

    def __post_init__(self):
        n_expected = {"constant": 1, "uniform": 2, "exponential": 1, "pareto": 3}
        if self.kind not in n_expected:
            raise ValueError(f"unknown value distribution {self.kind!r}")
        if len(self.params) != n_expected[self.kind]:
            raise ValueError(f"{self.kind} takes {n_expected[self.kind]} parameters")
        p = self.params
        if self.kind == "constant" and not p[0] > 0:
            raise ValueError("constant weight must be > 0")
        if self.kind == "uniform" and not 0 <= p[0] < p[1]:
            raise ValueError("uniform(lo, hi) needs 0 <= lo < hi")
        if self.kind == "exponential" and not p[0] > 0:
            raise ValueError("exponential scale must be > 0")
        if self.kind == "pareto":
            beta, c1, c2 = p
            if not 0 < beta < 1:
                raise ValueError(f"tail exponent beta must lie in (0, 1), got {beta}")
            if not (c1 > 0 and c2 > 0):
                raise ValueError("pareto constants c1, c2 must be > 0")

    @property
    def essinf(self) -> float:
        return {
            "constant": lambda p: p[0],
            "uniform": lambda p: p[0],
            "exponential": lambda p: 0.0,
            "pareto": lambda p: p[2],
        }[self.kind](self.params)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(u, p[0])
        if self.kind == "uniform":
            return p[0] + (p[1] - p[0]) * u
        if self.kind == "exponential":
            return -p[0] * np.log1p(-u)
        beta, c1, c2 = p
        # 1 - u lies in (0, 1]
        return np.maximum(c2, (c1 / (1.0 - u)) ** (1.0 / beta))

    def sf(self, x: float) -> float:
        """Exact survival function P(w > x) of the sampler."""
        p = self.params
        if self.kind == "constant":
            return float(x < p[0])
        if self.kind == "uniform":
            return float(np.clip((p[1] - x) / (p[1] - p[0]), 0.0, 1.0))
        if self.kind == "exponential":
            return float(np.exp(-max(x, 0.0) / p[0]))
        beta, c1, c2 = p
        if x < c2:
            return 1.0
        return float(min(1.0, c1 * x**-beta))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "ValueDist":
        return cls(d["kind"], tuple(float(v) for v in d["params"]))


@dataclass(frozen=True)
class EnvironmentLaw:
    """A translation-invariant i.i.d. law of environments.

    tags: ``constant``, ``elliptic_iid``, ``percolating_iid``,
    ``heavy_tail_conductance`` and ``btm_site_weights``.
    """

    tag: str
    c: float = 1.0
    dist: ValueDist | None = None
    p: float = 1.0
    beta: float | None = None
    c1: float = 1.0
    c2: float = 1.0
    a: float = 0.0
    speed_mode: SpeedMode = "variable"

    def __post_init__(self):
        if self.tag == "constant":
            if not self.c > 0:
                raise ValueError("constant law needs c > 0")
        elif self.tag == "elliptic_iid":
            if self.dist is None or not self.dist.essinf > 0:
                raise ValueError("elliptic law needs a weight distribution with essinf >= c > 0")
        elif self.tag == "percolating_iid":
            if not 0 < self.p <= 1:
                raise ValueError(f"open-bond probability must lie in (0, 1], got {self.p}")
            if self.dist is None:
                raise ValueError("percolating law needs a positive weight distribution")
        elif self.tag in ("heavy_tail_conductance", "btm_site_weights"):
            if self.beta is None or not 0 < self.beta < 1:
                raise ValueError(f"tail exponent beta must lie in (0, 1), got {self.beta}")
            if not (self.c1 > 0 and self.c2 > 0):
                raise ValueError("tail constants c1, c2 must be > 0")
            if self.tag == "btm_site_weights" and not 0 <= self.a <= 1:
                raise ValueError(f"BTM asymmetry a must lie in [0, 1], got {self.a}")
        else:
            raise ValueError(f"unknown environment law {self.tag!r}")
        if self.speed_mode not in ("variable", "constant", "explicit"):
            raise ValueError(f"unknown speed mode {self.speed_mode!r}")

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, c: float = 1.0, speed_mode: SpeedMode = "variable") -> "EnvironmentLaw":
        return cls("constant", c=c, speed_mode=speed_mode)

    @classmethod
    def elliptic_iid(cls, dist: ValueDist) -> "EnvironmentLaw":
        return cls("elliptic_iid", dist=dist)

    @classmethod
    def percolating_iid(cls, p: float, dist: ValueDist) -> "EnvironmentLaw":
        return cls("percolating_iid", p=p, dist=dist)

    @classmethod
    def heavy_tail_conductance(cls, beta: float, c1: float = 1.0, c2: float = 1.0) -> "EnvironmentLaw":
        return cls("heavy_tail_conductance", beta=beta, c1=c1, c2=c2, speed_mode="constant")

    @classmethod
    def btm_site_weights(cls, beta: float, a: float, c1: float = 1.0, c2: float = 1.0) -> "EnvironmentLaw":
        return cls("btm_site_weights", beta=beta, a=a, c1=c1, c2=c2, speed_mode="explicit")

    @property
    def is_btm(self) -> bool:
        return self.tag == "btm_site_weights"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"tag": self.tag}
        if self.tag == "constant":
            out.update(c=self.c, speed_mode=self.speed_mode)
        elif self.tag == "elliptic_iid":
            out.update(dist=self.dist.to_dict())
        elif self.tag == "percolating_iid":
            out.update(p=self.p, dist=self.dist.to_dict())
        else:
            out.update(beta=self.beta, c1=self.c1, c2=self.c2)
            if self.is_btm:
                out.update(a=self.a)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentLaw":
        d = dict(d)
        tag = d.pop("tag")
        if "dist" in d:
            d["dist"] = ValueDist.from_dict(d["dist"])
        builders = {
            "constant": cls.constant,
            "elliptic_iid": cls.elliptic_iid,
            "percolating_iid": cls.percolating_iid,
            "heavy_tail_conductance": cls.heavy_tail_conductance,
            "btm_site_weights": cls.btm_site_weights,
        }
        if tag not in builders:
            raise ValueError(f"unknown environment law {tag!r}")
        return builders[tag](**d)


def bernoulli_percolation_law(p: float, positive_value_dist: ValueDist) -> EnvironmentLaw:
    """Each bond is closed (weight 0) with probability 1 - p, else a positive draw."""
    if not 0 < p <= 1:
        raise ValueError(f"open-bond probability must lie in (0, 1], got {p}")
    if p == 1 and positive_value_dist.kind == "constant":
        return EnvironmentLaw.constant(positive_value_dist.params[0])
    if p == 1:
        return EnvironmentLaw.elliptic_iid(positive_value_dist) if positive_value_dist.essinf > 0 else \
            EnvironmentLaw.percolating_iid(1.0, positive_value_dist)
    return EnvironmentLaw.percolating_iid(p, positive_value_dist)


@dataclass(eq=False)
class Environment:
    """Weights on a torus.

    ``bond_weights`` is indexed in the lattice bond order; ``site_weights``
    holds the speed measure nu. For the trap model ``alpha`` and ``a`` are the
    source of truth: the stored bonds carry the symmetric part
    ``(alpha_x alpha_y)**a`` and nu = alpha, which reproduces the oriented
    rates ``alpha_x**(a-1) * alpha_y**a``.
    """

    torus: Torus
    bond_weights: np.ndarray
    site_weights: np.ndarray
    speed_mode: SpeedMode = "variable"
    alpha: np.ndarray | None = None
    a: float | None = None
    law: EnvironmentLaw | None = None
    seed: int | None = None
    _nb: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.bond_weights = np.ascontiguousarray(self.bond_weights, dtype=float)
        self.site_weights = np.ascontiguousarray(self.site_weights, dtype=float)
        if self.bond_weights.shape != (self.torus.n_bonds,):
            raise ValueError("bond_weights has the wrong length for the torus")
        if self.site_weights.shape != (self.torus.n_sites,):
            raise ValueError("site_weights has the wrong length for the torus")
        if np.any(~np.isfinite(self.bond_weights)) or np.any(self.bond_weights < 0):
            raise ValueError("bond weights must be finite and >= 0")
        if np.any(~(self.site_weights > 0)) or np.any(~np.isfinite(self.site_weights)):
            raise ValueError("site weights must be finite and > 0")
        if self.alpha is not None:
            self.alpha = np.ascontiguousarray(self.alpha, dtype=float)

    @classmethod
    def from_conductances(cls, torus: Torus, bond_weights, speed_mode: SpeedMode = "variable",
                          site_weights=None, **kw) -> "Environment":
        w = np.asarray(bond_weights, dtype=float)
        if speed_mode == "variable":
            nu = np.ones(torus.n_sites)
        elif speed_mode == "constant":
            nu = incident_weight_sum(torus, w)
            if np.any(nu == 0):
                raise ValueError("constant-speed mode is undefined on sites whose incident weights are all zero; "
                                 "use variable speed")
        else:
            if site_weights is None:
                raise ValueError("explicit speed mode needs site_weights")
            nu = site_weights
        return cls(torus, w, nu, speed_mode, **kw)

    @classmethod
    def from_trap_weights(cls, torus: Torus, alpha, a: float, **kw) -> "Environment":
        alpha = np.asarray(alpha, dtype=float)
        if np.any(~(alpha > 0)):
            raise ValueError("trap weights must be > 0")
        ends = torus.bonds()
        w = (alpha[ends[:, 0]] * alpha[ends[:, 1]]) ** a
        return cls(torus, w, alpha.copy(), "explicit", alpha=alpha, a=float(a), **kw)

    @property
    def is_btm(self) -> bool:
        return self.alpha is not None

    @property
    def neighbor_table(self) -> np.ndarray:
        if self._nb is None:
            self._nb = self.torus.neighbor_table()
        return self._nb

    def incident_weights(self) -> np.ndarray:
        """``w[x, k]``: weight of the bond from x to its k-th neighbour."""
        return self.bond_weights[self.torus.incident_bonds()]

    def oriented_rates(self) -> np.ndarray:
        """``r[x, k]``: jump rate from x to its k-th neighbour."""
        if self.is_btm:
            nb = self.neighbor_table
            al = self.alpha
            return al[:, None] ** (self.a - 1.0) * al[nb] ** self.a
        return self.incident_weights() / self.site_weights[:, None]

    def equals(self, other: "Environment") -> bool:
        same_alpha = (self.alpha is None and other.alpha is None) or (
            self.alpha is not None and other.alpha is not None and np.array_equal(self.alpha, other.alpha))
        return (self.torus == other.torus and self.speed_mode == other.speed_mode and same_alpha
                and np.array_equal(self.bond_weights, other.bond_weights)
                and np.array_equal(self.site_weights, other.site_weights))


def incident_weight_sum(torus: Torus, bond_weights: np.ndarray) -> np.ndarray:
    return np.asarray(bond_weights)[torus.incident_bonds()].sum(axis=1)


def sample_environment(law: EnvironmentLaw, torus: Torus, seed: int) -> Environment:
    """Draw an environment; weight i depends only on ``(seed, i)``."""
    if law.tag == "percolating_iid" and law.p <= BOND_PC.get(torus.d, 0.0):
        if not (law.p == 1.0 and torus.d == 1):
            raise ValueError(f"p = {law.p} does not exceed the bond percolation threshold "
                             f"p_c({torus.d}) = {BOND_PC.get(torus.d)}")
    kw = dict(law=law, seed=seed)
    if law.tag == "constant":
        w = np.full(torus.n_bonds, float(law.c))
        return Environment.from_conductances(torus, w, law.speed_mode, **kw)
    if law.is_btm:
        u = rng.chunked_uniform(seed, torus.n_sites, "alpha")
        alpha = np.ceil(ValueDist("pareto", (law.beta, law.c1, law.c2)).ppf(u))
        return Environment.from_trap_weights(torus, alpha, law.a, **kw)
    u = rng.chunked_uniform(seed, torus.n_bonds, "bond-value")
    if law.tag == "heavy_tail_conductance":
        w = ValueDist("pareto", (law.beta, law.c1, law.c2)).ppf(u)
        return Environment.from_conductances(torus, w, "constant", **kw)
    w = law.dist.ppf(u)
    if law.tag == "percolating_iid":
        open_u = rng.chunked_uniform(seed, torus.n_bonds, "bond-open")
        w = np.where(open_u < law.p, w, 0.0)
    return Environment.from_conductances(torus, w, law.speed_mode, **kw)


def translate_environment(env: Environment, z: Sequence[int]) -> Environment:
    """tau_z: the environment seen from site z, ``w'(x, y) = w(x + z, y + z)``."""
    tor = env.torus
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (tor.d,):
        raise ValueError(f"shift must have {tor.d} components")
    axes = tuple(range(tor.d))
    shift = tuple(int(-s) for s in z)

    def roll_sites(arr):
        return np.roll(arr.reshape(tor.shape), shift, axis=axes).ravel()

    bonds = env.bond_weights.reshape((tor.d,) + tor.shape)
    bonds = np.roll(bonds, shift, axis=tuple(range(1, tor.d + 1))).ravel()
    return replace(env, bond_weights=bonds, site_weights=roll_sites(env.site_weights),
                   alpha=None if env.alpha is None else roll_sites(env.alpha), _nb=None)


# serialization -------------------------------------------------------------

def save_environment(env: Environment, path) -> None:
    """Write the header-JSON + float64 payload format to a path or binary file object.

    Layout: ``RWSIMENV`` magic, little-endian uint32 header length, UTF-8
    JSON header, then bond weights, site weights and (trap model only)
    alpha as little-endian float64 arrays in lattice order.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "torus": {"d": env.torus.d, "L": env.torus.L},
        "law": None if env.law is None else env.law.to_dict(),
        "seed": env.seed,
        "speed_mode": env.speed_mode,
        "a": env.a,
        "arrays": ["bond_weights", "site_weights"] + (["alpha"] if env.is_btm else []),
        "dtype": "<f8",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_MAGIC, struct.pack("<I", len(blob)), blob]
    parts += [np.asarray(getattr(env, name), dtype="<f8").tobytes() for name in header["arrays"]]
    if hasattr(path, "write"):
        path.write(b"".join(parts))
        return
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_environment(path: str | Path) -> Environment:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not an environment file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported environment format version {header['format_version']}")
        torus = Torus(**header["torus"])
        sizes = {"bond_weights": torus.n_bonds, "site_weights": torus.n_sites, "alpha": torus.n_sites}
        arrays = {name: np.frombuffer(fh.read(8 * sizes[name]), dtype="<f8").astype(float)
                  for name in header["arrays"]}
    law = None if header["law"] is None else EnvironmentLaw.from_dict(header["law"])
    return Environment(torus, arrays["bond_weights"], arrays["site_weights"], header["speed_mode"],
                       alpha=arrays.get("alpha"), a=header["a"], law=law, seed=header["seed"])
