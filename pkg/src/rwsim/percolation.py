"""Open-bond clusters, the giant-cluster proxy and the cluster density."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .environment import Environment
from .lattice import Torus


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _union_find_labels(n_sites, ends, is_open):
    parent = np.arange(n_sites)
    for b in range(ends.shape[0]):
        if not is_open[b]:
            continue
        ra = _find(parent, ends[b, 0])
        rb = _find(parent, ends[b, 1])
        if ra == rb:
            continue
        # the smaller index becomes the root, so roots are class minima
        if ra < rb:
            parent[rb] = ra
        else:
            parent[ra] = rb
    labels = np.empty(n_sites, dtype=np.int64)
    for x in range(n_sites):
        labels[x] = _find(parent, x)
    return labels


@dataclass
class ClusterLabeling:
    """Connected components of the graph of bonds with positive weight.

    Each class is labelled by its smallest site index; isolated sites are
    singleton classes. ``giant_id`` is the label of the largest class, ties
    going to the lowest label.
    """

    label: np.ndarray
    giant_id: int
    sizes: dict[int, int]

    @property
    def in_giant(self) -> np.ndarray:
        return self.label == self.giant_id

    @property
    def giant_sites(self) -> np.ndarray:
        return np.flatnonzero(self.in_giant)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)


def label_clusters(env: Environment) -> ClusterLabeling:
    tor = env.torus
    labels = _union_find_labels(tor.n_sites, tor.bonds(), env.bond_weights > 0)
    ids, counts = np.unique(labels, return_counts=True)
    # np.unique sorts ids, so argmax picks the lowest label among ties
    giant = int(ids[np.argmax(counts)])
    return ClusterLabeling(labels, giant, {int(i): int(c) for i, c in zip(ids, counts)})


def full_labeling(torus: Torus) -> ClusterLabeling:
    """Labeling in which every site belongs to the giant cluster (Omega_0 = Omega)."""
    return ClusterLabeling(np.zeros(torus.n_sites, dtype=np.int64), 0, {0: torus.n_sites})


def cluster_density(labeling: ClusterLabeling) -> float:
    """Fraction of torus sites in the giant cluster."""
    return labeling.sizes[labeling.giant_id] / labeling.label.size


def empirical_measure(labeling: ClusterLabeling, torus: Torus, n: int,
                      f: Callable[[np.ndarray], np.ndarray], support_radius: float | None = None) -> float:
    """``n**-d * sum_{x in giant} f(x / n)`` using centered representatives.

    ``f`` maps an array of points of shape ``(m, d)`` to ``m`` values. When
    ``support_radius`` (sup-norm) is given it must fit inside the torus.
    """
    if support_radius is not None and n * support_radius >= torus.L / 2:
        raise ValueError("test function support exceeds the torus")
    pts = torus.all_centered()[labeling.in_giant] / n
    return float(np.sum(f(pts))) / n**torus.d


def crossing_probability(p: float, L: int, trials: int, seed: int) -> float:
    """Monte Carlo probability of a left-right open crossing of an L x L box.

    Bonds are open independently with probability p; the box has free
    boundaries. Used to bracket the planar bond threshold.
    """
    from . import rng

    gen = rng.generator(seed, L, label=f"crossing-{p!r}")
    ix = np.arange(L * L).reshape(L, L)
    horiz = np.stack([ix[:, :-1].ravel(), ix[:, 1:].ravel()], axis=1)
    vert = np.stack([ix[:-1, :].ravel(), ix[1:, :].ravel()], axis=1)
    ends = np.concatenate([horiz, vert])
    hits = 0
    for _ in range(trials):
        labels = _union_find_labels(L * L, ends, gen.random(len(ends)) < p)
        hits += bool(np.intersect1d(labels[ix[:, 0]], labels[ix[:, -1]]).size)
    return hits / trials


def labeling_table(labeling: ClusterLabeling) -> list[tuple[int, int, int]]:
    """Rows ``(site, label, in_giant)`` for CSV export."""
    ing = labeling.in_giant
    return [(int(x), int(labeling.label[x]), int(ing[x])) for x in range(labeling.label.size)]
