"""Random finite metric data for property tests and the demo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import cdist

from .extension import GroupAction
from .nerve import AmbientSpace
from .sjoin import FunctionTable


def euclidean_metric(n: int, rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    pts = rng.random((n, dim))
    d = cdist(pts, pts)
    # cdist is not bitwise symmetric in general
    return np.triu(d, 1) + np.triu(d, 1).T


def graph_metric(n: int, rng: np.random.Generator, density: float = 0.4) -> np.ndarray:
    """Shortest-path metric of a random connected weighted graph."""
    w = rng.uniform(0.1, 1.0, (n, n))
    w = np.triu(w, 1)
    keep = np.triu(rng.random((n, n)) < density, 1)
    chain = np.zeros((n, n), dtype=bool)
    chain[np.arange(n - 1), np.arange(1, n)] = True
    w = np.where(keep | chain, w, 0.0)
    d = shortest_path(w + w.T, directed=False)
    return np.triu(d, 1) + np.triu(d, 1).T


def random_metric(n: int, rng: np.random.Generator) -> np.ndarray:
    if rng.random() < 0.5:
        return euclidean_metric(n, rng, dim=int(rng.integers(1, 4)))
    return graph_metric(n, rng)


def random_pseudometric(n: int, rng: np.random.Generator) -> np.ndarray:
    """A metric on a random quotient of the points, pulled back (so it may vanish off the diagonal)."""
    k = int(rng.integers(1, n + 1))
    classes = rng.integers(k, size=n)
    base = random_metric(k, rng) * rng.uniform(0.2, 3.0)
    return base[np.ix_(classes, classes)]


@dataclass(frozen=True, eq=False)
class Instance:
    space: AmbientSpace
    p: FunctionTable
    metric_p: bool


def random_instance(rng: np.random.Generator, max_size: int = 30, metric_p: bool | None = None) -> Instance:
    n = int(rng.integers(3, max_size + 1))
    ids = tuple(f"y{i}" for i in range(n))
    nx = int(rng.integers(2, n))
    xs = tuple(sorted(rng.choice(n, size=nx, replace=False)))
    space = AmbientSpace.from_matrix(ids, random_metric(n, rng), [ids[i] for i in xs])
    if metric_p is None:
        metric_p = bool(rng.random() < 0.5)
    pm = random_metric(nx, rng) * rng.uniform(0.2, 3.0) if metric_p else random_pseudometric(nx, rng)
    return Instance(space, FunctionTable.from_matrix(space.subset_X, pm), metric_p)


def _symmetrize_by_group(m: np.ndarray, elements) -> np.ndarray:
    out = np.zeros_like(m)
    for g in elements:
        gi = list(g)
        out += m[np.ix_(gi, gi)]
    out = out / len(elements)
    return np.triu(out, 1) + np.triu(out, 1).T


@dataclass(frozen=True, eq=False)
class InvariantInstance:
    space: AmbientSpace
    p: FunctionTable
    group: GroupAction


def random_invariant_instance(rng: np.random.Generator, kind: str = "cyclic", max_size: int = 16) -> InvariantInstance:
    """Y with a cyclic or swap group preserving X, and invariant ``d`` and metric ``p``.

    Invariance is obtained by averaging a random metric over the group; an
    average of metrics is again a metric.
    """
    n = int(rng.integers(4, max_size + 1))
    ids = tuple(f"y{i}" for i in range(n))
    nx = int(rng.integers(2, n - 1))
    xs, ext = list(range(nx)), list(range(nx, n))
    perm = list(range(n))
    if kind == "cyclic":
        # one rotation on X and one on the exterior
        for block in (xs, ext):
            for i, v in enumerate(block):
                perm[v] = block[(i + 1) % len(block)]
    elif kind == "swap":
        for block in (xs, ext):
            for i in range(0, len(block) - 1, 2):
                perm[block[i]], perm[block[i + 1]] = block[i + 1], block[i]
    else:
        raise ValueError(f"unknown group kind {kind!r}")
    group = GroupAction.generated_by(ids, [[ids[i] for i in perm]])
    d = _symmetrize_by_group(random_metric(n, rng), group.elements)
    space = AmbientSpace.from_matrix(ids, d, [ids[i] for i in xs])
    full = np.zeros((n, n))
    full[:nx, :nx] = random_metric(nx, rng)
    pm = _symmetrize_by_group(full, group.elements)[:nx, :nx]
    return InvariantInstance(space, FunctionTable.from_matrix(space.subset_X, pm), group)
