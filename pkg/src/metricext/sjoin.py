"""Squeezed-join trees and the lift of functions from X x X to SJ^n(X) x SJ^n(X).

An element of the iterated squeezed join is stored as a binary tree whose
leaves are ground-point ids and whose internal nodes carry a mixing
parameter ``t``.  The lift ``sj(p)`` of a function ``p`` is evaluated by the
four-term convex rule implemented in :func:`magic_formula`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence, Union

import numpy as np

from .errors import DegenerateInputError, DomainError

PointId = Hashable


@dataclass(frozen=True)
class GroundSpace:
    """An ordered finite set of point ids."""

    ids: tuple
    labels: tuple | None = None
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = tuple(self.ids)
        object.__setattr__(self, "ids", ids)
        index = {x: i for i, x in enumerate(ids)}
        if len(index) != len(ids):
            raise DomainError("ground-point ids must be distinct")
        if self.labels is not None and len(self.labels) != len(ids):
            raise DomainError("labels must match ids one to one")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, x) -> bool:
        return x in self.index

    def __iter__(self):
        return iter(self.ids)

    def position(self, x) -> int:
        try:
            return self.index[x]
        except KeyError:
            raise KeyError(f"unknown ground-point id {x!r}") from None


@dataclass(frozen=True, eq=False)
class FunctionTable:
    """A real function on ``ground x ground`` stored as a dense matrix."""

    ground: GroundSpace
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        n = len(self.ground)
        if values.shape != (n, n):
            raise DomainError(f"expected a {n}x{n} matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("function table has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_matrix(cls, ids: Sequence, matrix) -> "FunctionTable":
        return cls(GroundSpace(tuple(ids)), np.asarray(matrix, dtype=float))

    def __call__(self, x, y) -> float:
        idx = self.ground.index
        return float(self.values[idx[x], idx[y]])

    @property
    def ids(self) -> tuple:
        return self.ground.ids

    @property
    def norm(self) -> float:
        """Sup norm ``max |p(x, y)|``."""
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def restrict(self, ids: Iterable) -> "FunctionTable":
        ids = tuple(ids)
        pos = [self.ground.position(x) for x in ids]
        return FunctionTable(GroundSpace(ids), self.values[np.ix_(pos, pos)])

    def flags(self, tol: float = 0.0) -> dict[str, bool]:
        """Which of the pseudometric axioms the table satisfies (checked, never assumed)."""
        m = self.values
        return {
            "symmetric": bool(np.array_equal(m, m.T)),
            "zero_diagonal": bool(np.all(np.abs(np.diag(m)) <= tol)),
            "nonnegative": bool(np.all(m >= -tol)),
            "triangle": worst_triangle_excess(m) <= tol,
        }

    def is_pseudometric(self, tol: float = 0.0) -> bool:
        return all(self.flags(tol).values())

    def is_metric(self, tol: float = 0.0) -> bool:
        m = self.values
        off = ~np.eye(len(m), dtype=bool)
        return self.is_pseudometric(tol) and bool(np.all(m[off] > tol))


def worst_triangle_excess(m: np.ndarray) -> float:
    """Largest ``m[i,k] - m[i,j] - m[j,k]`` over all triples (0 for fewer than 2 points)."""
    n = len(m)
    worst = 0.0
    for j in range(n):
        excess = m - (m[:, j, None] + m[None, j, :])
        worst = max(worst, float(excess.max()))
    return worst


# --- trees -----------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    id: PointId

    @property
    def depth(self) -> int:
        return 0

    def __repr__(self) -> str:
        return f"Leaf({self.id!r})"


@dataclass(frozen=True)
class Join:
    """The point ``[left, right; t]``: ``t = 0`` is ``left``, ``t = 1`` is ``right``."""

    left: "SJPoint"
    right: "SJPoint"
    t: float
    depth: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        t = float(self.t)
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"mixing parameter t={self.t!r} is outside [0, 1]")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "depth", 1 + max(self.left.depth, self.right.depth))

    def __repr__(self) -> str:
        return f"Join({self.left!r}, {self.right!r}, {self.t!r})"


SJPoint = Union[Leaf, Join]


def canonicalize(u: SJPoint) -> SJPoint:
    """Normal form under ``[x,y;0]=x``, ``[x,y;1]=y`` and ``[x,x;t]=x``.

    The depth of a tree fixes the level SJ^n its root lives in, so a node
    below the root is collapsed only when that leaves its parent's depth
    unchanged; otherwise the parent would be read as a different point.
    The root itself may always collapse, since ``[a,b;0]`` and ``a`` have the
    same lift against every other point.
    """
    return _canon(u, keep_depth=False)


def _canon(u: SJPoint, keep_depth: bool) -> SJPoint:
    if isinstance(u, Leaf):
        return u
    if not keep_depth:
        if u.t == 0.0:
            return _canon(u.left, False)
        if u.t == 1.0:
            return _canon(u.right, False)
    left = _canon(u.left, False)
    right = _canon(u.right, False)
    if not keep_depth and left == right:
        return left
    if 1 + max(left.depth, right.depth) < u.depth:
        # the deep child has to keep its depth for this node to stay at its level
        if u.left.depth == u.depth - 1:
            left = _canon(u.left, True)
        else:
            right = _canon(u.right, True)
    if left is u.left and right is u.right:
        return u
    return Join(left, right, u.t)


def support(u: SJPoint) -> frozenset:
    """Ground ids the lift at ``u`` depends on (branches with zero weight are skipped)."""
    if isinstance(u, Leaf):
        return frozenset((u.id,))
    if u.t == 0.0:
        return support(u.left)
    if u.t == 1.0:
        return support(u.right)
    return support(u.left) | support(u.right)


def leaves(u: SJPoint) -> list:
    """Leaf ids of the raw tree, left to right (repeats kept)."""
    if isinstance(u, Leaf):
        return [u.id]
    return leaves(u.left) + leaves(u.right)


def relabel(u: SJPoint, mapping) -> SJPoint:
    """Apply ``mapping`` to every leaf id (the functor SJ applied to a map of ground sets)."""
    if isinstance(u, Leaf):
        return Leaf(mapping(u.id))
    return Join(relabel(u.left, mapping), relabel(u.right, mapping), u.t)


# --- the lift ----------------------------------------------------------------


def _check_unit(t: float, name: str) -> None:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"{name}={t!r} is outside [0, 1]")


def magic_coefficients(t: float, t2: float) -> tuple[float, float, float, float]:
    """Weights of ``(q_xx, q_xy, q_yx, q_yy)``; nonnegative and summing to 1."""
    _check_unit(t, "t")
    _check_unit(t2, "t2")
    return (min(1.0 - t, 1.0 - t2), max(0.0, t2 - t), max(0.0, t - t2), min(t, t2))


def magic_formula(q_xx: float, q_xy: float, q_yx: float, q_yy: float, t: float, t2: float) -> float:
    """Value of the lift on ``[x,y;t]`` and ``[x',y';t2]`` given the four corner values."""
    c_xx, c_xy, c_yx, c_yy = magic_coefficients(t, t2)
    return c_xx * q_xx + c_xy * q_xy + c_yx * q_yx + c_yy * q_yy


def sj_eval(p: FunctionTable, u: SJPoint, v: SJPoint) -> float:
    """Evaluate the iterated lift of ``p`` at ``(u, v)``.

    The shallower argument ``w`` is read as ``[w, w; 0]`` one level up, which is
    how SJ^(k-1) sits inside SJ^k.  Subtree pairs are memoised, so the cost is
    the product of the two tree sizes.
    """
    values = p.values
    index = p.ground.index
    memo: dict[tuple[int, int], float] = {}

    def lookup(x, y) -> float:
        try:
            return values[index[x], index[y]]
        except KeyError as exc:
            raise KeyError(f"unknown ground-point id {exc.args[0]!r}") from None

    def ev(a: SJPoint, b: SJPoint) -> float:
        key = (id(a), id(b))
        hit = memo.get(key)
        if hit is not None:
            return hit
        da, db = a.depth, b.depth
        if da == 0 and db == 0:
            r = float(lookup(a.id, b.id))
        elif da < db:
            # [a,a;0] against [x',y';t']: only the two x-row coefficients survive
            r = (1.0 - b.t) * ev(a, b.left) + b.t * ev(a, b.right)
        elif da > db:
            r = (1.0 - a.t) * ev(a.left, b) + a.t * ev(a.right, b)
        else:
            r = magic_formula(
                ev(a.left, b.left), ev(a.left, b.right),
                ev(a.right, b.left), ev(a.right, b.right),
                a.t, b.t,
            )
        memo[key] = r
        return r

    return ev(u, v)


def sj_pair_weights(u: SJPoint, v: SJPoint) -> dict[tuple, float]:
    """The lift at ``(u, v)`` as a linear form: ``sj(p)(u, v) = sum c[x, y] * p(x, y)``.

    Computed by the same recursion as :func:`sj_eval` but carrying coefficient
    dictionaries instead of numbers, so one call serves every ``p``.
    """
    memo: dict[tuple[int, int], dict] = {}

    def combine(parts):
        out: dict = {}
        for c, form in parts:
            if c == 0.0:
                continue
            for k, w in form.items():
                out[k] = out.get(k, 0.0) + c * w
        return out

    def ev(a: SJPoint, b: SJPoint) -> dict:
        key = (id(a), id(b))
        hit = memo.get(key)
        if hit is not None:
            return hit
        da, db = a.depth, b.depth
        if da == 0 and db == 0:
            r = {(a.id, b.id): 1.0}
        elif da < db:
            r = combine([(1.0 - b.t, ev(a, b.left)), (b.t, ev(a, b.right))])
        elif da > db:
            r = combine([(1.0 - a.t, ev(a.left, b)), (a.t, ev(a.right, b))])
        else:
            c = magic_coefficients(a.t, b.t)
            r = combine([
                (c[0], ev(a.left, b.left)), (c[1], ev(a.left, b.right)),
                (c[2], ev(a.right, b.left)), (c[3], ev(a.right, b.right)),
            ])
        memo[key] = r
        return r

    return ev(u, v)


def base_weights(u: SJPoint) -> list[tuple[PointId, float]]:
    """Convex weights ``w_i`` on ground points with ``sj(p)(u, x) = sum w_i p(x_i, x)``."""
    out: dict = {}

    def walk(a: SJPoint, scale: float) -> None:
        if isinstance(a, Leaf):
            out[a.id] = out.get(a.id, 0.0) + scale
            return
        walk(a.left, scale * (1.0 - a.t))
        walk(a.right, scale * a.t)

    walk(canonicalize(u), 1.0)
    return list(out.items())


# --- nets and sampling ---------------------------------------------------------


def greedy_net(p: FunctionTable, radius: float) -> list:
    """Ids ``A`` with ``min_a p(x, a) < radius`` for every ``x``; scan order is the ground order."""
    chosen: list[int] = []
    m = p.values
    for i in range(len(p.ground)):
        if not chosen or min(m[i, j] for j in chosen) >= radius:
            chosen.append(i)
    return [p.ground.ids[i] for i in chosen]


def unit_interval_net(radius: float) -> list[float]:
    """Uniform grid ``k/m`` on [0, 1], endpoints included, spacing ``1/m <= radius``."""
    if radius <= 0:
        raise DomainError("net radius must be positive")
    m = max(1, math.ceil(1.0 / radius))
    return [k / m for k in range(m + 1)]


def epsilon_net(p: FunctionTable, eps: float) -> list[SJPoint]:
    """A finite set of depth-1 points within ``eps`` of every depth-1 point under ``sj(p)``.

    Pairs from an ``eps/4``-net of ``(X, p)`` are joined at the parameters of an
    ``eps/(4 ||p||)``-net of [0, 1].  Canonically equal points are listed once.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    norm = p.norm
    if norm == 0.0:
        raise DegenerateInputError("epsilon_net needs a pseudometric with nonzero norm")
    if eps > norm:
        # every value of sj(p) is at most ||p|| < eps
        return [Leaf(p.ground.ids[0])]
    anchors = greedy_net(p, eps / 4.0)
    grid = unit_interval_net(eps / (4.0 * norm))
    seen: set = set()
    net: list[SJPoint] = []
    for x in anchors:
        for y in anchors:
            for t in grid:
                point = canonicalize(Join(Leaf(x), Leaf(y), t))
                if point not in seen:
                    seen.add(point)
                    net.append(point)
    return net


def random_point(ids: Sequence, depth: int, rng: np.random.Generator, t_grid: Sequence[float] | None = None) -> SJPoint:
    """A random tree of depth at most ``depth`` (not canonicalised)."""
    if depth == 0 or rng.random() < 0.2:
        return Leaf(ids[rng.integers(len(ids))])
    t = float(rng.choice(t_grid)) if t_grid is not None else float(rng.random())
    return Join(
        random_point(ids, depth - 1, rng, t_grid),
        random_point(ids, depth - 1, rng, t_grid),
        t,
    )
