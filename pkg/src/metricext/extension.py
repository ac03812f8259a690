"""Regular operators extending functions (and (pseudo)metrics) from X x X to Y x Y.

For each level ``n`` a point ``y`` is sent to ``f_n(y) = [h(y), q_n(y); chi_n(y)]``
where ``h`` maps Y into SJ^inf(X), ``q_n`` maps Y into SJ^inf(U_n) through the
nerve of a fine cover ``U_n``, and ``chi_n`` measures how far ``y`` is from X.
A function ``p`` on X is first extended to ``X + U_n`` by :func:`e_n`, lifted
to SJ^inf, and read off at ``(f_n(y), f_n(y'))``.  The operator is the
weighted sum of the levels ``1..N``.

Two evaluation routes exist.  :func:`t_n` / :func:`extend_reference` walk the
trees with :func:`~metricext.sjoin.sj_eval`.  :class:`ExtensionOperator`
precomputes everything that does not depend on ``p`` (the h-h lift as a
linear form, the base weights of ``h``, and the lift of the cover-set
indicator between ``q_n`` trees); applying it to ``p`` is then a few array
operations.  Both routes agree to rounding.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DegenerateInputError, ValidationError
from .nerve import (
    AmbientSpace,
    Cover,
    PartitionOfUnity,
    anchor_cover,
    borges_map_h,
    build_cover,
    partition_of_unity,
    simplex_to_sj,
    whitney_radius,
)
from .sjoin import (
    FunctionTable,
    GroundSpace,
    Join,
    Leaf,
    SJPoint,
    base_weights,
    canonicalize,
    magic_formula,
    relabel,
    sj_eval,
    sj_pair_weights,
)

log = logging.getLogger(__name__)

X_TAG = "X"
U_TAG = "U"


def default_radius_schedule(n: int) -> float:
    """Ball radius at level ``n``; cover sets then have diameter below ``2^-n``."""
    return 2.0 ** (-n - 1)


@dataclass(frozen=True)
class ExtensionConfig:
    """Parameters of the operator.

    ``a``/``b`` and ``truncation_N`` may be left ``None`` and are then chosen
    from the data (see :func:`resolve_base_points`, :func:`default_truncation`).
    ``exterior_radius=None`` uses balls of radius ``d(c, X)/2`` for the cover
    of ``Y - X`` that defines ``h``.  ``unit_diagonal`` sets the value of the
    intermediate extension on equal cover sets to ``(p(a,a) + p(b,b))/2``
    rather than 0; the two agree on every pseudometric.
    """

    a: object = None
    b: object = None
    truncation_N: int | None = None
    tolerance: float = 1e-9
    radius_schedule: Callable[[int], float] = default_radius_schedule
    normalize_weights: bool = True
    exterior_radius: float | None = None
    unit_diagonal: bool = True

    def __post_init__(self):
        if self.a is not None and self.b is not None and self.a == self.b:
            raise ConfigError("base points a and b must be distinct")
        if self.truncation_N is not None and self.truncation_N < 1:
            raise ConfigError("truncation_N must be at least 1")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if self.exterior_radius is not None and not self.exterior_radius > 0:
            raise ConfigError("exterior_radius must be positive")

    def level_weights(self, N: int) -> list[float]:
        raw = [2.0 ** (-n) for n in range(1, N + 1)]
        if self.normalize_weights:
            total = 1.0 - 2.0 ** (-N)
            return [w / total for w in raw]
        return raw


def resolve_base_points(space: AmbientSpace, p: FunctionTable | None = None, tol: float = 1e-9) -> tuple:
    """The pair of X-points at largest ``p``-distance when ``p`` is a metric, else largest ``d``-distance."""
    xs = space.subset_X
    if len(xs) < 2:
        raise DegenerateInputError("X needs at least two points")
    if p is not None and p.restrict(xs).is_metric(tol):
        score = lambda a, b: p(a, b)
    else:
        score = space.dist
    return max(itertools.combinations(xs, 2), key=lambda ab: score(*ab))


def with_base_points(config: ExtensionConfig, space: AmbientSpace, p: FunctionTable | None = None) -> ExtensionConfig:
    if config.a is not None and config.b is not None:
        for z in (config.a, config.b):
            if not space.in_x(z):
                raise ConfigError(f"base point {z!r} is not in X")
        return config
    a, b = resolve_base_points(space, p, config.tolerance)
    return replace(config, a=a, b=b)


# --- the stages ------------------------------------------------------------------


def chi(space: AmbientSpace, h: dict, y) -> float:
    """``min_x d(y, x) + sj(d_X)(h(y), x)``; zero exactly on X."""
    if space.in_x(y):
        return 0.0
    dx = space.d.restrict(space.subset_X)
    return min(space.dist(y, x) + sj_eval(dx, h[y], Leaf(x)) for x in space.subset_X)


def chi_n(chi_value: float, n: int) -> float:
    return min(1.0, n * chi_value)


def default_truncation(space: AmbientSpace, chis: dict, radius_schedule=default_radius_schedule) -> int:
    """Smallest ``N`` such that every pair off X has a level where the positivity floor applies.

    Needs ``N * chi(y) >= 1`` for every ``y`` off X and ``d(y, y') > 4 r_N`` for
    every pair of distinct points, where ``r_N`` is the level-``N`` ball radius.
    """
    sep = space.min_separation()
    n_sep = 1
    while not 4.0 * radius_schedule(n_sep) < sep:
        n_sep += 1
        if n_sep > 2000:
            raise ConfigError("radius schedule never drops below the point separation")
    n_chi = 1
    for y in space.exterior:
        c = chis[y]
        k = max(1, math.ceil(1.0 / c))
        while k > 1 and (k - 1) * c >= 1.0:
            k -= 1
        while k * c < 1.0:
            k += 1
        n_chi = max(n_chi, k)
    return max(n_sep, n_chi)


def tag_x(x):
    return (X_TAG, x)


def tag_u(u):
    return (U_TAG, u)


def e_n(p: FunctionTable, a, b, cover_ids: Sequence, unit_diagonal: bool = True) -> FunctionTable:
    """Extend ``p`` from X to the disjoint union of X and the cover sets.

    X x X keeps ``p``; a point ``x`` against any cover set gets
    ``(p(x,a) + p(x,b))/2`` in either order; distinct cover sets get ``p(a,b)``;
    a cover set against itself gets ``(p(a,a) + p(b,b))/2`` (or 0 when
    ``unit_diagonal`` is off).
    """
    if a == b:
        raise ConfigError("base points a and b must be distinct")
    xs = p.ids
    ia, ib = p.ground.position(a), p.ground.position(b)
    m = p.values
    nx, nu = len(xs), len(cover_ids)
    out = np.empty((nx + nu, nx + nu))
    out[:nx, :nx] = m
    mixed = 0.5 * (m[:, ia] + m[:, ib])
    out[:nx, nx:] = mixed[:, None]
    out[nx:, :nx] = mixed[None, :]
    out[nx:, nx:] = m[ia, ib]
    diag = 0.5 * (m[ia, ia] + m[ib, ib]) if unit_diagonal else 0.0
    out[np.arange(nx, nx + nu), np.arange(nx, nx + nu)] = diag
    ids = tuple(tag_x(x) for x in xs) + tuple(tag_u(u) for u in cover_ids)
    return FunctionTable(GroundSpace(ids), out)


def f_n(space: AmbientSpace, h: dict, q: dict, chi_value: float, y) -> SJPoint:
    """``[h(y), q_n(y); chi_n(y)]`` over the tagged union, canonicalised."""
    return canonicalize(Join(relabel(h[y], tag_x), relabel(q[y], tag_u), chi_value))


@dataclass(frozen=True)
class Level:
    n: int
    radius: float
    cover: Cover
    pou: PartitionOfUnity
    q: dict
    chi_n: dict


def _level_structure(space: AmbientSpace, radius: float) -> tuple[Cover, PartitionOfUnity, dict]:
    cover = build_cover(space, space.ids, radius)
    pou = partition_of_unity(space, cover)
    labels = {u: Leaf(u) for u in cover.set_ids}
    q = {y: simplex_to_sj(pou.nerve_point(y), labels) for y in space.ids}
    return cover, pou, q


@dataclass(frozen=True, eq=False)
class ExtensionPipeline:
    """Everything the operator needs that does not depend on ``p``.

    Covers are built for the levels up to the first one whose balls are
    singletons (radius at most the smallest separation); every finer level
    shares that singleton structure and differs only through ``chi_n``.
    """

    space: AmbientSpace
    config: ExtensionConfig
    exterior_cover: Cover | None
    h: dict
    chi: dict
    levels: tuple
    weights: np.ndarray

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def active_levels(self) -> range:
        """Levels whose weight is a nonzero double (2^-n underflows past n ~ 1074)."""
        last = int(np.flatnonzero(self.weights)[-1]) + 1 if np.any(self.weights) else 0
        return range(1, last + 1)

    @classmethod
    def build(cls, space: AmbientSpace, config: ExtensionConfig) -> "ExtensionPipeline":
        if len(space.subset_X) < 2:
            raise DegenerateInputError("X needs at least two points")
        if config.a is None or config.b is None:
            config = with_base_points(config, space)
        exterior = space.exterior
        if exterior:
            radius = config.exterior_radius if config.exterior_radius is not None else whitney_radius(space)
            ext_cover = anchor_cover(space, build_cover(space, exterior, radius))
            h = borges_map_h(space, ext_cover)
        else:
            ext_cover = None
            h = {x: Leaf(x) for x in space.ids}
        chis = {y: chi(space, h, y) for y in space.ids}
        N = config.truncation_N or default_truncation(space, chis, config.radius_schedule)
        sep = space.min_separation()
        levels = []
        for n in range(1, N + 1):
            r = config.radius_schedule(n)
            cover, pou, q = _level_structure(space, r)
            levels.append(Level(n, r, cover, pou, q, {y: chi_n(chis[y], n) for y in space.ids}))
            if r <= sep:
                break
        config = replace(config, truncation_N=N)
        log.debug("pipeline: |Y|=%d |X|=%d N=%d a=%r b=%r", len(space.ids), len(space.subset_X), N, config.a, config.b)
        weights = np.array(config.level_weights(N))
        return cls(space, config, ext_cover, h, chis, tuple(levels), weights)

    def level(self, n: int) -> Level:
        if not 1 <= n <= self.N:
            raise IndexError(f"level {n} outside 1..{self.N}")
        if n <= len(self.levels):
            return self.levels[n - 1]
        r = self.config.radius_schedule(n)
        chis = {y: chi_n(c, n) for y, c in self.chi.items()}
        if r <= self.space.min_separation():
            last = self.levels[-1]
            return Level(n, r, last.cover, last.pou, last.q, chis)
        cover, pou, q = _level_structure(self.space, r)
        return Level(n, r, cover, pou, q, chis)

    def f(self, n: int, y) -> SJPoint:
        lv = self.level(n)
        return f_n(self.space, self.h, lv.q, lv.chi_n[y], y)

    def locality_set(self, y, y2) -> frozenset:
        """``{a, b}`` plus the supports of ``h(y)`` and ``h(y2)``."""
        from .sjoin import support

        return frozenset((self.config.a, self.config.b)) | support(self.h[y]) | support(self.h[y2])

    def positivity_floor(self, y, y2, p_ab: float) -> tuple[float, int | None]:
        """Lower bound on ``T(p)(y, y2)`` for a metric ``p`` and the level that gives it.

        For ``y`` in X and ``y2`` off X: ``w_n p(a,b)/2`` at the first ``n`` with
        ``n chi(y2) >= 1``.  For two distinct points off X:
        ``w_n min(chi_n(y), chi_n(y2)) p(a,b)`` at the first ``n`` with
        ``d(y, y2) > 4 r_n``.  Returns ``(0, None)`` when no level up to N qualifies.
        """
        sp = self.space
        if sp.in_x(y2) and not sp.in_x(y):
            y, y2 = y2, y
        if y == y2 or (sp.in_x(y) and sp.in_x(y2)):
            return 0.0, None
        if sp.in_x(y):
            c = self.chi[y2]
            n = next((k for k in range(max(1, int(1.0 / c) - 1), self.N + 1) if k * c >= 1.0), None)
            if n is None:
                return 0.0, None
            return self.weights[n - 1] * 0.5 * p_ab, n
        dist = sp.dist(y, y2)
        for n in range(1, self.N + 1):
            if dist > 4.0 * self.config.radius_schedule(n):
                low = min(chi_n(self.chi[y], n), chi_n(self.chi[y2], n))
                return self.weights[n - 1] * low * p_ab, n
        return 0.0, None

    def floors_available(self) -> bool:
        ids = self.space.ids
        return all(
            self.positivity_floor(y, z, 1.0)[1] is not None
            for i, y in enumerate(ids) for z in ids[i + 1:]
            if not (self.space.in_x(y) and self.space.in_x(z))
        )


def t_n(p: FunctionTable, pipeline: ExtensionPipeline, n: int, y, y2) -> float:
    """Level-``n`` value at ``(y, y2)`` by walking the trees.

    The outer join of ``f_n`` is evaluated with the four-term rule on its two
    halves, so the depth of ``h`` and ``q_n`` never shifts the outer parameter.
    """
    cfg = pipeline.config
    lv = pipeline.level(n)
    table = e_n(p.restrict(pipeline.space.subset_X), cfg.a, cfg.b, lv.cover.set_ids, cfg.unit_diagonal)
    h, q = pipeline.h, lv.q
    hy, hz = relabel(h[y], tag_x), relabel(h[y2], tag_x)
    qy, qz = relabel(q[y], tag_u), relabel(q[y2], tag_u)
    return magic_formula(
        sj_eval(table, hy, hz), sj_eval(table, hy, qz),
        sj_eval(table, qy, hz), sj_eval(table, qy, qz),
        lv.chi_n[y], lv.chi_n[y2],
    )


# --- results ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExtendedTable:
    values: np.ndarray
    ids: tuple
    provenance: dict = field(default_factory=dict)
    tail_bound: float = 0.0

    def table(self) -> FunctionTable:
        return FunctionTable.from_matrix(self.ids, self.values)

    def __call__(self, y, z) -> float:
        return float(self.values[self.ids.index(y), self.ids.index(z)])


def _provenance(pipeline: ExtensionPipeline, **extra) -> dict:
    cfg = pipeline.config
    out = {
        "a": cfg.a,
        "b": cfg.b,
        "N": pipeline.N,
        "weights": list(pipeline.weights),
        "normalize_weights": cfg.normalize_weights,
        "unit_diagonal": cfg.unit_diagonal,
        "tolerance": cfg.tolerance,
        "d_scale": pipeline.space.scale,
        "distinct_levels": len(pipeline.levels),
    }
    out.update(extra)
    return out


def _tail_bound(pipeline: ExtensionPipeline, p_norm: float) -> float:
    return 0.0 if pipeline.config.normalize_weights else 2.0 ** (-pipeline.N) * p_norm


def _x_matrix(p: FunctionTable, space: AmbientSpace) -> np.ndarray:
    try:
        return p.restrict(space.subset_X).values
    except KeyError as exc:
        raise ValidationError(f"p is not defined on X: {exc}") from None


def extend_reference(p: FunctionTable, space: AmbientSpace, config: ExtensionConfig | None = None) -> ExtendedTable:
    """The operator evaluated pair by pair through :func:`t_n` (slow; for cross-checks)."""
    config = with_base_points(config or ExtensionConfig(), space, p)
    pipeline = ExtensionPipeline.build(space, config)
    ids = space.ids
    out = np.zeros((len(ids), len(ids)))
    for n in pipeline.active_levels:
        w = pipeline.weights[n - 1]
        for i, y in enumerate(ids):
            for j, z in enumerate(ids):
                out[i, j] += w * t_n(p, pipeline, n, y, z)
    return ExtendedTable(out, ids, _provenance(pipeline, route="reference"), _tail_bound(pipeline, p.norm))


# --- fast route -----------------------------------------------------------------


class ExtensionOperator:
    """The operator with all ``p``-independent work done once.

    ``apply`` takes an ``|X| x |X|`` array in ``space.subset_X`` order and
    returns the ``|Y| x |Y|`` array in ``space.ids`` order.
    """

    def __init__(self, pipeline: ExtensionPipeline):
        self.pipeline = pipeline
        space = pipeline.space
        cfg = pipeline.config
        ids, xs = space.ids, space.subset_X
        ny, nx = len(ids), len(xs)
        xpos = {x: i for i, x in enumerate(xs)}
        self.ia, self.ib = xpos[cfg.a], xpos[cfg.b]
        self.unit_diagonal = cfg.unit_diagonal

        # sj(p)(h(y), x) = sum_x' W[y, x'] p(x', x)
        self.base = np.zeros((ny, nx))
        for i, y in enumerate(ids):
            for x, w in base_weights(pipeline.h[y]):
                self.base[i, xpos[x]] += w

        # sj(p)(h(y), h(z)) as a linear form in p
        self.hh = np.zeros((ny, ny, nx, nx))
        for i, y in enumerate(ids):
            for j in range(i, ny):
                z = ids[j]
                for (u, v), c in sj_pair_weights(pipeline.h[y], pipeline.h[z]).items():
                    self.hh[i, j, xpos[u], xpos[v]] += c
                if j != i:
                    self.hh[j, i] = self.hh[i, j].T

        ext = [i for i, y in enumerate(ids) if not space.in_x(y)]
        active = pipeline.active_levels
        self.weights = pipeline.weights[: len(active)]
        self.chi0 = np.array([pipeline.chi[y] for y in ids])
        self.chis = np.minimum(1.0, np.arange(1, len(active) + 1)[:, None] * self.chi0[None, :])
        # levels with their own cover; the rest share the singleton cover
        self.same_set = [self._same_set(lv, ids, ext) for lv in pipeline.levels[: len(active)]]
        self.singleton_D = np.zeros((ny, ny))
        self.singleton_D[np.ix_(ext, ext)] = np.eye(len(ext))

    @staticmethod
    def _same_set(lv: Level, ids, ext) -> np.ndarray:
        """Lift of the indicator ``[U == V]`` between ``q_n(y)`` and ``q_n(z)`` for y, z off X."""
        ny = len(ids)
        D = np.zeros((ny, ny))
        if lv.cover.is_singletons():
            D[np.ix_(ext, ext)] = np.eye(len(ext))
            return D
        set_ids = lv.cover.set_ids
        delta = FunctionTable(GroundSpace(set_ids), np.eye(len(set_ids)))
        for a, i in enumerate(ext):
            for j in ext[a:]:
                D[i, j] = D[j, i] = sj_eval(delta, lv.q[ids[i]], lv.q[ids[j]])
        return D

    def _pieces(self, p: np.ndarray):
        hh = np.einsum("ijab,ab->ij", self.hh, p)
        g = 0.5 * (p[:, self.ia] + p[:, self.ib])
        hq = self.base @ g
        pab = p[self.ia, self.ib]
        diag = 0.5 * (p[self.ia, self.ia] + p[self.ib, self.ib]) if self.unit_diagonal else 0.0
        return hh, hq, pab, diag

    @staticmethod
    def _combine(c: np.ndarray, hh, hq, qq) -> np.ndarray:
        """Outer four-term rule; ``c`` has shape ``(..., |Y|)``."""
        ci, cj = c[..., :, None], c[..., None, :]
        return (
            np.minimum(1.0 - ci, 1.0 - cj) * hh
            + np.maximum(0.0, cj - ci) * hq[:, None]
            + np.maximum(0.0, ci - cj) * hq[None, :]
            + np.minimum(ci, cj) * qq
        )

    def level_value(self, p: np.ndarray, n: int) -> np.ndarray:
        """The level-``n`` operator applied to ``p``."""
        p = np.asarray(p, dtype=float)
        hh, hq, pab, diag = self._pieces(p)
        D = self.same_set[n - 1] if n <= len(self.same_set) else self.singleton_D
        c = np.minimum(1.0, n * self.chi0)
        return self._combine(c, hh, hq, pab * (1.0 - D) + diag * D)

    def apply(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        hh, hq, pab, diag = self._pieces(p)
        total = np.zeros_like(hh)
        for k, D in enumerate(self.same_set):
            total += self.weights[k] * self._combine(self.chis[k], hh, hq, pab * (1.0 - D) + diag * D)
        D = self.singleton_D
        qq = pab * (1.0 - D) + diag * D
        for start in range(len(self.same_set), len(self.weights), 128):
            stop = min(start + 128, len(self.weights))
            block = self._combine(self.chis[start:stop], hh, hq, qq)
            total += np.tensordot(self.weights[start:stop], block, axes=1)
        if np.array_equal(p, p.T):
            # the formula is symmetric; remove rounding asymmetry
            total = np.triu(total) + np.triu(total, 1).T
        return total

    __call__ = apply

    def matrix(self) -> np.ndarray:
        """The operator as a ``(|Y|^2, |X|^2)`` matrix acting on row-major flattened inputs."""
        nx = len(self.pipeline.space.subset_X)
        cols = []
        for k in range(nx * nx):
            e = np.zeros(nx * nx)
            e[k] = 1.0
            cols.append(self.apply(e.reshape(nx, nx)).ravel())
        return np.column_stack(cols)


@lru_cache(maxsize=16)
def build_operator(space: AmbientSpace, config: ExtensionConfig) -> ExtensionOperator:
    return ExtensionOperator(ExtensionPipeline.build(space, config))


def extend(
    p: FunctionTable,
    space: AmbientSpace,
    config: ExtensionConfig | None = None,
    *,
    require_metric: bool = False,
) -> ExtendedTable:
    """Extend ``p`` from X x X to Y x Y.

    With ``require_metric`` the input must be a metric and the truncation deep
    enough for the positivity floor to apply to every pair.
    """
    config = with_base_points(config or ExtensionConfig(), space, p)
    if require_metric and not p.restrict(space.subset_X).is_metric(config.tolerance):
        raise ValidationError("p is not a metric on X")
    op = build_operator(space, config)
    if require_metric and not op.pipeline.floors_available():
        raise ConfigError("truncation_N is too small for the metric floor to reach every pair")
    values = op.apply(_x_matrix(p, space))
    return ExtendedTable(values, space.ids, _provenance(op.pipeline), _tail_bound(op.pipeline, p.norm))


# --- group actions ------------------------------------------------------------


@dataclass(frozen=True)
class GroupAction:
    """A finite group acting on Y by permutations.

    ``elements[k][i]`` is the index of the image of ``ids[i]`` under element ``k``.
    """

    ids: tuple
    elements: tuple

    @classmethod
    def from_permutations(cls, ids: Sequence, perms: Sequence[Sequence]) -> "GroupAction":
        ids = tuple(ids)
        pos = {y: i for i, y in enumerate(ids)}
        elements = []
        for perm in perms:
            if len(perm) != len(ids):
                raise ValidationError(f"permutation {list(perm)!r} has the wrong length")
            try:
                elements.append(tuple(pos[z] for z in perm))
            except KeyError as exc:
                raise ValidationError(f"unknown id {exc.args[0]!r} in permutation", (exc.args[0],)) from None
        return cls(ids, tuple(elements))

    @classmethod
    def generated_by(cls, ids: Sequence, generators: Sequence[Sequence]) -> "GroupAction":
        """Closure of the given permutations (as id lists) under composition."""
        ids = tuple(ids)
        gens = cls.from_permutations(ids, generators).elements
        identity = tuple(range(len(ids)))
        found = {identity: None}
        frontier = [identity]
        while frontier:
            nxt = []
            for g in frontier:
                for s in gens:
                    gs = tuple(s[i] for i in g)
                    if gs not in found:
                        found[gs] = None
                        nxt.append(gs)
            frontier = nxt
        return cls(ids, tuple(found))

    @classmethod
    def trivial(cls, ids: Sequence) -> "GroupAction":
        ids = tuple(ids)
        return cls(ids, (tuple(range(len(ids))),))

    def __len__(self) -> int:
        return len(self.elements)

    def validate(self, space: AmbientSpace) -> None:
        if tuple(space.ids) != self.ids:
            raise ValidationError("group acts on a different id list")
        n = len(self.ids)
        elems = set(self.elements)
        for g in self.elements:
            if sorted(g) != list(range(n)):
                raise ValidationError(f"{self._names(g)} is not a permutation")
        if tuple(range(n)) not in elems:
            raise ValidationError("group lacks the identity")
        for g in self.elements:
            inv = [0] * n
            for i, gi in enumerate(g):
                inv[gi] = i
            if tuple(inv) not in elems:
                raise ValidationError(f"inverse of {self._names(g)} missing")
            for h in self.elements:
                if tuple(g[h[i]] for i in range(n)) not in elems:
                    raise ValidationError("group is not closed under composition")
        xs = {space.ground.position(x) for x in space.subset_X}
        for g in self.elements:
            moved = [self.ids[i] for i in xs if g[i] not in xs]
            if moved:
                raise ValidationError(f"{self._names(g)} moves X off itself", tuple(moved))

    def _names(self, g) -> str:
        return "[" + ", ".join(str(self.ids[i]) for i in g) + "]"

    def invariance_defect(self, values: np.ndarray, positions: Sequence[int] | None = None) -> tuple[float, tuple]:
        """Largest ``|m(gi, gj) - m(i, j)|``; ``positions`` restricts to a sub-block (e.g. X)."""
        idx = list(range(len(self.ids))) if positions is None else [int(k) for k in positions]
        block = set(idx)
        base = values[np.ix_(idx, idx)]
        worst, witness = 0.0, ()
        for g in self.elements:
            gi = [g[k] for k in idx]
            if not block.issuperset(gi):
                raise ValidationError("element does not preserve the index block")
            diff = np.abs(values[np.ix_(gi, gi)] - base)
            k = int(np.argmax(diff)) if diff.size else 0
            if diff.size and diff.flat[k] > worst:
                worst = float(diff.flat[k])
                r, c = np.unravel_index(k, diff.shape)
                witness = (self.ids[idx[r]], self.ids[idx[c]])
        return worst, witness

    def average(self, values: np.ndarray) -> np.ndarray:
        """``(1/|G|) sum_g m(g y, g y')``."""
        total = np.zeros_like(values)
        for g in self.elements:
            gi = list(g)
            total += values[np.ix_(gi, gi)]
        return total / len(self.elements)


def _check_invariant_on_x(p: FunctionTable, space: AmbientSpace, group: GroupAction, tol: float) -> np.ndarray:
    pm = _x_matrix(p, space)
    xpos = [space.ground.position(x) for x in space.subset_X]
    full = np.zeros((len(space.ids),) * 2)
    full[np.ix_(xpos, xpos)] = pm
    worst, witness = group.invariance_defect(full, xpos)
    if worst > tol:
        raise ValidationError(f"p is not invariant under the group (defect {worst:.3g})", witness)
    return pm


def equivariant_extend(
    p: FunctionTable,
    space: AmbientSpace,
    group: GroupAction,
    config: ExtensionConfig | None = None,
) -> ExtendedTable:
    """Group average of :func:`extend`; invariant whenever ``p`` is."""
    group.validate(space)
    config = with_base_points(config or ExtensionConfig(), space, p)
    pm = _check_invariant_on_x(p, space, group, config.tolerance)
    op = build_operator(space, config)
    values = group.average(op.apply(pm))
    prov = _provenance(op.pipeline, group_order=len(group))
    return ExtendedTable(values, space.ids, prov, _tail_bound(op.pipeline, p.norm))


def collapsed_distance(d: np.ndarray, x_positions: Sequence[int]) -> np.ndarray:
    """``min(d(y, y'), d(y, X) + d(y', X))``: a pseudometric vanishing on X x X."""
    to_x = d[:, list(x_positions)].min(axis=1)
    return np.minimum(d, to_x[:, None] + to_x[None, :])


def near_isometric_extend(
    p: FunctionTable,
    space: AmbientSpace,
    group: GroupAction,
    eps: float,
    config: ExtensionConfig | None = None,
) -> ExtendedTable:
    """Invariant extension with norm at most ``1 + eps`` that keeps metrics metric off X.

    Adds ``p(a,b)`` times the collapsed distance built from ``d`` rescaled to
    sup norm ``eps/2``.
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    config = with_base_points(config or ExtensionConfig(), space, p)
    group.validate(space)
    d = space.d.values
    worst, witness = group.invariance_defect(d)
    if worst > config.tolerance:
        raise ValidationError(f"ambient distance is not invariant (defect {worst:.3g})", witness)
    base = equivariant_extend(p, space, group, config)
    scale = 0.5 * eps / space.d.norm
    xpos = [space.ground.position(x) for x in space.subset_X]
    collapsed = collapsed_distance(d * scale, xpos)
    p_ab = p(config.a, config.b)
    values = base.values + p_ab * collapsed
    prov = dict(base.provenance, eps=eps, collapsed_scale=scale, p_ab=p_ab)
    return ExtendedTable(values, space.ids, prov, base.tail_bound)
