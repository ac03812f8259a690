"""Finite covers, partitions of unity and the maps from nerve simplices into SJ^inf.

The ambient space ``Y`` is a finite metric space; ``X`` is a subset of it.
Covers are metric balls, partitions of unity are normalised tent functions,
and a point of the nerve is turned into a squeezed-join tree by repeatedly
splitting it into a boundary point and the simplex barycenter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .errors import DegenerateInputError, DomainError, ValidationError
from .sjoin import FunctionTable, GroundSpace, Join, Leaf, SJPoint, canonicalize

BARYCENTRIC_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AmbientSpace:
    """A finite metric space ``Y`` with a distinguished subset ``X``.

    ``d`` is stored divided by ``scale`` so that its sup norm is at most 1.
    """

    d: FunctionTable
    subset_X: tuple
    scale: float = 1.0
    _in_x: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        subset = tuple(self.subset_X)
        object.__setattr__(self, "subset_X", subset)
        missing = [x for x in subset if x not in self.d.ground]
        if missing:
            raise ValidationError(f"subset ids not in Y: {missing!r}", tuple(missing))
        if len(set(subset)) != len(subset):
            raise ValidationError("subset ids repeat")
        object.__setattr__(self, "_in_x", frozenset(subset))

    @classmethod
    def from_matrix(cls, ids: Sequence, matrix, subset: Sequence, tol: float = 1e-9) -> "AmbientSpace":
        """Validate ``matrix`` as a metric on ``ids`` and normalise it to ``||d|| <= 1``."""
        from .verify import check_pseudometric

        table = FunctionTable.from_matrix(ids, matrix)
        report = check_pseudometric(table, tol)
        for check in report.checks:
            if not check.passed:
                raise ValidationError(
                    f"ambient distance fails {check.name} (worst violation {check.worst_violation:.3g})",
                    check.witness,
                )
        m = table.values
        n = len(m)
        for i in range(n):
            for j in range(i + 1, n):
                if m[i, j] <= tol:
                    raise ValidationError(
                        f"ambient distance vanishes between distinct points {ids[i]!r}, {ids[j]!r}",
                        (ids[i], ids[j]),
                    )
        scale = max(table.norm, 1.0)
        # exact symmetry is required above, so dividing keeps it exact
        normalised = FunctionTable(table.ground, m / scale)
        return cls(normalised, tuple(subset), scale)

    @property
    def ids(self) -> tuple:
        return self.d.ground.ids

    @property
    def ground(self) -> GroundSpace:
        return self.d.ground

    @property
    def exterior(self) -> tuple:
        return tuple(y for y in self.ids if y not in self._in_x)

    def in_x(self, y) -> bool:
        return y in self._in_x

    def dist(self, y, z) -> float:
        return self.d(y, z)

    def dist_to_x(self, y) -> float:
        return min(self.d(y, x) for x in self.subset_X)

    def min_separation(self) -> float:
        """Smallest positive pairwise distance (inf for a single point)."""
        m = self.d.values
        off = m[~np.eye(len(m), dtype=bool)]
        return float(off.min()) if off.size else float("inf")


@dataclass(frozen=True)
class CoverSet:
    set_id: object
    members: tuple
    center: object
    radius: float


@dataclass(frozen=True)
class Cover:
    """A finite family of balls; ``anchors`` maps set ids to points of X once assigned."""

    sets: tuple
    anchors: Mapping | None = None

    def __iter__(self):
        return iter(self.sets)

    def __len__(self) -> int:
        return len(self.sets)

    @property
    def set_ids(self) -> tuple:
        return tuple(s.set_id for s in self.sets)

    def get(self, set_id) -> CoverSet:
        for s in self.sets:
            if s.set_id == set_id:
                return s
        raise KeyError(set_id)

    def containing(self, y) -> list[CoverSet]:
        return [s for s in self.sets if y in s.members]

    def diameter(self, space: AmbientSpace, set_id) -> float:
        members = self.get(set_id).members
        return max((space.dist(a, b) for a in members for b in members), default=0.0)

    def is_singletons(self) -> bool:
        return all(len(s.members) == 1 for s in self.sets)

    def u_map(self, space: AmbientSpace, y) -> frozenset:
        """Anchors of the sets containing ``y``; ``{y}`` for ``y`` in X."""
        if space.in_x(y):
            return frozenset((y,))
        if self.anchors is None:
            raise DomainError("cover has no anchors")
        return frozenset(self.anchors[s.set_id] for s in self.containing(y))


Radius = Union[float, Callable[[object], float]]


def build_cover(space: AmbientSpace, region: Sequence, radius: Radius) -> Cover:
    """Open balls ``{y in region : d(c, y) < r}`` centred at every point ``c`` of ``region``.

    ``radius`` is a number or a function of the center.  Every ball has
    diameter below ``2 r`` and contains its own center, so the cover is
    complete on ``region``.
    """
    region = tuple(region)
    if not region:
        raise DomainError("cannot cover an empty region")
    sets = []
    for c in region:
        r = float(radius(c)) if callable(radius) else float(radius)
        if r <= 0:
            raise DomainError(f"cover radius must be positive, got {r!r} at {c!r}")
        members = tuple(y for y in region if space.dist(c, y) < r)
        sets.append(CoverSet(set_id=c, members=members, center=c, radius=r))
    return Cover(tuple(sets))


def whitney_radius(space: AmbientSpace, factor: float = 0.5) -> Callable[[object], float]:
    """Radius ``factor * d(c, X)``: balls shrink as their centers approach X."""
    return lambda c: factor * space.dist_to_x(c)


def anchor_cover(space: AmbientSpace, cover: Cover) -> Cover:
    """Attach to each set the point of X nearest its center (earliest id on ties)."""
    if not space.subset_X:
        raise DegenerateInputError("X is empty; nothing to anchor to")
    anchors = {}
    for s in cover:
        anchors[s.set_id] = min(space.subset_X, key=lambda x: space.dist(s.center, x))
    return Cover(cover.sets, anchors)


@dataclass(frozen=True)
class PartitionOfUnity:
    """``weights[y]`` maps set ids to the positive weights at ``y``, in cover order."""

    weights: Mapping

    def at(self, y) -> dict:
        return dict(self.weights[y])

    def nerve_point(self, y) -> "NervePoint":
        return NervePoint(tuple(self.weights[y].items()))


def partition_of_unity(space: AmbientSpace, cover: Cover) -> PartitionOfUnity:
    """Normalised tents ``max(0, 1 - d(y, c_U) / r_U)`` over every covered point."""
    points = []
    for s in cover:
        for y in s.members:
            if y not in points:
                points.append(y)
    weights = {}
    for y in points:
        raw = {}
        for s in cover:
            mu = 1.0 - space.dist(y, s.center) / s.radius
            if mu > 0.0:
                raw[s.set_id] = mu
        total = sum(raw.values())
        weights[y] = {k: v / total for k, v in raw.items()}
    return PartitionOfUnity(weights)


@dataclass(frozen=True)
class NervePoint:
    """Barycentric coordinates on a simplex of a nerve; earlier vertices count as smaller."""

    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple((v, float(w)) for v, w in self.coords))

    @classmethod
    def from_mapping(cls, coords: Mapping) -> "NervePoint":
        return cls(tuple(coords.items()))

    @property
    def vertices(self) -> tuple:
        return tuple(v for v, _ in self.coords)

    def as_dict(self) -> dict:
        return dict(self.coords)


def _clean(point: NervePoint, tol: float) -> list[tuple]:
    coords = [(v, w) for v, w in point.coords if w > 0.0]
    if any(w < 0 for _, w in point.coords):
        raise DomainError("barycentric coordinates must be nonnegative")
    total = sum(w for _, w in coords)
    if not coords or abs(total - 1.0) > tol:
        raise DomainError(f"barycentric coordinates sum to {total!r}, not 1")
    return [(v, w / total) for v, w in coords]


def radial_decomposition(point: NervePoint, tol: float = BARYCENTRIC_TOL) -> tuple[float, NervePoint]:
    """Write ``point = (1 - t) * boundary + t * barycenter``.

    ``boundary`` lives on the face spanned by the vertices whose coordinate
    exceeds the minimum; all minimal vertices drop out at once.  For the
    barycenter itself ``t = 1`` and the boundary point is empty.
    """
    coords = _clean(point, tol)
    k1 = len(coords)
    low = min(w for _, w in coords)
    t = min(1.0, k1 * low)
    rest = [(v, w - low) for v, w in coords if w - low > 1e-12]
    if not rest or t >= 1.0:
        return 1.0, NervePoint(())
    total = sum(w for _, w in rest)
    return t, NervePoint(tuple((v, w / total) for v, w in rest))


def simplex_to_sj(point: NervePoint, labels: Mapping, tol: float = BARYCENTRIC_TOL) -> SJPoint:
    """Map a point of a nerve simplex to SJ^inf, vertex ``v`` going to ``labels[v]``.

    The barycenter of each simplex takes the label of its first vertex.
    """
    coords = _clean(point, tol)
    first = coords[0][0]
    if len(coords) == 1:
        return labels[first]
    t, boundary = radial_decomposition(NervePoint(tuple(coords)), tol)
    if not boundary.coords:
        return labels[first]
    return canonicalize(Join(simplex_to_sj(boundary, labels, tol), labels[first], t))


def borges_map_h(space: AmbientSpace, exterior_cover: Cover, pou: PartitionOfUnity | None = None) -> dict:
    """The map ``h: Y -> SJ^inf(X)``: identity on X, nerve composition elsewhere."""
    if exterior_cover.anchors is None:
        raise DomainError("exterior cover must be anchored")
    if pou is None:
        pou = partition_of_unity(space, exterior_cover)
    labels = {sid: Leaf(a) for sid, a in exterior_cover.anchors.items()}
    h = {}
    for y in space.ids:
        if space.in_x(y):
            h[y] = Leaf(y)
        else:
            h[y] = simplex_to_sj(pou.nerve_point(y), labels)
    return h
