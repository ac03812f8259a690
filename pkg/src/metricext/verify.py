"""Validators and brute-force oracles.

Everything here reads matrices directly or recomputes values by an
independent route; nothing calls back into the extension pipeline except
through the black-box operator arguments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import PreconditionError
from .sjoin import FunctionTable, Leaf, SJPoint, canonicalize


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_violation: float = 0.0
    witness: tuple = ()


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)
    tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        checks = sorted(self.checks + other.checks, key=lambda c: c.name)
        return VerificationReport(checks, max(self.tolerance, other.tolerance))

    def to_dict(self) -> dict:
        return {
            "checks": [
                {"name": c.name, "pass": c.passed, "worst": c.worst_violation, "witness": list(c.witness)}
                for c in self.checks
            ],
            "tolerance": self.tolerance,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), default=_jsonable, **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        checks = [
            CheckResult(c["name"], bool(c["pass"]), float(c["worst"]), tuple(c["witness"]))
            for c in data["checks"]
        ]
        return cls(checks, float(data["tolerance"]))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (tuple, frozenset, set)):
        return list(obj)
    return str(obj)


# --- pseudometric axioms ---------------------------------------------------------


@numba.njit(cache=True, fastmath=True)
def _min_plus_gap(m, mt, upper):
    """Largest ``m[i,k] - min_j (m[i,j] + m[j,k])`` and its ``(i, k)``; ``mt`` is ``m`` transposed.

    Four running minima keep the inner loop free of a serial dependency.
    With ``upper`` only ``k >= i`` is scanned, which suffices for symmetric ``m``.
    """
    n = m.shape[0]
    worst = -np.inf
    wi, wk = 0, 0
    for i in range(n):
        row = m[i]
        for k in range(i if upper else 0, n):
            col = mt[k]
            s0 = np.inf
            s1 = np.inf
            s2 = np.inf
            s3 = np.inf
            j = 0
            while j + 4 <= n:
                s0 = min(s0, row[j] + col[j])
                s1 = min(s1, row[j + 1] + col[j + 1])
                s2 = min(s2, row[j + 2] + col[j + 2])
                s3 = min(s3, row[j + 3] + col[j + 3])
                j += 4
            while j < n:
                s0 = min(s0, row[j] + col[j])
                j += 1
            gap = m[i, k] - min(min(s0, s1), min(s2, s3))
            if gap > worst:
                worst = gap
                wi, wk = i, k
    return worst, wi, wk


def triangle_scan(m: np.ndarray) -> tuple[float, tuple[int, int, int]]:
    """Worst ``m[i,k] - m[i,j] - m[j,k]`` over all ``n^3`` triples and where it occurs."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.shape[0] == 0:
        return 0.0, ()
    worst, i, k = _min_plus_gap(m, np.ascontiguousarray(m.T), bool(np.array_equal(m, m.T)))
    # recompute the witness and its value exactly, outside the fast-math kernel
    j = int(np.argmin(m[i] + m[:, k]))
    return float(m[i, k] - m[i, j] - m[j, k]), (int(i), j, int(k))


def check_pseudometric(m, tol: float = 1e-9) -> VerificationReport:
    """Symmetry (exact), zero diagonal, nonnegativity and every triangle inequality."""
    if isinstance(m, FunctionTable):
        ids, values = m.ids, m.values
    else:
        values = np.asarray(m, dtype=float)
        ids = tuple(range(len(values)))
    n = len(values)
    checks = []

    asym = np.abs(values - values.T)
    if n:
        i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
        worst = float(asym[i, j])
    else:
        i = j = 0
        worst = 0.0
    checks.append(CheckResult("symmetry", worst == 0.0, worst, (ids[i], ids[j]) if worst else ()))

    diag = np.abs(np.diag(values))
    worst = float(diag.max()) if n else 0.0
    i = int(np.argmax(diag)) if n else 0
    checks.append(CheckResult("zero_diagonal", worst <= tol, worst, (ids[i],) if worst > tol else ()))

    worst = float(-values.min()) if n else 0.0
    worst = max(0.0, worst)
    if worst > tol:
        i, j = np.unravel_index(int(np.argmin(values)), values.shape)
        witness = (ids[i], ids[j])
    else:
        witness = ()
    checks.append(CheckResult("nonnegativity", worst <= tol, worst, witness))

    worst, (i, j, k) = triangle_scan(values) if n else (0.0, (0, 0, 0))
    worst = max(0.0, worst)
    checks.append(CheckResult("triangle", worst <= tol, worst, (ids[i], ids[j], ids[k]) if worst > tol else ()))
    return VerificationReport(checks, tol)


def check_metric_positivity(m, tol: float = 0.0) -> CheckResult:
    """Off-diagonal entries strictly above ``tol``."""
    if isinstance(m, FunctionTable):
        ids, values = m.ids, m.values
    else:
        values = np.asarray(m, dtype=float)
        ids = tuple(range(len(values)))
    off = values + np.where(np.eye(len(values), dtype=bool), np.inf, 0.0)
    if off.size == 0 or len(values) < 2:
        return CheckResult("metric_positivity", True, 0.0, ())
    i, j = np.unravel_index(int(np.argmin(off)), off.shape)
    low = float(off[i, j])
    ok = low > tol
    return CheckResult("metric_positivity", ok, 0.0 if ok else tol - low, () if ok else (ids[i], ids[j]))


# --- operators as black boxes ---------------------------------------------------


def check_regular_operator(
    op: Callable[[np.ndarray], np.ndarray],
    size: int,
    sample_count: int = 100,
    tol: float = 1e-9,
    seed: int = 0,
) -> VerificationReport:
    """Linearity, positivity, unit preservation and sup-norm bound on random inputs.

    ``op`` maps a ``size x size`` array to an array; witnesses name the sample index.
    """
    rng = np.random.default_rng(seed)
    lin = pos = nrm = 0.0
    lin_w = pos_w = nrm_w = ()
    for k in range(sample_count):
        p = rng.uniform(-1.0, 1.0, (size, size))
        q = rng.uniform(-1.0, 1.0, (size, size)) * rng.uniform(0.1, 10.0)
        alpha, beta = rng.uniform(-3.0, 3.0, 2)
        tp, tq = np.asarray(op(p)), np.asarray(op(q))
        combo = np.asarray(op(alpha * p + beta * q))
        r = float(np.max(np.abs(combo - alpha * tp - beta * tq)))
        if r > lin:
            lin, lin_w = r, ("sample", k)

        r = max(0.0, float(-np.asarray(op(np.abs(p))).min()))
        if r > pos:
            pos, pos_w = r, ("sample", k)

        r = float(np.max(np.abs(tp))) - float(np.max(np.abs(p)))
        if r > nrm:
            nrm, nrm_w = r, ("sample", k)

    unit = float(np.max(np.abs(np.asarray(op(np.ones((size, size)))) - 1.0)))
    return VerificationReport(
        [
            CheckResult("linearity", lin <= tol, lin, lin_w if lin > tol else ()),
            CheckResult("positivity", pos <= tol, pos, pos_w if pos > tol else ()),
            CheckResult("unit", unit <= tol, unit, ("unit",) if unit > tol else ()),
            CheckResult("norm", nrm <= tol, nrm, nrm_w if nrm > tol else ()),
        ],
        tol,
    )


def check_locality(
    op: Callable[[np.ndarray], np.ndarray],
    x_ids: Sequence,
    y_ids: Sequence,
    y,
    y2,
    mask: Sequence,
    trials: int = 20,
    tol: float = 1e-12,
    seed: int = 0,
    required: Sequence | None = None,
) -> VerificationReport:
    """Functions agreeing on ``mask x mask`` must give the same value at ``(y, y2)``.

    ``required`` is the set the mask has to contain (the base points plus the
    supports of ``h(y)`` and ``h(y2)``); a smaller mask is a caller error.
    """
    mask = list(mask)
    if required is not None:
        missing = set(required) - set(mask)
        if missing:
            raise PreconditionError(f"mask misses required points {sorted(map(str, missing))}")
    rng = np.random.default_rng(seed)
    xi = {x: i for i, x in enumerate(x_ids)}
    yi = {v: i for i, v in enumerate(y_ids)}
    pos = [xi[x] for x in mask]
    inside = np.zeros((len(x_ids), len(x_ids)), dtype=bool)
    inside[np.ix_(pos, pos)] = True
    worst, witness = 0.0, ()
    bounded = 0.0
    for k in range(trials):
        p = rng.uniform(-1.0, 1.0, inside.shape)
        wild = p + rng.uniform(-100.0, 100.0, inside.shape)
        q = np.where(inside, p, wild)
        a = float(np.asarray(op(p))[yi[y], yi[y2]])
        b = float(np.asarray(op(q))[yi[y], yi[y2]])
        if abs(a - b) > worst:
            worst, witness = abs(a - b), ("trial", k, y, y2)
        # |p| <= 1 on the mask bounds the value, whatever p does elsewhere
        bounded = max(bounded, abs(b) - 1.0)
    return VerificationReport(
        [
            CheckResult("locality", worst <= tol, worst, witness if worst > tol else ()),
            CheckResult("local_bound", bounded <= tol, max(bounded, 0.0), ("pair", y, y2) if bounded > tol else ()),
        ],
        tol,
    )


# --- nets --------------------------------------------------------------------


def _flat_depth1(points: Sequence[SJPoint], index: dict) -> np.ndarray:
    rows = []
    for u in points:
        u = canonicalize(u)
        if isinstance(u, Leaf):
            rows.append((index[u.id], index[u.id], 0.0))
        elif isinstance(u.left, Leaf) and isinstance(u.right, Leaf):
            rows.append((index[u.left.id], index[u.right.id], u.t))
        else:
            raise ValueError("net check handles points of depth at most 1")
    return np.array(rows, dtype=float).reshape(-1, 3)


def depth1_distances(values: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Lift of ``values`` between two batches of ``(x, y, t)`` rows, straight from the four-term rule."""
    x, y, t = a[:, 0].astype(int)[:, None], a[:, 1].astype(int)[:, None], a[:, 2][:, None]
    x2, y2, t2 = b[:, 0].astype(int)[None, :], b[:, 1].astype(int)[None, :], b[:, 2][None, :]
    return (
        np.minimum(1 - t, 1 - t2) * values[x, x2]
        + np.maximum(0.0, t2 - t) * values[x, y2]
        + np.maximum(0.0, t - t2) * values[y, x2]
        + np.minimum(t, t2) * values[y, y2]
    )


def check_net(points: Sequence[SJPoint], p: FunctionTable, eps: float, samples: int = 10_000, seed: int = 0) -> VerificationReport:
    """Every sampled depth-1 point lies within ``eps`` (strictly) of some listed point."""
    rng = np.random.default_rng(seed)
    n = len(p.ground)
    sample = np.column_stack([
        rng.integers(n, size=samples),
        rng.integers(n, size=samples),
        rng.random(samples),
    ]).astype(float)
    if not points:
        x = p.ground.ids[int(sample[0, 0])]
        y = p.ground.ids[int(sample[0, 1])]
        return VerificationReport(
            [CheckResult("net", False, float("inf"), (x, y, float(sample[0, 2])))], eps
        )
    net = _flat_depth1(points, p.ground.index)
    worst, witness = -np.inf, ()
    for start in range(0, samples, 2000):
        chunk = sample[start:start + 2000]
        gap = depth1_distances(p.values, chunk, net).min(axis=1)
        k = int(np.argmax(gap))
        if gap[k] > worst:
            worst = float(gap[k])
            row = chunk[k]
            witness = (p.ground.ids[int(row[0])], p.ground.ids[int(row[1])], float(row[2]))
    ok = worst < eps
    return VerificationReport(
        [CheckResult("net", ok, 0.0 if ok else worst - eps, () if ok else witness)], eps
    )
