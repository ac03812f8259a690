import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricext.errors import DegenerateInputError, DomainError
from metricext.sjoin import (
    FunctionTable,
    Join,
    Leaf,
    base_weights,
    canonicalize,
    epsilon_net,
    magic_coefficients,
    magic_formula,
    random_point,
    sj_eval,
    sj_pair_weights,
    support,
    unit_interval_net,
)
from metricext.sampling import random_metric, random_pseudometric
from metricext.verify import check_net

X3 = ("x0", "x1", "x2")
unit = st.floats(0.0, 1.0, allow_nan=False)


def table(ids, m):
    return FunctionTable.from_matrix(ids, np.asarray(m, dtype=float))


@st.composite
def trees(draw, ids=X3, depth=3):
    if depth == 0 or draw(st.booleans()):
        return Leaf(draw(st.sampled_from(ids)))
    return Join(draw(trees(ids, depth - 1)), draw(trees(ids, depth - 1)), draw(unit))


@st.composite
def functions(draw, n=3):
    vals = draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=n * n, max_size=n * n))
    return table(X3[:n], np.array(vals).reshape(n, n))


# --- canonical form and support -------------------------------------------------


def test_canonicalize_collapses_endpoints_and_diagonal():
    assert canonicalize(Join(Leaf("x0"), Leaf("x1"), 0.0)) == Leaf("x0")
    assert canonicalize(Join(Leaf("x0"), Leaf("x0"), 0.7)) == Leaf("x0")
    assert canonicalize(Join(Leaf("x0"), Leaf("x1"), 1.0)) == Leaf("x1")
    inner = Join(Leaf("x0"), Leaf("x1"), 0.5)
    assert canonicalize(Join(inner, Leaf("x2"), 0.3)) == Join(inner, Leaf("x2"), 0.3)


def test_join_rejects_parameter_outside_unit_interval():
    with pytest.raises(DomainError):
        Join(Leaf("x0"), Leaf("x1"), 1.5)


@given(trees())
def test_canonicalize_is_idempotent(u):
    c = canonicalize(u)
    assert canonicalize(c) == c


def test_support_examples():
    assert support(Leaf("x0")) == {"x0"}
    assert support(Join(Leaf("x0"), Leaf("x1"), 0.3)) == {"x0", "x1"}
    u = Join(Join(Leaf("x0"), Leaf("x1"), 0.5), Leaf("x2"), 0.5)
    assert support(u) == {"x0", "x1", "x2"}


# --- the four-term rule ------------------------------------------------------------


def test_magic_formula_examples():
    assert magic_formula(0, 1, 1, 0, 0.5, 0.5) == 0.0
    assert magic_formula(0, 1, 1, 0, 0.5, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert magic_coefficients(0.5, 0.0) == (0.5, 0.0, 0.5, 0.0)


@given(unit, unit)
def test_magic_coefficients_are_a_partition_of_unity(t, t2):
    c = magic_coefficients(t, t2)
    assert min(c) >= 0.0
    assert abs(sum(c) - 1.0) <= 1e-12


@given(st.floats(-10, 10, allow_nan=False), unit, unit)
def test_magic_formula_constant_corners(q, t, t2):
    assert magic_formula(q, q, q, q, t, t2) == pytest.approx(q, abs=1e-12)


def test_magic_formula_rejects_bad_parameter():
    with pytest.raises(DomainError):
        magic_formula(0, 0, 0, 0, -0.1, 0.2)


# --- the lift -------------------------------------------------------------------


def test_sj_eval_against_a_leaf():
    p = table(("x0", "x1"), [[0, 1], [1, 0]])
    assert sj_eval(p, Join(Leaf("x0"), Leaf("x1"), 0.5), Leaf("x0")) == pytest.approx(0.5)


@given(trees(), trees())
def test_unit_function_lifts_to_one(u, v):
    assert sj_eval(table(X3, np.ones((3, 3))), u, v) == pytest.approx(1.0, abs=1e-12)


@given(trees())
def test_pseudometric_vanishes_on_the_diagonal(u):
    p = table(X3, [[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]])
    assert abs(sj_eval(p, u, u)) <= 1e-12


@given(functions(), trees(), trees())
def test_norm_is_preserved_as_a_bound(p, u, v):
    assert abs(sj_eval(p, u, v)) <= p.norm + 1e-12


@given(functions(), functions(), st.floats(-3, 3), trees(), trees())
def test_lift_is_linear(p, q, c, u, v):
    combo = table(X3, c * p.values + q.values)
    expected = c * sj_eval(p, u, v) + sj_eval(q, u, v)
    assert sj_eval(combo, u, v) == pytest.approx(expected, abs=1e-9)


@given(functions(), trees(), trees())
def test_pair_weights_reproduce_the_lift(p, u, v):
    form = sj_pair_weights(u, v)
    assert sum(form.values()) == pytest.approx(1.0, abs=1e-12)
    assert min(form.values(), default=0.0) >= 0.0
    value = sum(c * p(x, y) for (x, y), c in form.items())
    assert value == pytest.approx(sj_eval(p, u, v), abs=1e-12)


@given(trees(), trees())
def test_lift_depends_only_on_the_canonical_class(u, v):
    p = table(X3, [[0.3, -1, 2], [0.5, 4, 1.5], [-2, 1.5, 0.1]])
    assert sj_eval(p, canonicalize(u), canonicalize(v)) == pytest.approx(sj_eval(p, u, v), abs=1e-12)


@given(functions(), trees(), trees())
def test_symmetric_function_lifts_symmetrically(p, u, v):
    sym = table(X3, p.values + p.values.T)
    assert sj_eval(sym, u, v) == pytest.approx(sj_eval(sym, v, u), abs=1e-12)


@given(trees(), trees(), trees())
@settings(max_examples=200)
def test_lift_of_a_pseudometric_satisfies_the_triangle_inequality(u, v, w):
    p = table(X3, [[0, 1, 0.4], [1, 0, 0.7], [0.4, 0.7, 0]])
    assert sj_eval(p, u, w) <= sj_eval(p, u, v) + sj_eval(p, v, w) + 1e-12


def test_locality_on_supports(rng):
    for _ in range(100):
        u = random_point(X3, 3, rng)
        v = random_point(X3, 3, rng)
        p = rng.uniform(-1, 1, (3, 3))
        inside = np.zeros((3, 3), dtype=bool)
        pos = {x: i for i, x in enumerate(X3)}
        inside[np.ix_([pos[x] for x in support(u)], [pos[x] for x in support(v)])] = True
        q = np.where(inside, p, p + rng.uniform(-50, 50, (3, 3)))
        assert sj_eval(table(X3, p), u, v) == pytest.approx(sj_eval(table(X3, q), u, v), abs=1e-12)


# --- perturbation near a pair of points ---------------------------------------------


def _near(u, region, delta):
    """Membership in the neighbourhood ``[region, delta]`` of depth-1 points."""
    u = canonicalize(u)
    if isinstance(u, Leaf):
        return u.id in region
    x, y, t = u.left.id, u.right.id, u.t
    return (t < delta and x in region) or (t > 1 - delta and y in region) or (x in region and y in region)


@given(
    st.lists(st.floats(0, 3, allow_nan=False), min_size=16, max_size=16),
    st.floats(0.01, 0.5),
    st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), unit), min_size=2, max_size=2),
)
def test_perturbation_near_a_pair_is_controlled(vals, delta, pts):
    ids = ("a", "a1", "b", "b1")
    p = table(ids, np.array(vals).reshape(4, 4))
    ua, ub = {"a", "a1"}, {"b", "b1"}
    eps = max(abs(p(x, y) - p("a", "b")) for x in ua for y in ub) + 1e-12
    (i, j, t), (k, l, s) = pts
    u = Join(Leaf(ids[i]), Leaf(ids[j]), t)
    v = Join(Leaf(ids[k]), Leaf(ids[l]), s)
    if _near(u, ua, delta) and _near(v, ub, delta):
        assert abs(sj_eval(p, u, v) - p("a", "b")) < eps + 3 * delta * p.norm


# --- base weights ------------------------------------------------------------------


def test_base_weight_examples():
    assert base_weights(Leaf("x0")) == [("x0", 1.0)]
    assert dict(base_weights(Join(Leaf("x0"), Leaf("x1"), 0.25))) == {"x0": 0.75, "x1": 0.25}
    u = Join(Join(Leaf("x0"), Leaf("x1"), 0.5), Leaf("x2"), 0.5)
    assert dict(base_weights(u)) == {"x0": 0.25, "x1": 0.25, "x2": 0.5}


@given(functions(), trees(), st.sampled_from(X3))
def test_base_weights_match_the_lift_against_a_leaf(p, u, x):
    weights = base_weights(u)
    assert sum(w for _, w in weights) == pytest.approx(1.0, abs=1e-12)
    expected = sum(w * p(z, x) for z, w in weights)
    assert sj_eval(p, u, Leaf(x)) == pytest.approx(expected, abs=1e-12)


# --- nets -----------------------------------------------------------------------


def test_unit_interval_net_spacing():
    grid = unit_interval_net(0.125)
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert max(np.diff(grid)) <= 0.125


def test_large_eps_gives_a_single_point():
    p = table(("x0", "x1"), [[0, 1], [1, 0]])
    net = epsilon_net(p, 3.0)
    assert net == [Leaf("x0")]
    assert check_net(net, p, 3.0, samples=2000).passed


def test_two_point_net_structure():
    p = table(("x0", "x1"), [[0, 1], [1, 0]])
    net = epsilon_net(p, 0.5)
    grid = unit_interval_net(0.125)
    assert len(grid) == 9
    product = {canonicalize(Join(Leaf(x), Leaf(y), t)) for x in ("x0", "x1") for y in ("x0", "x1") for t in grid}
    # |A|^2 |B| = 36 raw points, listed once per canonical class
    assert set(net) == product and len(net) == len(product) == 16
    assert check_net(net, p, 0.5, samples=10_000).passed


def test_net_needs_a_nonzero_pseudometric():
    with pytest.raises(DegenerateInputError):
        epsilon_net(table(("x0", "x1"), np.zeros((2, 2))), 0.5)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("frac", [0.5, 0.25])
def test_random_nets_cover(seed, frac):
    rng = np.random.default_rng(seed)
    p = table(["x0"], [[0.0]])
    while p.norm == 0:
        n = int(rng.integers(2, 7))
        m = random_pseudometric(n, rng) if seed % 2 else random_metric(n, rng)
        p = table([f"x{i}" for i in range(n)], m)
    eps = frac * p.norm
    assert check_net(epsilon_net(p, eps), p, eps, samples=5000, seed=seed).passed


def test_depth_alignment_reads_shallow_point_as_trivial_join():
    p = table(X3, [[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]])
    u = Join(Join(Leaf("x0"), Leaf("x1"), 0.4), Leaf("x2"), 0.3)
    w = Join(Leaf("x1"), Leaf("x2"), 0.6)
    padded = Join(w, w, 0.0)
    assert sj_eval(p, u, w) == pytest.approx(sj_eval(p, u, padded), abs=1e-15)
    for a, b in itertools.product([u, w], repeat=2):
        assert np.isfinite(sj_eval(p, a, b))


def test_inner_collapse_keeps_the_level_of_the_parent():
    # [[x0,x0;0], x1; 1/2] is a point of SJ^2, not the SJ^1 point [x0,x1;1/2]
    p = table(("x0", "x1"), [[0.3, -1.0], [0.5, 4.0]])
    deep = Join(Join(Leaf("x0"), Leaf("x0"), 0.0), Leaf("x1"), 0.5)
    flat = Join(Leaf("x0"), Leaf("x1"), 0.5)
    assert sj_eval(p, deep, flat) == pytest.approx(0.25 * p.values.sum())
    assert sj_eval(p, flat, flat) == pytest.approx(0.5 * (0.3 + 4.0))
    c = canonicalize(deep)
    assert c.depth == 2
    assert sj_eval(p, c, flat) == pytest.approx(sj_eval(p, deep, flat))
    assert canonicalize(Join(deep, Leaf("x1"), 0.0)) == c
