import json

import numpy as np
import pytest

from metricext.errors import PreconditionError
from metricext.extension import ExtensionConfig, build_operator, with_base_points
from metricext.sjoin import FunctionTable, Join, Leaf, epsilon_net
from metricext.verify import (
    VerificationReport,
    check_locality,
    check_metric_positivity,
    check_net,
    check_pseudometric,
    check_regular_operator,
    depth1_distances,
    triangle_scan,
)


def brute_triangle(m):
    n = len(m)
    return max(m[i, k] - m[i, j] - m[j, k] for i in range(n) for j in range(n) for k in range(n))


def test_valid_metric_passes():
    m = FunctionTable.from_matrix("abc", [[0, 1, 1.5], [1, 0, 1], [1.5, 1, 0]])
    report = check_pseudometric(m)
    assert report.passed
    assert check_metric_positivity(m).passed


def test_triangle_failure_has_witness():
    report = check_pseudometric(np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float))
    tri = report["triangle"]
    assert not tri.passed
    assert tri.worst_violation == pytest.approx(1.0)
    assert set(tri.witness) == {0, 1, 2}
    m = np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float)
    i, j, k = tri.witness
    assert m[i, k] - m[i, j] - m[j, k] == pytest.approx(1.0)


def test_asymmetry_is_exact():
    report = check_pseudometric(np.array([[0, 1], [1 + 1e-15, 0]]))
    assert not report["symmetry"].passed
    assert report["symmetry"].witness in ((0, 1), (1, 0))


def test_diagonal_and_sign_failures():
    report = check_pseudometric(np.array([[0.1, 1], [1, 0]]))
    assert not report["zero_diagonal"].passed and report["zero_diagonal"].witness == (0,)
    report = check_pseudometric(np.array([[0, -0.5], [-0.5, 0]]))
    assert not report["nonnegativity"].passed


def test_pseudometric_may_vanish_off_diagonal():
    m = np.zeros((3, 3))
    assert check_pseudometric(m).passed
    pos = check_metric_positivity(m)
    assert not pos.passed and pos.witness


def test_triangle_scan_matches_brute_force(rng):
    for _ in range(20):
        n = int(rng.integers(1, 8))
        m = rng.uniform(0, 1, (n, n))
        worst, (i, j, k) = triangle_scan(m)
        assert worst == pytest.approx(brute_triangle(m))
        assert m[i, k] - m[i, j] - m[j, k] == pytest.approx(worst)


def test_report_round_trip():
    report = check_pseudometric(np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float))
    data = json.loads(report.to_json())
    assert {c["name"] for c in data["checks"]} == {"symmetry", "zero_diagonal", "nonnegativity", "triangle"}
    assert set(data) == {"checks", "tolerance"}
    back = VerificationReport.from_dict(data)
    assert back.passed == report.passed
    assert back["triangle"].witness == report["triangle"].witness


def test_merge_is_ordered_by_name():
    a = check_pseudometric(np.zeros((2, 2)))
    b = VerificationReport([check_metric_positivity(np.zeros((2, 2)))], 1e-6)
    merged = a.merge(b)
    assert [c.name for c in merged.checks] == sorted(c.name for c in merged.checks)
    assert merged.tolerance == 1e-6
    assert not merged.passed


# --- operator checks ------------------------------------------------------------


def test_regular_operator_on_the_extension(demo):
    space, p = demo
    op = build_operator(space, with_base_points(ExtensionConfig(), space, p))
    assert check_regular_operator(op.apply, 2, 50, 1e-9).passed
    np.testing.assert_allclose(op.apply(np.ones((2, 2))), 1.0, atol=1e-12)


def test_nonlinear_control_fails():
    report = check_regular_operator(lambda p: p**2, 3, 10)
    assert not report["linearity"].passed
    assert report["linearity"].witness


def test_sign_flip_fails_positivity():
    report = check_regular_operator(lambda p: -p, 3, 10)
    assert not report["positivity"].passed and not report["unit"].passed


def test_scaling_fails_norm():
    assert not check_regular_operator(lambda p: 2 * p, 3, 10)["norm"].passed


def test_locality_with_full_mask_passes(demo):
    space, p = demo
    op = build_operator(space, with_base_points(ExtensionConfig(), space, p))
    report = check_locality(op.apply, space.subset_X, space.ids, "y", "x1", space.subset_X, trials=20)
    assert report.passed


def test_locality_detects_dependence():
    # an operator that reads an entry outside the mask
    op = lambda p: np.full((2, 2), p[1, 1])
    report = check_locality(op, ["a", "b"], ["a", "b"], "a", "b", ["a"], trials=5)
    assert not report["locality"].passed and report["locality"].witness


def test_locality_precondition(demo):
    space, p = demo
    with pytest.raises(PreconditionError):
        check_locality(lambda m: m, space.subset_X, space.subset_X, "x0", "x1", ["x0"], required=["x0", "x1"])


# --- nets ---------------------------------------------------------------------------


def test_depth1_distances_agree_with_the_four_term_rule(rng):
    from metricext.sjoin import sj_eval

    ids = ("a", "b", "c")
    p = FunctionTable.from_matrix(ids, rng.uniform(-1, 1, (3, 3)))
    rows = np.array([[0, 1, 0.3], [2, 2, 0.0], [1, 0, 0.9]])
    got = depth1_distances(p.values, rows, rows)
    for r, (i, j, t) in enumerate(rows):
        for c, (k, l, s) in enumerate(rows):
            u = Join(Leaf(ids[int(i)]), Leaf(ids[int(j)]), t)
            v = Join(Leaf(ids[int(k)]), Leaf(ids[int(l)]), s)
            assert got[r, c] == pytest.approx(sj_eval(p, u, v), abs=1e-12)


def test_net_from_construction_passes():
    p = FunctionTable.from_matrix("abc", [[0, 1, 0.4], [1, 0, 0.8], [0.4, 0.8, 0]])
    assert check_net(epsilon_net(p, 0.25), p, 0.25, samples=10_000).passed


def test_empty_net_fails_with_witness():
    p = FunctionTable.from_matrix("ab", [[0, 1], [1, 0]])
    report = check_net([], p, 0.5)
    assert not report.passed and len(report["net"].witness) == 3


def test_any_single_point_when_eps_exceeds_the_norm():
    p = FunctionTable.from_matrix("ab", [[0, 1], [1, 0]])
    assert check_net([Join(Leaf("a"), Leaf("b"), 0.3)], p, 1.01, samples=3000).passed


def test_too_coarse_net_fails():
    p = FunctionTable.from_matrix("ab", [[0, 1], [1, 0]])
    report = check_net([Leaf("a"), Leaf("b")], p, 0.2, samples=3000)
    assert not report.passed and report["net"].witness
