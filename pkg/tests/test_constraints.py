import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import lsq_linear

from ezbsde import Box, FiniteSet, FullSpace, Interval, UnionOfIntervals, parse_constraint, p_to_pi, pi_to_p, project_p
from ezbsde.constraints import DimensionError, as_set, constraint_text, min_norm_p, project_with_pi

finite = st.floats(-50, 50, allow_nan=False)


def test_interval_examples():
    A = Interval(0.0, 0.5)
    assert A.project(0.7) == 0.5
    assert A.project(-1.0) == 0.0
    assert A.project(0.25) == 0.25
    assert A.distance(0.7) == pytest.approx(0.2, abs=1e-15)
    assert A.contains(0.5) and not A.contains(0.5000001)


def test_fullspace_is_identity():
    u = np.array([-3.0, 0.1, 7.5])
    np.testing.assert_array_equal(FullSpace().project(u), u)
    assert np.all(FullSpace().distance(u) == 0)


def test_union_tie_goes_to_smaller_point():
    A = UnionOfIntervals(((0.0, 1.0), (3.0, 4.0)))
    assert A.project(2.0) == 1.0
    assert A.project(2.0 + 1e-9) == 3.0
    assert A.distance(2.0) == 1.0


def test_union_merges_overlaps():
    A = UnionOfIntervals(((0.4, 0.6), (0.0, 0.5), (1.0, 2.0)))
    assert A.intervals == ((0.0, 0.6), (1.0, 2.0))


def test_finite_set_sorted_and_nearest():
    A = FiniteSet((0.5, 0.0, 0.2, 0.2))
    assert A.points == ((0.0,), (0.2,), (0.5,))
    assert A.project(0.1) == 0.0  # tie between 0 and 0.2
    assert A.project(0.36) == 0.5
    assert A.contains(0.2) and not A.contains(0.3)


def test_box_projection_and_shapes():
    A = Box((0.0, -1.0), (1.0, 1.0))
    np.testing.assert_array_equal(A.project(np.array([2.0, -3.0])), [1.0, -1.0])
    assert A.distance(np.array([2.0, -3.0])) == pytest.approx(np.sqrt(5.0))
    with pytest.raises(DimensionError):
        A.project(np.array([1.0, 2.0, 3.0]))


def test_bounded_element():
    assert Interval(0.1, 0.5).bounded_element() == (0.1, 0.1)
    assert Interval(-1.0, 2.0).bounded_element() == (0.0, 0.0)
    assert UnionOfIntervals(((-3.0, -2.0), (1.5, 4.0))).bounded_element() == (1.5, 1.5)


@pytest.mark.parametrize("text,expected", [
    ("full", "FullSpace"),
    ("interval 0 0.5", "Interval"),
    ("union [0 0.1] [0.4 0.5]", "UnionOfIntervals"),
    ("finite 0 0.25 0.5", "FiniteSet"),
])
def test_parse_constraint(text, expected):
    cset = parse_constraint(text)
    assert type(cset).__name__ == expected
    # the textual form round-trips
    again = parse_constraint(constraint_text(cset))
    u = np.linspace(-1, 1, 41)
    np.testing.assert_array_equal(again.project(u), cset.project(u))


@pytest.mark.parametrize("text", ["", "interval 1", "interval 1 0", "union 0 1", "union [0 1] x",
                                  "finite", "ball 0 1", "full 3", "interval a b"])
def test_parse_constraint_rejects(text):
    with pytest.raises(ValueError):
        parse_constraint(text)


def test_as_set():
    assert isinstance(as_set((0, 1)), Interval)
    assert isinstance(as_set("full"), FullSpace)
    with pytest.raises(TypeError):
        as_set(3.0)


# -- oracles written independently of the library --------------------------

def _gap(u, lo, hi):
    return max(lo - u, 0.0, u - hi)


@settings(max_examples=300, deadline=None)
@given(finite, finite, finite)
def test_interval_against_oracle(a, b, u):
    lo, hi = min(a, b), max(a, b)
    A = Interval(lo, hi)
    assert A.distance(u) == pytest.approx(_gap(u, lo, hi), abs=1e-13)
    assert A.contains(A.project(u))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=5), finite)
def test_union_against_oracle(pairs, u):
    pieces = [(min(p), max(p)) for p in pairs]
    A = UnionOfIntervals(tuple(pieces))
    expect = min(_gap(u, lo, hi) for lo, hi in pieces)
    assert A.distance(u) == pytest.approx(expect, abs=1e-13)
    p = A.project(u)
    assert A.contains(p)
    assert abs(u - p) == pytest.approx(expect, abs=1e-13)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=8), st.tuples(finite, finite))
def test_finite_set_2d_against_oracle(points, u):
    A = FiniteSet(tuple(points))
    u = np.array(u)
    expect = min(np.hypot(u[0] - x, u[1] - y) for x, y in points)
    assert A.distance(u) == pytest.approx(expect, abs=1e-12)
    assert tuple(A.project(u)) in set(map(tuple, np.asarray(points, dtype=float)))


def test_convex_projection_is_nonexpansive(rng):
    A = Box((-1.0, 0.0, 2.0), (1.0, 0.5, 3.0))
    u = rng.normal(scale=4.0, size=(5000, 3))
    v = rng.normal(scale=4.0, size=(5000, 3))
    lhs = np.linalg.norm(A.project(u) - A.project(v), axis=1)
    assert np.all(lhs <= np.linalg.norm(u - v, axis=1) + 1e-14)


# -- p-space image ----------------------------------------------------------------

def test_pi_p_roundtrip(rng):
    sig = rng.normal(size=(20, 3, 3)) + 3 * np.eye(3)
    pi = rng.normal(size=(20, 3))
    np.testing.assert_allclose(p_to_pi(sig, pi_to_p(sig, pi)), pi, atol=1e-12)
    assert pi_to_p(0.17, 0.5) == pytest.approx(0.085)
    with pytest.raises(np.linalg.LinAlgError):
        p_to_pi(0.0, 1.0)


def test_project_p_scalar_scales_distance():
    sig = np.full((3, 1, 1), 0.17)
    u = np.array([[0.5], [0.05], [-0.2]])
    p, d = project_p(Interval(0.0, 0.5), sig, u)
    np.testing.assert_allclose(p[:, 0], [0.085, 0.05, 0.0], atol=1e-15)
    np.testing.assert_allclose(d, [0.415, 0.0, 0.2], atol=1e-15)


def test_project_with_pi_returns_exact_member():
    sig = np.full((1, 1, 1), 0.17)
    pi, p, _ = project_with_pi(Interval(0.0, 0.5), sig, np.array([[1.0]]))
    assert pi[0, 0] == 0.5
    assert p[0, 0] == pytest.approx(0.085)


def test_project_p_diagonal_box_against_lsq(rng):
    """Nearest point of sigma' Box against a bounded least-squares solver."""
    A = Box((0.0, -0.2), (0.5, 0.3))
    for _ in range(50):
        sig = np.diag(rng.uniform(0.05, 0.5, size=2))
        u = rng.normal(scale=0.5, size=2)
        p, d = project_p(A, sig[None], u[None])
        ref = lsq_linear(sig.T, u, bounds=(A.lows, A.highs), tol=1e-14, lsmr_tol="auto")
        assert d[0] == pytest.approx(np.linalg.norm(sig.T @ ref.x - u), abs=1e-9)


def test_project_p_finite_set_uses_images():
    sig = np.array([[[0.2, 0.0], [0.1, 0.3]]])
    A = FiniteSet(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)))
    u = np.array([[0.2, 0.05]])
    p, d = project_p(A, sig, u)
    images = [sig[0].T @ np.array(q) for q in A.points]
    best = min(images, key=lambda q: np.linalg.norm(u[0] - q))
    np.testing.assert_allclose(p[0], best)


def test_min_norm_p():
    sig = np.full((2, 1, 1), 0.2)
    np.testing.assert_allclose(min_norm_p(Interval(0.1, 0.5), sig), [0.02, 0.02])
    np.testing.assert_allclose(min_norm_p(Interval(0.0, 0.5), sig), [0.0, 0.0])
