import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nirencert.errors import CertError
from nirencert.geometry import (
    TangentFrame, chordal_distance, exp_map, fibonacci_sphere, geodesic_distance, green_kernel,
    log_map, normal_frame, pole, sphere_point, stereographic, stereographic_inv,
)

coords = st.lists(st.floats(-3, 3), min_size=3, max_size=6).filter(
    lambda c: np.linalg.norm(c) > 1e-3)


def test_geodesic_distance_examples():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    assert geodesic_distance(e1, e1) == 0.0
    assert geodesic_distance(e1, -e1) == pytest.approx(math.pi)
    assert geodesic_distance(e1, e2) == pytest.approx(math.pi / 2)


def test_geodesic_distance_dimension_mismatch():
    with pytest.raises(CertError) as err:
        geodesic_distance(np.eye(3)[0], np.eye(4)[0])
    assert err.value.code == "dimension-mismatch"


def test_green_kernel_examples():
    n4 = np.eye(4)
    assert green_kernel(n4[0], -n4[0], 3, 0.5) == pytest.approx(0.5)
    for n, s in [(2, 0.3), (3, 0.5), (5, 0.9)]:
        e = np.eye(n + 1)
        assert green_kernel(e[0], e[1], n, s) == pytest.approx(1.0)
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([math.cos(math.pi / 3), math.sin(math.pi / 3), 0.0])
    assert green_kernel(a, b, 2, 0.5) == pytest.approx(math.sqrt(2), rel=1e-12)


def test_green_kernel_coincident():
    with pytest.raises(CertError) as err:
        green_kernel(np.eye(3)[2], np.eye(3)[2], 2, 0.5)
    assert err.value.code == "coincident-points"


def test_stereographic_examples():
    np.testing.assert_allclose(stereographic(np.zeros(2)), [0, 0, -1])
    x = np.array([0.6, 0.8])
    np.testing.assert_allclose(stereographic(x), [0.6, 0.8, 0.0], atol=1e-15)
    with pytest.raises(CertError) as err:
        stereographic_inv(pole(2))
    assert err.value.code == "north-pole"


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=5))
def test_stereographic_round_trip(x):
    x = np.array(x)
    p = stereographic(x)
    assert abs(np.linalg.norm(p) - 1) < 1e-12
    np.testing.assert_allclose(stereographic_inv(p), x, atol=1e-10 * max(1.0, np.dot(x, x)))


def test_normal_frame_north_pole():
    f = normal_frame(pole(2))
    np.testing.assert_array_equal(f.axes, np.eye(3)[:2])
    gram = f.axes @ f.axes.T
    assert np.max(np.abs(gram - np.eye(2))) < 1e-10


@given(coords, st.integers(0, 5))
def test_normal_frame_orthonormal_tangent(c, seed):
    y = sphere_point(c)
    f = normal_frame(y, seed)
    assert f.axes.shape == (y.size - 1, y.size)
    assert np.max(np.abs(f.axes @ y)) < 1e-10
    assert np.max(np.abs(f.axes @ f.axes.T - np.eye(f.n))) < 1e-10


def test_normal_frame_deterministic():
    y = sphere_point([0.3, -0.2, 0.9, 0.1])
    a, b = normal_frame(y, 3), normal_frame(y, 3)
    assert np.array_equal(a.axes, b.axes)


def test_exp_map_examples():
    f = normal_frame(pole(3))
    np.testing.assert_array_equal(exp_map(f, np.zeros(3)), pole(3))
    np.testing.assert_allclose(exp_map(f, [math.pi / 2, 0, 0]), f.axes[0], atol=1e-15)
    with pytest.raises(CertError) as err:
        exp_map(f, [math.pi, 0, 0])
    assert err.value.code == "chart-overflow"


@given(coords, st.lists(st.floats(-1.5, 1.5), min_size=5, max_size=5))
def test_exp_log_inverse(c, v):
    y = sphere_point(c)
    f = normal_frame(y)
    v = np.array(v[: f.n])
    p = exp_map(f, v)
    assert abs(np.linalg.norm(p) - 1) < 1e-12
    assert geodesic_distance(y, p) == pytest.approx(np.linalg.norm(v), abs=1e-9)
    np.testing.assert_allclose(log_map(f, p), v, atol=1e-9)


def test_frame_validation():
    y = pole(2)
    TangentFrame.from_axes(y, np.eye(3)[:2])
    with pytest.raises(CertError):
        TangentFrame.from_axes(y, [[1, 0, 0], [1, 0, 0]])
    with pytest.raises(CertError):
        TangentFrame.from_axes(y, [[1, 0, 0], [0, 0, 1]])


def test_sphere_point_rejects():
    with pytest.raises(CertError):
        sphere_point([1.0, 0.0])
    with pytest.raises(CertError):
        sphere_point([0.0, 0.0, 0.0])


def test_chordal_matches_geodesic():
    a, b = sphere_point([1, 2, 3]), sphere_point([-1, 0, 2])
    d = geodesic_distance(a, b)
    assert chordal_distance(a, b) == pytest.approx(2 * math.sin(d / 2), rel=1e-13)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_fibonacci_sphere_unit_and_spread(n):
    pts = fibonacci_sphere(400, n)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    # roughly balanced across every coordinate hemisphere
    assert np.all(np.abs(np.mean(pts, axis=0)) < 0.1)
