import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from spdlab.errors import NotRotationError
from spdlab.rotations import (_rodrigues_coeffs, as_rotation, euler_from_skew, procrustes_so,
                              rodrigues_exp, rotation_2d, rotation_angle, rotation_log,
                              rotation_to, skew_from_euler, wrap_euler)

from conftest import random_rotation
from oracles import expm_series, expm_series_scaled


def random_ball(rng, n, radius=np.pi):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * rng.random(n) ** (1 / 3))[:, None]


def test_skew_examples():
    np.testing.assert_array_equal(skew_from_euler([0.0, 0.0, 0.0]), np.zeros((3, 3)))
    phi = 0.7
    np.testing.assert_array_equal(skew_from_euler([0.0, 0.0, phi]),
                                  [[0, -phi, 0], [phi, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(skew_from_euler([1.0, 2.0, 3.0]),
                                  [[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    np.testing.assert_array_equal(skew_from_euler(0.3), [[0, -0.3], [0.3, 0]])


@given(hnp.arrays(float, (3,), elements=st.floats(-10, 10)))
def test_skew_roundtrip_exact(w):
    W = skew_from_euler(w)
    np.testing.assert_array_equal(W, -W.T)
    np.testing.assert_array_equal(euler_from_skew(W), w)


def test_wrap_euler_into_ball():
    w = wrap_euler(np.array([0.0, 0.0, 1.5 * np.pi]))
    np.testing.assert_allclose(w, [0.0, 0.0, -0.5 * np.pi], atol=1e-15)
    np.testing.assert_allclose(rodrigues_exp(w), rodrigues_exp([0, 0, 1.5 * np.pi]), atol=1e-14)


def test_rodrigues_examples():
    np.testing.assert_array_equal(rodrigues_exp([0.0, 0.0, 0.0]), np.eye(3))
    np.testing.assert_allclose(rodrigues_exp([0.0, 0.0, np.pi / 2]),
                               [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_rodrigues_matches_series(rng):
    # 20 series terms after scaling W into the unit ball, then squaring back
    for w in random_ball(rng, 1000):
        np.testing.assert_allclose(rodrigues_exp(w), expm_series_scaled(skew_from_euler(w), 20),
                                   atol=1e-12)


def test_rodrigues_matches_plain_series_small_angles(rng):
    for w in random_ball(rng, 200, radius=1.0):
        np.testing.assert_allclose(rodrigues_exp(w), expm_series(skew_from_euler(w), 20),
                                   atol=1e-12)


def test_rodrigues_second_form_coefficient():
    phi = np.linspace(0.05, np.pi, 200)
    np.testing.assert_allclose(2 * np.sin(phi / 2) ** 2 / phi ** 2, (1 - np.cos(phi)) / phi ** 2,
                               rtol=1e-13)
    _, b = _rodrigues_coeffs(phi)
    np.testing.assert_allclose(b, (1 - np.cos(phi)) / phi ** 2, rtol=1e-13)


def test_rodrigues_small_angle_branch():
    # both sides of the switch to the Taylor coefficients
    for phi in (1e-5, 9.9e-5, 1e-4, 1.01e-4, 1e-3):
        a, b = _rodrigues_coeffs(np.array(phi))
        assert a == pytest.approx(1 - phi ** 2 / 6 + phi ** 4 / 120, abs=1e-15)
        assert b == pytest.approx(0.5 - phi ** 2 / 24 + phi ** 4 / 720, abs=1e-15)


def test_rotation_log_examples():
    np.testing.assert_array_equal(rotation_log(np.eye(3)), np.zeros(3))
    np.testing.assert_allclose(rotation_log(rodrigues_exp([0, 0, np.pi / 2])), [0, 0, np.pi / 2],
                               atol=1e-15)
    assert rotation_log(rotation_2d(0.4)) == pytest.approx(0.4)


def test_log_exp_roundtrip(rng):
    w = random_ball(rng, 1000, radius=np.pi - 1e-3)
    np.testing.assert_allclose(rotation_log(rodrigues_exp(w)), w, atol=1e-9)


def test_exp_log_roundtrip_random_rotations(rng):
    rs = np.array([random_rotation(rng, 3) for _ in range(1000)])
    keep = rotation_angle(rs) < np.pi - 1e-3
    np.testing.assert_allclose(rodrigues_exp(rotation_log(rs[keep])), rs[keep], atol=1e-9)
    assert np.all(np.linalg.norm(rotation_log(rs), axis=1) <= np.pi + 1e-12)


def test_half_turn_flagged():
    r = rodrigues_exp([0.0, -np.pi, 0.0])
    w, flag = rotation_log(r, with_flag=True)
    assert flag
    np.testing.assert_allclose(w, [0.0, np.pi, 0.0], atol=1e-12)
    np.testing.assert_allclose(rodrigues_exp(w), r, atol=1e-12)


def test_near_half_turn_accuracy(rng):
    axis = rng.standard_normal((200, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    w = axis * (np.pi - 10 ** rng.uniform(-7, -1, 200))[:, None]
    np.testing.assert_allclose(rodrigues_exp(rotation_log(rodrigues_exp(w))), rodrigues_exp(w),
                               atol=1e-9)


def test_arcsin_form_below_quarter_turn(rng):
    # for angles below pi/2, phi = arcsin(|s|) with s the axial vector of (R - R^T)/2
    w = random_ball(rng, 200, radius=np.pi / 2 - 1e-3)
    r = rodrigues_exp(w)
    s = euler_from_skew(0.5 * (r - np.swapaxes(r, 1, 2)))
    np.testing.assert_allclose(np.arcsin(np.linalg.norm(s, axis=1)), np.linalg.norm(w, axis=1),
                               atol=1e-9)


def test_rotation_2d_examples():
    np.testing.assert_array_equal(rotation_2d(0.0), np.eye(2))
    np.testing.assert_allclose(rotation_2d(np.pi / 2), [[0, -1], [1, 0]], atol=1e-16)
    h = np.sqrt(2) / 2
    np.testing.assert_allclose(rotation_2d(np.pi / 4), [[h, -h], [h, h]], atol=1e-16)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_rotation_2d_composition(a, b):
    np.testing.assert_allclose(rotation_2d(a) @ rotation_2d(b), rotation_2d(a + b), atol=1e-12)


def test_as_rotation_projects_small_drift(rng):
    r = random_rotation(rng, 3) + 1e-10 * rng.standard_normal((3, 3))
    p = as_rotation(r)
    np.testing.assert_allclose(p.T @ p, np.eye(3), atol=1e-14)
    with pytest.raises(NotRotationError):
        as_rotation(random_rotation(rng, 3) + 1e-6)
    with pytest.raises(NotRotationError):
        as_rotation(np.diag([1.0, 1.0, -1.0]))


@given(st.integers(0, 2 ** 32 - 1))
def test_group_closure(seed):
    rng = np.random.default_rng(seed)
    a, b = random_rotation(rng, 3), random_rotation(rng, 3)
    for m in (a @ b, a.T, b @ a.T @ b):
        as_rotation(m)
        assert np.linalg.norm(m.T @ m - np.eye(3)) < 1e-10


def test_procrustes_so_fixes_reflection(rng):
    m = random_rotation(rng, 3) @ np.diag([1.0, 1.0, -1.0])
    assert np.linalg.det(procrustes_so(m)) == pytest.approx(1.0)


def test_rotation_to(rng):
    for _ in range(100):
        a, b = rng.standard_normal((2, 3))
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        r, anti = rotation_to(a, b)
        assert not anti
        np.testing.assert_allclose(r @ a, b, atol=1e-10)
        # the axis is a x b
        axis = np.cross(a, b)
        np.testing.assert_allclose(r @ axis, axis, atol=1e-10)
    r, anti = rotation_to(a, a)
    np.testing.assert_allclose(r, np.eye(3), atol=1e-15)
    r, anti = rotation_to(a, -a)
    assert anti
    np.testing.assert_allclose(r @ a, -a, atol=1e-12)
