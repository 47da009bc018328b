import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcdpet.projector import (Geometry, back_project, forward_project, get_projector,
                              read_coo_text, sensitivity, system_matrix, write_coo_text)


def test_geometry_defaults_and_validation():
    g = Geometry(16, 16)
    assert g.n_bins % 2 == 1
    assert g.n_bins * g.bin_width >= math.hypot(16, 16)
    assert g.n_d == g.n_angles * g.n_bins and g.n_p == 256
    with pytest.raises(ValueError):
        Geometry(0, 4)
    with pytest.raises(ValueError):
        Geometry(4, 4, voxel_size=0.0)


def test_zero_in_zero_out():
    g = Geometry(8, 8, n_angles=6)
    assert not forward_project(np.zeros(g.image_shape), g).any()
    assert not back_project(np.zeros(g.sino_shape), g).any()


def test_linearity(rng):
    g = Geometry(12, 10, n_angles=9)
    x, z = rng.random(g.image_shape), rng.random(g.image_shape)
    np.testing.assert_allclose(forward_project(2 * x, g), 2 * forward_project(x, g), rtol=1e-15)
    np.testing.assert_allclose(forward_project(0.3 * x - 1.7 * z, g),
                               0.3 * forward_project(x, g) - 1.7 * forward_project(z, g),
                               atol=1e-12)


def test_shape_mismatch_raises():
    g = Geometry(8, 8, n_angles=4)
    with pytest.raises(ValueError):
        forward_project(np.zeros((7, 8)), g)
    with pytest.raises(ValueError):
        back_project(np.zeros((4, 3)), g)


def test_center_impulse_footprint_5x5():
    # one view at theta = 0: the center voxel sits exactly on the center bin
    g = Geometry(5, 5, n_angles=1)
    assert g.n_bins == 11
    x = np.zeros((5, 5))
    x[2, 2] = 1.0
    s = forward_project(x, g)[0]
    expected = np.zeros(11)
    expected[5] = 1.0
    np.testing.assert_allclose(s, expected, atol=1e-15)


def test_offcenter_impulse_footprint_5x5():
    # voxel one step right of center, views at 0 and 45 degrees (of 4)
    g = Geometry(5, 5, n_angles=4)
    x = np.zeros((5, 5))
    x[2, 3] = 1.0
    s = forward_project(x, g)
    np.testing.assert_allclose(s[0, 6], 1.0, atol=1e-15)  # u = 1 + 5
    c = math.cos(math.pi / 4)  # u = 5 + cos 45
    np.testing.assert_allclose(s[1, 5], 1 - c, atol=1e-15)
    np.testing.assert_allclose(s[1, 6], c, atol=1e-15)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-14)


def test_matches_explicit_matrix(rng):
    g = Geometry(11, 9, n_angles=7, voxel_size=1.3, bin_width=0.8)
    A = system_matrix(g)
    x = rng.random(g.image_shape)
    s = rng.random(g.sino_shape)
    np.testing.assert_allclose(forward_project(x, g).ravel(), A @ x.ravel(), atol=1e-12)
    np.testing.assert_allclose(back_project(s, g).ravel(), A.T @ s.ravel(), atol=1e-12)


def test_explicit_matrix_size_limit():
    with pytest.raises(ValueError):
        system_matrix(Geometry(40, 40))


def test_adjoint_identity_random_pairs(rng):
    g = Geometry(24, 20, n_angles=30)
    for _ in range(20):
        x = rng.standard_normal(g.image_shape)
        s = rng.standard_normal(g.sino_shape)
        Ax = forward_project(x, g)
        lhs, rhs = np.vdot(Ax, s), np.vdot(x, back_project(s, g))
        assert abs(lhs - rhs) / (np.linalg.norm(Ax) * np.linalg.norm(s)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 12), st.integers(3, 12), st.integers(1, 8))
def test_nonnegativity_preserved(nx, ny, na):
    g = Geometry(nx, ny, n_angles=na)
    r = np.random.default_rng(nx * 100 + ny * 10 + na)
    assert forward_project(r.random(g.image_shape), g).min() >= 0
    assert back_project(r.random(g.sino_shape), g).min() >= 0


def test_backprojected_impulse_peaks_at_impulse():
    g = Geometry(9, 9, n_angles=12)
    x = np.zeros((9, 9))
    x[4, 4] = 1.0
    b = back_project(forward_project(x, g), g)
    assert np.unravel_index(np.argmax(b), b.shape) == (4, 4)


def test_sensitivity_definition_and_support():
    g = Geometry(16, 16, n_angles=20)
    np.testing.assert_array_equal(sensitivity(g), back_project(np.ones(g.sino_shape), g))
    assert np.all(sensitivity(g)[g.fov_mask()] > 0)
    assert sensitivity(g) is get_projector(g).sensitivity  # cached


def test_sensitivity_scales_with_angles():
    a1 = sensitivity(Geometry(16, 16, n_angles=20))
    a2 = sensitivity(Geometry(16, 16, n_angles=40))
    inner = Geometry(16, 16).fov_mask()
    np.testing.assert_allclose(a2[inner] / a1[inner], 2.0, rtol=0.05)


def test_deterministic(rng):
    g = Geometry(16, 16, n_angles=10)
    x = rng.random(g.image_shape)
    assert forward_project(x, g).tobytes() == forward_project(x.copy(), g).tobytes()


def test_coo_text_roundtrip(tmp_path):
    g = Geometry(6, 5, n_angles=3)
    A = system_matrix(g)
    p = tmp_path / "a.txt"
    write_coo_text(A, p)
    B = read_coo_text(p, A.shape)
    assert (A != B).nnz == 0


def test_norm_estimate_matches_svd():
    g = Geometry(8, 8, n_angles=6)
    A = system_matrix(g).toarray()
    est = get_projector(g).norm_estimate(n_iter=200)
    np.testing.assert_allclose(est, np.linalg.norm(A, 2), rtol=1e-6)
