import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ymh_lab.gauge import GaugeTransform, apply_gauge
from ymh_lab.lattice_fields import (
    ConnectionField,
    CylinderGrid,
    GridMismatchError,
    SectionField,
    covariant_derivative,
    curvature,
    diff_theta,
    dirichlet_energy,
    field_from_csv,
    l2_norm_squared,
    resolution_flag,
    section_to_csv,
    sup_norm,
)
from ymh_lab.lie_action import ManifoldError, expm, j_x, j_z


def great_circle(grid, b):
    t, _ = grid.mesh()
    return SectionField(grid, np.stack([np.sin(b * t), 0 * t, np.cos(b * t)], -1))


def test_grid_rejects_tiny_sizes():
    with pytest.raises(ValueError):
        CylinderGrid(1.0, 4, 16)


def test_section_rejects_off_sphere():
    grid = CylinderGrid(1.0, 9, 8)
    with pytest.raises(ManifoldError):
        SectionField(grid, np.full((9, 8, 3), 0.6))


def test_flat_constant_has_zero_derivative():
    grid = CylinderGrid(1.0, 9, 8)
    u = SectionField(grid, np.broadcast_to([0.0, 0.0, 1.0], (9, 8, 3)).copy())
    dt, dth = covariant_derivative(ConnectionField.zero(grid, 3), u)
    assert np.max(np.abs(dt)) == 0.0 and np.max(np.abs(dth)) == 0.0


def test_grid_mismatch_raises():
    g1, g2 = CylinderGrid(1.0, 9, 8), CylinderGrid(1.0, 9, 16)
    with pytest.raises(GridMismatchError):
        covariant_derivative(ConnectionField.zero(g1, 3), great_circle(g2, 0.5))


def parallel_error(n_theta):
    grid = CylinderGrid(1.0, 9, n_theta)
    # the section closes up around the circle only for an integer twist
    X = 1.0 * j_z()
    y0 = np.array([0.6, 0.0, 0.8])
    u = np.einsum("jab,b->ja", expm(-grid.theta[:, None, None] * X.matrix), y0)
    u = SectionField(grid, np.broadcast_to(u, (9, n_theta, 3)).copy())
    _, dth = covariant_derivative(ConnectionField.flat(grid, X), u)
    return np.max(np.abs(dth))


def test_parallel_section_second_order_in_theta():
    e1, e2 = parallel_error(16), parallel_error(32)
    assert e1 < 5e-2
    assert 3.5 <= e1 / e2 <= 4.5


def test_great_circle_speed_second_order():
    errs = []
    for n in (33, 65):
        grid = CylinderGrid(2.0, n, 8)
        dt, _ = covariant_derivative(ConnectionField.zero(grid, 3), great_circle(grid, 0.5))
        errs.append(np.max(np.abs(np.linalg.norm(dt, axis=-1) - 0.5)))
    assert errs[0] < 1e-3
    assert errs[0] / errs[1] > 3.5


def test_flat_connection_has_zero_curvature():
    grid = CylinderGrid(1.0, 9, 8)
    assert np.max(np.abs(curvature(ConnectionField.flat(grid, 0.4 * j_z())))) <= 1e-14


def curvature_error(n_t):
    grid = CylinderGrid(1.0, n_t, 8)
    A = ConnectionField.from_profile(grid, np.sin(grid.t), j_z())
    F = curvature(A)
    exact = np.cos(grid.t)[:, None, None, None] * j_z().matrix
    return np.max(np.abs(F - exact))


def test_curvature_of_radial_profile():
    e1, e2 = curvature_error(17), curvature_error(33)
    assert e1 < 1e-2
    assert 3.5 <= e1 / e2 <= 4.5


def manufactured_pair(grid):
    t, th = grid.mesh()
    a_t = (0.2 * np.cos(th) * np.exp(-t**2))[..., None, None] * j_x().matrix
    a_th = (0.3 + 0.1 * np.sin(t + th))[..., None, None] * j_z().matrix
    u = np.stack([np.cos(0.4 * t) * np.cos(th), np.cos(0.4 * t) * np.sin(th), np.sin(0.4 * t)], -1)
    return ConnectionField(grid, a_t, a_th), SectionField(grid, u)


def exact_derivatives(grid):
    t, th = grid.mesh()
    c, s = np.cos(0.4 * t), np.sin(0.4 * t)
    u = np.stack([c * np.cos(th), c * np.sin(th), s], -1)
    u_t = np.stack([-0.4 * s * np.cos(th), -0.4 * s * np.sin(th), 0.4 * c], -1)
    u_th = np.stack([-c * np.sin(th), c * np.cos(th), 0 * t], -1)
    A, _ = manufactured_pair(grid)
    return u_t + np.einsum("...ij,...j->...i", A.a_t, u), u_th + np.einsum("...ij,...j->...i", A.a_theta, u)


def test_refinement_order_of_covariant_derivative():
    errs = []
    grid = CylinderGrid(2.0, 17, 16)
    for _ in range(2):
        A, u = manufactured_pair(grid)
        dt, dth = covariant_derivative(A, u)
        et, eth = exact_derivatives(grid)
        errs.append(max(np.max(np.abs(dt - et)), np.max(np.abs(dth - eth))))
        grid = grid.refined()
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_refinement_order_of_curvature():
    errs = []
    grid = CylinderGrid(2.0, 17, 16)
    for _ in range(2):
        A, _ = manufactured_pair(grid)
        t, th = grid.mesh()
        jx, jz = j_x().matrix, j_z().matrix
        f = 0.2 * np.cos(th) * np.exp(-t**2)
        g = 0.3 + 0.1 * np.sin(t + th)
        exact = (
            (0.1 * np.cos(t + th))[..., None, None] * jz
            + (0.2 * np.sin(th) * np.exp(-t**2))[..., None, None] * jx
            + (f * g)[..., None, None] * (jx @ jz - jz @ jx)
        )
        errs.append(np.max(np.abs(curvature(A) - exact)))
        grid = grid.refined()
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_curvature_gauge_covariance_is_second_order():
    defects = []
    grid = CylinderGrid(2.0, 17, 16)
    for _ in range(3):
        A, u = manufactured_pair(grid)
        t, th = grid.mesh()
        gen = (0.5 * np.sin(th) + 0.3 * t)[..., None, None] * j_x().matrix
        s = GaugeTransform(grid, expm(gen))
        A2, _ = apply_gauge(s, A, u)
        expect = np.swapaxes(s.s, -1, -2) @ curvature(A) @ s.s
        defects.append(np.max(np.abs(curvature(A2) - expect)))
        grid = grid.refined()
    assert 3.5 <= defects[1] / defects[2] <= 4.5


def test_l2_area_and_zero():
    grid = CylinderGrid(1.0, 9, 8)
    ones = np.zeros((9, 8, 3))
    ones[..., 0] = 1.0
    assert l2_norm_squared(ones, grid) == pytest.approx(4 * np.pi, abs=1e-10)
    assert l2_norm_squared(np.zeros((9, 8, 3)), grid) == 0.0


def test_l2_rejects_negative_weight():
    grid = CylinderGrid(1.0, 9, 8)
    with pytest.raises(ValueError):
        l2_norm_squared(np.ones((9, 8, 3)), grid, weight=-np.ones(9))


def test_great_circle_energy_and_sup():
    grid = CylinderGrid(2.0, 129, 16)
    dt, _ = covariant_derivative(ConnectionField.zero(grid, 3), great_circle(grid, 0.5))
    assert l2_norm_squared(dt, grid) == pytest.approx(2 * np.pi, rel=1e-4)
    assert sup_norm(dt, grid) == pytest.approx(0.5, abs=1e-4)
    assert sup_norm(np.zeros_like(dt), grid) == 0.0
    assert dirichlet_energy(ConnectionField.zero(grid, 3), great_circle(grid, 0.5)) == pytest.approx(
        2 * np.pi, rel=1e-4
    )


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sup_dominates_mean(seed):
    grid = CylinderGrid(1.0, 9, 8)
    f = np.random.default_rng(seed).standard_normal((9, 8, 3))
    area = 4 * np.pi
    assert sup_norm(f, grid) ** 2 * area >= l2_norm_squared(f, grid) - 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_theta_difference_is_skew_adjoint(seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 9, 16, 3))
    h = 2 * np.pi / 16
    assert abs(np.sum(diff_theta(u, h) * v) + np.sum(u * diff_theta(v, h))) <= 1e-10


def test_resolution_flag():
    grid = CylinderGrid(1.0, 9, 8)
    calm = great_circle(grid, 0.1)
    wild = great_circle(grid, 20.0)
    z = ConnectionField.zero(grid, 3)
    assert not resolution_flag(*covariant_derivative(z, calm), grid)
    assert resolution_flag(*covariant_derivative(z, wild), grid)


def test_section_csv_roundtrip():
    grid = CylinderGrid(1.0, 9, 8)
    u = great_circle(grid, 0.7)
    text = section_to_csv(u)
    assert text.startswith("it,itheta,t,theta,u_1,u_2,u_3\n")
    names, back = field_from_csv(text, grid)
    assert names == ["u_1", "u_2", "u_3"]
    np.testing.assert_array_equal(back, u.u)
