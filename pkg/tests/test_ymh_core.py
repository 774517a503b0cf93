import dataclasses

import numpy as np
import pytest

from ymh_lab.gauge import GaugeTransform, apply_gauge
from ymh_lab.lattice_fields import ConnectionField, CylinderGrid, SectionField
from ymh_lab.lie_action import (
    circle_on_sphere,
    expm,
    j_z,
    retract,
    so3_on_sphere,
    tangent_project,
)
from ymh_lab.ymh_core import (
    MissingComplexStructure,
    SolverOptions,
    WeightProfile,
    covariant_laplacian,
    el_residual,
    gradient_flow_solve,
    l2_pairing,
    vortex_residual,
    ymh_energy,
)


def constant_section(grid, y):
    return SectionField(grid, np.broadcast_to(np.asarray(y, float), (grid.n_t, grid.n_theta, 3)).copy())


def great_circle(grid, b):
    t = grid.t
    gam = np.stack([np.sin(b * t), 0 * t, np.cos(b * t)], -1)
    return SectionField(grid, np.broadcast_to(gam[:, None], (grid.n_t, grid.n_theta, 3)).copy())


def test_absolute_minimum_has_zero_energy():
    grid = CylinderGrid(1.0, 9, 8)
    spec = circle_on_sphere(center=1.0)
    terms = ymh_energy(ConnectionField.zero(grid, 3), constant_section(grid, [0, 0, 1]), WeightProfile.uniform(grid), spec)
    assert terms == (0.0, 0.0, 0.0, 0.0)


def test_great_circle_dirichlet_term():
    grid = CylinderGrid(2.0, 129, 16)
    terms = ymh_energy(ConnectionField.zero(grid, 3), great_circle(grid, 0.5), WeightProfile.uniform(grid), circle_on_sphere())
    assert terms.energy_term == pytest.approx(2 * np.pi, rel=1e-4)
    assert terms.yang_mills_term == 0.0


def test_weight_must_be_positive():
    with pytest.raises(ValueError):
        WeightProfile(np.array([1.0, 0.0, 1.0]))


def smooth_state(grid, spec):
    t, th = grid.mesh()
    a_t = (0.2 * np.cos(th) * np.exp(-t**2))[..., None, None] * j_z().matrix
    a_th = (0.3 + 0.1 * np.sin(t + th))[..., None, None] * j_z().matrix
    u = np.stack([np.cos(0.4 * t) * np.cos(th), np.cos(0.4 * t) * np.sin(th + 0.3 * t), np.sin(0.4 * t) + 0.2], -1)
    return ConnectionField(grid, a_t, a_th), SectionField.normalized(grid, u)


@pytest.mark.parametrize("s", [0.25, 2.0, 9.0])
def test_conformal_law(s):
    grid = CylinderGrid(1.5, 25, 16)
    spec = circle_on_sphere(center=0.2)
    A, u = smooth_state(grid, spec)
    w = WeightProfile(0.5 + 0.2 * np.cos(grid.t))
    base = ymh_energy(A, u, w, spec)
    # the profile is the square root of the conformal factor
    new = ymh_energy(A, u, w.scaled(np.sqrt(s)), spec)
    assert new.energy_term == pytest.approx(base.energy_term, rel=1e-12)
    assert new.yang_mills_term == pytest.approx(base.yang_mills_term / s, rel=1e-10)
    assert new.higgs_term == pytest.approx(base.higgs_term * s, rel=1e-10)


def test_fixed_point_pair_has_zero_residual():
    grid = CylinderGrid(1.0, 9, 8)
    spec = circle_on_sphere(center=1.0)
    res = el_residual(ConnectionField.zero(grid, 3), constant_section(grid, [0, 0, 1]), WeightProfile.uniform(grid), spec)
    assert np.max(np.abs(res.section)) == 0.0
    assert np.max(np.abs(res.a_t)) == 0.0 and np.max(np.abs(res.a_theta)) == 0.0


def test_geodesic_residual_vanishes():
    # the chord stencil makes sampled great circles exact discrete critical points
    for n in (33, 65):
        grid = CylinderGrid(2.0, n, 8)
        lap = covariant_laplacian(ConnectionField.zero(grid, 3), great_circle(grid, 0.5))
        assert np.max(np.abs(lap[1:-1])) <= 1e-12


@pytest.mark.parametrize("spec", [circle_on_sphere(center=0.3), so3_on_sphere((0.1, -0.2, 0.3))])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_residual_matches_finite_difference_gradient(spec, seed):
    grid = CylinderGrid(1.5, 17, 12)
    rng = np.random.default_rng(seed)
    A, u = smooth_state(grid, spec)
    if len(spec.generators) == 3:
        A = ConnectionField(grid, A.a_t + 0.1 * np.sin(grid.mesh()[1])[..., None, None] * spec.basis[0], A.a_theta)
    w = WeightProfile(0.6 + 0.3 * np.sin(grid.t))
    t, th = grid.mesh()
    c = rng.standard_normal(6)
    du = tangent_project(u.u, np.stack([np.sin(th + c[0]), np.cos(t + c[1]), np.sin(t * th + c[2])], -1))
    f = (np.cos(th + c[3]) * np.exp(-(t**2)))[..., None, None]
    da_t = f * np.tensordot(rng.standard_normal(len(spec.generators)), spec.basis, 1)
    da_th = (np.sin(t + c[4]) * np.cos(2 * th + c[5]))[..., None, None] * np.tensordot(
        rng.standard_normal(len(spec.generators)), spec.basis, 1
    )

    def energy(eps):
        B = ConnectionField(grid, A.a_t + eps * da_t, A.a_theta + eps * da_th)
        return ymh_energy(B, SectionField(grid, retract(u.u + eps * du)), w, spec).total

    eps = 1e-5
    fd = (energy(eps) - energy(-eps)) / (2 * eps)
    an = l2_pairing(el_residual(A, u, w, spec), du, da_t, da_th, grid)
    assert abs(fd - an) <= 1e-5 * abs(fd)


def test_solver_stops_at_critical_pair():
    grid = CylinderGrid(1.0, 9, 8)
    spec = circle_on_sphere(center=1.0)
    out = gradient_flow_solve(ConnectionField.zero(grid, 3), constant_section(grid, [0, 0, 1]), WeightProfile.uniform(grid), spec)
    assert out.converged and len(out.trace) == 1


def test_harmonic_map_flow_recovers_great_circle():
    grid = CylinderGrid(2.0, 33, 8)
    spec = circle_on_sphere()
    exact = great_circle(grid, 0.5)
    t = grid.t
    bump = (0.2 * np.sin(np.pi * (t + 2.0) / 4.0))[:, None, None] * np.array([0.0, 1.0, 0.0])
    u0 = SectionField(grid, retract(exact.u + bump))
    w = WeightProfile.uniform(grid, 1e-6)
    opts = SolverOptions(tol=1e-9, max_iters=5000, update_connection=False)
    out = gradient_flow_solve(ConnectionField.zero(grid, 3), u0, w, spec, opts)
    assert out.converged
    assert out.trace[-1].res_u < 1e-9
    assert np.max(np.abs(out.section.u - exact.u)) < 1e-3
    energies = [r.energy for r in out.trace]
    assert all(b <= a + 1e-12 * max(1.0, a) for a, b in zip(energies, energies[1:]))


def test_solver_energy_monotone_with_connection_updates():
    grid = CylinderGrid(1.0, 17, 8)
    spec = circle_on_sphere(center=0.2)
    A, u = smooth_state(grid, spec)
    out = gradient_flow_solve(A, u, WeightProfile.uniform(grid, 0.8), spec, SolverOptions(tol=1e-12, max_iters=200))
    energies = [r.energy for r in out.trace]
    assert energies[-1] < energies[0]
    assert all(b <= a + 1e-12 * max(1.0, a) for a, b in zip(energies, energies[1:]))
    assert out.trace_csv().splitlines()[0] == "iter,energy,e_term,ym_term,higgs_term,res_u,res_A,step"


def test_critical_energy_stable_under_constant_gauge():
    grid = CylinderGrid(1.0, 17, 8)
    spec = circle_on_sphere(center=0.2)
    A, u = smooth_state(grid, spec)
    w = WeightProfile.uniform(grid, 0.8)
    opts = SolverOptions(tol=1e-9, max_iters=5000, update_connection=False)
    first = gradient_flow_solve(A, u, w, spec, opts)
    g = GaugeTransform.constant(grid, expm(1.1 * j_z().matrix))
    A2, u2 = apply_gauge(g, first.connection, first.section)
    second = gradient_flow_solve(A2, u2, w, spec, opts)
    assert first.converged and second.converged
    assert abs(second.final_energy - first.final_energy) <= 1e-8


def test_vortex_residual_needs_complex_structure():
    grid = CylinderGrid(1.0, 9, 8)
    spec = circle_on_sphere()
    bare = dataclasses.replace(spec, complex_structure=None)
    with pytest.raises(MissingComplexStructure):
        vortex_residual(ConnectionField.zero(grid, 3), constant_section(grid, [0, 0, 1]), bare)


def test_vortex_residual_zero_on_fixed_orbit():
    grid = CylinderGrid(1.0, 9, 8)
    r = vortex_residual(ConnectionField.zero(grid, 3), constant_section(grid, [0, 0, 1]), circle_on_sphere())
    assert np.max(np.abs(r)) == 0.0


def meridian_vortex(n_t, c=0.5):
    grid = CylinderGrid(2.0, n_t, 8)
    x = c * grid.t
    gam = np.stack([1 / np.cosh(x), 0 * x, np.tanh(x)], -1)
    u = SectionField.normalized(grid, np.broadcast_to(gam[:, None], (n_t, 8, 3)))
    return ConnectionField.flat(grid, c * j_z()), u


def test_gradient_line_vortex_second_order():
    errs = []
    for n in (33, 65):
        A, u = meridian_vortex(n)
        errs.append(np.max(np.abs(vortex_residual(A, u, circle_on_sphere())[1:-1])))
    assert errs[0] < 1e-3
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_vortex_balances_radial_and_angular_energy():
    from ymh_lab.lattice_fields import covariant_derivative

    A, u = meridian_vortex(129)
    dt, dth = covariant_derivative(A, u)
    gap = np.abs(np.sum(dt**2, -1) - np.sum(dth**2, -1))[1:-1]
    assert np.max(gap) < 1e-4
