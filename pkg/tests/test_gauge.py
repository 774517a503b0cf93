import numpy as np
import pytest

from ymh_lab.gauge import (
    GaugeConditionError,
    GaugeTransform,
    apply_gauge,
    balanced_temporal_gauge,
    flatness_fit,
    flatness_profile,
    holonomy,
    holonomy_limit_probe,
    principal_log,
    random_gauge,
)
from ymh_lab.lattice_fields import ConnectionField, CylinderGrid, SectionField
from ymh_lab.lie_action import expm, j_x, j_y, j_z, so3_on_sphere
from ymh_lab.ymh_core import WeightProfile, ymh_energy


def smooth_pair(grid):
    t, th = grid.mesh()
    a_t = (0.2 * np.cos(th) * np.exp(-t**2))[..., None, None] * j_x().matrix
    a_th = (0.3 + 0.1 * np.sin(t + th))[..., None, None] * j_z().matrix + (
        0.15 * np.cos(th)
    )[..., None, None] * j_y().matrix
    u = np.stack([np.cos(0.4 * t) * np.cos(th), np.cos(0.4 * t) * np.sin(th), np.sin(0.4 * t)], -1)
    return ConnectionField(grid, a_t, a_th), SectionField(grid, u)


def test_identity_gauge_changes_nothing():
    grid = CylinderGrid(1.0, 17, 16)
    A, u = smooth_pair(grid)
    A2, u2 = apply_gauge(GaugeTransform.identity(grid, 3), A, u)
    np.testing.assert_allclose(A2.a_t, A.a_t, atol=1e-15)
    np.testing.assert_allclose(A2.a_theta, A.a_theta, atol=1e-15)
    np.testing.assert_allclose(u2.u, u.u, atol=1e-15)


def test_constant_gauge_conjugates_exactly():
    grid = CylinderGrid(1.0, 17, 16)
    A, u = smooth_pair(grid)
    g = expm(0.7 * j_x().matrix + 0.2 * j_y().matrix)
    A2, u2 = apply_gauge(GaugeTransform.constant(grid, g), A, u)
    np.testing.assert_allclose(A2.a_theta, g.T @ A.a_theta @ g, atol=1e-14)
    np.testing.assert_allclose(A2.a_t, g.T @ A.a_t @ g, atol=1e-14)
    np.testing.assert_allclose(u2.u, u.u @ g, atol=1e-14)


def test_maurer_cartan_of_rotation_is_generator():
    errs = []
    for n in (16, 32):
        grid = CylinderGrid(1.0, 9, n)
        _, th = grid.mesh()
        s = GaugeTransform(grid, expm(th[..., None, None] * j_z().matrix))
        u = SectionField(grid, np.broadcast_to([0.0, 0.0, 1.0], (9, n, 3)).copy())
        A2, _ = apply_gauge(s, ConnectionField.zero(grid, 3), u)
        errs.append(np.max(np.abs(A2.a_theta - j_z().matrix)))
    assert errs[0] < 0.05
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_ymh_gauge_defect_is_second_order():
    spec = so3_on_sphere()
    defects = []
    grid = CylinderGrid(2.0, 17, 16)
    for _ in range(3):
        A, u = smooth_pair(grid)
        t, th = grid.mesh()
        gen = (0.5 * np.sin(th) + 0.2 * t)[..., None, None] * j_x().matrix + (
            0.3 * np.cos(th + t)
        )[..., None, None] * j_z().matrix
        A2, u2 = apply_gauge(GaugeTransform(grid, expm(gen)), A, u)
        w = WeightProfile.uniform(grid, 0.7)
        defects.append(abs(ymh_energy(A2, u2, w, spec).total - ymh_energy(A, u, w, spec).total))
        grid = grid.refined()
    assert 3.0 <= defects[1] / defects[2] <= 5.0


def test_holonomy_of_constant_twist():
    grid = CylinderGrid(1.0, 9, 32)
    A = ConnectionField.flat(grid, 0.3 * j_z())
    np.testing.assert_allclose(holonomy(A, 4).matrix, expm(2 * np.pi * 0.3 * j_z().matrix), atol=1e-10)
    np.testing.assert_allclose(holonomy(ConnectionField.zero(grid, 3), 0).matrix, np.eye(3), atol=1e-15)
    with pytest.raises(IndexError):
        holonomy(A, 9)


def test_holonomy_phases_gauge_invariant():
    grid = CylinderGrid(1.0, 17, 32)
    A, u = smooth_pair(grid)
    s = random_gauge(grid, so3_on_sphere(), np.random.default_rng(0))
    A2, _ = apply_gauge(s, A, u)
    # a circle holonomy is conjugated exactly only for link variables; here the
    # node-based image agrees to discretization order
    for i in (0, 8, 16):
        d = np.abs(holonomy(A2, i).phases - holonomy(A, i).phases)
        assert np.max(d) < 5e-3


def test_balanced_gauge_of_flat_twist_is_trivial():
    grid = CylinderGrid(1.0, 17, 16)
    A = ConnectionField.flat(grid, 0.3 * j_z())
    res = balanced_temporal_gauge(A)
    np.testing.assert_allclose(res.connection.a_theta, A.a_theta, atol=1e-10)
    assert res.alpha.upper[0] == pytest.approx(-0.3, abs=1e-12)
    assert not res.pi_tie


def test_balanced_gauge_removes_constant_temporal_part():
    grid = CylinderGrid(1.0, 17, 16)
    c = 0.4
    A = ConnectionField(grid, np.broadcast_to(c * j_z().matrix, (17, 16, 3, 3)).copy(), np.zeros((17, 16, 3, 3)))
    res = balanced_temporal_gauge(A)
    assert np.max(np.abs(res.connection.a_t)) <= 1e-12
    assert np.max(np.abs(res.connection.a_theta)) <= 1e-10
    assert res.alpha.norm <= 1e-12
    expect = expm(-c * grid.t[:, None, None] * j_z().matrix)
    np.testing.assert_allclose(res.transform.s, np.broadcast_to(expect[:, None], res.transform.s.shape), atol=1e-8)


def test_balanced_gauge_preserves_every_circle_holonomy():
    grid = CylinderGrid(2.0, 33, 32)
    A = ConnectionField.from_profile(grid, 0.3 + 0.1 * np.tanh(grid.t), j_z())
    res = balanced_temporal_gauge(A)
    out = res.connection
    mid = grid.middle_row
    assert np.max(np.abs(out.a_theta[mid] - res.alpha.matrix)) <= 1e-10
    for i in range(grid.n_t):
        assert np.max(np.abs(holonomy(out, i).phases - holonomy(A, i).phases)) <= 1e-8


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_balanced_gauge_invariants_on_random_connections(seed):
    grid = CylinderGrid(1.5, 25, 16)
    A, u = smooth_pair(grid)
    A, _ = apply_gauge(random_gauge(grid, so3_on_sphere(), np.random.default_rng(seed)), A, u)
    res = balanced_temporal_gauge(A)
    out = res.connection
    assert np.max(np.abs(out.a_t)) <= 1e-12
    assert np.max(np.abs(out.a_theta[grid.middle_row] - res.alpha.matrix)) <= 1e-10
    for i in range(grid.n_t):
        assert np.max(np.abs(holonomy(out, i).phases - holonomy(A, i).phases)) <= 1e-8


def test_principal_log_flags_half_turn():
    _, tie = principal_log(expm(np.pi * j_z().matrix))
    assert tie
    log, tie = principal_log(expm(0.5 * j_z().matrix))
    np.testing.assert_allclose(log, 0.5 * j_z().matrix, atol=1e-12)
    assert not tie


def circle(values):
    return lambda r: np.broadcast_to(values(r), (32, 3, 3)).copy()


def test_probe_constant_family_converges():
    probe = holonomy_limit_probe(circle(lambda r: 0.3 * j_z().matrix), [0.5, 0.25, 0.125])
    assert probe.converged
    assert max(probe.defects) <= 1e-14


def test_probe_linear_family_defects_shrink_linearly():
    r = [2.0**-k for k in range(4, 16)]
    probe = holonomy_limit_probe(circle(lambda r: (0.3 + r) * j_z().matrix), r)
    assert probe.converged
    ratios = np.array(probe.defects[:-1]) / np.array(probe.defects[1:])
    np.testing.assert_allclose(ratios[-5:], 2.0, rtol=1e-2)


def test_probe_oscillating_family_is_flagged():
    r = list(0.5 * 0.8 ** np.arange(25))
    fam = circle(lambda r: 0.3 * j_z().matrix + np.sin(1.0 / r) * 0.5 * j_x().matrix)
    assert not holonomy_limit_probe(fam, r).converged


def test_probe_rejects_bad_radii():
    with pytest.raises(ValueError):
        holonomy_limit_probe(circle(lambda r: 0 * j_z().matrix), [])
    with pytest.raises(ValueError):
        holonomy_limit_probe(circle(lambda r: 0 * j_z().matrix), [0.1, 0.2])


def test_probe_csv_header():
    probe = holonomy_limit_probe(circle(lambda r: 0.3 * j_z().matrix), [0.5, 0.25])
    assert probe.to_csv().splitlines()[0] == "r_or_t,phase_1,phase_2,phase_3,cauchy_defect"


def test_flatness_profile_zero_for_constant():
    grid = CylinderGrid(2.0, 33, 16)
    alpha = 0.3 * j_z()
    assert np.max(flatness_profile(ConnectionField.flat(grid, alpha), alpha)) <= 1e-14


def test_flatness_requires_temporal_gauge():
    grid = CylinderGrid(1.0, 17, 16)
    A, _ = smooth_pair(grid)
    with pytest.raises(GaugeConditionError):
        flatness_profile(A, 0.3 * j_z())


def test_flatness_fit_recovers_unit_rate():
    grid = CylinderGrid(6.0, 241, 16)
    delta, alpha, beta = np.exp(-6.0), 0.3 * j_z(), 0.5 * j_x()
    prof = delta * np.exp(np.abs(grid.t) - grid.T_half)
    A = ConnectionField(
        grid,
        np.zeros((241, 16, 3, 3)),
        np.broadcast_to(alpha.matrix + prof[:, None, None, None] * beta.matrix, (241, 16, 3, 3)),
    )
    fit = flatness_fit(flatness_profile(A, alpha), grid)
    assert abs(fit.rate - 1.0) <= 0.05
    # deviation plus derivative: both carry delta |beta| at the rate-one profile
    assert 1.0 <= fit.amplitude / (delta * beta.norm) <= 2.2
