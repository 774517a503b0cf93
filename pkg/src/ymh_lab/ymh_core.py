"""Discrete Yang-Mills-Higgs energy, its exact gradient, and a projected descent solver.

Conventions: the surface metric is lambda^2 (dt^2 + dtheta^2), so lambda enters
squared. The curvature term carries weight lambda^-2 and the Higgs term weight
lambda^2; the Dirichlet term is conformally invariant and carries no weight.
Residuals are L2 gradients: the derivative of the discrete energy divided by
the node quadrature weight, so pairing with the same quadrature reproduces
directional derivatives exactly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .lattice_fields import (
    ConnectionField,
    CylinderGrid,
    GridMismatchError,
    SectionField,
    act,
    avg,
    avg_adjoint,
    bracket,
    cell_average,
    cell_average_adjoint,
    cell_curvature,
    covariant_derivative,
    dirichlet_energy,
    edge_derivatives,
    fwd_adjoint,
    t_edge_weights,
)
from .lie_action import ActionSpec, ManifoldError, retract

ARMIJO = 1e-4
MIN_STEP = 1e-14
ENERGY_SLACK = 1e-12


class StepCollapseError(RuntimeError):
    """Backtracking shrank the step below the minimum."""


class DivergenceError(RuntimeError):
    """Energy increased beyond the line-search slack."""


class MissingComplexStructure(ValueError):
    pass


@dataclass(frozen=True)
class WeightProfile:
    """Per-row conformal factor lambda(t) of the metric lambda^2 (dt^2 + dtheta^2)."""

    lam: np.ndarray
    delta: float = float("nan")
    T_half: float = float("nan")
    bound_constant: float = float("nan")

    def __post_init__(self) -> None:
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("conformal factor must be a positive finite per-row profile")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def uniform(cls, grid: CylinderGrid, value: float = 1.0) -> WeightProfile:
        return cls(np.full(grid.n_t, float(value)), T_half=grid.T_half)

    @classmethod
    def certified(cls, lam: np.ndarray, grid: CylinderGrid, delta: float) -> WeightProfile:
        """Profile with its exponential-bound constant max lambda e^{T-|t|} / delta."""
        c = float(np.max(np.asarray(lam) * np.exp(grid.T_half - np.abs(grid.t))) / delta)
        return cls(np.asarray(lam, dtype=float), delta, grid.T_half, c)

    def scaled(self, s: float) -> WeightProfile:
        return WeightProfile(self.lam * s, self.delta, self.T_half, self.bound_constant * s)


class EnergyTerms(NamedTuple):
    total: float
    energy_term: float
    yang_mills_term: float
    higgs_term: float


class Residual(NamedTuple):
    section: np.ndarray  # (n_t, n_theta, K), tangent
    a_t: np.ndarray  # (n_t, n_theta, K, K), in the represented algebra
    a_theta: np.ndarray


def _check(A: ConnectionField, u: SectionField, w: WeightProfile) -> None:
    if A.grid != u.grid:
        raise GridMismatchError("connection and section grids differ")
    if w.lam.shape != (A.grid.n_t,):
        raise GridMismatchError("weight profile length does not match n_t")


def _project_algebra(m: np.ndarray, spec: ActionSpec) -> np.ndarray:
    """Frobenius projection of node matrices onto the span of the generators."""
    proj = spec.algebra_projector()
    shape = m.shape
    flat = m.reshape(-1, spec.K * spec.K) @ proj
    return flat.reshape(shape)


def _cell_inverse_weight(w: WeightProfile, grid: CylinderGrid) -> np.ndarray:
    """Cell weights h_t h_theta / lambda^2, with lambda^-2 averaged over the two rows."""
    inv = 1.0 / w.lam**2
    cell = 0.5 * (inv[1:] + inv[:-1])
    return np.broadcast_to((cell * grid.h_t * grid.h_theta)[:, None], (grid.n_t - 1, grid.n_theta))


def ymh_energy(A: ConnectionField, u: SectionField, w: WeightProfile, spec: ActionSpec) -> EnergyTerms:
    """(total, Dirichlet term, curvature term, Higgs term) of the discrete functional."""
    _check(A, u, w)
    g = A.grid
    e_term = dirichlet_energy(A, u)
    F = cell_curvature(A)
    ym = float(np.sum(_cell_inverse_weight(w, g) * np.sum(F**2, axis=(-2, -1))))
    diff = spec.moment.value(u.u) - np.asarray(spec.center_c)
    higgs = float(np.sum(g.weights * (w.lam**2)[:, None] * np.sum(diff**2, -1)))
    return EnergyTerms(e_term + ym + higgs, e_term, ym, higgs)


def _dirichlet_gradient(A: ConnectionField, u: SectionField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw derivatives of the compact Dirichlet energy in u, a_t and a_theta."""
    g = A.grid
    uu = u.u
    dt, dth = edge_derivatives(A, u)
    pt = 2.0 * t_edge_weights(g)[..., None] * dt
    pth = 2.0 * g.weights[..., None] * dth
    at_bar = avg(A.a_t, 0, False)
    ath_bar = avg(A.a_theta, 1, True)
    grad_u = (
        fwd_adjoint(pt, g.h_t, 0, False)
        - avg_adjoint(act(at_bar, pt), 0, False)
        + fwd_adjoint(pth, g.h_theta, 1, True)
        - avg_adjoint(act(ath_bar, pth), 1, True)
    )
    u_t = avg(uu, 0, False)
    u_th = avg(uu, 1, True)
    grad_at = avg_adjoint(pt[..., :, None] * u_t[..., None, :], 0, False)
    grad_ath = avg_adjoint(pth[..., :, None] * u_th[..., None, :], 1, True)
    return grad_u, grad_at, grad_ath


def el_residual(A: ConnectionField, u: SectionField, w: WeightProfile, spec: ActionSpec) -> Residual:
    """L2 gradient of the discrete energy; zero exactly at discrete critical points."""
    _check(A, u, w)
    dev = np.max(np.abs(np.linalg.norm(u.u, axis=-1) - 1.0))
    if dev > 1e-8:
        raise ManifoldError(f"section off the sphere by {dev:.3e}")
    g = A.grid
    W = g.weights
    uu = u.u
    grad_u, grad_at, grad_ath = _dirichlet_gradient(A, u)

    diff = spec.moment.value(uu) - np.asarray(spec.center_c)
    jac = spec.moment.jacobian(uu)
    grad_u += 2.0 * (W * (w.lam**2)[:, None])[..., None] * np.einsum("...k,...kj->...j", diff, jac)
    grad_u -= np.sum(grad_u * uu, -1, keepdims=True) * uu

    G = 2.0 * _cell_inverse_weight(w, g)[..., None, None] * cell_curvature(A)
    at_c = cell_average(A.a_t)
    ath_c = cell_average(A.a_theta)
    grad_ath = (
        grad_ath
        + fwd_adjoint(avg_adjoint(G, 1, True), g.h_t, 0, False)
        - cell_average_adjoint(bracket(at_c, G))
    )
    grad_at = (
        grad_at
        - avg_adjoint(fwd_adjoint(G, g.h_theta, 1, True), 0, False)
        + cell_average_adjoint(bracket(ath_c, G))
    )

    inv_w = 1.0 / W
    return Residual(
        grad_u * inv_w[..., None],
        _project_algebra(grad_at, spec) * inv_w[..., None, None],
        _project_algebra(grad_ath, spec) * inv_w[..., None, None],
    )


def l2_pairing(res: Residual, du: np.ndarray, da_t: np.ndarray, da_theta: np.ndarray, grid: CylinderGrid) -> float:
    """Quadrature pairing of a residual with a perturbation (du, da_t, da_theta)."""
    W = grid.weights
    return float(
        np.sum(W * np.sum(res.section * du, -1))
        + np.sum(W * np.sum(res.a_t * da_t, axis=(-2, -1)))
        + np.sum(W * np.sum(res.a_theta * da_theta, axis=(-2, -1)))
    )


def potential_force(u: SectionField, w: WeightProfile, spec: ActionSpec) -> np.ndarray:
    """Tangential lambda^2 (mu - c) grad mu at every node."""
    uu = u.u
    diff = spec.moment.value(uu) - np.asarray(spec.center_c)
    v = np.einsum("...k,...kj->...j", diff, spec.moment.jacobian(uu))
    v = v - np.sum(v * uu, -1, keepdims=True) * uu
    return (w.lam**2)[:, None, None] * v


def vortex_residual(A: ConnectionField, u: SectionField, spec: ActionSpec) -> np.ndarray:
    """D_t u + J_u D_theta u; zero exactly for twisted-holomorphic pairs."""
    if spec.complex_structure is None:
        raise MissingComplexStructure("action spec has no complex structure")
    dt, dth = covariant_derivative(A, u)
    return dt + spec.complex_structure(u.u, dth)


# --- descent ---------------------------------------------------------------------


@dataclass
class SolverOptions:
    step: float = 0.1
    max_iters: int = 20000
    tol: float = 1e-8
    boundary: str = "fixed"  # or "free"
    update_connection: bool = True
    barzilai_borwein: bool = True
    max_step: float = 1e3

    def __post_init__(self) -> None:
        if self.boundary not in ("fixed", "free"):
            raise ValueError("boundary must be 'fixed' or 'free'")
        if not (self.step > 0 and self.tol > 0 and self.max_iters >= 0):
            raise ValueError("step, tol must be positive and max_iters non-negative")


class TraceRow(NamedTuple):
    iter: int
    energy: float
    e_term: float
    ym_term: float
    higgs_term: float
    res_u: float
    res_A: float
    step: float


@dataclass
class SolveResult:
    connection: ConnectionField
    section: SectionField
    trace: list[TraceRow] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def final_energy(self) -> float:
        return self.trace[-1].energy

    def trace_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TraceRow._fields)
        for r in self.trace:
            wr.writerow([r.iter, *(repr(float(x)) for x in r[1:])])
        return buf.getvalue()


def _mask(res: Residual, opts: SolverOptions) -> Residual:
    su, at, ath = res.section.copy(), res.a_t.copy(), res.a_theta.copy()
    if opts.boundary == "fixed":
        for arr in (su, at, ath):
            arr[0] = 0.0
            arr[-1] = 0.0
    if not opts.update_connection:
        at[:] = 0.0
        ath[:] = 0.0
    return Residual(su, at, ath)


def _sup(res: Residual) -> tuple[float, float]:
    ru = float(np.sqrt(np.max(np.sum(res.section**2, -1))))
    ra = float(
        np.sqrt(
            np.max(np.sum(res.a_t**2, axis=(-2, -1)) + np.sum(res.a_theta**2, axis=(-2, -1)))
        )
    )
    return ru, ra


def _inner(a: Residual, b: Residual, W: np.ndarray) -> float:
    return float(
        np.sum(W * np.sum(a.section * b.section, -1))
        + np.sum(W * np.sum(a.a_t * b.a_t, axis=(-2, -1)))
        + np.sum(W * np.sum(a.a_theta * b.a_theta, axis=(-2, -1)))
    )


def gradient_flow_solve(
    A0: ConnectionField,
    u0: SectionField,
    w: WeightProfile,
    spec: ActionSpec,
    opts: SolverOptions | None = None,
) -> SolveResult:
    """Projected gradient descent with Armijo backtracking.

    The trial step is the Barzilai-Borwein ratio of the last two iterates (or
    ``opts.step`` initially); it is halved until the Armijo condition holds.
    The section moves along the tangent gradient and is retracted radially
    onto the sphere; the connection moves in the represented algebra.
    """
    opts = opts or SolverOptions()
    A = A0.copy()
    u = u0.copy()
    W = A.grid.weights
    terms = ymh_energy(A, u, w, spec)
    res = _mask(el_residual(A, u, w, spec), opts)
    ru, ra = _sup(res)
    trace = [TraceRow(0, *terms, ru, ra, 0.0)]
    if max(ru, ra) < opts.tol:
        return SolveResult(A, u, trace, True, "tolerance")

    step = opts.step
    prev: tuple[ConnectionField, SectionField, Residual] | None = None
    for it in range(1, opts.max_iters + 1):
        gnorm2 = _inner(res, res, W)
        if prev is not None and opts.barzilai_borwein:
            pa, pu, pres = prev
            s = Residual(u.u - pu.u, A.a_t - pa.a_t, A.a_theta - pa.a_theta)
            y = Residual(res.section - pres.section, res.a_t - pres.a_t, res.a_theta - pres.a_theta)
            sy = _inner(s, y, W)
            if sy > 0:
                step = min(_inner(s, s, W) / sy, opts.max_step)
            else:
                step = min(2.0 * step, opts.max_step)
        slack = ENERGY_SLACK * max(1.0, abs(terms.total))
        while True:
            u_new = SectionField(A.grid, retract(u.u - step * res.section))
            A_new = ConnectionField(A.grid, A.a_t - step * res.a_t, A.a_theta - step * res.a_theta)
            new_terms = ymh_energy(A_new, u_new, w, spec)
            if new_terms.total <= terms.total - ARMIJO * step * gnorm2 + slack:
                break
            step *= 0.5
            if step < MIN_STEP:
                raise StepCollapseError(f"line search collapsed at iteration {it}")
        if not math.isfinite(new_terms.total) or new_terms.total > terms.total + slack:
            raise DivergenceError(f"energy increased at iteration {it}")
        prev = (A, u, res)
        A, u, terms = A_new, u_new, new_terms
        res = _mask(el_residual(A, u, w, spec), opts)
        ru, ra = _sup(res)
        trace.append(TraceRow(it, *terms, ru, ra, step))
        if max(ru, ra) < opts.tol:
            return SolveResult(A, u, trace, True, "tolerance")
    return SolveResult(A, u, trace, False, "max_iters")


def covariant_laplacian(A: ConnectionField, u: SectionField) -> np.ndarray:
    """Tangential part of the compact covariant Laplacian at every node.

    This is -1/2 of the Dirichlet part of the section residual, so at a
    discrete critical point it equals lambda^2 (mu - c) grad mu.
    """
    grad_u, _, _ = _dirichlet_gradient(A, u)
    lap = -0.5 * grad_u / A.grid.weights[..., None]
    return lap - np.sum(lap * u.u, -1, keepdims=True) * u.u


def forcing_term(A: ConnectionField, u: SectionField, w: WeightProfile, spec: ActionSpec, alpha) -> np.ndarray:
    """Right-hand side f of the flat-comparison equation (u_tt + D_alpha^2 u)^T = f.

    Computed from the solver's own fields as the Higgs force plus the change
    in the Laplacian when the actual connection is replaced by alpha d(theta).
    """
    flat = ConnectionField.flat(A.grid, alpha)
    return potential_force(u, w, spec) + covariant_laplacian(flat, u) - covariant_laplacian(A, u)
