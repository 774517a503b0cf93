"""Neck diagnostics for solved pairs and for sequences of solved pairs.

Per-row quantities use the compact edge stencils of the energy. The angular
energy density is the squared theta-edge derivative twisted by a constant
comparison element alpha; the radial density is the squared t-edge derivative.
Both are averaged from edges onto nodes, so that trapezoid integration in t
reproduces the edge sums of the discrete Dirichlet energy exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gauge import GaugeConditionError, fit_log_profile, is_temporal
from .lattice_fields import (
    ConnectionField,
    CylinderGrid,
    SectionField,
    act,
    avg,
    edge_derivatives,
    fwd,
    integrate_rows,
    row_integrals,
)
from .lie_action import AlgebraElement, expm
from .spectral import classify_degeneration

ZERO_NU = 0.05
INFINITE_NU = 20.0
FIXED_POINT_TOL = 1e-2
THETA_FLOOR = 1e-14


def _t_density(dt_edges: np.ndarray) -> np.ndarray:
    """Node average of squared t-edge values; end nodes take their single edge."""
    sq = np.sum(dt_edges**2, -1)
    out = np.empty((sq.shape[0] + 1, sq.shape[1]))
    out[0], out[-1] = sq[0], sq[-1]
    out[1:-1] = 0.5 * (sq[1:] + sq[:-1])
    return out


def _theta_density(dth_edges: np.ndarray) -> np.ndarray:
    sq = np.sum(dth_edges**2, -1)
    return 0.5 * (sq + np.roll(sq, 1, axis=1))


def twisted_theta_edges(u: SectionField, alpha: AlgebraElement) -> np.ndarray:
    """(d_theta + alpha) u on theta edges with a constant twist."""
    g = u.grid
    return fwd(u.u, g.h_theta, 1, True) + act(alpha.matrix, avg(u.u, 1, True))


@dataclass(frozen=True)
class NeckDiagnostics:
    grid: CylinderGrid
    theta_profile: np.ndarray
    e_profile: np.ndarray
    e0: float
    total_energy: float
    sup_du: float

    @property
    def decomposition_residual(self) -> float:
        rhs = integrate_rows(self.e_profile, self.grid) + 2.0 * integrate_rows(self.theta_profile, self.grid)
        return abs(self.total_energy - rhs)

    def profile_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "theta_energy", "e_t"])
        for t, th, e in zip(self.grid.t, self.theta_profile, self.e_profile):
            w.writerow([repr(float(t)), repr(float(th)), repr(float(e))])
        return buf.getvalue()


def diagnostics(A: ConnectionField, u: SectionField, alpha: AlgebraElement) -> NeckDiagnostics:
    """Angular energy, radial balance and totals of a pair in temporal gauge."""
    if not is_temporal(A):
        raise GaugeConditionError("diagnostics need the connection in temporal gauge (a_t = 0)")
    g = u.grid
    dt, _ = edge_derivatives(A, u)
    rad = _t_density(dt)
    ang = _theta_density(twisted_theta_edges(u, alpha))
    theta = row_integrals(ang, g)
    e = row_integrals(rad, g) - theta
    total = integrate_rows(row_integrals(rad + ang, g), g)
    return NeckDiagnostics(
        grid=g,
        theta_profile=theta,
        e_profile=e,
        e0=float(e[g.middle_row]),
        total_energy=total,
        sup_du=float(np.sqrt(np.max(rad + ang))),
    )


# --- single-pair checks ------------------------------------------------------------


def f_l1_profile(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    """L1 norm of f over the region between the middle circle and each row."""
    row = row_integrals(np.sqrt(np.sum(np.asarray(f) ** 2, -1)), grid)
    mid = grid.middle_row
    out = np.zeros(grid.n_t)
    h = grid.h_t
    for i in range(mid + 1, grid.n_t):
        out[i] = out[i - 1] + 0.5 * h * (row[i] + row[i - 1])
    for i in range(mid - 1, -1, -1):
        out[i] = out[i + 1] + 0.5 * h * (row[i] + row[i + 1])
    return out


@dataclass(frozen=True)
class RadialBalance:
    deviation: np.ndarray
    bound: np.ndarray
    slack: float

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviation))

    @property
    def max_bound(self) -> float:
        return float(np.max(self.bound))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.deviation <= self.slack * self.bound + 1e-14))


def radial_balance_check(diag: NeckDiagnostics, f_l1: np.ndarray | float, slack: float = 1.1) -> RadialBalance:
    """Compare |e(t) - e(0)| with 2 sup|Du| times the L1 mass of f, row by row.

    ``f_l1`` is either a per-row profile (see ``f_l1_profile``) or one number.
    """
    dev = np.abs(diag.e_profile - diag.e0)
    mass = np.broadcast_to(np.asarray(f_l1, dtype=float), dev.shape)
    return RadialBalance(dev, 2.0 * diag.sup_du * mass, slack)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    amplitude: float
    r_squared: float
    sigma: float

    @property
    def meets_bound(self) -> bool:
        return self.rate >= 0.9 * self.sigma


def decay_fit(diag: NeckDiagnostics, sigma: float, window: tuple[float, float] | None = None) -> DecayFit:
    """Fit log Theta against |t| - T on rows with |t| inside the window.

    The default window is the middle half, |t| <= T/2.
    """
    g = diag.grid
    T = g.T_half
    lo, hi = window if window is not None else (0.0, T / 2.0)
    at = np.abs(g.t)
    keep = (at >= lo - 1e-12) & (at <= hi + 1e-12) & (diag.theta_profile > THETA_FLOOR)
    if np.count_nonzero(keep) < 4:
        raise ValueError("fewer than 4 rows with positive angular energy in the window")
    fit = fit_log_profile(at[keep] - T, diag.theta_profile[keep])
    return DecayFit(fit.rate, fit.amplitude, fit.r_squared, float(sigma))


def concentration_scan(
    u: SectionField, A: ConnectionField, window_len: float = 1.0, threshold: float = 0.1
) -> list[tuple[float, float]]:
    """Energy of D_A u on sliding t-windows; one (centre, energy) entry per run of windows above threshold."""
    g = u.grid
    if window_len > 2 * g.T_half + 1e-12:
        raise ValueError("window longer than the cylinder")
    dt, dth = edge_derivatives(A, u)
    density = row_integrals(_t_density(dt) + _theta_density(dth), g)
    t = g.t
    half = 0.5 * window_len
    centers = t[(t - half >= -g.T_half - 1e-12) & (t + half <= g.T_half + 1e-12)]
    energies = []
    for c in centers:
        inside = np.abs(t - c) <= half + 1e-12
        ti, di = t[inside], density[inside]
        energies.append(float(np.trapezoid(di, ti)) if len(ti) > 1 else 0.0)
    hits: list[tuple[float, float]] = []
    run: list[tuple[float, float]] = []
    for c, e in zip(centers, energies):
        if e > threshold:
            run.append((float(c), e))
        elif run:
            hits.append(max(run, key=lambda x: x[1]))
            run = []
    if run:
        hits.append(max(run, key=lambda x: x[1]))
    return hits


# --- sequences -------------------------------------------------------------------------


def trend(values: Sequence[float], tiny: float = 1e-12) -> str:
    """converging, diverging, oscillating or unresolved (fewer than three values)."""
    x = np.asarray(values, dtype=float)
    if len(x) < 3:
        return "unresolved"
    d = np.diff(x)
    scale = max(1.0, float(np.max(np.abs(x))))
    signs = np.sign(d[np.abs(d) > tiny * scale])
    if len(signs) == 0:
        return "converging"
    if np.any(signs != signs[0]):
        return "oscillating"
    return "converging" if abs(d[-1]) < abs(d[0]) else "diverging"


@dataclass(frozen=True)
class SequenceRecord:
    T: float
    delta: float
    e: float
    alpha: AlgebraElement
    rho: float


@dataclass
class SequenceReport:
    records: list[SequenceRecord]
    alpha_inf: AlgebraElement
    classification: str = "unresolved"
    details: dict = field(default_factory=dict)

    @property
    def T(self) -> np.ndarray:
        return np.array([r.T for r in self.records])

    @property
    def mu_trace(self) -> np.ndarray:
        return np.array([r.T * r.e for r in self.records])

    @property
    def nu_trace(self) -> np.ndarray:
        # |e| keeps the trace real when rounding makes e slightly negative
        return np.array([r.T * math.sqrt(abs(r.e)) for r in self.records])

    @property
    def kappa_trace(self) -> np.ndarray:
        return np.array([r.T * r.rho for r in self.records])

    @property
    def omega_trace(self) -> np.ndarray:
        return np.array([r.T * r.rho**2 for r in self.records])

    def trends(self) -> dict[str, str]:
        return {
            "mu": trend(self.mu_trace),
            "nu": trend(self.nu_trace),
            "kappa": trend(self.kappa_trace),
            "omega": trend(self.omega_trace),
        }

    def to_dict(self) -> dict:
        return {
            "records": [
                {"T": r.T, "delta": r.delta, "e": r.e, "alpha": list(r.alpha.upper), "rho": r.rho}
                for r in self.records
            ],
            "alpha_inf": list(self.alpha_inf.upper),
            "mu_trace": self.mu_trace.tolist(),
            "nu_trace": self.nu_trace.tolist(),
            "kappa_trace": self.kappa_trace.tolist(),
            "omega_trace": self.omega_trace.tolist(),
            "trends": self.trends(),
            "classification": self.classification,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def sequence_report(
    T_list: Sequence[float],
    e_list: Sequence[float],
    alphas: Sequence[AlgebraElement],
    alpha_inf: AlgebraElement,
    deltas: Sequence[float] | None = None,
) -> SequenceReport:
    if not len(T_list) == len(e_list) == len(alphas):
        raise ValueError("T, e and alpha lists must have equal length")
    deltas = list(deltas) if deltas is not None else [math.exp(-T) for T in T_list]
    recs = [
        SequenceRecord(float(T), float(d), float(e), a, (a - alpha_inf).norm)
        for T, d, e, a in zip(T_list, deltas, e_list, alphas)
    ]
    return SequenceReport(recs, alpha_inf)


@dataclass(frozen=True)
class EnergyIdentity:
    lhs: float
    rhs_nondegenerate: float
    rhs_degenerate: float | None
    residuals: np.ndarray
    degenerate_residuals: np.ndarray | None
    trend: str
    passed: bool


def energy_identity_check(
    seq: SequenceReport,
    energies: Sequence[float],
    orbit_terms: Sequence[float] | None = None,
    tol_sequence: float = 0.05,
    relative: bool = True,
) -> EnergyIdentity:
    """Finite-n residuals of E_n = 2 T_n e_n and of E_n = 2 orbit_n + 2 T_n e_n.

    Passes when the last residual of the applicable identity is at most
    ``tol_sequence`` (times E_n when ``relative``).
    """
    E = np.asarray(energies, dtype=float)
    if len(E) < 3 or len(E) != len(seq.records):
        raise ValueError("need at least three sequence entries with matching energies")
    mu = seq.mu_trace
    res = np.abs(E - 2.0 * mu)
    dres = None
    rhs_deg = None
    if orbit_terms is not None:
        orb = np.asarray(orbit_terms, dtype=float)
        dres = np.abs(E - 2.0 * orb - 2.0 * mu)
        rhs_deg = float(2.0 * orb[-1] + 2.0 * mu[-1])
    used = dres if dres is not None else res
    limit = tol_sequence * (E[-1] if relative else 1.0)
    return EnergyIdentity(
        lhs=float(E[-1]),
        rhs_nondegenerate=float(2.0 * mu[-1]),
        rhs_degenerate=rhs_deg,
        residuals=res,
        degenerate_residuals=dres,
        trend=trend(used),
        passed=bool(used[-1] <= limit),
    )


def orbit_term(u: SectionField, alpha_n: AlgebraElement, alpha_inf: AlgebraElement) -> float:
    """Integral of |(alpha_n - alpha_inf) u|^2 over the cylinder."""
    v = act((alpha_n - alpha_inf).matrix, u.u)
    dens = row_integrals(np.sum(v**2, -1), u.grid)
    return integrate_rows(dens, u.grid)


def fixed_point_residual(u: SectionField, alpha_inf: AlgebraElement, row: int | None = None) -> float:
    """sup over one circle (the middle one by default) of |exp(2 pi alpha_inf) u - u|."""
    circle = u.u[u.grid.middle_row if row is None else row]
    g = expm(2.0 * np.pi * alpha_inf.matrix)
    return float(np.max(np.linalg.norm(circle @ g.T - circle, axis=-1)))


@dataclass(frozen=True)
class NeckClassification:
    label: str
    length: float | None
    degeneration: str
    nu: float
    kappa: float
    fixed_point_residual: float
    fixed_point_ok: bool
    thresholds: dict

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "length": self.length,
            "degeneration": self.degeneration,
            "nu": self.nu,
            "kappa": self.kappa,
            "fixed_point_residual": self.fixed_point_residual,
            "fixed_point_ok": self.fixed_point_ok,
            "thresholds": self.thresholds,
        }


def classify_neck(
    seq: SequenceReport,
    last_pair: tuple[ConnectionField, SectionField],
    zero_nu: float = ZERO_NU,
    infinite_nu: float = INFINITE_NU,
    fixed_point_tol: float = FIXED_POINT_TOL,
    n_theta: int = 64,
) -> NeckClassification:
    """Decide the neck type from the traces and the degeneration class of the twists."""
    alphas = [r.alpha for r in seq.records]
    degen = classify_degeneration(alphas, seq.alpha_inf, n_theta=n_theta).classification
    nu = float(seq.nu_trace[-1])
    kappa = float(seq.kappa_trace[-1])
    tr = seq.trends()
    length = None
    if degen == "degenerating":
        finite = nu <= infinite_nu and tr["nu"] != "diverging" and tr["kappa"] != "diverging"
        label = "neumann_orbit" if finite and tr["kappa"] != "oscillating" else "unresolved"
    elif nu < zero_nu:
        label = "single_orbit"
    elif nu > infinite_nu or tr["nu"] == "diverging":
        label = "infinite_geodesic"
    elif tr["nu"] == "oscillating":
        label = "unresolved"
    else:
        label = "twisted_geodesic"
        length = 2.0 * nu / math.sqrt(2.0 * math.pi)
    fp = fixed_point_residual(last_pair[1], seq.alpha_inf)
    out = NeckClassification(
        label,
        length,
        degen,
        nu,
        kappa,
        fp,
        fp <= fixed_point_tol,
        {"zero_nu": zero_nu, "infinite_nu": infinite_nu, "fixed_point_tol": fixed_point_tol},
    )
    seq.classification = label
    seq.details = out.to_dict()
    return out


@dataclass(frozen=True)
class ReparameterizedLimit:
    s: np.ndarray
    v: np.ndarray
    radial_speed: np.ndarray
    angular_speed: np.ndarray
    second_derivative: np.ndarray  # T^2 |d_t^2 u|, i.e. |d_s^2 v|

    def arc_length(self, theta_index: int = 0) -> float:
        """Polygonal length of s -> v(s, theta_j)."""
        c = self.v[:, theta_index]
        return float(np.sum(np.linalg.norm(np.diff(c, axis=0), axis=-1)))


def reparameterized_limit(
    u: SectionField, T: float | None = None, n_s: int = 65, alpha: AlgebraElement | None = None
) -> ReparameterizedLimit:
    """Resample v(s, theta) = u(T s, theta) on [-1, 1] by linear interpolation in t.

    Companion values T |d_t u|, T |(d_theta + alpha) u| and T^2 |d_t^2 u| are given
    per node of the new grid (the angular one only when alpha is supplied, else zeros).
    """
    if n_s < 8:
        raise ValueError("need n_s >= 8")
    g = u.grid
    T = g.T_half if T is None else float(T)
    s = np.linspace(-1.0, 1.0, n_s)
    t_new = np.clip(T * s, g.t[0], g.t[-1])
    idx = np.clip(np.searchsorted(g.t, t_new) - 1, 0, g.n_t - 2)
    frac = ((t_new - g.t[idx]) / g.h_t)[:, None, None]
    v = (1.0 - frac) * u.u[idx] + frac * u.u[idx + 1]
    dt = np.linalg.norm(np.diff(u.u, axis=0), axis=-1) / g.h_t
    radial = T * dt[idx]
    if alpha is not None:
        ang_nodes = np.sqrt(_theta_density(twisted_theta_edges(u, alpha)))
        angular = T * ((1.0 - frac[..., 0]) * ang_nodes[idx] + frac[..., 0] * ang_nodes[idx + 1])
    else:
        angular = np.zeros_like(radial)
    dtt = np.linalg.norm(u.u[2:] - 2.0 * u.u[1:-1] + u.u[:-2], axis=-1) / g.h_t**2
    dtt = np.concatenate([dtt[:1], dtt, dtt[-1:]])
    second = T**2 * ((1.0 - frac[..., 0]) * dtt[idx] + frac[..., 0] * dtt[idx + 1])
    return ReparameterizedLimit(s, v, radial, angular, second)
