"""Gauge transformations, balanced temporal gauge, holonomy and flatness profiles."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .lattice_fields import (
    ConnectionField,
    CylinderGrid,
    GridMismatchError,
    SectionField,
    act,
    diff_t,
    diff_theta,
)
from .lie_action import (
    ActionSpec,
    AlgebraElement,
    expm,
    orthogonality_drift,
    reorthonormalize,
)

TEMPORAL_TOL = 1e-12
PI_TIE_TOL = 1e-12


class GaugeODEError(RuntimeError):
    """The temporal gauge ODE produced non-finite values."""


class GaugeConditionError(ValueError):
    """A connection expected in temporal gauge has nonzero a_t."""


@dataclass
class GaugeTransform:
    grid: CylinderGrid
    s: np.ndarray  # (n_t, n_theta, K, K), orthogonal per node

    @classmethod
    def identity(cls, grid: CylinderGrid, K: int) -> GaugeTransform:
        return cls(grid, np.broadcast_to(np.eye(K), (grid.n_t, grid.n_theta, K, K)).copy())

    @classmethod
    def constant(cls, grid: CylinderGrid, g: np.ndarray) -> GaugeTransform:
        g = np.asarray(g, dtype=float)
        return cls(grid, np.broadcast_to(g, (grid.n_t, grid.n_theta) + g.shape).copy())

    def apply_section(self, u: SectionField) -> SectionField:
        if u.grid != self.grid:
            raise GridMismatchError("gauge and section grids differ")
        return SectionField.normalized(self.grid, act(np.swapaxes(self.s, -1, -2), u.u))


def _skew(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m - np.swapaxes(m, -1, -2))


def apply_gauge(s: GaugeTransform, A: ConnectionField, u: SectionField) -> tuple[ConnectionField, SectionField]:
    """Return (s^{-1} ds + s^{-1} A s, s^{-1} u) with ds by central differences.

    The discrete Maurer-Cartan term is skew only up to O(h^2); its skew part is kept.
    """
    if s.grid != A.grid or A.grid != u.grid:
        raise GridMismatchError("gauge, connection and section grids differ")
    g = A.grid
    st = np.swapaxes(s.s, -1, -2)
    a_t = _skew(st @ diff_t(s.s, g.h_t) + st @ A.a_t @ s.s)
    a_th = _skew(st @ diff_theta(s.s, g.h_theta) + st @ A.a_theta @ s.s)
    return ConnectionField(g, a_t, a_th), s.apply_section(u)


def random_gauge(
    grid: CylinderGrid,
    spec: ActionSpec,
    rng: np.random.Generator,
    amplitude: float = 0.5,
    n_modes: int = 2,
) -> GaugeTransform:
    """Smooth gauge exp(sum_k f_k(t, theta) X_k) with low-frequency random f_k."""
    T, Th = grid.mesh()
    gen = spec.basis
    X = np.zeros((grid.n_t, grid.n_theta, spec.K, spec.K))
    for k in range(gen.shape[0]):
        f = np.zeros_like(T)
        for m in range(n_modes + 1):
            c = rng.standard_normal(4) * amplitude / (1 + m)
            f += c[0] * np.cos(m * Th + c[1]) * np.cos(c[2] * T / max(grid.T_half, 1.0) + c[3])
        X += f[..., None, None] * gen[k]
    return GaugeTransform(grid, expm(X))


# --- holonomy ---------------------------------------------------------------------


class Holonomy(NamedTuple):
    matrix: np.ndarray
    phases: np.ndarray  # sorted eigenvalue phases in (-pi, pi]


def eigen_phases(g: np.ndarray) -> np.ndarray:
    ph = np.angle(np.linalg.eigvals(g))
    ph = np.where(ph <= -np.pi + PI_TIE_TOL, np.pi, ph)
    return np.sort(ph)


def circle_holonomy(a_theta_row: np.ndarray, h_theta: float) -> np.ndarray:
    """Ordered product exp(h a_0) exp(h a_1) ... exp(h a_{n-1})."""
    links = expm(h_theta * np.asarray(a_theta_row, dtype=float))
    out = np.eye(links.shape[-1])
    for link in links:
        out = out @ link
    return reorthonormalize(out)


def holonomy(A: ConnectionField, t_index: int) -> Holonomy:
    if not 0 <= t_index < A.grid.n_t:
        raise IndexError(f"row {t_index} outside 0..{A.grid.n_t - 1}")
    m = circle_holonomy(A.a_theta[t_index], A.grid.h_theta)
    return Holonomy(m, eigen_phases(m))


def phase_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Chordal distance between two sorted phase lists."""
    return float(np.max(np.abs(np.exp(1j * np.asarray(p)) - np.exp(1j * np.asarray(q)))))


@dataclass(frozen=True)
class HolonomyProbe:
    radii: list[float]
    phases: list[np.ndarray]
    defects: list[float]
    converged: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = len(self.phases[0])
        w.writerow(["r_or_t", *(f"phase_{i + 1}" for i in range(m)), "cauchy_defect"])
        for r, ph, d in zip(self.radii, self.phases, [float("nan"), *self.defects]):
            w.writerow([repr(float(r)), *(repr(float(x)) for x in ph), repr(float(d))])
        return buf.getvalue()


def holonomy_limit_probe(
    family: Callable[[float], np.ndarray],
    r_list: Sequence[float],
    tol: float = 1e-3,
) -> HolonomyProbe:
    """Holonomy invariants along shrinking circles and their Cauchy defects.

    ``family(r)`` returns the node values a_theta on the circle of radius r,
    shape (n_theta, K, K).
    """
    if len(r_list) == 0:
        raise ValueError("empty radius list")
    r = np.asarray(r_list, dtype=float)
    if np.any(r <= 0) or np.any(np.diff(r) >= 0):
        raise ValueError("radii must be positive and strictly decreasing")
    phases = []
    for radius in r:
        a = np.asarray(family(float(radius)), dtype=float)
        phases.append(eigen_phases(circle_holonomy(a, 2.0 * np.pi / a.shape[0])))
    defects = [phase_distance(p, q) for p, q in zip(phases[:-1], phases[1:])]
    if not defects:
        converged = True
    else:
        monotone = all(d1 <= d0 + 1e-14 for d0, d1 in zip(defects[:-1], defects[1:]))
        converged = monotone and defects[-1] < tol
    return HolonomyProbe([float(x) for x in r], phases, defects, bool(converged))


# --- logarithms -----------------------------------------------------------------------


def principal_log(g: np.ndarray) -> tuple[np.ndarray, bool]:
    """Minimal-norm real logarithm of a rotation, rotation angles in (-pi, pi].

    Returns the skew logarithm and a flag set when some angle sits at pi, where
    the branch is ambiguous and +pi is taken.
    """
    g = reorthonormalize(np.asarray(g, dtype=float))
    K = g.shape[0]
    t, z = scipy.linalg.schur(g, output="real")
    log_t = np.zeros((K, K))
    tie = False
    minus_one: list[int] = []
    i = 0
    while i < K:
        if i + 1 < K and abs(t[i + 1, i]) > 1e-14:
            phi = np.arctan2(0.5 * (t[i + 1, i] - t[i, i + 1]), 0.5 * (t[i, i] + t[i + 1, i + 1]))
            if abs(abs(phi) - np.pi) < PI_TIE_TOL:
                phi, tie = np.pi, True
            log_t[i + 1, i] = phi
            log_t[i, i + 1] = -phi
            i += 2
        else:
            if t[i, i] < 0:
                minus_one.append(i)
            i += 1
    if len(minus_one) % 2:
        raise ValueError("holonomy has determinant -1; not in the identity component")
    for a, b in zip(minus_one[0::2], minus_one[1::2]):
        tie = True
        log_t[b, a] = np.pi
        log_t[a, b] = -np.pi
    return z @ log_t @ z.T, tie


def log_near_identity(u: np.ndarray) -> np.ndarray:
    """Batched skew logarithm of orthogonal matrices close to the identity."""
    u = np.asarray(u, dtype=float)
    e = u - np.eye(u.shape[-1])
    if np.max(np.linalg.norm(e, axis=(-2, -1)), initial=0.0) < 0.5:
        out = np.zeros_like(e)
        power = np.broadcast_to(np.eye(u.shape[-1]), e.shape).copy()
        for k in range(1, 80):
            power = power @ e
            term = power * ((-1.0) ** (k + 1) / k)
            out += term
            if np.max(np.abs(term)) < 1e-18:
                break
        return _skew(out)
    flat = u.reshape(-1, u.shape[-2], u.shape[-1])
    logs = np.stack([np.real(scipy.linalg.logm(m)) for m in flat])
    return _skew(logs.reshape(u.shape))


# --- balanced temporal gauge -------------------------------------------------------------


class TemporalGaugeResult(NamedTuple):
    transform: GaugeTransform
    connection: ConnectionField
    alpha: AlgebraElement
    pi_tie: bool


def _temporal_transport(a_t: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    """Solve s' = -a_t s, s(0) = id, by RK4 outward from the middle row.

    ``a_t`` has shape (n_t, m, K, K); values between rows are linear interpolants.
    """
    n_t, m, K, _ = a_t.shape
    mid = grid.middle_row
    h = grid.h_t
    s = np.empty_like(a_t)
    s[mid] = np.eye(K)

    def rhs(a: np.ndarray, y: np.ndarray) -> np.ndarray:
        return -a @ y

    for direction, stop in ((1, n_t - 1), (-1, 0)):
        i = mid
        while i != stop:
            j = i + direction
            step = direction * h
            a0, a1 = a_t[i], a_t[j]
            am = 0.5 * (a0 + a1)
            y = s[i]
            k1 = rhs(a0, y)
            k2 = rhs(am, y + 0.5 * step * k1)
            k3 = rhs(am, y + 0.5 * step * k2)
            k4 = rhs(a1, y + step * k3)
            y = y + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise GaugeODEError(f"non-finite gauge at row {j}")
            if orthogonality_drift(y) > 1e-12:
                y = reorthonormalize(y)
            s[j] = y
            i = j
    return s


def balanced_temporal_gauge(A: ConnectionField) -> TemporalGaugeResult:
    """Gauge with a_t = 0 everywhere and a_theta = alpha on the middle circle.

    The theta component is transformed through cell-centred links: node j owns
    the arc between the half nodes j - 1/2 and j + 1/2, matching the ordered
    product used by ``holonomy``. This keeps every circle's holonomy exactly
    conjugate and makes the middle circle exactly alpha, while node values stay
    second-order accurate.
    """
    g = A.grid
    K = A.K
    n = g.n_theta
    h = g.h_theta
    mid = g.middle_row

    # temporal transport at nodes and at half nodes (theta_j - h/2)
    a_t_half = 0.5 * (A.a_t + np.roll(A.a_t, 1, axis=1))
    s_node = _temporal_transport(A.a_t, g)
    s_half = _temporal_transport(a_t_half, g)

    # flatten the middle circle: parallel transport between half nodes
    hol = circle_holonomy(A.a_theta[mid], h)
    log_h, tie = principal_log(hol)
    alpha_m = log_h / (2.0 * np.pi)
    alpha = AlgebraElement.from_matrix(_skew(alpha_m), tol=1e-8)
    alpha_m = alpha.matrix

    full = expm(-h * A.a_theta[mid])
    half = expm(-0.5 * h * A.a_theta[mid])
    p_half = np.empty((n + 1, K, K))
    p_node = np.empty((n, K, K))
    p_half[0] = np.eye(K)
    for j in range(n):
        p_node[j] = half[j] @ p_half[j]
        p_half[j + 1] = full[j] @ p_half[j]
    steps = np.arange(n + 1)
    g_half = p_half @ expm(steps[:, None, None] * h * alpha_m)
    g_node = p_node @ expm((steps[:n, None, None] + 0.5) * h * alpha_m)
    g_half = reorthonormalize(g_half)
    g_node = reorthonormalize(g_node)

    S_node = s_node @ g_node[None]
    S_left = s_half @ g_half[None, :n]
    S_right = np.roll(s_half, -1, axis=1) @ g_half[None, 1:]

    links = expm(h * A.a_theta)
    new_links = np.swapaxes(S_left, -1, -2) @ links @ S_right
    a_theta = log_near_identity(new_links) / h
    a_theta[mid] = alpha_m
    out = ConnectionField(g, np.zeros_like(a_theta), a_theta)
    return TemporalGaugeResult(GaugeTransform(g, S_node), out, alpha, tie)


def is_temporal(A: ConnectionField, tol: float = TEMPORAL_TOL) -> bool:
    return bool(np.max(np.abs(A.a_t), initial=0.0) <= tol)


# --- flatness -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    amplitude: float
    r_squared: float


def fit_log_profile(x: np.ndarray, y: np.ndarray) -> ExponentialFit:
    """Least-squares fit log y = log(amplitude) + rate * x."""
    x = np.asarray(x, dtype=float)
    ly = np.log(np.asarray(y, dtype=float))
    if len(x) < 2:
        raise ValueError("need at least two points for a fit")
    slope, intercept = np.polyfit(x, ly, 1)
    pred = intercept + slope * x
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentialFit(float(slope), float(np.exp(intercept)), r2)


def flatness_profile(A: ConnectionField, alpha: AlgebraElement) -> np.ndarray:
    """Per-row sup over theta of |a_theta - alpha| + |d a_theta|."""
    if not is_temporal(A):
        raise GaugeConditionError("connection is not in temporal gauge")
    g = A.grid
    # algebra norm: Frobenius over sqrt(2)
    c = np.sqrt(0.5)
    dev = c * np.linalg.norm(A.a_theta - alpha.matrix, axis=(-2, -1))
    da_t = c * np.linalg.norm(diff_t(A.a_theta, g.h_t), axis=(-2, -1))
    da_th = c * np.linalg.norm(diff_theta(A.a_theta, g.h_theta), axis=(-2, -1))
    return np.max(dev + np.sqrt(da_t**2 + da_th**2), axis=1)


def flatness_fit(w: np.ndarray, grid: CylinderGrid, floor: float = 1e-14) -> ExponentialFit:
    """Fit log w(t) against |t| - T over rows where w exceeds ``floor``."""
    x = np.abs(grid.t) - grid.T_half
    keep = np.asarray(w) > floor
    return fit_log_profile(x[keep], np.asarray(w)[keep])
