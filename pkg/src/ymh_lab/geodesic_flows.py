"""Integrators for the limiting neck curves on the sphere.

All three flows use classical RK4 in the ambient space followed by projection
(position renormalised, velocity made tangent). Conserved quantities are
recorded per step and serve as drift certificates.

Sign convention for the potential curves: with Q = -kappa^2 beta^2 (symmetric,
non-negative for skew beta) the curves are critical for the integral of
|gamma'|^2 + <gamma, Q gamma>, satisfy (gamma'' + kappa^2 beta^2 gamma)^T = 0 and
conserve |gamma'|^2 + kappa^2 <gamma, beta^2 gamma>.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lie_action import ActionSpec, AlgebraElement, coefficients, expm, moment_gradient

DRIFT_LIMIT = 1e-6


class IntegratorDriftError(RuntimeError):
    """The conserved quantity drifted faster than the step size allows."""


@dataclass(frozen=True)
class CurveState:
    position: np.ndarray
    velocity: np.ndarray
    s: float = 0.0

    def __post_init__(self) -> None:
        x = np.asarray(self.position, dtype=float)
        v = np.asarray(self.velocity, dtype=float)
        if abs(np.linalg.norm(x) - 1.0) > 1e-10:
            raise ValueError("position must lie on the unit sphere")
        if abs(float(x @ v)) > 1e-10:
            raise ValueError("velocity must be tangent at the position")
        object.__setattr__(self, "position", x)
        object.__setattr__(self, "velocity", v)


@dataclass
class Trajectory:
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    invariant: np.ndarray
    invariant_name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def drift_per_unit_s(self) -> float:
        span = self.s[-1] - self.s[0]
        dev = float(np.max(np.abs(self.invariant - self.invariant[0])))
        return dev / span if span > 0 else 0.0

    def to_csv(self) -> str:
        K = self.x.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", *(f"x_{i + 1}" for i in range(K)), *(f"v_{i + 1}" for i in range(K)), "invariant"])
        for s, x, v, inv in zip(self.s, self.x, self.v, self.invariant):
            w.writerow([repr(float(s)), *(repr(float(a)) for a in x), *(repr(float(a)) for a in v), repr(float(inv))])
        return buf.getvalue()


def _project(x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = x / np.linalg.norm(x)
    return x, v - (v @ x) * x


def _integrate_second_order(
    start: CurveState,
    accel: Callable[[np.ndarray, np.ndarray], np.ndarray],
    invariant: Callable[[np.ndarray, np.ndarray], float],
    s_max: float,
    h_s: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if not (h_s > 0 and s_max >= 0):
        raise ValueError("need h_s > 0 and s_max >= 0")
    n = int(round(s_max / h_s))
    s = start.s + h_s * np.arange(n + 1)
    xs = np.empty((n + 1, len(start.position)))
    vs = np.empty_like(xs)
    inv = np.empty(n + 1)
    x, v = start.position.copy(), start.velocity.copy()
    xs[0], vs[0], inv[0] = x, v, invariant(x, v)
    for i in range(1, n + 1):
        k1x, k1v = v, accel(x, v)
        k2x, k2v = v + 0.5 * h_s * k1v, accel(x + 0.5 * h_s * k1x, v + 0.5 * h_s * k1v)
        k3x, k3v = v + 0.5 * h_s * k2v, accel(x + 0.5 * h_s * k2x, v + 0.5 * h_s * k2v)
        k4x, k4v = v + h_s * k3v, accel(x + h_s * k3x, v + h_s * k3v)
        x = x + h_s / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h_s / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        x, v = _project(x, v)
        xs[i], vs[i], inv[i] = x, v, invariant(x, v)
    return s, xs, vs, inv


def _check_drift(inv: np.ndarray, s: np.ndarray, what: str) -> None:
    span = s[-1] - s[0]
    if span > 0 and np.max(np.abs(inv - inv[0])) / span > DRIFT_LIMIT:
        raise IntegratorDriftError(f"{what} drift exceeds {DRIFT_LIMIT} per unit s; reduce h_s")


def _geodesic_accel(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return -(v @ v) * x


def twisted_geodesic_integrate(
    start: CurveState, alpha: AlgebraElement, s_max: float, h_s: float = 1e-3
) -> Trajectory:
    """Great-circle curve gamma; the twisted surface is exp(-theta X) gamma(s)."""
    s, x, v, inv = _integrate_second_order(start, _geodesic_accel, lambda x, v: float(np.sqrt(v @ v)), s_max, h_s)
    _check_drift(inv, s, "speed")
    return Trajectory(s, x, v, inv, "speed", {"alpha": list(alpha.upper)})


def twisted_surface(traj: Trajectory, alpha: AlgebraElement, n_theta: int) -> np.ndarray:
    """Sample exp(-theta X) gamma(s) on an (n_s, n_theta) grid."""
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rot = expm(-theta[:, None, None] * alpha.matrix)
    return np.einsum("jab,ib->ija", rot, traj.x)


def neumann_integrate(
    start: CurveState, kappa: float, beta: AlgebraElement, s_max: float, h_s: float = 1e-3
) -> Trajectory:
    """Sphere curve with quadratic potential: (gamma'' + kappa^2 beta^2 gamma)^T = 0."""
    b2 = kappa**2 * (beta.matrix @ beta.matrix)

    def accel(x: np.ndarray, v: np.ndarray) -> np.ndarray:
        f = b2 @ x
        return -(f - (f @ x) * x) - (v @ v) * x

    def energy(x: np.ndarray, v: np.ndarray) -> float:
        return float(v @ v + x @ (b2 @ x))

    s, x, v, inv = _integrate_second_order(start, accel, energy, s_max, h_s)
    _check_drift(inv, s, "Neumann energy")
    return Trajectory(s, x, v, inv, "neumann_energy", {"kappa": kappa, "beta": list(beta.upper)})


def neumann_residual(x: np.ndarray, s: np.ndarray, kappa: float, beta: AlgebraElement) -> np.ndarray:
    """Tangential (gamma'' + kappa^2 beta^2 gamma) along a sampled curve, interior samples."""
    h = s[1] - s[0]
    acc = (x[2:] - 2 * x[1:-1] + x[:-2]) / h**2
    f = acc + kappa**2 * x[1:-1] @ (beta.matrix @ beta.matrix).T
    xm = x[1:-1]
    return f - np.sum(f * xm, -1, keepdims=True) * xm


def hamiltonian_gradient_line(
    start: np.ndarray,
    kappa: float,
    beta: AlgebraElement,
    spec: ActionSpec,
    s_max: float,
    h_s: float = 1e-3,
) -> Trajectory:
    """Integrate gamma' = kappa grad h with h = <mu, beta> in generator coordinates."""
    b = coefficients(spec, beta)
    x = np.asarray(start, dtype=float)
    if abs(np.linalg.norm(x) - 1.0) > 1e-10:
        raise ValueError("start must lie on the unit sphere")

    def grad_h(y: np.ndarray) -> np.ndarray:
        return kappa * (b @ moment_gradient(spec, y))

    def height(y: np.ndarray) -> float:
        return float(spec.moment.value(y) @ b)

    n = int(round(s_max / h_s))
    s = h_s * np.arange(n + 1)
    xs = np.empty((n + 1, len(x)))
    vs = np.empty_like(xs)
    hs = np.empty(n + 1)
    xs[0], vs[0], hs[0] = x, grad_h(x), height(x)
    for i in range(1, n + 1):
        k1 = grad_h(x)
        k2 = grad_h(x + 0.5 * h_s * k1)
        k3 = grad_h(x + 0.5 * h_s * k2)
        k4 = grad_h(x + h_s * k3)
        y = x + h_s / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        y = y / np.linalg.norm(y)
        hy = height(y)
        if hy < hs[i - 1]:
            # only reachable at rounding level next to a critical point
            y, hy = x, hs[i - 1]
        x = y
        xs[i], vs[i], hs[i] = x, grad_h(x), hy
    return Trajectory(s, xs, vs, hs, "hamiltonian", {"kappa": kappa, "beta": list(beta.upper)})
