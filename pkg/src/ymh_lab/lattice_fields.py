"""Cylinder grids, connection and section fields, and their discrete calculus.

Fields live on nodes (t_i, theta_j) with t_i spanning [-T, T] including both
ends and theta periodic. Connections are algebra-valued node fields stored as
dense skew matrices of shape (n_t, n_theta, K, K); sections are unit vectors of
shape (n_t, n_theta, K).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .lie_action import AlgebraElement, ManifoldError

SECTION_TOL = 1e-8


class GridMismatchError(ValueError):
    """Two fields were built on different grids."""


@dataclass(frozen=True)
class CylinderGrid:
    T_half: float
    n_t: int
    n_theta: int

    def __post_init__(self) -> None:
        if self.n_t < 8 or self.n_theta < 8:
            raise ValueError("grid needs at least 8 samples in each direction")
        if not self.T_half > 0:
            raise ValueError("T_half must be positive")

    @property
    def h_t(self) -> float:
        return 2.0 * self.T_half / (self.n_t - 1)

    @property
    def h_theta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @property
    def t(self) -> np.ndarray:
        return np.linspace(-self.T_half, self.T_half, self.n_t)

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.h_theta

    @property
    def t_weights(self) -> np.ndarray:
        """Trapezoid weights in t."""
        w = np.full(self.n_t, self.h_t)
        w[0] = w[-1] = 0.5 * self.h_t
        return w

    @property
    def weights(self) -> np.ndarray:
        """Per-node quadrature weights, shape (n_t, n_theta)."""
        return np.outer(self.t_weights, np.full(self.n_theta, self.h_theta))

    @property
    def middle_row(self) -> int:
        return (self.n_t - 1) // 2

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.t, self.theta, indexing="ij")

    def refined(self) -> CylinderGrid:
        """Grid with both spacings halved."""
        return CylinderGrid(self.T_half, 2 * self.n_t - 1, 2 * self.n_theta)


def _check_grid(a: CylinderGrid, b: CylinderGrid) -> None:
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


@dataclass
class ConnectionField:
    grid: CylinderGrid
    a_t: np.ndarray
    a_theta: np.ndarray

    def __post_init__(self) -> None:
        shape = (self.grid.n_t, self.grid.n_theta)
        for name in ("a_t", "a_theta"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape[:2] != shape or arr.ndim != 4 or arr.shape[2] != arr.shape[3]:
                raise GridMismatchError(f"{name} has shape {arr.shape}, grid wants {shape}+(K,K)")
            setattr(self, name, arr)

    @property
    def K(self) -> int:
        return self.a_t.shape[-1]

    @classmethod
    def zero(cls, grid: CylinderGrid, K: int) -> ConnectionField:
        z = np.zeros((grid.n_t, grid.n_theta, K, K))
        return cls(grid, z, z.copy())

    @classmethod
    def flat(cls, grid: CylinderGrid, alpha: AlgebraElement) -> ConnectionField:
        """The connection alpha d(theta) with alpha constant."""
        K = alpha.K
        a_th = np.broadcast_to(alpha.matrix, (grid.n_t, grid.n_theta, K, K)).copy()
        return cls(grid, np.zeros_like(a_th), a_th)

    @classmethod
    def from_profile(cls, grid: CylinderGrid, profile: np.ndarray, X: AlgebraElement) -> ConnectionField:
        """a_theta = profile(t) X, a_t = 0."""
        prof = np.asarray(profile, dtype=float).reshape(-1, 1, 1, 1)
        a_th = np.broadcast_to(prof * X.matrix, (grid.n_t, grid.n_theta, X.K, X.K)).copy()
        return cls(grid, np.zeros_like(a_th), a_th)

    def copy(self) -> ConnectionField:
        return ConnectionField(self.grid, self.a_t.copy(), self.a_theta.copy())


@dataclass
class SectionField:
    grid: CylinderGrid
    u: np.ndarray
    tol: float = field(default=SECTION_TOL, repr=False)

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=float)
        if u.shape[:2] != (self.grid.n_t, self.grid.n_theta) or u.ndim != 3:
            raise GridMismatchError(f"section has shape {u.shape} for grid {self.grid}")
        dev = np.max(np.abs(np.linalg.norm(u, axis=-1) - 1.0))
        if dev > self.tol:
            raise ManifoldError(f"section leaves the sphere by {dev:.3e}")
        self.u = u

    @property
    def K(self) -> int:
        return self.u.shape[-1]

    @classmethod
    def normalized(cls, grid: CylinderGrid, u: np.ndarray) -> SectionField:
        u = np.asarray(u, dtype=float)
        return cls(grid, u / np.linalg.norm(u, axis=-1, keepdims=True))

    def copy(self) -> SectionField:
        return SectionField(self.grid, self.u.copy())


# --- one-dimensional difference operators ---------------------------------------


def diff_t(f: np.ndarray, h: float) -> np.ndarray:
    """d/dt along axis 0: central inside, second-order one-sided at the ends."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return out


def diff_t_adjoint(g: np.ndarray, h: float) -> np.ndarray:
    """Transpose of ``diff_t`` under the plain entrywise inner product."""
    g = np.asarray(g, dtype=float)
    out = np.zeros_like(g)
    c = 1.0 / (2.0 * h)
    out[2:] += c * g[1:-1]
    out[:-2] -= c * g[1:-1]
    out[0] -= 3.0 * c * g[0]
    out[1] += 4.0 * c * g[0]
    out[2] -= c * g[0]
    out[-1] += 3.0 * c * g[-1]
    out[-2] -= 4.0 * c * g[-1]
    out[-3] += c * g[-1]
    return out


def diff_theta(f: np.ndarray, h: float, axis: int = 1) -> np.ndarray:
    """Periodic central difference; skew-adjoint, so its transpose is its negative."""
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)


def act(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Node-wise matrix-vector product a u."""
    return np.einsum("...ij,...j->...i", a, u)


def bracket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# --- field operations ---------------------------------------------------------------


def covariant_derivative(A: ConnectionField, u: SectionField) -> tuple[np.ndarray, np.ndarray]:
    """(D_t u, D_theta u) with D = d + a acting on the section."""
    _check_grid(A.grid, u.grid)
    g = A.grid
    dt = diff_t(u.u, g.h_t) + act(A.a_t, u.u)
    dth = diff_theta(u.u, g.h_theta) + act(A.a_theta, u.u)
    return dt, dth


def curvature(A: ConnectionField) -> np.ndarray:
    """dt-dtheta coefficient d_t a_theta - d_theta a_t + [a_t, a_theta]."""
    g = A.grid
    return (
        diff_t(A.a_theta, g.h_t)
        - diff_theta(A.a_t, g.h_theta)
        + bracket(A.a_t, A.a_theta)
    )


# --- compact (edge and cell centred) operators ------------------------------------------
#
# The wide central stencil decouples even and odd nodes, so an energy built
# from it has alternating null modes and its minimisers pick up checkerboards.
# The energy is therefore assembled from differences across edges and
# curvature at cell centres; each map below comes with its exact transpose.


def fwd(f: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(f, -1, axis=axis) - f) / h
    hi = np.take(f, np.arange(1, f.shape[axis]), axis=axis)
    lo = np.take(f, np.arange(0, f.shape[axis] - 1), axis=axis)
    return (hi - lo) / h


def fwd_adjoint(g: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(g, 1, axis=axis) - g) / h
    g = np.moveaxis(g, axis, 0)
    out = np.zeros((g.shape[0] + 1,) + g.shape[1:])
    out[:-1] -= g / h
    out[1:] += g / h
    return np.moveaxis(out, 0, axis)


def avg(f: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return 0.5 * (np.roll(f, -1, axis=axis) + f)
    hi = np.take(f, np.arange(1, f.shape[axis]), axis=axis)
    lo = np.take(f, np.arange(0, f.shape[axis] - 1), axis=axis)
    return 0.5 * (hi + lo)


def avg_adjoint(g: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return 0.5 * (np.roll(g, 1, axis=axis) + g)
    g = np.moveaxis(g, axis, 0)
    out = np.zeros((g.shape[0] + 1,) + g.shape[1:])
    out[:-1] += 0.5 * g
    out[1:] += 0.5 * g
    return np.moveaxis(out, 0, axis)


def edge_derivatives(A: ConnectionField, u: SectionField) -> tuple[np.ndarray, np.ndarray]:
    """Covariant derivatives on edges.

    Returns D_t u on t-edges, shape (n_t - 1, n_theta, K), and D_theta u on
    theta-edges, shape (n_t, n_theta, K); edge (i, j) of the second array joins
    theta nodes j and j + 1.
    """
    _check_grid(A.grid, u.grid)
    g = A.grid
    dt = fwd(u.u, g.h_t, 0, False) + act(avg(A.a_t, 0, False), avg(u.u, 0, False))
    dth = fwd(u.u, g.h_theta, 1, True) + act(avg(A.a_theta, 1, True), avg(u.u, 1, True))
    return dt, dth


def cell_average(f: np.ndarray) -> np.ndarray:
    return avg(avg(f, 0, False), 1, True)


def cell_average_adjoint(g: np.ndarray) -> np.ndarray:
    return avg_adjoint(avg_adjoint(g, 1, True), 0, False)


def cell_curvature(A: ConnectionField) -> np.ndarray:
    """Curvature at cell centres, shape (n_t - 1, n_theta, K, K)."""
    g = A.grid
    dta = avg(fwd(A.a_theta, g.h_t, 0, False), 1, True)
    dtha = avg(fwd(A.a_t, g.h_theta, 1, True), 0, False)
    return dta - dtha + bracket(cell_average(A.a_t), cell_average(A.a_theta))


def t_edge_weights(grid: CylinderGrid) -> np.ndarray:
    return np.full((grid.n_t - 1, grid.n_theta), grid.h_t * grid.h_theta)


def dirichlet_energy(A: ConnectionField, u: SectionField) -> float:
    """Compact discretisation of the integral of |D_A u|^2."""
    g = A.grid
    dt, dth = edge_derivatives(A, u)
    return float(
        np.sum(t_edge_weights(g) * np.sum(dt**2, -1)) + np.sum(g.weights * np.sum(dth**2, -1))
    )


def _pointwise_sq(field: np.ndarray, n_t: int, n_theta: int) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.shape[:2] != (n_t, n_theta):
        raise GridMismatchError(f"field of shape {field.shape} on a {n_t}x{n_theta} grid")
    return np.sum(field.reshape(n_t, n_theta, -1) ** 2, axis=-1)


def l2_norm_squared(field: np.ndarray, grid: CylinderGrid, weight: np.ndarray | None = None) -> float:
    """Trapezoid-in-t, rectangle-in-theta integral of |field|^2 * weight.

    ``weight`` may be per row (n_t,) or per node (n_t, n_theta).
    """
    sq = _pointwise_sq(field, grid.n_t, grid.n_theta)
    if weight is not None:
        w = np.asarray(weight, dtype=float)
        if np.any(w < 0):
            raise ValueError("quadrature weight must be non-negative")
        sq = sq * (w[:, None] if w.ndim == 1 else w)
    return float(np.sum(sq * grid.weights))


def row_integrals(density: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    """Circle integral of a scalar node density, one value per t row."""
    return np.sum(np.asarray(density, dtype=float), axis=1) * grid.h_theta


def integrate_rows(profile: np.ndarray, grid: CylinderGrid) -> float:
    """Trapezoid integral in t of a per-row profile."""
    return float(np.sum(np.asarray(profile) * grid.t_weights))


def sup_norm(field: np.ndarray, grid: CylinderGrid) -> float:
    return float(np.sqrt(np.max(_pointwise_sq(field, grid.n_t, grid.n_theta))))


def resolution_flag(du_t: np.ndarray, du_theta: np.ndarray, grid: CylinderGrid) -> bool:
    """True when sup|Du| * h exceeds 0.5, i.e. the lattice under-resolves the field."""
    s = np.sqrt(np.max(np.sum(du_t**2, axis=-1) + np.sum(du_theta**2, axis=-1)))
    return bool(s * max(grid.h_t, grid.h_theta) > 0.5)


# --- serialization ----------------------------------------------------------------


def field_to_csv(grid: CylinderGrid, payload: np.ndarray, names: list[str]) -> str:
    """One row per node: it, itheta, t, theta, then the flattened payload."""
    flat = np.asarray(payload, dtype=float).reshape(grid.n_t, grid.n_theta, -1)
    if flat.shape[-1] != len(names):
        raise ValueError("payload width does not match column names")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["it", "itheta", "t", "theta", *names])
    t, th = grid.t, grid.theta
    for i in range(grid.n_t):
        for j in range(grid.n_theta):
            w.writerow([i, j, repr(float(t[i])), repr(float(th[j])), *(repr(float(x)) for x in flat[i, j])])
    return buf.getvalue()


def section_to_csv(u: SectionField) -> str:
    return field_to_csv(u.grid, u.u, [f"u_{k + 1}" for k in range(u.K)])


def field_from_csv(text: str, grid: CylinderGrid) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    if header[:4] != ["it", "itheta", "t", "theta"]:
        raise ValueError("unexpected field CSV header")
    out = np.zeros((grid.n_t, grid.n_theta, len(header) - 4))
    for r in rows[1:]:
        out[int(r[0]), int(r[1])] = [float(x) for x in r[4:]]
    return header[4:], out
