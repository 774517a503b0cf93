"""Twisted circle operator d/dtheta + X, its spectrum and Poincare constant.

The circle derivative defaults to Fourier differentiation, which is exact on
trigonometric polynomials below the Nyquist frequency. On an even grid every
skew-symmetric difference operator annihilates the alternating mode, so that
mode is a lattice artifact; the spectrum is taken on its orthogonal
complement (the band-limited fields).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from .lie_action import AlgebraElement, contains_subspace

KERNEL_TOL = 1e-9
CONTAINMENT_TOL = 1e-6


class EigensolveError(RuntimeError):
    pass


def fourier_derivative_matrix(n: int) -> np.ndarray:
    """Periodic spectral differentiation matrix on n equispaced nodes."""
    h = 2.0 * np.pi / n
    k = np.arange(1, n)
    col = np.zeros(n)
    if n % 2 == 0:
        col[1:] = 0.5 * (-1.0) ** k / np.tan(k * h / 2.0)
    else:
        col[1:] = 0.5 * (-1.0) ** k / np.sin(k * h / 2.0)
    # column holds D[j, 0] = -D[0, j]
    return scipy.linalg.toeplitz(col, -col)


def central_derivative_matrix(n: int) -> np.ndarray:
    h = 2.0 * np.pi / n
    d = np.zeros((n, n))
    idx = np.arange(n)
    d[idx, (idx + 1) % n] = 1.0 / (2.0 * h)
    d[idx, (idx - 1) % n] = -1.0 / (2.0 * h)
    return d


def band_limited_basis(n: int, K: int) -> np.ndarray:
    """Orthonormal columns spanning fields with no alternating (Nyquist) part."""
    if n % 2:
        return np.eye(n * K)
    alt = ((-1.0) ** np.arange(n) / np.sqrt(n))[:, None]
    nyq = np.kron(alt, np.eye(K))
    return scipy.linalg.null_space(nyq.T)


@dataclass(frozen=True)
class TwistedOperator:
    """L = D^T D with D = d/dtheta + X on circle fields of shape (n_theta, K).

    Fields are flattened node-major: index j*K + a.
    """

    alpha: AlgebraElement
    n_theta: int
    stencil: str = "fourier"

    def __post_init__(self) -> None:
        if self.n_theta < 8:
            raise ValueError("n_theta must be at least 8")
        if self.stencil not in ("fourier", "central"):
            raise ValueError(f"unknown stencil {self.stencil!r}")

    @property
    def K(self) -> int:
        return self.alpha.K

    @property
    def h_theta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @cached_property
    def twisted_derivative(self) -> np.ndarray:
        d = (
            fourier_derivative_matrix(self.n_theta)
            if self.stencil == "fourier"
            else central_derivative_matrix(self.n_theta)
        )
        return np.kron(d, np.eye(self.K)) + np.kron(np.eye(self.n_theta), self.alpha.matrix)

    @cached_property
    def matrix(self) -> np.ndarray:
        d = self.twisted_derivative
        return d.T @ d

    def apply_derivative(self, u: np.ndarray) -> np.ndarray:
        """Twisted derivative of a circle field of shape (n_theta, K)."""
        u = np.asarray(u, dtype=float)
        return (self.twisted_derivative @ u.reshape(-1)).reshape(u.shape)


def assemble(alpha: AlgebraElement, n_theta: int, stencil: str = "fourier") -> TwistedOperator:
    return TwistedOperator(alpha, n_theta, stencil)


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    kernel_dim: int
    sigma_sq: float
    poincare_constant: float
    kernel_basis: np.ndarray = field(repr=False)
    first_mode: np.ndarray = field(repr=False)
    alpha_id: str = ""

    def to_dict(self, m: int = 12) -> dict:
        return {
            "alpha_id": self.alpha_id,
            "eigenvalues": [float(x) for x in self.eigenvalues[:m]],
            "kernel_dim": int(self.kernel_dim),
            "sigma_sq": float(self.sigma_sq),
            "poincare_constant": float(self.poincare_constant),
        }

    def to_json(self, m: int = 12) -> str:
        return json.dumps(self.to_dict(m), sort_keys=True)


def alpha_label(alpha: AlgebraElement) -> str:
    return "alpha[" + ",".join(f"{x:.6g}" for x in alpha.upper) + "]"


def spectrum(op: TwistedOperator, kernel_tol: float = KERNEL_TOL) -> SpectralReport:
    """Full symmetric eigendecomposition of L on band-limited fields."""
    if not kernel_tol > 0:
        raise ValueError("kernel_tol must be positive")
    q = band_limited_basis(op.n_theta, op.K)
    reduced = q.T @ op.matrix @ q
    reduced = 0.5 * (reduced + reduced.T)
    try:
        vals, vecs = np.linalg.eigh(reduced)
    except np.linalg.LinAlgError as exc:
        raise EigensolveError(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise EigensolveError("non-finite eigenvalues")
    kernel = vals <= kernel_tol
    kdim = int(np.sum(kernel))
    if kdim == len(vals):
        raise EigensolveError("operator has no positive eigenvalue")
    first = int(np.argmax(~kernel))
    sigma_sq = float(vals[first])
    return SpectralReport(
        eigenvalues=vals,
        kernel_dim=kdim,
        sigma_sq=sigma_sq,
        poincare_constant=1.0 / sigma_sq,
        kernel_basis=q @ vecs[:, kernel],
        first_mode=(q @ vecs[:, first]).reshape(op.n_theta, op.K),
        alpha_id=alpha_label(op.alpha),
    )


def fourier_oracle(alpha_phase: float, n_modes: int) -> np.ndarray:
    """Closed-form spectrum {(k+a)^2, (k-a)^2, k^2} for a rotation about one axis."""
    k = np.arange(-n_modes, n_modes + 1, dtype=float)
    return np.sort(np.concatenate([(k + alpha_phase) ** 2, (k - alpha_phase) ** 2, k**2]))


@dataclass(frozen=True)
class PoincareResult:
    lhs: float
    rhs: float
    passed: bool


def poincare_check(op: TwistedOperator, u: np.ndarray, report: SpectralReport | None = None) -> PoincareResult:
    """Compare the circle integral of |Du|^2 with C times that of |D^2 u|^2."""
    report = report or spectrum(op)
    du = op.apply_derivative(u)
    ddu = op.apply_derivative(du)
    lhs = float(np.sum(du**2) * op.h_theta)
    rhs = float(report.poincare_constant * np.sum(ddu**2) * op.h_theta)
    return PoincareResult(lhs, rhs, lhs <= rhs * (1.0 + 1e-8))


@dataclass(frozen=True)
class DegenerationResult:
    classification: str
    kernel_dims: list[int]
    limit_kernel_dim: int
    contained: list[bool]
    poincare_constants: list[float]
    defects: list[float]

    @property
    def max_tail_poincare(self) -> float:
        return max(self.poincare_constants)

    @property
    def blowup_exponent(self) -> float:
        """Least-squares p in C_n ~ rho_n^(-p); nan when fewer than two defects are positive."""
        pts = [(r, c) for r, c in zip(self.defects, self.poincare_constants) if r > 0 and np.isfinite(c)]
        if len(pts) < 2:
            return float("nan")
        x, y = np.log(np.array(pts)).T
        return float(-np.polyfit(x, y, 1)[0])


def classify_degeneration(
    alphas: Sequence[AlgebraElement],
    alpha_inf: AlgebraElement,
    n_theta: int = 64,
    kernel_tol: float = KERNEL_TOL,
    tail_start: int = 0,
) -> DegenerationResult:
    """Non-degenerating iff the limit kernel sits inside every tail kernel."""
    if not alphas:
        raise ValueError("empty alpha sequence")
    limit = spectrum(assemble(alpha_inf, n_theta), kernel_tol)
    dims, contained, consts, defects = [], [], [], []
    for a in alphas:
        rep = spectrum(assemble(a, n_theta), kernel_tol)
        dims.append(rep.kernel_dim)
        contained.append(contains_subspace(rep.kernel_basis, limit.kernel_basis, CONTAINMENT_TOL))
        consts.append(rep.poincare_constant)
        defects.append((a - alpha_inf).norm)
    ok = all(contained[tail_start:])
    return DegenerationResult(
        classification="non_degenerating" if ok else "degenerating",
        kernel_dims=dims,
        limit_kernel_dim=limit.kernel_dim,
        contained=contained,
        poincare_constants=consts,
        defects=defects,
    )
