"""Target sphere, linear group actions, moment maps and fixed-point classification.

The target is always a round sphere S^{K-1} in R^K and the group acts through
skew-symmetric K x K generators, so projections, the second fundamental form
and exponentials all have closed forms or cheap matrix routines.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

ON_MANIFOLD_TOL = 1e-6
ORTHO_DRIFT_TOL = 1e-12


class ManifoldError(ValueError):
    """A point that should lie on the sphere does not."""


class DimensionError(ValueError):
    """Array shapes do not agree with the ambient dimension."""


@dataclass(frozen=True)
class AlgebraElement:
    """Skew-symmetric K x K matrix stored by its strict upper triangle.

    Storing only the upper triangle makes ``matrix + matrix.T == 0`` hold
    exactly, with no floating point slack.
    """

    K: int
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.upper) != self.K * (self.K - 1) // 2:
            raise DimensionError(
                f"expected {self.K * (self.K - 1) // 2} upper entries, got {len(self.upper)}"
            )

    @classmethod
    def from_matrix(cls, m: np.ndarray, tol: float = 1e-10) -> AlgebraElement:
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        if np.max(np.abs(m + m.T), initial=0.0) > tol:
            raise ValueError("matrix is not skew-symmetric")
        K = m.shape[0]
        iu = np.triu_indices(K, 1)
        return cls(K, tuple(float(x) for x in m[iu]))

    @classmethod
    def zero(cls, K: int) -> AlgebraElement:
        return cls(K, (0.0,) * (K * (K - 1) // 2))

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((self.K, self.K))
        iu = np.triu_indices(self.K, 1)
        m[iu] = self.upper
        return m - m.T

    @property
    def norm(self) -> float:
        """Frobenius norm divided by sqrt(2), so every rotation generator has norm 1."""
        return float(np.sqrt(np.sum(np.square(self.upper))))

    def __add__(self, other: AlgebraElement) -> AlgebraElement:
        _check_same_k(self, other)
        return AlgebraElement(self.K, tuple(a + b for a, b in zip(self.upper, other.upper)))

    def __sub__(self, other: AlgebraElement) -> AlgebraElement:
        _check_same_k(self, other)
        return AlgebraElement(self.K, tuple(a - b for a, b in zip(self.upper, other.upper)))

    def __mul__(self, scale: float) -> AlgebraElement:
        return AlgebraElement(self.K, tuple(float(scale) * a for a in self.upper))

    __rmul__ = __mul__

    def __neg__(self) -> AlgebraElement:
        return self * -1.0

    def conjugate(self, g: GroupElement) -> AlgebraElement:
        """Return g^{-1} X g."""
        return AlgebraElement.from_matrix(g.matrix.T @ self.matrix @ g.matrix)


def _check_same_k(a: AlgebraElement, b: AlgebraElement) -> None:
    if a.K != b.K:
        raise DimensionError(f"ambient dimensions differ: {a.K} vs {b.K}")


@dataclass(frozen=True)
class GroupElement:
    """Orthogonal K x K matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if orthogonality_drift(m) > ORTHO_DRIFT_TOL:
            m = reorthonormalize(m)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def exp(cls, X: AlgebraElement | np.ndarray) -> GroupElement:
        m = X.matrix if isinstance(X, AlgebraElement) else np.asarray(X, dtype=float)
        return cls(expm(m))

    @property
    def inverse(self) -> GroupElement:
        return GroupElement(self.matrix.T)

    def __matmul__(self, other: GroupElement) -> GroupElement:
        return GroupElement(self.matrix @ other.matrix)


def expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential, batched over leading axes."""
    return scipy.linalg.expm(np.asarray(m, dtype=float))


def orthogonality_drift(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    eye = np.eye(m.shape[-1])
    return float(np.max(np.abs(np.swapaxes(m, -1, -2) @ m - eye), initial=0.0))


def reorthonormalize(m: np.ndarray) -> np.ndarray:
    """Nearest orthogonal matrix (polar factor), batched over leading axes."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    return u @ vt


def rotation_generator(i: int, j: int, K: int) -> AlgebraElement:
    """Generator of the rotation taking e_i toward e_j in the (i, j) plane."""
    m = np.zeros((K, K))
    m[j, i] = 1.0
    m[i, j] = -1.0
    return AlgebraElement.from_matrix(m)


def j_z() -> AlgebraElement:
    """Rotation generator about the third axis of R^3: J_z e_1 = e_2."""
    return rotation_generator(0, 1, 3)


def j_x() -> AlgebraElement:
    return rotation_generator(1, 2, 3)


def j_y() -> AlgebraElement:
    return rotation_generator(2, 0, 3)


# --- sphere geometry -------------------------------------------------------


def check_on_sphere(y: np.ndarray, tol: float = ON_MANIFOLD_TOL) -> None:
    dev = np.abs(np.linalg.norm(y, axis=-1) - 1.0)
    if np.max(dev, initial=0.0) > tol:
        raise ManifoldError(f"point off the unit sphere by {np.max(dev):.3e}")


def infinitesimal_action(X: AlgebraElement | np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return X y for points stacked along the last axis."""
    m = X.matrix if isinstance(X, AlgebraElement) else np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != m.shape[0]:
        raise DimensionError(f"generator is {m.shape[0]}x{m.shape[0]} but point has {y.shape[-1]} entries")
    return y @ m.T


def tangent_project(y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of v onto the tangent space of the sphere at y."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    check_on_sphere(y)
    return v - np.sum(v * y, axis=-1, keepdims=True) * y


def second_fundamental_form(y: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Sphere second fundamental form <v, w> y.

    Sign chosen so that u'' + form(u)(u', u') = 0 along great circles.
    """
    y = np.asarray(y, dtype=float)
    return np.sum(np.asarray(v) * np.asarray(w), axis=-1, keepdims=True) * y


def retract(y: np.ndarray) -> np.ndarray:
    """Radial projection back onto the sphere."""
    y = np.asarray(y, dtype=float)
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def sphere_symplectic_form(y: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Area form on S^2: <y, a x b>."""
    return np.sum(np.asarray(y) * np.cross(a, b), axis=-1)


def sphere_complex_structure(y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotation by a quarter turn in T_y S^2, compatible with the area form.

    With J v = v x y the metric is recovered as g(a, b) = omega(J a, b), and
    the Hamiltonian vector field of the height is J_z y = J grad(height).
    """
    return np.cross(v, y)


# --- moment maps -------------------------------------------------------------


@dataclass(frozen=True)
class MomentMap:
    """Moment map in coordinates dual to a fixed generator list.

    ``value`` maps points (..., K) to coefficients (..., m); ``jacobian`` returns
    ambient gradients (..., m, K) of each coefficient.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]


def _height_value(y: np.ndarray) -> np.ndarray:
    return np.asarray(y)[..., 2:3]


def _height_jacobian(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    jac = np.zeros(y.shape[:-1] + (1, 3))
    jac[..., 0, 2] = 1.0
    return jac


def _position_value(y: np.ndarray) -> np.ndarray:
    return np.array(y, dtype=float)


def _position_jacobian(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    return np.broadcast_to(np.eye(3), y.shape[:-1] + (3, 3)).copy()


MOMENT_MAPS: dict[str, tuple[MomentMap, Callable[[], list[AlgebraElement]]]] = {
    "height": (MomentMap("height", _height_value, _height_jacobian), lambda: [j_z()]),
    "so3_position": (
        MomentMap("so3_position", _position_value, _position_jacobian),
        lambda: [j_x(), j_y(), j_z()],
    ),
}


def register_moment_map(
    name: str, moment: MomentMap, generators: Callable[[], list[AlgebraElement]]
) -> None:
    MOMENT_MAPS[name] = (moment, generators)


@dataclass(frozen=True)
class ActionSpec:
    """Sphere S^{K-1} with a linear action by skew generators."""

    K: int
    generators: tuple[AlgebraElement, ...]
    moment_map: str
    center_c: tuple[float, ...]
    manifold_kind: str = "unit_sphere"
    complex_structure: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )

    def __post_init__(self) -> None:
        if self.manifold_kind != "unit_sphere":
            raise ValueError(f"unsupported manifold kind {self.manifold_kind!r}")
        if self.moment_map not in MOMENT_MAPS:
            raise ValueError(f"no moment map registered under {self.moment_map!r}")
        for g in self.generators:
            if g.K != self.K:
                raise DimensionError("generator dimension does not match K")
        if len(self.center_c) != len(self.generators):
            raise DimensionError("center_c needs one coefficient per generator")

    @property
    def moment(self) -> MomentMap:
        return MOMENT_MAPS[self.moment_map][0]

    @property
    def basis(self) -> np.ndarray:
        """Generators stacked as an (m, K, K) array."""
        return np.stack([g.matrix for g in self.generators])

    def algebra_projector(self) -> np.ndarray:
        """Frobenius-orthogonal projector onto the span of the generators.

        Returned as a (K*K, K*K) matrix acting on flattened matrices.
        """
        b = self.basis.reshape(len(self.generators), -1)
        q, _ = np.linalg.qr(b.T)
        return q @ q.T

    def to_json(self) -> str:
        doc = {
            "K": self.K,
            "manifold_kind": self.manifold_kind,
            "generators": [list(g.upper) for g in self.generators],
            "center_c": list(self.center_c),
            "moment_map": self.moment_map,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ActionSpec:
        doc = json.loads(text)
        K = int(doc["K"])
        gens = tuple(AlgebraElement(K, tuple(float(x) for x in g)) for g in doc["generators"])
        cs = sphere_complex_structure if K == 3 else None
        return cls(
            K=K,
            generators=gens,
            moment_map=doc["moment_map"],
            center_c=tuple(float(x) for x in doc["center_c"]),
            manifold_kind=doc.get("manifold_kind", "unit_sphere"),
            complex_structure=cs,
        )


def circle_on_sphere(center: float = 0.0) -> ActionSpec:
    """S^1 rotating S^2 about the third axis, with height as moment map."""
    return ActionSpec(
        K=3,
        generators=(j_z(),),
        moment_map="height",
        center_c=(float(center),),
        complex_structure=sphere_complex_structure,
    )


def so3_on_sphere(center: Sequence[float] = (0.0, 0.0, 0.0)) -> ActionSpec:
    """SO(3) rotating S^2, with the position vector as moment map."""
    return ActionSpec(
        K=3,
        generators=(j_x(), j_y(), j_z()),
        moment_map="so3_position",
        center_c=tuple(float(c) for c in center),
        complex_structure=sphere_complex_structure,
    )


def moment_value(spec: ActionSpec, y: np.ndarray) -> np.ndarray:
    check_on_sphere(y)
    return spec.moment.value(np.asarray(y, dtype=float))


def moment_gradient(spec: ActionSpec, y: np.ndarray) -> np.ndarray:
    """Tangential gradients of each moment coefficient, shape (..., m, K)."""
    y = np.asarray(y, dtype=float)
    jac = spec.moment.jacobian(y)
    return jac - np.sum(jac * y[..., None, :], axis=-1, keepdims=True) * y[..., None, :]


def potential_gradient(spec: ActionSpec, y: np.ndarray) -> np.ndarray:
    """Tangential gradient of |mu(y) - c|^2 / 2, i.e. sum_k (mu_k - c_k) grad mu_k."""
    diff = spec.moment.value(y) - np.asarray(spec.center_c)
    return np.einsum("...k,...kj->...j", diff, moment_gradient(spec, y))


def coefficients(spec: ActionSpec, X: AlgebraElement | np.ndarray) -> np.ndarray:
    """Least-squares coordinates of X over the generator list (Frobenius)."""
    m = X.matrix if isinstance(X, AlgebraElement) else np.asarray(X, dtype=float)
    b = spec.basis.reshape(len(spec.generators), -1)
    coef, *_ = np.linalg.lstsq(b.T, m.reshape(-1), rcond=None)
    return coef


def adjoint_coefficients(spec: ActionSpec, g: GroupElement, coef: np.ndarray) -> np.ndarray:
    """Coordinates of g X g^{-1} where X has coordinates coef."""
    X = np.tensordot(np.asarray(coef, dtype=float), spec.basis, axes=1)
    return coefficients(spec, g.matrix @ X @ g.matrix.T)


# --- fixed points --------------------------------------------------------------


def null_space(m: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical null space."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    _, s, vt = np.linalg.svd(m)
    rank = int(np.sum(s > tol))
    return vt[rank:].T.copy()


def same_subspace(a: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> bool:
    """Whether two column-spanned subspaces coincide, via principal angles."""
    if a.shape[1] != b.shape[1]:
        return False
    if a.shape[1] == 0:
        return True
    return bool(np.max(scipy.linalg.subspace_angles(a, b)) <= tol)


def contains_subspace(big: np.ndarray, small: np.ndarray, tol: float = 1e-6) -> bool:
    """Whether span(small) lies inside span(big), via principal angles."""
    if small.shape[1] == 0:
        return True
    if big.shape[1] < small.shape[1]:
        return False
    return bool(np.max(scipy.linalg.subspace_angles(big, small)) <= tol)


def group_fixed_subspace(spec: ActionSpec, tol: float = 1e-8) -> np.ndarray:
    """Common kernel of all generators: points fixed by the connected group."""
    if not spec.generators:
        return np.eye(spec.K)
    return null_space(np.vstack([g.matrix for g in spec.generators]), tol)


def element_fixed_subspace(X: AlgebraElement, tol: float = 1e-8) -> np.ndarray:
    """Eigenspace of exp(2 pi X) for eigenvalue 1."""
    return null_space(expm(2.0 * np.pi * X.matrix) - np.eye(X.K), tol)


def classify_element(spec: ActionSpec, X: AlgebraElement, tol: float = 1e-8) -> str:
    """Return ``"critical"`` when exp(2 pi X) fixes more than the whole group does."""
    fixed = element_fixed_subspace(X, tol)
    base = group_fixed_subspace(spec, tol)
    return "non_critical" if same_subspace(fixed, base, tol) else "critical"


def random_sphere_points(rng: np.random.Generator, n: int, K: int) -> np.ndarray:
    return retract(rng.standard_normal((n, K)))


def algebra_from_coefficients(spec: ActionSpec, coef: Sequence[float]) -> AlgebraElement:
    return AlgebraElement.from_matrix(np.tensordot(np.asarray(coef, dtype=float), spec.basis, axes=1))
