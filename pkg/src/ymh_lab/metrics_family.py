"""Canonical collar metrics on degenerating cylinders and their exponential bounds.

On the collar [-T, T] x S^1 with T = -ln(delta) the metric is
lambda^2 (dt^2 + dtheta^2) with lambda^2 = e^{-2t} delta^4 chi(e^{-t} delta^2).
Two cut-off choices ship:

* ``flat_one``: chi = 1, so lambda = delta^2 e^{-t}.
* ``smooth_bump``: the cut-off that makes the collar symmetric under t -> -t,
  lambda = delta^2 e^{psi(t)} with psi(t) = |t| away from a window of width
  w = min(1, T/2) around t = 0 and psi smooth and even inside it. There chi = 1
  for e^{-t} delta^2 >= delta^2 e^{w}, which contains the region r >= delta^{3/2}.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate

CHI_KINDS = ("flat_one", "smooth_bump")


def smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity odd step: 0 at 0, 1 for x >= 1, -1 for x <= -1, flat at 0 and +-1."""
    x = np.asarray(x, dtype=float)
    a = np.clip(np.abs(x), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
        b = 1.0 - a
        g = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
        s = f / (f + g)
    return np.sign(x) * s


def _bump_exponent(t: np.ndarray, width: float) -> np.ndarray:
    """Even exponent psi with psi' = smooth_step(t / width) and psi = |t| outside the window."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    out = a.copy()
    inside = a < width
    for idx in np.flatnonzero(inside):
        missing, _ = scipy.integrate.quad(lambda s: 1.0 - smooth_step(s / width), a[idx], width)
        out[idx] = a[idx] + missing
    return out


@dataclass(frozen=True)
class CollarMetric:
    delta: float
    T_half: float
    chi_kind: str
    t: np.ndarray = field(repr=False)
    lambda_profile: np.ndarray = field(repr=False)
    bound_constant: float
    chi: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def profile_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "lambda"])
        for t, lam in zip(self.t, self.lambda_profile):
            w.writerow([repr(float(t)), repr(float(lam))])
        return buf.getvalue()


def _chi_function(kind: str, delta: float, width: float) -> Callable[[np.ndarray], np.ndarray]:
    if kind == "flat_one":
        return lambda r: np.ones_like(np.asarray(r, dtype=float))

    def chi(r: np.ndarray) -> np.ndarray:
        t = np.log(delta**2 / np.asarray(r, dtype=float))
        return np.exp(2.0 * _bump_exponent(t, width) + 2.0 * t)

    return chi


def collar_lambda(t: np.ndarray, delta: float, chi_kind: str) -> np.ndarray:
    T = -np.log(delta)
    if chi_kind == "flat_one":
        return delta**2 * np.exp(-np.asarray(t, dtype=float))
    if chi_kind == "smooth_bump":
        return delta**2 * np.exp(_bump_exponent(t, min(1.0, T / 2.0)))
    raise ValueError(f"unknown chi kind {chi_kind!r}; expected one of {CHI_KINDS}")


def exponential_bound_check(
    profile: np.ndarray, delta: float, T: float, t: np.ndarray | None = None
) -> tuple[float, bool]:
    """Smallest C with |f(t)| <= C delta e^{|t| - T} on the sampled rows."""
    f = np.abs(np.asarray(profile, dtype=float))
    if t is None:
        t = np.linspace(-T, T, len(f))
    c = float(np.max(f * np.exp(T - np.abs(np.asarray(t))), initial=0.0) / delta)
    return c, bool(np.isfinite(c))


def collar_profile(delta: float, n_t: int, chi_kind: str = "flat_one") -> CollarMetric:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if chi_kind not in CHI_KINDS:
        raise ValueError(f"unknown chi kind {chi_kind!r}; expected one of {CHI_KINDS}")
    if n_t < 2:
        raise ValueError("need at least two rows")
    T = -np.log(delta)
    t = np.linspace(-T, T, n_t)
    lam = collar_lambda(t, delta, chi_kind)
    c, _ = exponential_bound_check(lam, delta, T, t)
    return CollarMetric(
        delta=float(delta),
        T_half=float(T),
        chi_kind=chi_kind,
        t=t,
        lambda_profile=lam,
        bound_constant=c,
        chi=_chi_function(chi_kind, delta, min(1.0, T / 2.0)),
    )


@dataclass(frozen=True)
class CollarFamily:
    members: list[CollarMetric]
    bound_constant: float
    chi_kind: str

    def manifest(self) -> str:
        doc = {
            "chi_kind": self.chi_kind,
            "deltas": [m.delta for m in self.members],
            "T_values": [m.T_half for m in self.members],
            "C_certificate": self.bound_constant,
        }
        return json.dumps(doc, sort_keys=True, indent=2)


def family(delta_list: Sequence[float], n_t: int, chi_kind: str | Sequence[str] = "flat_one") -> CollarFamily:
    """Collars for decreasing deltas sharing one exponential-bound constant."""
    if len(delta_list) == 0:
        raise ValueError("empty delta list")
    kinds = [chi_kind] * len(delta_list) if isinstance(chi_kind, str) else list(chi_kind)
    if len(set(kinds)) != 1:
        raise ValueError("all family members must use the same cut-off kind")
    d = np.asarray(delta_list, dtype=float)
    if np.any(np.diff(d) >= 0):
        raise ValueError("deltas must be strictly decreasing")
    members = [collar_profile(float(x), n_t, kinds[0]) for x in d]
    return CollarFamily(members, max(m.bound_constant for m in members), kinds[0])
