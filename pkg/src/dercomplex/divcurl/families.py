"""Oscillating sequence families, cutoffs and weak-convergence dictionaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analytic import Factor, Scalar, Vector, inner

PI = math.pi


def _sin(axis: int, omega: float, coef: float = 1.0) -> Scalar:
    return Scalar.wave(axis, omega, -PI / 2, coef)


def _cos(axis: int, omega: float, coef: float = 1.0) -> Scalar:
    return Scalar.wave(axis, omega, 0.0, coef)


@dataclass
class SequenceFamily:
    """Sequence ``(E_n, H_n)`` with weak limits ``(E, H)``.

    ``compatible`` lists the partition rules under which ``E_n`` has zero
    tangential trace on ``T`` faces and ``H_n`` zero normal trace on ``N``
    faces.  ``expected_defect`` is the limit of ``<E_n, H_n> - <E, H>``
    (zero when the hypotheses hold).  ``potential(n)`` is the scalar whose
    gradient is the oscillating part of ``E_n``, when there is one.
    """

    name: str
    E: Callable[[int], Vector]
    H: Callable[[int], Vector]
    E_limit: Vector
    H_limit: Vector
    compatible: tuple
    expected_defect: float = 0.0
    counterexample: bool = False
    potential: Callable[[int], Scalar] | None = None
    description: str = ""
    params: dict = field(default_factory=dict)

    def limit_pairing(self) -> float:
        return inner(self.E_limit, self.H_limit)

    def pairing(self, n: int) -> float:
        return inner(self.E(n), self.H(n))

    def defect(self, n: int) -> float:
        return self.pairing(n) - self.limit_pairing()


def _base_E() -> Vector:
    # (1 + cos(pi y), sin(pi x), 0): tangential trace vanishes on x = 0
    return Vector(Scalar.constant(1.0) + _cos(1, PI), _sin(0, PI), None)


def _base_H() -> Vector:
    # (sin(pi x), 0, 0): normal trace vanishes on the whole boundary
    return Vector(_sin(0, PI), None, None)


def _stripe(n: int) -> Scalar:
    return _cos(0, 2 * PI * n)


def _h_oscillation(n: int) -> Vector:
    # sin(2 pi y) cos(2 pi n x) e2: divergence bounded, normal trace zero
    return Vector(None, _sin(1, 2 * PI) * _stripe(n), None)


def family_f1() -> SequenceFamily:
    return SequenceFamily(
        name="F1",
        E=lambda n: _base_E() + Vector(_stripe(n), None, None),
        H=lambda n: _base_H() + _h_oscillation(n),
        E_limit=_base_E(),
        H_limit=_base_H(),
        compatible=("all-N", "T:x-"),
        potential=lambda n: _sin(0, 2 * PI * n, 1.0 / (2 * PI * n)),
        description="curl-free stripes in E, bounded-divergence stripes in H",
    )


def family_f2() -> SequenceFamily:
    return SequenceFamily(
        name="F2",
        E=lambda n: Vector(_stripe(n), None, None),
        H=lambda n: Vector(_stripe(n), None, None),
        E_limit=Vector.zero(),
        H_limit=Vector.zero(),
        compatible=(),
        expected_defect=0.5,
        counterexample=True,
        potential=lambda n: _sin(0, 2 * PI * n, 1.0 / (2 * PI * n)),
        description="parallel stripes; div H_n grows like n",
    )


def solenoidal_part() -> Vector:
    """``pi (sin(pi x) cos(pi y), -cos(pi x) sin(pi y), 0)``: divergence free, zero normal trace."""
    return Vector(_sin(0, PI) * _cos(1, PI, PI), _cos(0, PI) * _sin(1, PI, -PI), None)


def family_f3() -> SequenceFamily:
    return SequenceFamily(
        name="F3",
        E=lambda n: solenoidal_part() + Vector(_stripe(n), None, None),
        H=lambda n: _base_H() + _h_oscillation(n),
        E_limit=solenoidal_part(),
        H_limit=_base_H(),
        compatible=("all-N",),
        potential=lambda n: _sin(0, 2 * PI * n, 1.0 / (2 * PI * n)),
        description="gradient stripes on a fixed solenoidal field",
    )


def _orthogonal_direction(k: np.ndarray) -> np.ndarray:
    # the coordinate axis least aligned with k, made orthogonal to it
    w = np.zeros(3)
    w[int(np.argmin(np.abs(k)))] = 1.0
    w = w - np.dot(w, k) * k
    return w / np.linalg.norm(w)


def family_f4(k=(0.6, 0.8, 0.0), w=None) -> SequenceFamily:
    """Oscillation along a unit direction ``k``.

    ``E`` oscillates parallel to ``k``; ``H`` oscillates along ``w`` orthogonal
    to ``k`` with a ``sin(pi x_i)`` factor for every axis ``i`` where ``w``
    has a normal component, so its normal trace vanishes.
    """
    k = np.asarray(k, dtype=float)
    k = k / np.linalg.norm(k)
    w = _orthogonal_direction(k) if w is None else np.asarray(w, dtype=float)
    w = w - np.dot(w, k) * k
    w = w / np.linalg.norm(w)
    trace_factor = Scalar.constant(1.0)
    for ax in range(3):
        if abs(w[ax]) > 1e-14:
            trace_factor = trace_factor * _sin(ax, PI)

    def wave(n: int) -> Scalar:
        return Scalar.plane_wave(k, 2 * PI * n)

    def potential(n: int) -> Scalar:
        return Scalar.plane_wave(k, 2 * PI * n, -PI / 2, 1.0 / (2 * PI * n))

    return SequenceFamily(
        name="F4",
        E=lambda n: _base_E() + Vector.along(k, wave(n)),
        H=lambda n: _base_H() + Vector.along(w, trace_factor * wave(n)),
        E_limit=_base_E(),
        H_limit=_base_H(),
        compatible=("all-N",),
        potential=potential,
        description="oscillation along k, E parallel and H orthogonal to k",
        params={"k": k.tolist(), "w": w.tolist()},
    )


def builtin_families(k=(0.6, 0.8, 0.0)) -> list[SequenceFamily]:
    return [family_f1(), family_f2(), family_f3(), family_f4(k)]


def get_family(name: str, k=(0.6, 0.8, 0.0)) -> SequenceFamily:
    for fam in builtin_families(k):
        if fam.name == name:
            return fam
    raise KeyError(f"unknown family {name!r}")


# --- cutoffs -----------------------------------------------------------------

@dataclass
class Cutoff:
    """Scalar weight ``phi`` with ``margin`` = distance of its support from the boundary."""

    phi: Scalar
    margin: float
    name: str

    def integral(self) -> float:
        return self.phi.integral()


def bump_factor(margin: float, mass: float = 0.5) -> Factor:
    """``c (t - m)^2 (1 - m - t)^2`` on ``[m, 1 - m]`` with integral ``mass``."""
    m = margin
    length = 1.0 - 2 * m
    c = 30.0 * mass / length ** 5
    # (t - m)^2 (1 - m - t)^2 in ascending coefficients
    left = np.array([m * m, -2 * m, 1.0])
    right = np.array([(1 - m) ** 2, -2 * (1 - m), 1.0])
    poly = c * np.polynomial.polynomial.polymul(left, right)
    return Factor.make(poly, a=m, b=1.0 - m)


def bump_cutoff(margin: float = 0.125, total: float = 0.125) -> Cutoff:
    """Tensor-product polynomial bump, continuously differentiable, with ``int phi = total``."""
    f = bump_factor(margin, total ** (1.0 / 3.0))
    return Cutoff(Scalar.separable(f, f, f), margin, f"bump(m={margin:g})")


def indicator_cutoff(lo: float = 0.25, hi: float = 0.75) -> Cutoff:
    """Indicator of the subcube ``[lo, hi]^3`` (not smooth; pairings only)."""
    f = Factor.make([1.0], a=lo, b=hi)
    return Cutoff(Scalar.separable(f, f, f), min(lo, 1.0 - hi), f"indicator[{lo:g},{hi:g}]")


def zero_cutoff() -> Cutoff:
    return Cutoff(Scalar(), 0.5, "zero")


# --- dictionaries ---------------------------------------------------------------

def default_dictionary(seed: int = 0, n_trig: int = 20, n_random: int = 5) -> list[Vector]:
    """Low-frequency trigonometric fields plus seeded random smooth fields."""
    modes = [(a, b, c) for a in range(3) for b in range(3) for c in range(3) if a + b + c <= 2]
    trig = []
    for i in range(n_trig):
        a, b, c = modes[i % len(modes)]
        axis = i % 3
        s = _cos(0, a * PI) * _cos(1, b * PI) * _cos(2, c * PI)
        comps = [None, None, None]
        comps[axis] = s
        trig.append(Vector(*comps))
    rng = np.random.default_rng(seed)
    rand = []
    for _ in range(n_random):
        comps = []
        for _ax in range(3):
            s = Scalar()
            for _t in range(3):
                freq = rng.integers(0, 3, size=3) * PI
                phase = rng.uniform(0, 2 * PI, size=3)
                s = s + (Scalar.wave(0, freq[0], phase[0], rng.standard_normal())
                         * Scalar.wave(1, freq[1], phase[1]) * Scalar.wave(2, freq[2], phase[2]))
            comps.append(s)
        rand.append(Vector(*comps))
    return trig + rand
