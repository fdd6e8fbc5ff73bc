"""Separable trigonometric-polynomial fields on the unit cube.

A scalar field is a finite sum of terms ``c * f_x(x) f_y(y) f_z(z)`` with
one-dimensional factors

    f(t) = p(t) cos(omega t + psi) * 1[a <= t <= b].

Products, derivatives and integrals over ``[0, 1]^3`` stay in this class and
are evaluated in closed form.  Derivatives ignore the support endpoints, so
they are exact only for factors that vanish to first order there (full
support, or the polynomial bumps used as cutoffs).

:func:`integrate_product_gl` evaluates the same integrals with a composite
Gauss-Legendre rule on point values only, as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

_ZERO_OMEGA = 1e-12


class AliasingRisk(ValueError):
    pass


@dataclass(frozen=True)
class Factor:
    poly: tuple
    omega: float = 0.0
    psi: float = 0.0
    a: float = 0.0
    b: float = 1.0

    @staticmethod
    def make(poly, omega=0.0, psi=0.0, a=0.0, b=1.0) -> "Factor | None":
        poly = np.atleast_1d(np.asarray(poly, dtype=float))
        if omega < 0:
            omega, psi = -omega, -psi
        if abs(omega) < _ZERO_OMEGA:
            poly = poly * math.cos(psi)
            omega, psi = 0.0, 0.0
        else:
            psi = math.remainder(psi, 2 * math.pi)
        poly = np.trim_zeros(np.where(np.abs(poly) < 1e-300, 0.0, poly), "b")
        lo, hi = max(a, 0.0), min(b, 1.0)
        if poly.size == 0 or lo >= hi:
            return None
        return Factor(tuple(poly.tolist()), float(omega), float(psi), float(lo), float(hi))

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        val = P.polyval(t, self.poly) * np.cos(self.omega * t + self.psi)
        return np.where((t >= self.a) & (t <= self.b), val, 0.0)

    def derivative(self) -> list["Factor"]:
        out = [Factor.make(P.polyder(self.poly), self.omega, self.psi, self.a, self.b)]
        if self.omega:
            out.append(Factor.make(np.asarray(self.poly) * self.omega, self.omega, self.psi + math.pi / 2,
                                   self.a, self.b))
        return [f for f in out if f is not None]

    def integral(self) -> float:
        """Closed form of the integral over the support."""
        p = np.asarray(self.poly)
        if self.omega == 0.0:
            q = P.polyint(p)
            return float(P.polyval(self.b, q) - P.polyval(self.a, q))
        # int p e^{i w t} dt = e^{i w t} sum_k (-1)^k p^(k)(t) / (i w)^(k+1)
        iw = 1j * self.omega

        def antiderivative(t):
            acc = 0.0j
            d = p.copy()
            k = 0
            while d.size and np.any(d):
                acc += (-1) ** k * P.polyval(t, d) / iw ** (k + 1)
                d = P.polyder(d)
                k += 1
            return np.exp(1j * (self.omega * t + self.psi)) * acc

        return float((antiderivative(self.b) - antiderivative(self.a)).real)

    def times(self, other: "Factor") -> list[tuple[float, "Factor"]]:
        poly = P.polymul(self.poly, other.poly)
        a, b = max(self.a, other.a), min(self.b, other.b)
        if self.omega == 0.0 or other.omega == 0.0:
            # zero-frequency factors carry psi = 0, so no product-to-sum split is needed
            f = Factor.make(poly, self.omega + other.omega, self.psi + other.psi, a, b)
            return [] if f is None else [(1.0, f)]
        pieces = [Factor.make(poly, self.omega + other.omega, self.psi + other.psi, a, b),
                  Factor.make(poly, self.omega - other.omega, self.psi - other.psi, a, b)]
        return [(0.5, f) for f in pieces if f is not None]


@dataclass(frozen=True)
class Term:
    coef: float
    factors: tuple  # three Factors

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        out = np.full(pts.shape[0], self.coef)
        for ax, f in enumerate(self.factors):
            out = out * f(pts[:, ax])
        return out


def _term(coef, fx, fy, fz) -> Term | None:
    if coef == 0.0 or fx is None or fy is None or fz is None:
        return None
    return Term(float(coef), (fx, fy, fz))


class Scalar:
    """Sum of separable terms."""

    def __init__(self, terms=()):
        self.terms = tuple(t for t in terms if t is not None)

    # construction helpers
    @staticmethod
    def constant(c: float) -> "Scalar":
        one = Factor.make([1.0])
        return Scalar([_term(c, one, one, one)])

    @staticmethod
    def separable(fx: Factor, fy: Factor, fz: Factor, coef: float = 1.0) -> "Scalar":
        return Scalar([_term(coef, fx, fy, fz)])

    @staticmethod
    def wave(axis: int, omega: float, psi: float = 0.0, coef: float = 1.0) -> "Scalar":
        """``coef * cos(omega x_axis + psi)``."""
        f = [Factor.make([1.0])] * 3
        f[axis] = Factor.make([1.0], omega, psi)
        return Scalar([_term(coef, *f)])

    @staticmethod
    def plane_wave(k, omega: float, psi: float = 0.0, coef: float = 1.0) -> "Scalar":
        """``coef * cos(omega k.x + psi)`` expanded into separable terms."""
        # cos(A + B + C) = Re prod (cos + i sin); sin t = cos(t - pi/2)
        cos_f = [Factor.make([1.0], omega * k[ax], psi if ax == 0 else 0.0) for ax in range(3)]
        sin_f = [Factor.make([1.0], omega * k[ax], (psi if ax == 0 else 0.0) - math.pi / 2) for ax in range(3)]
        terms = []
        for sign, pick in ((1, (0, 0, 0)), (-1, (0, 1, 1)), (-1, (1, 0, 1)), (-1, (1, 1, 0))):
            fs = [sin_f[ax] if pick[ax] else cos_f[ax] for ax in range(3)]
            terms.append(_term(coef * sign, *fs))
        return Scalar(terms)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for t in self.terms:
            out += t(pts)
        return out

    def __add__(self, other: "Scalar") -> "Scalar":
        return Scalar(self.terms + other.terms)

    def __neg__(self) -> "Scalar":
        return self * -1.0

    def __sub__(self, other: "Scalar") -> "Scalar":
        return self + (-other)

    def __mul__(self, other) -> "Scalar":
        if isinstance(other, Scalar):
            return _product(self, other)
        if isinstance(other, Vector):
            return NotImplemented
        return Scalar([Term(t.coef * float(other), t.factors) for t in self.terms if float(other) != 0.0])

    __rmul__ = __mul__

    def diff(self, axis: int) -> "Scalar":
        out = []
        for t in self.terms:
            for g in t.factors[axis].derivative():
                fs = list(t.factors)
                fs[axis] = g
                out.append(_term(t.coef, *fs))
        return Scalar(out)

    def integral(self) -> float:
        return float(sum(t.coef * np.prod([f.integral() for f in t.factors]) for t in self.terms))

    def max_frequency(self) -> np.ndarray:
        out = np.zeros(3)
        for t in self.terms:
            out = np.maximum(out, [f.omega for f in t.factors])
        return out

    def gradient(self) -> "Vector":
        return Vector(self.diff(0), self.diff(1), self.diff(2))

    def __len__(self):
        return len(self.terms)


def _product(u: Scalar, v: Scalar) -> Scalar:
    out = []
    for s in u.terms:
        for t in v.terms:
            per_axis = [s.factors[ax].times(t.factors[ax]) for ax in range(3)]
            for cx, fx in per_axis[0]:
                for cy, fy in per_axis[1]:
                    for cz, fz in per_axis[2]:
                        out.append(_term(s.coef * t.coef * cx * cy * cz, fx, fy, fz))
    return Scalar(out)


class Vector:
    """Three-component analytic field; callable on ``(m, 3)`` points."""

    def __init__(self, x: Scalar | None = None, y: Scalar | None = None, z: Scalar | None = None):
        self.comps = tuple(c if c is not None else Scalar() for c in (x, y, z))

    @staticmethod
    def zero() -> "Vector":
        return Vector()

    @staticmethod
    def along(direction, s: Scalar) -> "Vector":
        return Vector(*[s * float(d) for d in direction])

    def __getitem__(self, i):
        return self.comps[i]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([c(pts) for c in self.comps], axis=1)

    def __add__(self, other: "Vector") -> "Vector":
        return Vector(*[a + b for a, b in zip(self.comps, other.comps)])

    def __sub__(self, other: "Vector") -> "Vector":
        return Vector(*[a - b for a, b in zip(self.comps, other.comps)])

    def __neg__(self) -> "Vector":
        return Vector(*[-a for a in self.comps])

    def __mul__(self, other) -> "Vector":
        if isinstance(other, Scalar):
            return Vector(*[c * other for c in self.comps])
        return Vector(*[c * float(other) for c in self.comps])

    __rmul__ = __mul__

    def dot(self, other: "Vector") -> Scalar:
        out = Scalar()
        for a, b in zip(self.comps, other.comps):
            if len(a) and len(b):
                out = out + a * b
        return out

    def div(self) -> Scalar:
        return self.comps[0].diff(0) + self.comps[1].diff(1) + self.comps[2].diff(2)

    def curl(self) -> "Vector":
        x, y, z = self.comps
        return Vector(z.diff(1) - y.diff(2), x.diff(2) - z.diff(0), y.diff(0) - x.diff(1))

    def max_frequency(self) -> np.ndarray:
        out = np.zeros(3)
        for c in self.comps:
            out = np.maximum(out, c.max_frequency())
        return out

    def is_zero(self) -> bool:
        return all(len(c) == 0 for c in self.comps)


def inner(u: Vector, v: Vector) -> float:
    """Closed-form ``L2`` pairing over the unit cube."""
    return u.dot(v).integral()


def norm(u) -> float:
    if isinstance(u, Scalar):
        return math.sqrt(max((u * u).integral(), 0.0))
    return math.sqrt(max(inner(u, u), 0.0))


# --- quadrature ---------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def gl_rule(lo: float, hi: float, panels: int, order: int = 5):
    """Composite Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    if order == 5:
        x, w = _GL_NODES, _GL_WEIGHTS
    else:
        x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _periods(freq) -> np.ndarray:
    return np.ceil(np.asarray(freq) / (2 * math.pi) - 1e-9)


def required_panels(freq, per_period: int = 8) -> np.ndarray:
    """Panels per axis: ``per_period`` times the number of oscillation periods, at least one."""
    return np.maximum(per_period * _periods(freq), 1).astype(int)


def _factor_pair_gl(f: Factor, g: Factor, panels_per_unit: int) -> float:
    lo, hi = max(f.a, g.a), min(f.b, g.b)
    if lo >= hi:
        return 0.0
    panels = max(1, int(math.ceil(panels_per_unit * (hi - lo) - 1e-9)))
    x, w = gl_rule(lo, hi, panels)
    return float(np.dot(w, f(x) * g(x)))


def integrate_product_gl(u: Vector, v: Vector, panels=None, per_period: int = 8) -> float:
    """``<u, v>`` by tensor Gauss-Legendre, using point values of each factor only.

    The tensor rule applied to a sum of separable products factorises into
    one-dimensional rules, so the cost is linear in the panel count.
    ``panels`` gives per-axis panel counts on ``[0, 1]``; fewer than two
    panels per oscillation period raises :class:`AliasingRisk`.
    """
    freq = np.maximum(u.max_frequency(), v.max_frequency())
    periods = _periods(freq)
    if panels is None:
        panels = required_panels(freq, per_period)
    panels = np.broadcast_to(np.asarray(panels, dtype=int), (3,))
    if np.any(panels < 2 * periods):
        raise AliasingRisk(f"aliasing risk: panels {panels.tolist()} below twice the periods {periods.tolist()}")
    total = 0.0
    for a, b in zip(u.comps, v.comps):
        for s in a.terms:
            for t in b.terms:
                val = s.coef * t.coef
                for ax in range(3):
                    if val == 0.0:
                        break
                    val *= _factor_pair_gl(s.factors[ax], t.factors[ax], int(panels[ax]))
                total += val
    return float(total)
