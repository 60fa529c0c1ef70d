"""Warped product manifolds ``I x N`` with metric ``dr^2 + sigma(r)^2 g_N``.

Everything here is closed form: warping families carry analytic derivatives
up to third order, curvature is read off the warped-product Ricci formula,
and radial operators act on anything exposing ``derivatives(r)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, ReducedAccuracyWarning

__all__ = [
    "Interval", "WarpingFunction", "Linear", "Exponential", "Trigonometric",
    "ScaledModel", "Glued", "Constant", "Tabulated", "FiberKind", "Fiber",
    "WarpedManifold", "sigma_eval", "ricci_eigenvalue_bounds",
    "check_ricci_bound", "serrin_coefficient", "laplacian_radial",
    "radial_hessian_components",
]

# kernel codes shared with the compiled/pure geodesic integrators
KERNEL_LINEAR, KERNEL_EXP, KERNEL_TRIG, KERNEL_SINH, KERNEL_SIN, KERNEL_CONST, KERNEL_GLUED = range(7)

# half-width of the finite sampling window used when an interval end is infinite
_INFINITE_WINDOW = 10.0


@dataclass(frozen=True)
class Interval:
    """Radial interval ``(lo, hi)``, or ``[0, hi)`` for a model manifold with a pole."""

    lo: float
    hi: float
    closed_at_lo: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")
        if self.closed_at_lo and self.lo != 0.0:
            raise ValueError("only a pole at r = 0 may close the interval")

    def contains(self, r):
        r = np.asarray(r)
        above = r >= self.lo if self.closed_at_lo else r > self.lo
        return above & (r < self.hi)

    def window(self) -> tuple[float, float]:
        """A finite sub-range used for sampling when an end is infinite."""
        lo, hi = self.lo, self.hi
        if math.isinf(lo) and math.isinf(hi):
            return -_INFINITE_WINDOW / 2, _INFINITE_WINDOW / 2
        if math.isinf(hi):
            return lo, lo + _INFINITE_WINDOW
        if math.isinf(lo):
            return hi - _INFINITE_WINDOW, hi
        return lo, hi

    def sample(self, n: int) -> np.ndarray:
        """``n`` radii strictly inside the (windowed) interval; the pole is excluded."""
        lo, hi = self.window()
        return np.linspace(lo, hi, n + 2)[1:-1]

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "closed_at_lo": self.closed_at_lo}


class WarpingFunction:
    """Base class for the warping factor sigma and its first three derivatives.

    Subclasses implement ``_eval(r, order)`` on arrays using numpy ufuncs only,
    so evaluation also works in ``np.longdouble``.
    """

    domain: Interval
    exact_third_derivative = True

    def __call__(self, r, order: int = 0):
        return sigma_eval(self, r, order)

    def _eval(self, r, order):
        raise NotImplementedError

    def kernel_spec(self):
        """``(code, params)`` for the compiled integrators, or None if unsupported."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


def _dtype_const(value, r):
    return np.asarray(value, dtype=r.dtype if r.dtype.kind == "f" else float)


@dataclass(frozen=True)
class Linear(WarpingFunction):
    """sigma = c1 + c2 r."""

    c1: float
    c2: float
    domain: Interval = Interval(0.0, math.inf)

    def _eval(self, r, order):
        if order == 0:
            return self.c1 + self.c2 * r
        if order == 1:
            return np.full_like(r, self.c2, dtype=r.dtype)
        return np.zeros_like(r)

    def kernel_spec(self):
        return KERNEL_LINEAR, (self.c1, self.c2)

    def to_dict(self):
        return {"family": "Linear", "c1": self.c1, "c2": self.c2, "domain": self.domain.to_dict()}


@dataclass(frozen=True)
class Exponential(WarpingFunction):
    """sigma = c1 exp(a r) + c2 exp(-a r) with a = sqrt(-k), k < 0."""

    c1: float
    c2: float
    k: float
    domain: Interval = Interval(0.0, math.inf)

    def __post_init__(self):
        if self.k >= 0:
            raise ValueError("Exponential family needs k < 0")

    def _eval(self, r, order):
        a = np.sqrt(_dtype_const(-self.k, r))
        ep, em = self.c1 * np.exp(a * r), self.c2 * np.exp(-a * r)
        return a**order * (ep + (-1) ** order * em)

    def kernel_spec(self):
        return KERNEL_EXP, (self.c1, self.c2, math.sqrt(-self.k))

    def to_dict(self):
        return {"family": "Exponential", "c1": self.c1, "c2": self.c2, "k": self.k,
                "domain": self.domain.to_dict()}


@dataclass(frozen=True)
class Trigonometric(WarpingFunction):
    """sigma = c1 cos(a r) + c2 sin(a r) with a = sqrt(k), k > 0."""

    c1: float
    c2: float
    k: float
    domain: Interval = Interval(0.0, math.inf)

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("Trigonometric family needs k > 0")

    def _eval(self, r, order):
        a = np.sqrt(_dtype_const(self.k, r))
        c, s = np.cos(a * r), np.sin(a * r)
        # d/dr cycles (cos, sin) -> (-sin, cos) -> (-cos, -sin) -> (sin, -cos)
        cc, cs = [(self.c1, self.c2), (self.c2, -self.c1), (-self.c1, -self.c2), (-self.c2, self.c1)][order]
        return a**order * (cc * c + cs * s)

    def kernel_spec(self):
        return KERNEL_TRIG, (self.c1, self.c2, math.sqrt(self.k))

    def to_dict(self):
        return {"family": "Trigonometric", "c1": self.c1, "c2": self.c2, "k": self.k,
                "domain": self.domain.to_dict()}


@dataclass(frozen=True)
class ScaledModel(WarpingFunction):
    """sqrt(rho) times the constant-curvature model warping sinh / identity / sin."""

    rho: float
    k: float
    domain: Interval = Interval(0.0, math.inf)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("ScaledModel needs a positive fiber constant rho")

    def _eval(self, r, order):
        amp = np.sqrt(_dtype_const(self.rho, r))
        if self.k == 0:
            return [amp * r, np.full_like(r, amp), np.zeros_like(r), np.zeros_like(r)][order]
        if self.k < 0:
            a = np.sqrt(_dtype_const(-self.k, r))
            sh, ch = np.sinh(a * r), np.cosh(a * r)
            return amp * [sh / a, ch, a * sh, a * a * ch][order]
        a = np.sqrt(_dtype_const(self.k, r))
        sn, cs = np.sin(a * r), np.cos(a * r)
        return amp * [sn / a, cs, -a * sn, -a * a * cs][order]

    def kernel_spec(self):
        amp = math.sqrt(self.rho)
        if self.k == 0:
            return KERNEL_LINEAR, (0.0, amp)
        if self.k < 0:
            return KERNEL_SINH, (amp, math.sqrt(-self.k))
        return KERNEL_SIN, (amp, math.sqrt(self.k))

    def to_dict(self):
        return {"family": "ScaledModel", "rho": self.rho, "k": self.k, "domain": self.domain.to_dict()}


def _bump_terms(s, power):
    """exp(-1/s) / s**power for s > 0, and 0 for s <= 0 (flat gluing)."""
    pos = s > 0
    safe = np.where(pos, s, 1)
    return np.where(pos, np.exp(-1 / safe - power * np.log(safe)), 0)


@dataclass(frozen=True)
class Glued(WarpingFunction):
    """sigma = r on (a, b], r (1 - exp(-1/(r-b))) on (b, b + eps).

    With ``a = 0`` the interval is closed at the pole, giving a model manifold.
    """

    a: float
    b: float
    eps: float
    domain: Interval = field(init=False)

    def __post_init__(self):
        if not (0 <= self.a < self.b and self.eps > 0):
            raise ValueError("Glued needs 0 <= a < b and eps > 0")
        object.__setattr__(self, "domain", Interval(self.a, self.b + self.eps, closed_at_lo=self.a == 0))

    def _eval(self, r, order):
        s = r - self.b
        # f = exp(-1/s): f' = f/s^2, f'' = f(1/s^4 - 2/s^3), f''' = f(1/s^6 - 6/s^5 + 6/s^4)
        if order == 0:
            return r * (1 - _bump_terms(s, 0))
        if order == 1:
            return 1 - _bump_terms(s, 0) - r * _bump_terms(s, 2)
        f1 = _bump_terms(s, 2)
        f2 = _bump_terms(s, 4) - 2 * _bump_terms(s, 3)
        if order == 2:
            return -2 * f1 - r * f2
        f3 = _bump_terms(s, 6) - 6 * _bump_terms(s, 5) + 6 * _bump_terms(s, 4)
        return -3 * f2 - r * f3

    def kernel_spec(self):
        return KERNEL_GLUED, (self.b,)

    def to_dict(self):
        return {"family": "Glued", "a": self.a, "b": self.b, "eps": self.eps, "domain": self.domain.to_dict()}


@dataclass(frozen=True)
class Constant(WarpingFunction):
    """sigma = c (a product metric, e.g. the flat cylinder for c = 1)."""

    c: float
    domain: Interval = Interval(-math.inf, math.inf)

    def _eval(self, r, order):
        return np.full_like(r, self.c) if order == 0 else np.zeros_like(r)

    def kernel_spec(self):
        return KERNEL_CONST, (self.c,)

    def to_dict(self):
        return {"family": "Constant", "c": self.c, "domain": self.domain.to_dict()}


class Tabulated(WarpingFunction):
    """sigma from samples, via a not-a-knot cubic spline.

    The spline gives sigma to fourth order, sigma' to third and sigma'' to
    second order in the sample spacing.  sigma''' is a centred difference of
    the spline's sigma'' and is flagged as reduced accuracy.
    """

    exact_third_derivative = False

    def __init__(self, r, values, closed_at_lo=False):
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        self.samples = (r, values)
        self.domain = Interval(float(r[0]), float(r[-1]), closed_at_lo=closed_at_lo)
        self._spline = CubicSpline(r, values, bc_type="not-a-knot")
        self._fd_step = 1e-3 * float(np.min(np.diff(r)))

    def _eval(self, r, order):
        x = np.asarray(r, dtype=float)
        if order <= 2:
            return self._spline(x, order)
        d = self._fd_step
        lo, hi = self.samples[0][0], self.samples[0][-1]
        xp, xm = np.minimum(x + d, hi), np.maximum(x - d, lo)
        return (self._spline(xp, 2) - self._spline(xm, 2)) / (xp - xm)

    def to_dict(self):
        r, v = self.samples
        return {"family": "Tabulated", "r": r.tolist(), "sigma": v.tolist(), "domain": self.domain.to_dict()}


def sigma_eval(w: WarpingFunction, r, order: int = 0):
    """Evaluate ``sigma^(order)(r)`` for order 0..3.

    Scalars in give Python floats out (or the input's numpy scalar type).
    Raises DomainError if any radius lies outside ``w.domain``.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    arr = np.asarray(r)
    if arr.dtype.kind != "f":
        arr = arr.astype(float)
    if not np.all(w.domain.contains(arr)):
        raise DomainError(f"r outside sigma domain ({w.domain.lo}, {w.domain.hi})")
    out = w._eval(arr, order)
    if order == 3 and not w.exact_third_derivative:
        warnings.warn("sigma''' approximated by finite differences", ReducedAccuracyWarning, stacklevel=2)
    if np.ndim(r) == 0:
        return out[()] if arr.dtype == np.longdouble else float(out)
    return out


class FiberKind(Enum):
    ROUND_SPHERE = "RoundSphere"
    CIRCLE = "Circle"
    FLAT_TORUS = "FlatTorus"
    ABSTRACT = "Abstract"


@dataclass(frozen=True)
class Fiber:
    """Fiber descriptor: only the dimension and the Ricci lower bound rho are kept."""

    dim: int
    ricci_lower_bound: float
    kind: FiberKind = FiberKind.ABSTRACT

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("fiber dimension must be >= 1")
        if self.kind is FiberKind.ROUND_SPHERE and self.ricci_lower_bound != 1.0:
            raise ValueError("the unit round sphere has rho = 1")
        if self.kind in (FiberKind.CIRCLE, FiberKind.FLAT_TORUS) and self.ricci_lower_bound != 0.0:
            raise ValueError("flat fibers have rho = 0")
        if self.kind is FiberKind.CIRCLE and self.dim != 1:
            raise ValueError("a circle fiber is one-dimensional")

    @classmethod
    def round_sphere(cls, dim):
        return cls(dim, 1.0, FiberKind.ROUND_SPHERE)

    @classmethod
    def circle(cls):
        return cls(1, 0.0, FiberKind.CIRCLE)

    @classmethod
    def flat_torus(cls, dim):
        return cls(dim, 0.0, FiberKind.FLAT_TORUS)

    @property
    def volume(self) -> float:
        """Total volume of the unit fiber: |S^{d}| for spheres, (2 pi)^d for tori."""
        if self.kind is FiberKind.ROUND_SPHERE:
            m = self.dim + 1
            return 2 * math.pi ** (m / 2) / math.gamma(m / 2)
        return (2 * math.pi) ** self.dim

    def to_dict(self):
        return {"dim": self.dim, "ricci_lower_bound": self.ricci_lower_bound, "kind": self.kind.value}


@dataclass(frozen=True)
class WarpedManifold:
    n: int
    sigma: WarpingFunction
    fiber: Fiber
    k: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension n must be >= 2")
        if self.fiber.dim != self.n - 1:
            raise ValueError(f"fiber dimension {self.fiber.dim} != n - 1 = {self.n - 1}")

    @property
    def is_model(self) -> bool:
        return self.sigma.domain.closed_at_lo

    def to_dict(self):
        return {"n": self.n, "k": self.k, "sigma": self.sigma.to_dict(), "fiber": self.fiber.to_dict()}


def ricci_eigenvalue_bounds(m: WarpedManifold, r):
    """Radial Ricci eigenvalue and a lower bound on the tangential ones.

    radial = -(n-1) sigma''/sigma,
    tangential >= ((n-2) rho - sigma sigma'' - (n-2) sigma'^2) / sigma^2.

    Evaluated in extended precision: near a pole both numerators cancel to
    O(r^2) and double precision would lose ~1e-10 of the bound.
    """
    rl = np.asarray(r, dtype=np.longdouble)
    s0, s1, s2 = (sigma_eval(m.sigma, rl, o) for o in (0, 1, 2))
    n, rho = m.n, np.longdouble(m.fiber.ricci_lower_bound)
    radial = -(n - 1) * s2 / s0
    tangential = ((n - 2) * (rho - s1 * s1) - s0 * s2) / (s0 * s0)
    if np.ndim(r) == 0:
        return float(radial), float(tangential)
    return radial.astype(float), tangential.astype(float)


def check_ricci_bound(m: WarpedManifold, k: float | None = None, n_samples: int = 1000,
                      window: tuple[float, float] | None = None) -> float:
    """Margin of ``Ric >= (n-1) k g`` on a sample of radii.

    Returns ``min_r min(radial, tangential_lower) - (n-1) k``; a nonnegative
    value certifies the bound on the sample set.  ``window`` restricts the
    sampled sub-interval (defaults to the whole domain, pole excluded).
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    k = m.k if k is None else k
    if window is None:
        rs = m.sigma.domain.sample(n_samples)
    else:
        rs = np.linspace(window[0], window[1], n_samples)
    radial, tangential = ricci_eigenvalue_bounds(m, rs)
    return float(np.min(np.minimum(radial, tangential)) - (m.n - 1) * k)


def serrin_coefficient(m: WarpedManifold, k: float, r):
    """k sigma' + (sigma'' sigma^{n-1})' / (n sigma^{n-1}).

    Expanded as k sigma' + (sigma''' sigma + (n-1) sigma'' sigma') / (n sigma).
    """
    s0, s1, s2 = (sigma_eval(m.sigma, r, o) for o in (0, 1, 2))
    s3 = sigma_eval(m.sigma, r, 3)
    n = m.n
    return k * s1 + (s3 * s0 + (n - 1) * s2 * s1) / (n * s0)


def laplacian_radial(m: WarpedManifold, u, r: float) -> float:
    """u'' + (n-1)(sigma'/sigma) u' for a radial function ``u``.

    ``u`` is anything with ``derivatives(r) -> (u, u', u'')``.  At the pole of a
    model manifold the limit ``n u''(0)`` is returned.
    """
    _, du, d2u = u.derivatives(r)
    if r == 0.0:
        if not m.is_model:
            raise DomainError("r = 0 is only admissible at the pole of a model manifold")
        return m.n * d2u
    s0, s1 = sigma_eval(m.sigma, r, 0), sigma_eval(m.sigma, r, 1)
    return d2u + (m.n - 1) * (s1 / s0) * du


def radial_hessian_components(m: WarpedManifold, u, r: float) -> tuple[float, float]:
    """Hessian eigenvalues of a radial function: ``(u'', u' sigma'/sigma)``.

    The tangential value is normalised by the metric ``sigma^2 g_N``.
    """
    _, du, d2u = u.derivatives(r)
    if r == 0.0 and m.is_model:
        return d2u, d2u
    s0 = sigma_eval(m.sigma, r, 0)
    if s0 == 0:
        raise DomainError("sigma vanishes; tangential Hessian undefined")
    return d2u, du * sigma_eval(m.sigma, r, 1) / s0
