"""Named warped-product examples with their hypotheses checked by sampling."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConstructionError
from .geometry import (
    Constant, Exponential, Fiber, Glued, Interval, Linear, ReducedAccuracyWarning,
    ScaledModel, Tabulated, Trigonometric, WarpedManifold, check_ricci_bound, serrin_coefficient,
    sigma_eval,
)

__all__ = ["Hypothesis", "HypothesisCheck", "CatalogEntry", "build_entry", "validate_model_pole",
           "ENTRY_NAMES", "parse_entry_spec", "default_entries", "in_serrin_family",
           "tabulated_entry"]

SAMPLES = 1000
SIGMA_PRIME_TOL = 1e-12
RICCI_TOL = 1e-12
GLUED_RICCI_TOL = 1e-9
SERRIN_TOL = 1e-10


class Hypothesis(Enum):
    SIGMA_POSITIVE = "SigmaPositive"
    SIGMA_PRIME_NONNEG = "SigmaPrimeNonneg"
    SIGMA_PRIME_NOT_IDENT_ZERO = "SigmaPrimeNotIdentZero"
    RICCI_BOUND = "RicciBound"
    SERRIN_COEFFICIENT_ZERO = "SerrinCoefficientZero"
    MODEL_SMOOTH_AT_POLE = "ModelSmoothAtPole"
    COMPATIBILITY_TRIVIAL = "CompatibilityTrivial"


@dataclass(frozen=True)
class HypothesisCheck:
    holds: bool
    margin: float
    tolerance: float

    def to_dict(self):
        return {"holds": self.holds, "margin": self.margin, "tolerance": self.tolerance}


@dataclass(frozen=True)
class CatalogEntry:
    """A named manifold plus the outcome of every hypothesis check.

    ``hypotheses`` holds the satisfied ones; ``checks`` keeps all margins,
    including failed checks.  RicciBound refers to ``manifold.k``.
    """

    name: str
    params: dict
    manifold: WarpedManifold
    checks: dict = field(default_factory=dict)

    @property
    def hypotheses(self) -> frozenset:
        return frozenset(h for h, c in self.checks.items() if c.holds)

    def holds(self, h: Hypothesis) -> bool:
        return h in self.hypotheses

    def summary_line(self) -> str:
        parts = []
        for h in Hypothesis:
            if h not in self.checks:
                continue
            c = self.checks[h]
            label = f"{h.value}({self.manifold.k:g})" if h is Hypothesis.RICCI_BOUND else h.value
            parts.append(f"{label}={'yes' if c.holds else 'NO'}[{c.margin:.3g}]")
        return f"{self.name} n={self.manifold.n} " + " ".join(parts)

    def to_dict(self):
        return {
            "name": self.name,
            "params": self.params,
            "manifold": self.manifold.to_dict(),
            "hypotheses": {h.value: c.to_dict() for h, c in self.checks.items()},
        }


def _flat_fiber(n):
    return Fiber.circle() if n == 2 else Fiber.flat_torus(n - 1)


def _model_interval(k):
    hi = math.pi / (2 * math.sqrt(k)) if k > 0 else math.inf
    return Interval(0.0, hi, closed_at_lo=True)


def _space_form(n, k=0.0):
    k = float(k)
    return WarpedManifold(n, ScaledModel(1.0, k, _model_interval(k)), Fiber.round_sphere(n - 1), k)


def _scaled_model(n, rho=1.0, k=0.0):
    rho, k = float(rho), float(k)
    if rho <= 0:
        raise ConstructionError(f"scaled_model: sigma > 0 needs rho > 0, got rho={rho}")
    if rho == 1.0:
        return _space_form(n, k)
    # a cone point at r = 0 unless rho = 1, so the pole is left out
    iv = _model_interval(k)
    return WarpedManifold(n, ScaledModel(rho, k, Interval(0.0, iv.hi)), Fiber(n - 1, rho), k)


def _exponential(n, k=-1.0):
    k = float(k)
    if k >= 0:
        raise ConstructionError(f"exponential: needs k < 0, got k={k}")
    sigma = Exponential(1.0, 0.0, k, Interval(-math.inf, math.inf))
    return WarpedManifold(n, sigma, _flat_fiber(n), k)


def _two_exponential(n, c1=1.0, c2=1.0, k=-1.0):
    c1, c2, k = float(c1), float(c2), float(k)
    if k >= 0:
        raise ConstructionError(f"two_exponential: needs k < 0, got k={k}")
    if c1 < 0 or c2 < 0 or c1 + c2 <= 0:
        raise ConstructionError(f"two_exponential: sigma > 0 on (0, inf) needs c1, c2 >= 0 not both 0, got ({c1}, {c2})")
    sigma = Exponential(c1, c2, k, Interval(0.0, math.inf))
    return WarpedManifold(n, sigma, Fiber(n - 1, 4 * k * c1 * c2), k)


def _linear(n, c1=0.0, c2=1.0):
    c1, c2 = float(c1), float(c2)
    if c2 < 0 or (c2 == 0 and c1 <= 0):
        raise ConstructionError(f"linear: sigma > 0 on the domain needs c2 >= 0 and c1 > 0 if c2 = 0, got ({c1}, {c2})")
    lo = max(0.0, -c1 / c2) if c2 > 0 else 0.0
    # rho = c2^2 makes the product Ricci-flat
    return WarpedManifold(n, Linear(c1, c2, Interval(lo, math.inf)), Fiber(n - 1, c2 * c2), 0.0)


def _trigonometric(n, c1=0.0, c2=1.0, k=1.0):
    c1, c2, k = float(c1), float(c2), float(k)
    if k <= 0:
        raise ConstructionError(f"trigonometric: needs k > 0, got k={k}")
    phase = math.atan2(c2, c1)
    if phase <= 0:
        raise ConstructionError("trigonometric: sigma > 0 with sigma' >= 0 needs atan2(c2, c1) > 0")
    a = math.sqrt(k)
    iv = Interval(max(0.0, (phase - math.pi / 2) / a), phase / a)
    return WarpedManifold(n, Trigonometric(c1, c2, k, iv), Fiber(n - 1, k * (c1 * c1 + c2 * c2)), k)


def _glued(n, a=1.0, b=2.0, eps=None):
    a, b = float(a), float(b)
    eps = 0.1 * (b - a) if eps is None else float(eps)
    if not (0 <= a < b and eps > 0):
        raise ConstructionError(f"glued: needs 0 <= a < b and eps > 0, got a={a}, b={b}, eps={eps}")
    sigma = Glued(a, b, eps)
    # guard the r = b seam: both pieces must agree to second order
    d = 1e-9
    for order in (0, 1, 2):
        left = sigma_eval(sigma, b, order)
        right = sigma_eval(sigma, b + d, order)
        expected = [b, 1.0, 0.0][order]
        if abs(left - expected) > 1e-8 or abs(right - expected) > 1e-8:
            raise ConstructionError(f"glued: sigma^({order}) discontinuous at r = b")
    return WarpedManifold(n, sigma, Fiber.round_sphere(n - 1), 0.0)


def _cylinder(n, c=1.0):
    c = float(c)
    if c <= 0:
        raise ConstructionError(f"cylinder: sigma > 0 needs c > 0, got c={c}")
    return WarpedManifold(n, Constant(c), _flat_fiber(n), 0.0)


_BUILDERS = {
    "space_form": _space_form,
    "scaled_model": _scaled_model,
    "exponential": _exponential,
    "two_exponential": _two_exponential,
    "linear": _linear,
    "trigonometric": _trigonometric,
    "glued": _glued,
    "cylinder": _cylinder,
}
ENTRY_NAMES = tuple(_BUILDERS)

# entries whose warping belongs to the three-branch exponential / affine / trigonometric family
_SERRIN_FAMILY = {"space_form", "scaled_model", "exponential", "two_exponential", "linear", "trigonometric"}


def _check_all(name, m: WarpedManifold) -> dict:
    rs = m.sigma.domain.sample(SAMPLES)
    s0 = sigma_eval(m.sigma, rs, 0)
    s1 = sigma_eval(m.sigma, rs, 1)
    checks = {}
    checks[Hypothesis.SIGMA_POSITIVE] = HypothesisCheck(bool(s0.min() > 0), float(s0.min()), 0.0)
    checks[Hypothesis.SIGMA_PRIME_NONNEG] = HypothesisCheck(
        bool(s1.min() >= -SIGMA_PRIME_TOL), float(s1.min()), SIGMA_PRIME_TOL)
    checks[Hypothesis.SIGMA_PRIME_NOT_IDENT_ZERO] = HypothesisCheck(
        bool(np.abs(s1).max() > SIGMA_PRIME_TOL), float(np.abs(s1).max()), SIGMA_PRIME_TOL)
    tol = GLUED_RICCI_TOL if name == "glued" else RICCI_TOL
    margin = check_ricci_bound(m, m.k, SAMPLES)
    checks[Hypothesis.RICCI_BOUND] = HypothesisCheck(margin >= -tol, margin, tol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReducedAccuracyWarning)
        coef = serrin_coefficient(m, m.k, rs)
    worst = float(np.abs(coef).max())
    checks[Hypothesis.SERRIN_COEFFICIENT_ZERO] = HypothesisCheck(worst < SERRIN_TOL, worst, SERRIN_TOL)
    checks[Hypothesis.COMPATIBILITY_TRIVIAL] = HypothesisCheck(
        bool(coef.min() >= -SERRIN_TOL), float(coef.min()), SERRIN_TOL)
    if m.is_model:
        ok, dev = _pole_check(m.sigma, 4)
        checks[Hypothesis.MODEL_SMOOTH_AT_POLE] = HypothesisCheck(ok, dev, _POLE_TOL)
    return checks


def build_entry(name: str, params: dict | None = None, n: int = 2) -> CatalogEntry:
    """Build a named example and run every hypothesis check on it.

    Names: space_form(k), scaled_model(rho, k), exponential(k),
    two_exponential(c1, c2, k), linear(c1, c2), trigonometric(c1, c2, k),
    glued(a, b, eps), cylinder.  Raises ConstructionError when the
    parameters leave sigma nonpositive somewhere on the interval.
    """
    params = dict(params or {})
    if name not in _BUILDERS:
        raise KeyError(f"unknown catalog entry {name!r}; known: {', '.join(ENTRY_NAMES)}")
    if n < 2:
        raise ConstructionError("dimension n must be >= 2")
    try:
        m = _BUILDERS[name](n, **params)
    except TypeError as exc:
        raise ConstructionError(f"{name}: bad parameters {params} ({exc})") from None
    checks = _check_all(name, m)
    if not checks[Hypothesis.SIGMA_POSITIVE].holds:
        raise ConstructionError(f"{name}: sigma > 0 violated on the interval (min sigma = "
                                f"{checks[Hypothesis.SIGMA_POSITIVE].margin:.3g})")
    return CatalogEntry(name, params, m, checks)


_POLE_TOL = 1e-6


def _pole_check(sigma, order_checked):
    """Max deviation from sigma(0)=0, sigma'(0)=1 and vanishing even derivatives.

    Even derivatives above the second come from a polynomial fit of sigma''
    on [0, 0.05]; its even Taylor coefficients must vanish.
    """
    devs = [abs(sigma_eval(sigma, 0.0, 0)), abs(sigma_eval(sigma, 0.0, 1) - 1.0),
            abs(sigma_eval(sigma, 0.0, 2))]
    if order_checked > 2:
        width = min(0.05, 0.5 * sigma.domain.window()[1])
        x = width * (1 - np.cos(np.linspace(0, np.pi / 2, 41)))
        fit = np.polynomial.Polynomial.fit(x, sigma_eval(sigma, x, 2), max(order_checked, 8)).convert()
        coef = fit.coef
        for j in range(2, order_checked + 1, 2):
            # sigma^(j+2)(0) = j! * coef[j]
            if j + 2 <= order_checked and j < len(coef):
                devs.append(abs(coef[j]) * math.factorial(j))
        devs.append(abs(coef[0]))
    dev = float(max(devs))
    return dev < _POLE_TOL, dev


def validate_model_pole(entry, order_checked: int = 2) -> bool:
    """True iff sigma(0)=0, sigma'(0)=1 and even derivatives up to ``order_checked`` vanish."""
    m = entry.manifold if isinstance(entry, CatalogEntry) else entry
    if not m.is_model:
        raise ValueError(f"{getattr(entry, 'name', 'manifold')} has no pole: interval is not closed at 0")
    return _pole_check(m.sigma, order_checked)[0]


def parse_entry_spec(spec: str) -> tuple[str, dict]:
    """``"name:key=val,key=val"`` -> (name, params) with float values."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"bad entry parameter {item!r} (expected key=value)")
        params[key.strip()] = float(val)
    return name.strip(), params


def default_entries(n: int = 2) -> list:
    """One representative per catalog name, in a fixed order."""
    specs = [
        ("space_form", {"k": 0.0}), ("space_form", {"k": 1.0}), ("space_form", {"k": -1.0}),
        ("scaled_model", {"rho": 2.0, "k": -1.0}), ("exponential", {"k": -1.0}),
        ("two_exponential", {"c1": 2.0, "c2": 1.0, "k": -1.0}), ("linear", {"c1": 1.0, "c2": 1.0}),
        ("trigonometric", {"c1": 1.0, "c2": 1.0, "k": 1.0}),
        ("glued", {"a": 1.0, "b": 2.0}), ("cylinder", {}),
    ]
    return [build_entry(name, p, n) for name, p in specs]


def in_serrin_family(entry: CatalogEntry) -> bool:
    return entry.name in _SERRIN_FAMILY


def tabulated_entry(r, values, n=2, k=0.0, closed_at_lo=False, fiber=None) -> CatalogEntry:
    """Wrap sampled warping data as an entry (hypotheses checked like the rest)."""
    sigma = Tabulated(r, values, closed_at_lo)
    fiber = fiber or (Fiber.round_sphere(n - 1) if closed_at_lo else _flat_fiber(n))
    m = WarpedManifold(n, sigma, fiber, k)
    return CatalogEntry("tabulated", {}, m, _check_all("tabulated", m))

