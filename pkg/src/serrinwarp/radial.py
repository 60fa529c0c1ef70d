"""Radial reduction on model balls and the one-dimensional Obata equation.

On a model manifold a radial solution of ``Delta u + n k u = -1`` obeys

    u'' + (n-1) (sigma'/sigma) u' + n k u = -1,   u'(0) = 0,  u(R) = 0,

which is solved here by shooting on u(0) with RK4.  Closed forms for the
constant-curvature balls serve as oracles.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import BPoly

from . import kernels
from .errors import DegenerateRecoveryError, InadmissibleRadiusError, NoSolutionError
from .geometry import WarpedManifold, sigma_eval

__all__ = [
    "RadialProfile", "closed_form_solution", "closed_form_boundary_gradient",
    "closed_form_profile", "solve_radial_bvp", "obata_ode_solve", "obata_closed_form",
    "hessian_residual", "recover_metric_from_hessian", "MetricRecovery", "model_sigma",
]


@dataclass
class RadialProfile:
    """Samples of a radial function and its first two derivatives on [0, R]."""

    n: int
    k: float
    r_grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    boundary_gradient_c: float
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    @property
    def r(self) -> np.ndarray:
        return self.r_grid

    @property
    def ball_radius(self) -> float:
        return float(self.r[-1])

    @property
    def step(self) -> float:
        return float(self.r[1] - self.r[0])

    def derivatives(self, r):
        """(u, u', u'') at ``r``; exact at grid nodes, quintic Hermite in between."""
        scalar = np.ndim(r) == 0
        if self._interp is None:
            data = np.stack([self.u, self.du, self.d2u], axis=1)
            self._interp = BPoly.from_derivatives(self.r, data)
        p = self._interp
        out = p(r), p.derivative(1)(r), p.derivative(2)(r)
        return tuple(float(x) for x in out) if scalar else out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "u", "du", "d2u"])
            for row in zip(self.r, self.u, self.du, self.d2u):
                w.writerow([repr(float(x)) for x in row])


def _check_admissible(k, ball_radius):
    if ball_radius <= 0:
        raise InadmissibleRadiusError("ball radius must be positive")
    if k > 0 and math.cos(math.sqrt(k) * ball_radius) <= 0:
        raise InadmissibleRadiusError(
            f"k={k}: need ball radius < pi/(2 sqrt k) = {math.pi / (2 * math.sqrt(k)):.6g}, got {ball_radius}")


def _closed_form_derivs(k, n, R, r):
    r = np.asarray(r, dtype=float)
    if k == 0:
        return (R * R - r * r) / (2 * n), -r / n, np.full_like(r, -1.0 / n)
    if k < 0:
        a = math.sqrt(-k)
        den = k * n * math.cosh(a * R)
        return np.cosh(a * r) / den - 1 / (n * k), a * np.sinh(a * r) / den, -np.cosh(a * r) / (n * math.cosh(a * R))
    a = math.sqrt(k)
    den = k * n * math.cos(a * R)
    return np.cos(a * r) / den - 1 / (n * k), -a * np.sin(a * r) / den, -np.cos(a * r) / (n * math.cos(a * R))


def closed_form_solution(k: float, n: int, ball_radius: float, r):
    """Radial solution on the constant-curvature ball of radius R about the pole.

    k = 0: (R^2 - r^2)/(2n); k < 0: cosh(a r)/(k n cosh(a R)) - 1/(nk) with
    a = sqrt(-k); k > 0: the same with cos, requiring cos(sqrt(k) R) > 0.
    """
    _check_admissible(k, ball_radius)
    if np.any(np.asarray(r) < 0) or np.any(np.asarray(r) > ball_radius):
        raise ValueError("r must lie in [0, ball_radius]")
    u = _closed_form_derivs(k, n, ball_radius, r)[0]
    return float(u) if np.ndim(r) == 0 else u


def closed_form_boundary_gradient(k: float, n: int, ball_radius: float) -> float:
    """c = |u'(R)| of the closed form: R/n, tan(aR)/(a n) or tanh(aR)/(a n)."""
    _check_admissible(k, ball_radius)
    if k == 0:
        return ball_radius / n
    if k > 0:
        a = math.sqrt(k)
        return math.tan(a * ball_radius) / (a * n)
    a = math.sqrt(-k)
    return math.tanh(a * ball_radius) / (a * n)


def closed_form_profile(k: float, n: int, ball_radius: float, step: float) -> RadialProfile:
    """The closed form sampled (with exact derivatives) on a uniform grid."""
    _check_admissible(k, ball_radius)
    n_steps = max(1, math.ceil(ball_radius / step - 1e-9))
    r = np.linspace(0.0, ball_radius, n_steps + 1)
    u, du, d2u = _closed_form_derivs(k, n, ball_radius, r)
    u[-1] = 0.0
    return RadialProfile(n, k, r, u, du, d2u, closed_form_boundary_gradient(k, n, ball_radius))


def model_sigma(k: float):
    """The pole-normalised constant-curvature warping sin / identity / sinh as a callable."""
    if k == 0:
        return lambda r: np.asarray(r, dtype=float)
    if k > 0:
        a = math.sqrt(k)
        return lambda r: np.sin(a * np.asarray(r)) / a
    a = math.sqrt(-k)
    return lambda r: np.sinh(a * np.asarray(r)) / a


def _pole_series(u0, n, k, sigma3_0, r):
    """u and u' near the pole from the even Taylor series forced by the ODE.

    With sigma = r + s3 r^3 + ..., u = u0 + a r^2 + b r^4 + ... where
    a = -(1 + n k u0)/(2n) and b = -a (4(n-1) s3 + n k) / (4(n+2)).
    """
    a = -(1.0 + n * k * u0) / (2.0 * n)
    s3 = sigma3_0 / 6.0
    b = -a * (4.0 * (n - 1) * s3 + n * k) / (4.0 * (n + 2))
    return u0 + a * r**2 + b * r**4, 2 * a * r + 4 * b * r**3


def solve_radial_bvp(m: WarpedManifold, k: float, ball_radius: float, step: float,
                     backend=None) -> RadialProfile:
    """Shoot on u(0) so that u(R) = 0, integrating outward with RK4.

    The first step is taken with the pole series, after which RK4 runs on the
    full ODE.  Converges when |u(R)| < 1e-12 max(1, |u(0)|).
    """
    if not m.is_model:
        raise ValueError("solve_radial_bvp needs a model manifold with a pole at r = 0")
    if abs(sigma_eval(m.sigma, 0.0)) > 1e-12 or abs(sigma_eval(m.sigma, 0.0, 1) - 1.0) > 1e-9:
        raise ValueError("sigma is not a valid model warping (need sigma(0) = 0, sigma'(0) = 1)")
    if step <= 0:
        raise ValueError("step must be positive")
    if not m.sigma.domain.contains(ball_radius):
        raise ValueError(f"ball radius {ball_radius} outside the warping domain")

    n = m.n
    n_steps = max(2, math.ceil(ball_radius / step - 1e-9))
    h = ball_radius / n_steps
    r = np.linspace(0.0, ball_radius, n_steps + 1)
    drift = np.zeros_like(r)
    drift[1:] = (n - 1) * sigma_eval(m.sigma, r[1:], 1) / sigma_eval(m.sigma, r[1:], 0)
    mid = r[:-1] + h / 2
    drift_mid = (n - 1) * sigma_eval(m.sigma, mid, 1) / sigma_eval(m.sigma, mid, 0)
    s3_0 = float(sigma_eval(m.sigma, 0.0, 3))
    nk = n * k

    def shoot(u0):
        u1, du1 = _pole_series(u0, n, k, s3_0, h)
        u, du = kernels.radial_rk4(u1, du1, h, drift, drift_mid, nk, 1, backend=backend)
        u[0], du[0] = u0, 0.0
        return u, du

    def end_value(u0):
        return shoot(u0)[0][-1]

    lo, f_lo = 0.0, end_value(0.0)
    hi, f_hi = None, None
    trial = 2.0
    while trial < 1e8:
        f = end_value(trial)
        if np.sign(f) != np.sign(f_lo):
            hi, f_hi = trial, f
            break
        lo, f_lo = trial, f
        trial *= 2
    if hi is None or not np.isfinite(f_hi):
        raise NoSolutionError(f"could not bracket u(R) = 0 for k={k}, R={ball_radius}")

    # a few bisection steps, then secant (exact up to rounding: u(R) is affine in u(0))
    for _ in range(4):
        midpt = 0.5 * (lo + hi)
        f_mid = end_value(midpt)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = midpt, f_mid
        else:
            hi, f_hi = midpt, f_mid
    x0, f0, x1, f1 = lo, f_lo, hi, f_hi
    for _ in range(50):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        x0, f0 = x1, f1
        x1, f1 = x2, end_value(x2)
        if abs(f1) < 1e-12 * max(1.0, abs(x1)):
            break
    else:
        raise NoSolutionError("secant refinement did not converge")
    if abs(f1) >= 1e-12 * max(1.0, abs(x1)):
        raise NoSolutionError("shooting stalled before reaching tolerance")

    u, du = shoot(x1)
    d2u = np.empty_like(u)
    d2u[0] = -(1.0 + nk * u[0]) / n
    d2u[1:] = -1.0 - nk * u[1:] - drift[1:] * du[1:]
    return RadialProfile(n, k, r, u, du, d2u, abs(float(du[-1])))


def obata_closed_form(k: float, n: int, y0: float, t):
    """Solution of y'' = -1/n - k y with y(0) = y0, y'(0) = 0."""
    t = np.asarray(t, dtype=float)
    if k == 0:
        return y0 - t * t / (2 * n)
    shift = 1.0 / (k * n)
    if k > 0:
        return (y0 + shift) * np.cos(math.sqrt(k) * t) - shift
    return (y0 + shift) * np.cosh(math.sqrt(-k) * t) - shift


def obata_ode_solve(k: float, n: int, y0: float, t_max: float, step: float, backend=None):
    """RK4 for the geodesic Obata ODE; returns ``(t, y)`` on a uniform grid."""
    if step <= 0:
        raise ValueError("step must be positive")
    n_steps = max(1, math.ceil(t_max / step - 1e-9))
    h = t_max / n_steps
    y = kernels.obata_rk4(k, n, y0, h, n_steps, backend=backend)
    return np.linspace(0.0, t_max, n_steps + 1), y


def hessian_residual(u: RadialProfile, m: WarpedManifold, k: float | None = None) -> float:
    """max over the grid of |Hess u + (1/n + k u) g| for a radial profile.

    Uses both eigenvalues: u'' and u' sigma'/sigma (pole limit u''(0)).
    """
    k = u.k if k is None else k
    target = -(1.0 / u.n + k * u.u)
    rr = np.abs(u.d2u - target)
    tang = np.empty_like(u.u)
    r = u.r
    pos = r > 0
    tang[pos] = u.du[pos] * sigma_eval(m.sigma, r[pos], 1) / sigma_eval(m.sigma, r[pos], 0)
    tang[~pos] = u.d2u[~pos]
    return float(max(rr.max(), np.abs(tang - target).max()))


@dataclass
class MetricRecovery:
    r: np.ndarray
    sigma_hat: np.ndarray
    sigma_branch: np.ndarray
    residual: float


def recover_metric_from_hessian(u: RadialProfile, m: WarpedManifold, tol: float = 1e-6) -> MetricRecovery:
    """Rebuild sigma from the tangential Hessian equation of a radial solution.

    u' sigma sigma' = -(1/n + k u) sigma^2 gives sigma'/sigma = -(1/n + k u)/u';
    integrating log sigma with sigma ~ r at the pole yields sigma_hat, which is
    compared with sin(sqrt k r)/sqrt k, r or sinh(sqrt(-k) r)/sqrt(-k).
    """
    res = hessian_residual(u, m)
    if res > tol:
        raise ValueError(f"profile does not satisfy the Hessian equation (residual {res:.3g} > {tol})")
    r = u.r
    interior = r[1:]
    du = u.du[1:]
    if np.any(du == 0.0) or np.any(np.sign(du) != np.sign(du[0])):
        raise DegenerateRecoveryError("u' vanishes away from the pole")
    # log sigma_hat = log r + int_0^r (q(s) - 1/s) ds, integrand regular (-> 0) at the pole
    q = -(1.0 / u.n + u.k * u.u[1:]) / du
    integrand = np.concatenate([[0.0], q - 1.0 / interior])
    log_ratio = cumulative_simpson(integrand, x=r, initial=0.0)
    sigma_hat = np.concatenate([[0.0], interior * np.exp(log_ratio[1:])])
    branch = model_sigma(u.k)(r)
    return MetricRecovery(r, sigma_hat, branch, float(np.max(np.abs(sigma_hat - branch))))
