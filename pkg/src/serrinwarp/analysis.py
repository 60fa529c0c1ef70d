"""P-function, integral identities and the commutator identity, as residual reports.

Every integral uses ``dV = sigma^(n-1) dr dvol_N``.  Radial profiles are
integrated with the composite midpoint rule on their own grid times the fiber
volume; 2D fields use the cut-cell quadrature of ``field2d``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .field2d import (
    MINUS_R, MINUS_T, PLUS_R, PLUS_T, DomainMask, Grid2D, ScalarField2D, _shift, core_nodes,
    gradient_components,
)
from .geometry import ReducedAccuracyWarning, WarpedManifold, ricci_eigenvalue_bounds, sigma_eval
from .radial import RadialProfile

__all__ = [
    "QuadratureReport", "SubharmonicityResult", "p_function", "p_subharmonicity_check",
    "pohozaev_sides", "compatibility_integral", "commutator_identity_residual",
    "intermediate_identity_checks", "refinement_order", "with_order", "hessian_residual_2d",
    "ricci_gradient_defect", "AnalyticField",
]


@dataclass
class QuadratureReport:
    """Two sides of an integral identity; ``residual = |lhs - rhs|``."""

    name: str
    lhs: float
    rhs: float
    grid_spacing: float
    convergence_order_estimate: float | None = None
    tolerance: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool | None:
        if self.tolerance is None:
            return None
        return self.residual < self.tolerance

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual,
                "h": self.grid_spacing, "order_estimate": self.convergence_order_estimate,
                "pass": self.passed, **self.extra}


def refinement_order(spacings, residuals) -> float:
    """Least-squares slope of log(residual) against log(h)."""
    h = np.log(np.asarray(spacings, dtype=float))
    e = np.log(np.asarray(residuals, dtype=float))
    if len(h) < 2:
        raise ValueError("need at least two resolutions")
    return float(np.polyfit(h, e, 1)[0])


def with_order(reports: list) -> list:
    """Attach the refinement order of matching reports (same name, several h)."""
    by_name = {}
    for rep in reports:
        by_name.setdefault(rep.name, []).append(rep)
    for group in by_name.values():
        if len(group) >= 2:
            res = [r.residual for r in group]
            if all(x > 0 for x in res):
                order = refinement_order([r.grid_spacing for r in group], res)
                for r in group:
                    r.convergence_order_estimate = order
    return reports


# ---------------------------------------------------------------- sampling helpers


@dataclass
class _Samples:
    """Integrand ingredients at quadrature points with their volume weights."""

    r: np.ndarray
    u: np.ndarray
    ur: np.ndarray
    grad2: np.ndarray
    weight: np.ndarray
    h: float


def _radial_samples(u: RadialProfile, m: WarpedManifold) -> _Samples:
    r = u.r_grid
    h = float(np.min(np.diff(r)))
    mids = 0.5 * (r[:-1] + r[1:])
    widths = np.diff(r)
    val, du, _ = u.derivatives(mids)
    s = sigma_eval(m.sigma, mids)
    w = widths * s ** (m.n - 1) * m.fiber.volume
    return _Samples(mids, val, du, du * du, w, h)


def _field_samples(u: ScalarField2D, m: WarpedManifold) -> _Samples:
    from .field2d import cell_volumes
    mask = u.mask
    ins = mask.inside
    ur, ut = gradient_components(m, u)
    R, _ = u.grid.mesh()
    s = sigma_eval(m.sigma, R[ins])
    return _Samples(R[ins], u.values[ins], ur[ins], ur[ins] ** 2 + (ut[ins] / s) ** 2,
                    cell_volumes(m, mask)[ins], u.grid.h)


def _samples(u, m) -> _Samples:
    if isinstance(u, RadialProfile):
        return _radial_samples(u, m)
    if isinstance(u, ScalarField2D):
        return _field_samples(u, m)
    raise TypeError("expected a RadialProfile or a ScalarField2D")


def _sigmas(m, r):
    s0, s1, s2 = (sigma_eval(m.sigma, r, o) for o in (0, 1, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReducedAccuracyWarning)
        s3 = sigma_eval(m.sigma, r, 3)
    return s0, s1, s2, s3


def _weighted_third(m, r):
    """sigma''' + (n-1) sigma'' sigma'/sigma, i.e. (sigma'' sigma^(n-1))' / sigma^(n-1)."""
    s0, s1, s2, s3 = _sigmas(m, r)
    return s3 + (m.n - 1) * s2 * s1 / s0


# ---------------------------------------------------------------- P-function


def p_function(u, m: WarpedManifold, k: float):
    """``P = |grad u|^2 + (2/n) u + k u^2``.

    Radial profiles give an array on ``u.r_grid``; 2D fields give a field.
    """
    n = m.n
    if isinstance(u, RadialProfile):
        return u.du ** 2 + (2.0 / n) * u.u + k * u.u ** 2
    ur, ut = gradient_components(m, u)
    s = sigma_eval(m.sigma, u.grid.r)[:, None]
    vals = ur * ur + (ut / s) ** 2 + (2.0 / n) * u.values + k * u.values ** 2
    return ScalarField2D(u.grid, u.mask, np.where(u.mask.inside, vals, np.nan))


@dataclass
class SubharmonicityResult:
    min_laplacian: float
    max_abs_laplacian: float
    max_laplacian: float
    n_nodes: int

    def to_dict(self):
        return {"min": self.min_laplacian, "max_abs": self.max_abs_laplacian,
                "max": self.max_laplacian, "n_nodes": self.n_nodes}


def _centred_laplacian(m: WarpedManifold, grid: Grid2D, v: np.ndarray) -> np.ndarray:
    """Five-point ``v_rr + (n-1)(sigma'/sigma) v_r + v_tt / sigma^2`` on the full grid (NaN at edges)."""
    r = grid.r
    s0 = sigma_eval(m.sigma, r)
    drift = ((m.n - 1) * sigma_eval(m.sigma, r, 1) / s0)[:, None]
    vp, vm = _shift(v, PLUS_R, grid.periodic, np.nan), _shift(v, MINUS_R, grid.periodic, np.nan)
    tp, tm = _shift(v, PLUS_T, grid.periodic, np.nan), _shift(v, MINUS_T, grid.periodic, np.nan)
    hr, ht = grid.h_r, grid.h_theta
    return ((vp - 2 * v + vm) / hr**2 + drift * (vp - vm) / (2 * hr)
            + (tp - 2 * v + tm) / (ht**2 * (s0 * s0)[:, None]))


def _centred_dr(grid: Grid2D, v: np.ndarray) -> np.ndarray:
    return (_shift(v, PLUS_R, grid.periodic, np.nan) - _shift(v, MINUS_R, grid.periodic, np.nan)) / (2 * grid.h_r)


def p_subharmonicity_check(u, m: WarpedManifold, k: float, layers: int = 2) -> SubharmonicityResult:
    """Discrete Laplace-Beltrami of P over interior nodes.

    2D fields: P is built from centred gradients and its five-point Laplacian
    is taken on nodes ``layers`` steps inside the mask, so no cut stencil
    enters.  Radial profiles: centred differences on the radial grid, with the
    pole limit ``n P''(0)`` and the end point excluded.
    """
    if isinstance(u, RadialProfile):
        P = p_function(u, m, k)
        r = u.r_grid
        h = np.diff(r)
        hp, hm = h[1:], h[:-1]
        inner = r[1:-1]
        d2 = 2 * (P[2:] * hm - P[1:-1] * (hp + hm) + P[:-2] * hp) / (hp * hm * (hp + hm))
        d1 = (P[2:] - P[:-2]) / (hp + hm)
        lap = d2 + (m.n - 1) * sigma_eval(m.sigma, inner, 1) / sigma_eval(m.sigma, inner) * d1
        if r[0] == 0.0:
            lap = np.concatenate([[m.n * 2 * (P[1] - P[0]) / h[0] ** 2], lap])
    else:
        P = p_function(u, m, k).values
        core = core_nodes(u.mask, layers)
        lap_full = _centred_laplacian(m, u.grid, P)
        lap = lap_full[core]
    if lap.size == 0:
        raise ValueError("no interior nodes to test")
    return SubharmonicityResult(float(lap.min()), float(np.abs(lap).max()), float(lap.max()), int(lap.size))


def hessian_residual_2d(u: ScalarField2D, m: WarpedManifold, k: float, layers: int = 1) -> float:
    """max over core nodes of ``|Hess u + (1/n + k u) g|`` in an orthonormal frame."""
    g = u.grid
    v = u.values
    core = core_nodes(u.mask, layers)
    r = g.r
    s0 = sigma_eval(m.sigma, r)[:, None]
    s1 = sigma_eval(m.sigma, r, 1)[:, None]
    hr, ht = g.h_r, g.h_theta
    sh = lambda a, d: _shift(a, d, g.periodic, np.nan)  # noqa: E731
    u_r = (sh(v, PLUS_R) - sh(v, MINUS_R)) / (2 * hr)
    u_t = (sh(v, PLUS_T) - sh(v, MINUS_T)) / (2 * ht)
    u_rr = (sh(v, PLUS_R) - 2 * v + sh(v, MINUS_R)) / hr**2
    u_tt = (sh(v, PLUS_T) - 2 * v + sh(v, MINUS_T)) / ht**2
    u_rt = (sh(u_t, PLUS_R) - sh(u_t, MINUS_R)) / (2 * hr)
    lam = 1.0 / m.n + k * v
    h_rr = u_rr + lam
    h_tt = u_tt / s0**2 + s1 / s0 * u_r + lam
    h_rt = u_rt / s0 - s1 * u_t / s0**2
    res = np.maximum(np.maximum(np.abs(h_rr), np.abs(h_tt)), np.abs(h_rt))
    return float(np.nanmax(res[core]))


def ricci_gradient_defect(u, m: WarpedManifold, k: float) -> float:
    """min of ``Ric(grad u, grad u) - (n-1) k |grad u|^2`` weighted by eigen-directions.

    Ric(grad u, grad u) is taken as ``radial * u_r^2 + tangential * (|grad u|^2 - u_r^2)``,
    exact for the fibers represented here.  Nonnegative under the Ricci bound;
    zero in the equality case.
    """
    s = _samples(u, m)
    pos = s.r > 0
    radial, tangential = ricci_eigenvalue_bounds(m, s.r[pos])
    ur2 = s.ur[pos] ** 2
    g2 = s.grad2[pos]
    return float(np.min(radial * ur2 + tangential * (g2 - ur2) - (m.n - 1) * k * g2))


# ---------------------------------------------------------------- integral identities


def pohozaev_sides(u, m: WarpedManifold, k: float, c: float, tolerance: float | None = None
                   ) -> QuadratureReport:
    """Both sides of the Pohozaev-type identity

        (n+2)/n int sigma' u = c^2 int sigma'
            + (n-2)/(2n) int (sigma''' + (n-1) sigma'' sigma'/sigma) u^2 - 2k int sigma' u^2.
    """
    s = _samples(u, m)
    n = m.n
    _, s1, _, _ = _sigmas(m, s.r)
    w = s.weight
    lhs = (n + 2) / n * np.sum(w * s1 * s.u)
    rhs = (c * c * np.sum(w * s1) + (n - 2) / (2 * n) * np.sum(w * _weighted_third(m, s.r) * s.u**2)
           - 2 * k * np.sum(w * s1 * s.u**2))
    return QuadratureReport("pohozaev", float(lhs), float(rhs), s.h, tolerance=tolerance)


def compatibility_integral(u, m: WarpedManifold, k: float) -> float:
    """int (k sigma' + (sigma''' sigma + (n-1) sigma'' sigma')/(n sigma)) u^2 dV."""
    s = _samples(u, m)
    s0, s1, s2, s3 = _sigmas(m, s.r)
    coef = k * s1 + (s3 * s0 + (m.n - 1) * s2 * s1) / (m.n * s0)
    return float(np.sum(s.weight * coef * s.u**2))


def intermediate_identity_checks(u, m: WarpedManifold, k: float, c: float | None = None,
                                 tolerance: float | None = None) -> list:
    """The three integration-by-parts identities feeding the Pohozaev identity.

    sigma_dr_divergence:    int sigma u_r = -n int sigma' u
    sigma2_u_ur_divergence: int sigma'' u u_r = -1/2 int (sigma''' + (n-1) sigma'' sigma'/sigma) u^2
    weighted_energy:        int sigma' |grad u|^2 = int sigma' u + n k int sigma' u^2 - int sigma'' u u_r
    """
    s = _samples(u, m)
    n = m.n
    s0, s1, s2, _ = _sigmas(m, s.r)
    w = s.weight
    reports = [
        QuadratureReport("sigma_dr_divergence", float(np.sum(w * s0 * s.ur)),
                         float(-n * np.sum(w * s1 * s.u)), s.h, tolerance=tolerance),
        QuadratureReport("sigma2_u_ur_divergence", float(np.sum(w * s2 * s.u * s.ur)),
                         float(-0.5 * np.sum(w * _weighted_third(m, s.r) * s.u**2)), s.h,
                         tolerance=tolerance),
        QuadratureReport("weighted_energy", float(np.sum(w * s1 * s.grad2)),
                         float(np.sum(w * s1 * s.u) + n * k * np.sum(w * s1 * s.u**2)
                               - np.sum(w * s2 * s.u * s.ur)), s.h, tolerance=tolerance),
    ]
    if c is not None:
        for rep in reports:
            rep.extra["c"] = c
    return reports


@dataclass
class AnalyticField:
    """A test field ``u(r, theta)`` given as an expression, with exact derivatives.

    The expression is parsed with sympy in the symbols ``r`` and ``theta``;
    derivatives are differentiated symbolically and vectorised with numpy.
    """

    expression: str

    def __post_init__(self):
        import sympy
        r, t = sympy.symbols("r theta", real=True)
        expr = sympy.sympify(self.expression, locals={"r": r, "theta": t})
        parts = {"u": expr, "u_r": expr.diff(r), "u_rr": expr.diff(r, 2), "u_rrr": expr.diff(r, 3),
                 "u_tt": expr.diff(t, 2), "u_rtt": expr.diff(r, 1, t, 2)}
        self._fns = {k: sympy.lambdify((r, t), v, "numpy") for k, v in parts.items()}

    def __call__(self, r, theta, part: str = "u"):
        r = np.asarray(r, dtype=float)
        return np.broadcast_to(np.asarray(self._fns[part](r, theta), dtype=float), np.broadcast(r, theta).shape)


def _commutator_rhs_exact(f: AnalyticField, m: WarpedManifold, R, T):
    """sigma d_r(Delta u) + 2 sigma' Delta u + (2 - n) sigma'' u_r from exact derivatives."""
    n = m.n
    s0, s1, s2 = (sigma_eval(m.sigma, R, o) for o in (0, 1, 2))
    u_r, u_rr, u_rrr = f(R, T, "u_r"), f(R, T, "u_rr"), f(R, T, "u_rrr")
    u_tt, u_rtt = f(R, T, "u_tt"), f(R, T, "u_rtt")
    lap = u_rr + (n - 1) * s1 / s0 * u_r + u_tt / s0**2
    dr_lap = (u_rrr + (n - 1) * (s2 / s0 - (s1 / s0) ** 2) * u_r + (n - 1) * s1 / s0 * u_rr
              + u_rtt / s0**2 - 2 * s1 * u_tt / s0**3)
    return s0 * dr_lap + 2 * s1 * lap + (2 - n) * s2 * u_r


def commutator_identity_residual(test_field, m: WarpedManifold, mask: DomainMask) -> float:
    """max over core nodes of ``|Delta_h(sigma D_h u) - rhs|`` where

        rhs = sigma d_r(Delta u) + 2 sigma' Delta u + (2 - n) sigma'' u_r

    is evaluated from exact derivatives of the test field and the left side
    with centred differences, so the residual is O(h^2) exactly when the
    identity holds.  ``test_field`` is an AnalyticField or an expression string.
    """
    f = test_field if isinstance(test_field, AnalyticField) else AnalyticField(test_field)
    g = mask.grid
    R, T = g.mesh()
    v = np.array(f(R, T), dtype=float)
    s0 = sigma_eval(m.sigma, g.r)[:, None]
    lhs = _centred_laplacian(m, g, s0 * _centred_dr(g, v))
    rhs = _commutator_rhs_exact(f, m, R, T)
    core = core_nodes(mask, 2)
    edge = np.zeros(g.shape, dtype=bool)
    edge[:2] = edge[-2:] = True
    if not g.periodic:
        edge[:, :2] = edge[:, -2:] = True
    sel = core & ~edge
    if not sel.any():
        raise ValueError("no interior nodes two layers inside the mask")
    return float(np.max(np.abs(lhs - rhs)[sel]))
