"""Geodesics of ``dr^2 + sigma(r)^2 dtheta^2`` and distance checks built on them.

The flow is ``r'' = sigma sigma' theta'^2``, ``theta'' = -2 (sigma'/sigma) r' theta'``,
integrated with RK4.  Along a geodesic the speed and the Clairaut quantity
``sigma^2 theta'`` are conserved; both are reported as accuracy diagnostics.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ChartOverflowError, NotFoundError
from .field2d import ball_grid, eikonal_distance
from .geometry import WarpedManifold, sigma_eval

__all__ = ["GeodesicPath", "geodesic_shoot", "shoot_endpoints", "distance_by_shooting",
           "star_shapedness_check", "chart_bounds", "wrap_angle", "DEFAULT_POLE_EXCLUSION"]

DEFAULT_POLE_EXCLUSION = 0.05


def wrap_angle(x):
    """Map angles to [-pi, pi)."""
    return (np.asarray(x) + math.pi) % (2 * math.pi) - math.pi


def chart_bounds(m: WarpedManifold, pole_exclusion: float = DEFAULT_POLE_EXCLUSION):
    """Radial limits of the (r, theta) chart; a pole is cut out by ``pole_exclusion``."""
    lo, hi = m.sigma.domain.lo, m.sigma.domain.hi
    if m.is_model:
        lo = pole_exclusion
    return lo, hi


@dataclass
class GeodesicPath:
    t: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    dr: np.ndarray
    dtheta: np.ndarray
    clairaut_constant: float
    speed: float
    exited: bool
    exit_time: float | None
    max_speed_drift: float
    max_clairaut_drift: float

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.r.tolist(), self.theta.tolist()))

    @property
    def endpoint(self):
        return float(self.r[-1]), float(self.theta[-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r", "theta"])
            for row in zip(self.t, self.r, self.theta):
                w.writerow([repr(float(x)) for x in row])


def _initial_states(m, start, angles):
    """States (r, theta, r', theta') for unit directions at ``angles``.

    Angle 0 points along +r, pi/2 along +theta (orthonormal frame).
    """
    r0, t0 = start
    s = sigma_eval(m.sigma, r0)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    st = np.empty((len(angles), 4))
    st[:, 0], st[:, 1] = r0, t0
    st[:, 2] = np.cos(angles)
    st[:, 3] = np.sin(angles) / s
    return st


def _direction_angle(m, start, direction):
    if np.ndim(direction) == 0:
        return float(direction)
    vr, vt = map(float, direction)
    if vr == 0 and vt == 0:
        raise ValueError("direction must be nonzero")
    return math.atan2(vt, vr)


def geodesic_shoot(m: WarpedManifold, start, direction, length: float, step: float = 1e-3,
                   pole_exclusion: float = DEFAULT_POLE_EXCLUSION, backend=None) -> GeodesicPath:
    """Unit-speed geodesic from ``start`` for arclength ``length``.

    ``direction`` is an angle in the orthonormal (e_r, e_theta) frame or a
    vector (v_r, v_theta) in that frame (normalised here).  On chart exit
    the path is truncated and ``exited`` set.
    """
    if length < 0 or step <= 0:
        raise ValueError("need length >= 0 and step > 0")
    lo, hi = chart_bounds(m, pole_exclusion)
    if not (lo < start[0] < hi):
        raise ChartOverflowError(f"start r = {start[0]} outside the chart ({lo}, {hi})")
    phi = _direction_angle(m, start, direction)
    n_steps = max(1, int(math.ceil(length / step - 1e-9))) if length > 0 else 0
    h = length / n_steps if n_steps else 0.0
    state = _initial_states(m, start, [phi])
    path, exit_step = kernels.geodesic_batch(m.sigma, state, h, n_steps, lo, hi, record=True,
                                             backend=backend)
    path = path[0]
    ex = int(exit_step[0])
    keep = n_steps + 1 if ex < 0 else ex + 1
    path = path[:keep]
    t = h * np.arange(keep)
    r, th, dr, dth = path.T
    s = sigma_eval(m.sigma, r)
    speed = np.sqrt(dr * dr + (s * dth) ** 2)
    clairaut = s * s * dth
    return GeodesicPath(t, r, th, dr, dth, float(clairaut[0]), float(speed[0]), ex >= 0,
                        float(t[-1]) if ex >= 0 else None,
                        float(np.max(np.abs(speed - 1.0))), float(np.max(np.abs(clairaut - clairaut[0]))))


def shoot_endpoints(m: WarpedManifold, start, angles, lengths, n_steps: int,
                    pole_exclusion: float = DEFAULT_POLE_EXCLUSION, backend=None):
    """Endpoints of many geodesics at once, ``n_steps`` RK4 steps each.

    ``lengths`` may differ per ray (each ray uses its own step).  Returns
    ``(r, theta, exited)``.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    lengths = np.broadcast_to(np.asarray(lengths, dtype=float), angles.shape)
    lo, hi = chart_bounds(m, pole_exclusion)
    # rescaling time by L makes every ray a unit-interval problem with step 1/n_steps
    st = _initial_states(m, start, angles)
    st[:, 2:] *= lengths[:, None]
    final, exit_step = kernels.geodesic_batch(m.sigma, st, 1.0 / n_steps, n_steps, lo, hi,
                                              record=False, backend=backend)
    return final[:, 0], final[:, 1], exit_step >= 0


def _frozen_distance(m, r1, t1, r2, t2):
    s = sigma_eval(m.sigma, 0.5 * (np.asarray(r1) + np.asarray(r2)))
    return np.sqrt((r1 - r2) ** 2 + (s * wrap_angle(t1 - t2)) ** 2)


def _newton(m, p, q, phi, t, step, tol, pole_exclusion, backend, max_iter=30):
    """Newton on (angle, length) so that the shot endpoint hits ``q``."""
    sq = sigma_eval(m.sigma, q[0])

    def n_steps(length):
        # the step count follows the current length so the RK4 step stays near ``step``
        return max(8, int(math.ceil(abs(length) / step)))

    def residual(x):
        r, th, ex = shoot_endpoints(m, p, [x[0]], [x[1]], n_steps(x[1]), pole_exclusion, backend)
        if ex[0]:
            return None
        return np.array([r[0] - q[0], sq * float(wrap_angle(th[0] - q[1]))])

    x = np.array([phi, t])
    f = residual(x)
    if f is None:
        return None
    for _ in range(max_iter):
        if np.max(np.abs(f)) < tol:
            return x
        # forward-difference Jacobian, all three shots in one batch
        d = 1e-7
        r, th, ex = shoot_endpoints(m, p, [x[0], x[0] + d, x[0]], [x[1], x[1], x[1] + d],
                                    n_steps(x[1]), pole_exclusion, backend)
        if ex.any():
            return None
        F = np.stack([r - q[0], sq * wrap_angle(th - q[1])], axis=1)
        J = np.stack([(F[1] - F[0]) / d, (F[2] - F[0]) / d], axis=1)
        try:
            dx = np.linalg.solve(J, -F[0])
        except np.linalg.LinAlgError:
            return None
        # damp steps that would flip the length sign or spin the angle
        scale = min(1.0, 0.5 * x[1] / max(abs(dx[1]), 1e-300), 0.5 / max(abs(dx[0]), 1e-300))
        x_new = x + scale * dx
        f_new = residual(x_new)
        if f_new is None:
            return None
        x, f = x_new, f_new
    return x if np.max(np.abs(f)) < tol else None


def distance_by_shooting(m: WarpedManifold, p, q, tol: float = 1e-9, n_sweep: int = 256,
                         step: float = 1e-3, n_candidates: int = 6,
                         pole_exclusion: float = DEFAULT_POLE_EXCLUSION, backend=None) -> float:
    """Length of the shortest connecting geodesic found by an angle sweep plus Newton.

    ``n_sweep`` rays are shot from ``p`` to a length bound given by the
    radial-then-angular path.  Rays passing closest to ``q`` seed a Newton
    solve in (angle, length).  On a model manifold the straight path through
    the pole (length r_p + r_q, available when q is antipodal in theta) is
    added as a candidate since the chart cannot follow it.
    """
    r_p, t_p = map(float, p)
    r_q, t_q = map(float, q)
    dth = float(wrap_angle(t_q - t_p))
    if r_p == r_q and dth == 0.0:
        return 0.0
    lo, hi = chart_bounds(m, pole_exclusion)
    for r in (r_p, r_q):
        if not (lo < r < hi):
            raise ChartOverflowError(f"r = {r} outside the chart ({lo}, {hi})")
    s_p, s_q = sigma_eval(m.sigma, r_p), sigma_eval(m.sigma, r_q)
    bound = abs(r_q - r_p) + min(s_p, s_q) * abs(dth)
    lengths = []
    if m.is_model and abs(abs(dth) - math.pi) < 1e-12:
        lengths.append(r_p + r_q)

    L = 1.05 * bound + 4 * step
    n_steps = max(16, int(math.ceil(L / step)))
    angles = 2 * math.pi * np.arange(n_sweep) / n_sweep
    st = _initial_states(m, (r_p, t_p), angles)
    path, exit_step = kernels.geodesic_batch(m.sigma, st, L / n_steps, n_steps, lo, hi,
                                             record=True, backend=backend)
    valid = np.ones(path.shape[:2], dtype=bool)
    for ray, ex in enumerate(exit_step):
        if ex >= 0:
            valid[ray, ex + 1:] = False
    dist = _frozen_distance(m, path[..., 0], path[..., 1], r_q, t_q)
    dist = np.where(valid, dist, np.inf)
    best_idx = np.argmin(dist, axis=1)
    best = dist[np.arange(n_sweep), best_idx]
    # local minima of the miss distance over the circle of angles
    prev, nxt = np.roll(best, 1), np.roll(best, -1)
    local = (best <= prev) & (best <= nxt) & np.isfinite(best)
    order = [j for j in np.argsort(best) if local[j]][:n_candidates]
    for j in order:
        t0 = max(best_idx[j] * L / n_steps, step)
        sol = _newton(m, (r_p, t_p), (r_q, t_q), angles[j], t0, step, tol, pole_exclusion, backend)
        if sol is not None and sol[1] > 0:
            lengths.append(float(sol[1]))
    if not lengths:
        raise NotFoundError(f"no connecting geodesic found from {p} to {q}")
    return min(lengths)


def star_shapedness_check(m: WarpedManifold, center, radius: float, n_rays: int = 64,
                          h: float = 1 / 64, step: float = 1e-3, method: str = "eikonal",
                          samples_per_ray: int = 8, pole_exclusion: float = DEFAULT_POLE_EXCLUSION,
                          backend=None) -> float:
    """min over rays and samples of ``radius - d(center, gamma(t))``, t in [0, radius].

    Rays are unit-speed geodesics at angles ``2 pi j / n_rays`` (angle 0 is
    outward radial).  ``method="eikonal"`` reads d from a fast-marching field
    of spacing ``h``; ``method="shooting"`` uses ``distance_by_shooting`` on
    ``samples_per_ray`` points per ray.  Raises ChartOverflowError if a ray
    leaves the chart.
    """
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    lo, hi = chart_bounds(m, pole_exclusion)
    n_steps = max(1, int(math.ceil(radius / step - 1e-9)))
    angles = 2 * math.pi * np.arange(n_rays) / n_rays
    st = _initial_states(m, center, angles)
    path, exit_step = kernels.geodesic_batch(m.sigma, st, radius / n_steps, n_steps, lo, hi,
                                             record=True, backend=backend)
    if np.any(exit_step >= 0):
        raise ChartOverflowError(f"{int(np.sum(exit_step >= 0))} rays left the chart")
    if method == "eikonal":
        grid = ball_grid(m, center, radius, h)
        field = eikonal_distance(m, center, grid, max_distance=radius + 4 * h, backend=backend)
        d = field.at(path[..., 0], path[..., 1])
    elif method == "shooting":
        pick = np.unique(np.linspace(1, n_steps, samples_per_ray).round().astype(int))
        d = np.array([[distance_by_shooting(m, center, (path[ray, i, 0], path[ray, i, 1]),
                                            step=step, backend=backend) for i in pick]
                      for ray in range(n_rays)])
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(d)):
        raise ChartOverflowError("ray samples fall outside the distance field")
    return float(np.min(radius - d))
