"""Finite differences for ``Delta u + n k u = -1`` on masked (r, theta) domains.

The chart is a tensor grid in (r, theta).  A domain is a mask of inside nodes
plus, for every grid edge leaving the domain, the fraction of the edge at which
the boundary is crossed.  Cut edges use Shortley-Weller stencils, so the
discretisation is second order in the interior and first order in cut cells.

For ``n > 2`` the fiber is a flat torus and fields are constant along the
extra ``n - 2`` directions; the operator keeps the ``(n-1) sigma'/sigma``
drift and the volume element carries ``sigma^(n-1)``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from . import kernels
from .errors import ChartOverflowError, InsufficientResolutionError, SolverError
from .geometry import FiberKind, WarpedManifold, sigma_eval

__all__ = [
    "Grid2D", "DomainMask", "ScalarField2D", "BoundaryGradientStats",
    "mask_from_level", "mask_from_function", "full_mask", "ellipse_level", "band_level",
    "annulus_level", "ball_grid", "grid_for_box", "eikonal_distance", "geodesic_ball_mask",
    "solve_dirichlet", "effective_dimension_laplacian", "gradient_components", "gradient_norm",
    "boundary_gradient_stats", "cell_volumes", "integrate", "core_nodes", "make_domain",
    "DOMAIN_KINDS",
]

# direction codes for cuts and neighbours: +r, -r, +theta, -theta
PLUS_R, MINUS_R, PLUS_T, MINUS_T = range(4)
_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))
MIN_CUT = 1e-6


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid ``r_i = r_lo + i h_r``, ``theta_j = theta_lo + j h_theta``.

    With ``periodic`` the theta nodes cover [theta_lo, theta_lo + 2 pi) and
    wrap.  ``h`` is the nominal metric spacing the grid was built for.
    """

    r_lo: float
    h_r: float
    n_r: int
    theta_lo: float
    h_theta: float
    n_theta: int
    periodic: bool
    h: float

    def __post_init__(self):
        if self.h_r <= 0 or self.h_theta <= 0:
            raise ValueError("grid spacings must be positive")
        if self.n_r < 3 or self.n_theta < 3:
            raise ValueError("grid needs at least 3 nodes per direction")

    @property
    def r(self) -> np.ndarray:
        return self.r_lo + self.h_r * np.arange(self.n_r)

    @property
    def theta(self) -> np.ndarray:
        return self.theta_lo + self.h_theta * np.arange(self.n_theta)

    @property
    def r_hi(self) -> float:
        return self.r_lo + self.h_r * (self.n_r - 1)

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    def mesh(self):
        return np.meshgrid(self.r, self.theta, indexing="ij")

    def spacing(self, direction):
        return self.h_r if direction < 2 else self.h_theta

    def to_dict(self):
        return {"r_lo": self.r_lo, "h_r": self.h_r, "n_r": self.n_r, "theta_lo": self.theta_lo,
                "h_theta": self.h_theta, "n_theta": self.n_theta, "periodic": self.periodic, "h": self.h}


def grid_for_box(m: WarpedManifold, r_range, theta_range, h: float, pad: int = 3) -> Grid2D:
    """Grid covering ``r_range`` x ``theta_range`` with ``pad`` spare nodes on each side.

    ``theta_range = None`` gives a periodic theta grid.  The theta spacing is
    ``h / max sigma`` so that no edge is longer than ``h`` in the metric.
    """
    r_lo = r_range[0] - pad * h
    r_hi = r_range[1] + pad * h
    dom = m.sigma.domain
    if not dom.contains(r_lo) or not dom.contains(r_hi) or (m.is_model and r_lo <= 0):
        raise ChartOverflowError(
            f"radial range [{r_lo:.4g}, {r_hi:.4g}] leaves the chart ({dom.lo}, {dom.hi}); "
            "pole-containing domains belong to the radial solver")
    n_r = int(math.ceil((r_hi - r_lo) / h - 1e-9)) + 1
    rs = r_lo + h * np.arange(n_r)
    if not np.all(dom.contains(rs)):
        raise ChartOverflowError("grid rows leave the warping domain")
    s_max = float(np.max(sigma_eval(m.sigma, rs)))
    h_t = h / s_max
    if theta_range is None:
        n_t = int(math.ceil(2 * math.pi / h_t))
        return Grid2D(r_lo, h, n_r, 0.0, 2 * math.pi / n_t, n_t, True, h)
    t_lo = theta_range[0] - pad * h_t
    t_hi = theta_range[1] + pad * h_t
    if t_hi - t_lo >= 2 * math.pi - 2 * h_t:
        return grid_for_box(m, r_range, None, h, pad)
    n_t = int(math.ceil((t_hi - t_lo) / h_t - 1e-9)) + 1
    return Grid2D(r_lo, h, n_r, t_lo, h_t, n_t, False, h)


def ball_grid(m: WarpedManifold, center, radius: float, h: float, pad: int = 4) -> Grid2D:
    """A chart around the geodesic ball ``B(center, radius)``.

    The angular half-width is bounded by ``radius / min sigma`` over the
    radial range, since theta-motion costs at least ``min sigma`` per radian.
    """
    r0, t0 = center
    r_range = (r0 - radius, r0 + radius)
    lo = r_range[0] - pad * h
    if m.sigma.domain.contains(lo) and not (m.is_model and lo <= 0):
        s_min = float(np.min(sigma_eval(m.sigma, np.linspace(lo, r_range[1] + pad * h, 201))))
    else:
        s_min = 0.0
    if s_min <= 0 or radius / s_min + pad * h / s_min >= math.pi:
        return grid_for_box(m, r_range, None, h, pad)
    half = radius / s_min
    return grid_for_box(m, r_range, (t0 - half, t0 + half), h, pad)


def _shift(a, direction, periodic, fill):
    """``out[i, j] = a[neighbour(i, j)]`` with ``fill`` off the grid."""
    di, dj = _OFFSETS[direction]
    out = np.full_like(a, fill)
    if di == 1:
        out[:-1] = a[1:]
    elif di == -1:
        out[1:] = a[:-1]
    elif periodic:
        out = np.roll(a, -dj, axis=1)
    elif dj == 1:
        out[:, :-1] = a[:, 1:]
    else:
        out[:, 1:] = a[:, :-1]
    return out


def _on_edge(grid: Grid2D) -> np.ndarray:
    edge = np.zeros(grid.shape, dtype=bool)
    edge[0] = edge[-1] = True
    if not grid.periodic:
        edge[:, 0] = edge[:, -1] = True
    return edge


@dataclass
class DomainMask:
    """Inside nodes, cut fractions per direction and the nodal level function.

    ``cuts[d, i, j]`` is 0 unless node (i, j) is inside and its neighbour in
    direction ``d`` is outside, in which case it is the fraction in (0, 1] of
    the edge at which the boundary is crossed.  ``phi`` is negative inside.
    """

    grid: Grid2D
    inside: np.ndarray
    cuts: np.ndarray
    phi: np.ndarray

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    def n_components(self) -> int:
        labels, count = ndimage.label(self.inside)
        if self.grid.periodic and count > 1:
            # merge components that touch across the theta seam
            parent = list(range(count + 1))

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x
            for a, b in zip(labels[:, 0], labels[:, -1]):
                if a and b:
                    parent[find(a)] = find(b)
            count = len({find(x) for x in range(1, count + 1)})
        return count

    def boundary_points(self):
        """Cut points as arrays (direction, i, j, r, theta)."""
        d, i, j = np.nonzero(self.cuts)
        a = self.cuts[d, i, j]
        g = self.grid
        off = np.array(_OFFSETS)
        r = g.r[i] + off[d, 0] * a * g.h_r
        t = g.theta[j] + off[d, 1] * a * g.h_theta
        return d, i, j, r, t

    def save(self, path):
        np.savez_compressed(path, inside=self.inside, cuts=self.cuts, phi=self.phi,
                            grid=np.array(list(self.grid.to_dict().values()), dtype=float))


def _validate_inside(grid, inside):
    if np.any(inside & _on_edge(grid)):
        raise ChartOverflowError("domain touches the chart edge; enlarge the grid")


def mask_from_level(grid: Grid2D, phi: np.ndarray) -> DomainMask:
    """Mask ``{phi < 0}`` with cuts by linear interpolation of ``phi`` along edges."""
    phi = np.asarray(phi, dtype=float)
    inside = np.isfinite(phi) & (phi < 0)
    _validate_inside(grid, inside)
    cuts = np.zeros((4,) + grid.shape)
    for d in range(4):
        nb_in = _shift(inside, d, grid.periodic, False)
        nb_phi = _shift(phi, d, grid.periodic, np.nan)
        sel = inside & ~nb_in
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = phi / (phi - nb_phi)
        frac = np.where(np.isfinite(frac), frac, 1.0)
        cuts[d][sel] = np.clip(frac[sel], MIN_CUT, 1.0)
    return DomainMask(grid, inside, cuts, phi)


def mask_from_function(grid: Grid2D, level, iterations: int = 60) -> DomainMask:
    """Mask ``{level(r, theta) < 0}`` with cut points found by bisection."""
    R, T = grid.mesh()
    phi = np.asarray(level(R, T), dtype=float)
    inside = phi < 0
    _validate_inside(grid, inside)
    cuts = np.zeros((4,) + grid.shape)
    for d in range(4):
        nb_in = _shift(inside, d, grid.periodic, False)
        sel = inside & ~nb_in
        if not sel.any():
            continue
        di, dj = _OFFSETS[d]
        r0, t0 = R[sel], T[sel]
        lo = np.zeros(r0.shape)
        hi = np.ones(r0.shape)
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            neg = level(r0 + di * mid * grid.h_r, t0 + dj * mid * grid.h_theta) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        cuts[d][sel] = np.clip(0.5 * (lo + hi), MIN_CUT, 1.0)
    return DomainMask(grid, inside, cuts, phi)


def full_mask(grid: Grid2D) -> DomainMask:
    """Every node inside, no cuts (for fields defined on the whole chart)."""
    return DomainMask(grid, np.ones(grid.shape, dtype=bool), np.zeros((4,) + grid.shape),
                      -np.ones(grid.shape))


def ellipse_level(a: float, b: float, x0: float, y0: float = 0.0):
    """Level function of an ellipse in the Cartesian overlay x = r cos t, y = r sin t."""
    def level(r, t):
        x, y = r * np.cos(t), r * np.sin(t)
        return ((x - x0) / a) ** 2 + ((y - y0) / b) ** 2 - 1.0
    return level


def band_level(w: float, center: float = 0.0):
    """Level function of the band ``|r - center| < w``."""
    return lambda r, t: (r - center) ** 2 - w * w + 0.0 * t


def annulus_level(r1: float, r2: float):
    """Level function of the annulus ``r1 < r < r2``."""
    return lambda r, t: (r - r1) * (r - r2) + 0.0 * t


@dataclass
class ScalarField2D:
    """Nodal values on a mask; NaN outside.  ``boundary`` holds values at cut points."""

    grid: Grid2D
    mask: DomainMask
    values: np.ndarray
    boundary: np.ndarray = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.boundary is None:
            self.boundary = np.zeros((4,) + self.grid.shape)

    @classmethod
    def from_function(cls, mask: DomainMask, f):
        """Sample ``f(r, theta)`` at inside nodes and at every cut point."""
        g = mask.grid
        R, T = g.mesh()
        vals = np.where(mask.inside, f(R, T), np.nan)
        bnd = np.zeros((4,) + g.shape)
        d, i, j, r, t = mask.boundary_points()
        bnd[d, i, j] = f(r, t)
        return cls(g, mask, vals, bnd)

    def inside_values(self):
        return self.values[self.mask.inside]

    def at(self, r, theta):
        """Bilinear interpolation of the nodal values (NaN where undefined)."""
        g = self.grid
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        x = (r - g.r_lo) / g.h_r
        y = (theta - g.theta_lo) / g.h_theta
        if g.periodic:
            y = np.mod(y, g.n_theta)
        i0 = np.clip(np.floor(x).astype(int), 0, g.n_r - 2)
        j0 = np.floor(y).astype(int)
        fx, fy = x - i0, y - j0
        if g.periodic:
            j0 = j0 % g.n_theta
            j1 = (j0 + 1) % g.n_theta
        else:
            j0 = np.clip(j0, 0, g.n_theta - 2)
            fy = y - j0
            j1 = j0 + 1
        v = self.values
        out = ((1 - fx) * (1 - fy) * v[i0, j0] + fx * (1 - fy) * v[i0 + 1, j0]
               + (1 - fx) * fy * v[i0, j1] + fx * fy * v[i0 + 1, j1])
        outside = (x < 0) | (x > g.n_r - 1)
        if not g.periodic:
            outside |= (y < 0) | (y > g.n_theta - 1)
        return np.where(outside, np.nan, out)

    def to_csv(self, path):
        R, T = self.grid.mesh()
        ins = self.mask.inside
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "theta", "value"])
            for a, b, c in zip(R[ins], T[ins], self.values[ins]):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])


def _require_flat_fiber(m: WarpedManifold):
    if m.n == 2:
        if m.fiber.dim != 1:
            raise ValueError("n = 2 needs a one-dimensional fiber")
        return
    if m.fiber.kind is not FiberKind.FLAT_TORUS:
        raise ValueError("2D fields in dimension n > 2 need a flat torus fiber")


def core_nodes(mask: DomainMask, layers: int = 1) -> np.ndarray:
    """Inside nodes whose neighbours up to ``layers`` steps in each axis are inside."""
    g = mask.grid
    core = mask.inside.copy()
    reach = mask.inside.copy()
    for _ in range(layers):
        step = reach.copy()
        for d in range(4):
            step &= _shift(reach, d, g.periodic, False)
        reach = step
    core &= reach
    return core


def _stencil(m: WarpedManifold, mask: DomainMask):
    """Per-node weights of ``u_rr + D u_r + u_tt / sigma^2`` with D = (n-1) sigma'/sigma.

    Returns ``(w0, w)`` with ``w[d]`` the weight of the neighbour (or cut
    point) in direction ``d``.
    """
    g = mask.grid
    if np.any(mask.inside & _on_edge(g)):
        raise ChartOverflowError("inside node on the chart edge: stencil would leave the grid")
    r = g.r
    s0 = sigma_eval(m.sigma, r, 0)
    drift = ((m.n - 1) * sigma_eval(m.sigma, r, 1) / s0)[:, None]
    inv_s2 = (1.0 / (s0 * s0))[:, None]
    frac = np.where(mask.cuts > 0, mask.cuts, 1.0)
    w = np.zeros((4,) + g.shape)
    w0 = np.zeros(g.shape)
    for plus, minus, h, first, scale in ((PLUS_R, MINUS_R, g.h_r, drift, 1.0),
                                         (PLUS_T, MINUS_T, g.h_theta, 0.0, inv_s2)):
        hp = h * frac[plus]
        hm = h * frac[minus]
        tot = hp + hm
        # Shortley-Weller second and first derivatives on unequal arms
        w[plus] = scale * 2.0 / (hp * tot) + first * hm / (hp * tot)
        w[minus] = scale * 2.0 / (hm * tot) - first * hp / (hm * tot)
        w0 += -scale * 2.0 / (hp * hm) + first * (hp - hm) / (hp * hm)
    return w0, w


def _neighbour_values(field: ScalarField2D, d):
    """Neighbour value in direction ``d``, or the cut-point value where cut."""
    g = field.grid
    nb = _shift(np.nan_to_num(field.values), d, g.periodic, 0.0)
    return np.where(field.mask.cuts[d] > 0, field.boundary[d], nb)


def effective_dimension_laplacian(m: WarpedManifold, field: ScalarField2D) -> ScalarField2D:
    """Discrete ``u_rr + (n-1)(sigma'/sigma) u_r + u_tt / sigma^2`` at inside nodes."""
    _require_flat_fiber(m)
    w0, w = _stencil(m, field.mask)
    out = w0 * np.nan_to_num(field.values)
    for d in range(4):
        out = out + w[d] * _neighbour_values(field, d)
    return ScalarField2D(field.grid, field.mask, np.where(field.mask.inside, out, np.nan))


def solve_dirichlet(m: WarpedManifold, k: float, mask: DomainMask, boundary=None,
                    rhs: float = -1.0) -> ScalarField2D:
    """Solve ``Delta u + n k u = rhs`` in the mask with Dirichlet data at cut points.

    Direct sparse LU (deterministic).  The relative residual is checked
    against 1e-10; any nonpositive interior value for ``rhs < 0`` is attached
    as a warning (for k > 0 this signals resonance with the first eigenvalue).
    """
    _require_flat_fiber(m)
    g = mask.grid
    if mask.n_inside == 0:
        raise ValueError("empty domain mask")
    if mask.n_components() != 1:
        raise ValueError(f"domain mask has {mask.n_components()} components; need a connected domain")
    bnd = np.zeros((4,) + g.shape) if boundary is None else np.asarray(boundary, dtype=float)
    w0, w = _stencil(m, mask)
    n_unknown = mask.n_inside
    index = np.full(g.shape, -1, dtype=np.int64)
    index[mask.inside] = np.arange(n_unknown)
    rows, cols, vals = [index[mask.inside]], [index[mask.inside]], [(w0 + m.n * k)[mask.inside]]
    b = np.full(n_unknown, float(rhs))
    for d in range(4):
        cut = mask.cuts[d] > 0
        nb_idx = _shift(index, d, g.periodic, -1)
        interior = mask.inside & ~cut
        rows.append(index[interior])
        cols.append(nb_idx[interior])
        vals.append(w[d][interior])
        at_cut = mask.inside & cut
        np.subtract.at(b, index[at_cut], w[d][at_cut] * bnd[d][at_cut])
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_unknown, n_unknown))
    size = f"k={k}, {n_unknown} unknowns, r in [{g.r_lo:.3g}, {g.r_hi:.3g}]"
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(A.tocsc(), b)
        except (RuntimeError, MatrixRankWarning) as exc:
            raise SolverError(f"singular system ({size}): {exc}") from None
    if not np.all(np.isfinite(x)):
        raise SolverError(f"nonfinite solution ({size})")
    res = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
    if res >= 1e-10:
        raise SolverError(f"relative residual {res:.3g} >= 1e-10 ({size})")
    values = np.full(g.shape, np.nan)
    values[mask.inside] = x
    out = ScalarField2D(g, mask, values, bnd)
    if rhs < 0 and np.any(x <= 0):
        out.warnings.append(f"nonpositive interior values (min {x.min():.3g}); "
                            f"operator may be indefinite ({size})")
    return out


def _one_sided_pair(values, bnd, mask, plus, minus, h):
    """First derivative along an axis with Shortley-Weller arms at cuts."""
    g = mask.grid
    frac = np.where(mask.cuts > 0, mask.cuts, 1.0)
    up = np.where(mask.cuts[plus] > 0, bnd[plus], _shift(values, plus, g.periodic, np.nan))
    um = np.where(mask.cuts[minus] > 0, bnd[minus], _shift(values, minus, g.periodic, np.nan))
    hp, hm = h * frac[plus], h * frac[minus]
    tot = hp + hm
    return up * hm / (hp * tot) - um * hp / (hm * tot) + values * (hp - hm) / (hp * hm)


def gradient_components(m: WarpedManifold, u: ScalarField2D):
    """Coordinate derivatives ``(u_r, u_theta)`` at inside nodes (NaN outside)."""
    g = u.grid
    if np.any(u.mask.inside & _on_edge(g)):
        raise ChartOverflowError("inside node on the chart edge")
    ur = _one_sided_pair(u.values, u.boundary, u.mask, PLUS_R, MINUS_R, g.h_r)
    ut = _one_sided_pair(u.values, u.boundary, u.mask, PLUS_T, MINUS_T, g.h_theta)
    ins = u.mask.inside
    return np.where(ins, ur, np.nan), np.where(ins, ut, np.nan)


def gradient_norm(m: WarpedManifold, u: ScalarField2D) -> ScalarField2D:
    """``|grad u|_g = sqrt(u_r^2 + u_theta^2 / sigma^2)`` at inside nodes."""
    ur, ut = gradient_components(m, u)
    s = sigma_eval(m.sigma, u.grid.r)[:, None]
    return ScalarField2D(u.grid, u.mask, np.sqrt(ur * ur + ut * ut / (s * s)))


@dataclass
class BoundaryGradientStats:
    points: np.ndarray
    values: np.ndarray
    mean: float
    std: float
    min: float
    max: float

    @property
    def samples(self):
        return [((float(r), float(t)), float(v)) for (r, t), v in zip(self.points, self.values)]

    @property
    def relative_defect(self) -> float:
        return self.std / self.mean

    def to_dict(self):
        return {"n_samples": int(len(self.values)), "mean": self.mean, "std": self.std,
                "min": self.min, "max": self.max, "relative_defect": self.relative_defect}


def _level_gradient(mask: DomainMask):
    """Centred differences of the nodal level function (one-sided on chart edges)."""
    g = mask.grid
    phi = mask.phi
    with np.errstate(invalid="ignore"):
        return _centred_gradient(phi, g)


def _centred_gradient(phi, g):
    pr = np.gradient(phi, g.h_r, axis=0)
    if g.periodic:
        pt = (np.roll(phi, -1, axis=1) - np.roll(phi, 1, axis=1)) / (2 * g.h_theta)
    else:
        pt = np.gradient(phi, g.h_theta, axis=1)
    return pr, pt


def boundary_gradient_stats(m: WarpedManifold, u: ScalarField2D, min_alignment: float = 2 ** -0.5
                            ) -> BoundaryGradientStats:
    """``|grad u|_g`` sampled at cut points of well-aligned edges.

    Along a cut edge the one-dimensional derivative at the boundary point B
    comes from the quadratic through B, the inside node P and the next node
    P' behind it.  Since ``u`` is constant on the boundary, its gradient is
    parallel to ``grad phi`` there, so ``|grad u| = |d_e u| |grad phi| / |d_e phi|``.
    Edges whose direction makes more than 45 degrees with the normal are skipped.
    """
    mask = u.mask
    g = u.grid
    pr, pt = _level_gradient(mask)
    d_all, i_all, j_all, r_all, t_all = mask.boundary_points()
    pts, vals = [], []
    for d in range(4):
        sel = d_all == d
        i, j = i_all[sel], j_all[sel]
        rb, tb = r_all[sel], t_all[sel]
        alpha = mask.cuts[d, i, j]
        di, dj = _OFFSETS[d]
        h = g.spacing(d)
        jn = (j + dj) % g.n_theta if g.periodic else j + dj
        ib, jb = i - di, (j - dj) % g.n_theta if g.periodic else j - dj
        # level-function gradient at B, interpolated along the edge
        gr = (1 - alpha) * pr[i, j] + alpha * pr[i + di, jn]
        gt = (1 - alpha) * pt[i, j] + alpha * pt[i + di, jn]
        sb = sigma_eval(m.sigma, rb)
        gnorm = np.sqrt(gr * gr + gt * gt / (sb * sb))
        along = np.abs(gr) if d < 2 else np.abs(gt)
        along_metric = along if d < 2 else along / sb
        ok = along_metric >= min_alignment * gnorm
        ub = u.boundary[d, i, j]
        u1 = u.values[i, j]
        x1 = alpha * h
        behind_ok = mask.inside[ib, jb]
        u2 = np.where(behind_ok, u.values[ib, jb], np.nan)
        x2 = x1 + h
        quad = ((u1 - ub) * x2 * x2 - (u2 - ub) * x1 * x1) / (x1 * x2 * (x2 - x1))
        lin = (u1 - ub) / x1
        du = np.where(behind_ok, quad, lin)
        grad = np.abs(du) * gnorm / along
        pts.append(np.stack([rb[ok], tb[ok]], axis=1))
        vals.append(grad[ok])
    pts = np.concatenate(pts) if pts else np.zeros((0, 2))
    vals = np.concatenate(vals) if vals else np.zeros(0)
    if len(vals) < 8:
        raise InsufficientResolutionError(f"only {len(vals)} usable boundary samples (need 8)")
    return BoundaryGradientStats(pts, vals, float(vals.mean()), float(vals.std()),
                                 float(vals.min()), float(vals.max()))


def eikonal_distance(m: WarpedManifold, center, grid: Grid2D, order: int = 2,
                     max_distance: float = math.inf, seed_radius: float | None = None,
                     backend=None) -> ScalarField2D:
    """Fast-marching distance from ``center`` (any chart point, not only a node).

    Solves ``d_r^2 + d_theta^2 / sigma^2 = 1``.  Nodes within ``seed_radius``
    (default ``max(3h, 0.05)``) of the centre are seeded with the frozen-metric
    distance ``sqrt(dr^2 + sigma(r_mid)^2 dtheta^2)``, exact to O(d^3).  A seed
    ball that does not shrink with h is what lets the second-order scheme
    converge at second order; a ball of a few cells leaves an O(h) error.
    Nodes beyond ``max_distance`` are left at +inf.
    """
    r0, t0 = center
    g = grid
    if not (g.r[0] <= r0 <= g.r[-1]):
        raise ChartOverflowError(f"centre r = {r0} outside the chart")
    R, T = g.mesh()
    dth = T - t0
    if g.periodic:
        dth = (dth + math.pi) % (2 * math.pi) - math.pi
    elif not (g.theta[0] <= t0 <= g.theta[-1]):
        raise ChartOverflowError(f"centre theta = {t0} outside the chart")
    s_mid = sigma_eval(m.sigma, 0.5 * (R + r0))
    seed = np.sqrt((R - r0) ** 2 + (s_mid * dth) ** 2)
    if seed_radius is None:
        seed_radius = max(3.0 * g.h, 0.05)
    near = seed <= seed_radius
    idx = np.argwhere(near)
    row_scale = np.asarray(sigma_eval(m.sigma, g.r), dtype=float)
    T_field = kernels.fast_marching(row_scale, g.n_theta, g.h_r, g.h_theta, g.periodic,
                                    idx, seed[near], max_distance, order=order, backend=backend)
    return ScalarField2D(g, full_mask(g), T_field)


def geodesic_ball_mask(m: WarpedManifold, center, radius: float, grid: Grid2D, order: int = 2,
                       backend=None) -> DomainMask:
    """Sublevel set ``{d(center, .) < radius}`` of the fast-marching distance."""
    dist = eikonal_distance(m, center, grid, order=order,
                            max_distance=radius + 4 * grid.h, backend=backend)
    return mask_from_level(grid, dist.values - radius)


def cell_volumes(m: WarpedManifold, mask: DomainMask) -> np.ndarray:
    """Riemannian volume of the node-centred cell of every inside node.

    Toward a cut the cell reaches the boundary point itself (the next node
    is outside, so nothing else claims that strip).  Areas are multiplied by
    ``sigma^(n-1)`` and by the torus volume ``(2 pi)^(n-2)`` of the passive
    fiber directions.
    """
    g = mask.grid
    ext = np.empty((4,) + g.shape)
    for d in range(4):
        h = g.spacing(d)
        c = mask.cuts[d]
        ext[d] = np.where(c > 0, c * h, 0.5 * h)
    area = (ext[PLUS_R] + ext[MINUS_R]) * (ext[PLUS_T] + ext[MINUS_T])
    s = sigma_eval(m.sigma, g.r)[:, None]
    vol = area * s ** (m.n - 1) * (2 * math.pi) ** (m.n - 2)
    return np.where(mask.inside, vol, 0.0)


def integrate(m: WarpedManifold, mask: DomainMask, integrand: np.ndarray) -> float:
    """Cut-cell quadrature of a nodal integrand over the mask."""
    w = cell_volumes(m, mask)
    return float(np.sum(np.where(mask.inside, w * np.nan_to_num(integrand), 0.0)))


DOMAIN_KINDS = ("ball", "ellipse", "band", "annulus")


def make_domain(m: WarpedManifold, kind: str, params: dict, h: float, backend=None) -> DomainMask:
    """Build a chart and mask for a named domain at spacing ``h``.

    ball: r0, theta0, radius (geodesic ball via fast marching);
    ellipse: a, b, x0, y0 (Cartesian overlay); band: w, center; annulus: r1, r2.
    """
    p = dict(params)
    if kind == "ball":
        center = (p.get("r0", 2.0), p.get("theta0", 0.0))
        radius = p["radius"]
        grid = ball_grid(m, center, radius, h)
        return geodesic_ball_mask(m, center, radius, grid, backend=backend)
    if kind == "ellipse":
        a, b, x0, y0 = p["a"], p["b"], p["x0"], p.get("y0", 0.0)
        t = np.linspace(0, 2 * math.pi, 721)
        x, y = x0 + a * np.cos(t), y0 + b * np.sin(t)
        if (x0 / a) ** 2 + (y0 / b) ** 2 <= 1.0:
            raise ChartOverflowError("ellipse contains the origin of the overlay; the polar chart cannot cover it")
        rr, tt = np.hypot(x, y), np.arctan2(y, x)
        tc = math.atan2(y0, x0)
        tt = tc + wrap(tt - tc)
        grid = grid_for_box(m, (rr.min(), rr.max()), (tt.min(), tt.max()), h)
        return mask_from_function(grid, ellipse_level(a, b, x0, y0))
    if kind == "band":
        w, c = p["w"], p.get("center", 0.0)
        grid = grid_for_box(m, (c - w, c + w), None, h)
        return mask_from_function(grid, band_level(w, c))
    if kind == "annulus":
        r1, r2 = p["r1"], p["r2"]
        grid = grid_for_box(m, (r1, r2), None, h)
        return mask_from_function(grid, annulus_level(r1, r2))
    raise KeyError(f"unknown domain {kind!r}; known: {', '.join(DOMAIN_KINDS)}")


def wrap(x):
    """Angles mapped to [-pi, pi)."""
    return (np.asarray(x) + math.pi) % (2 * math.pi) - math.pi
