"""Pure Python/numpy hot kernels.

Reference implementation for the compiled ``_ckernels`` module and the
fallback when it is not built.  Geodesics are vectorised across rays; fast
marching is a plain heap loop.
"""
import heapq
import math

import numpy as np

FAR, TRIAL, ACCEPTED = 0, 1, 2


def radial_rk4(u0, du0, h, drift_nodes, drift_mid, nk, start):
    """RK4 for u'' = -1 - nk u - D(r) u' from node ``start`` to the last node.

    ``drift_nodes[j]`` is D at r_j, ``drift_mid[j]`` is D at r_j + h/2.
    Entries before ``start`` are left as zeros for the caller to fill.
    """
    n_nodes = len(drift_nodes)
    u = np.zeros(n_nodes)
    du = np.zeros(n_nodes)
    u[start], du[start] = u0, du0
    a, b = u0, du0
    for j in range(start, n_nodes - 1):
        dm, dn, d1 = drift_mid[j], drift_nodes[j], drift_nodes[j + 1]
        k1u, k1v = b, -1.0 - nk * a - dn * b
        k2u = b + 0.5 * h * k1v
        k2v = -1.0 - nk * (a + 0.5 * h * k1u) - dm * k2u
        k3u = b + 0.5 * h * k2v
        k3v = -1.0 - nk * (a + 0.5 * h * k2u) - dm * k3u
        k4u = b + h * k3v
        k4v = -1.0 - nk * (a + h * k3u) - d1 * k4u
        a = a + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        b = b + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        u[j + 1], du[j + 1] = a, b
    return u, du


def obata_rk4(k, n, y0, step, n_steps):
    """RK4 for y'' = -1/n - k y with y(0) = y0, y'(0) = 0."""
    y = np.empty(n_steps + 1)
    a, b = y0, 0.0
    y[0] = a
    c = 1.0 / n
    h = step
    for i in range(n_steps):
        k1u, k1v = b, -c - k * a
        k2u, k2v = b + 0.5 * h * k1v, -c - k * (a + 0.5 * h * k1u)
        k3u, k3v = b + 0.5 * h * k2v, -c - k * (a + 0.5 * h * k2u)
        k4u, k4v = b + h * k3v, -c - k * (a + h * k3u)
        a = a + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        b = b + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        y[i + 1] = a
    return y


def _geodesic_rhs(sigma_fn, y):
    r, pr, pt = y[:, 0], y[:, 2], y[:, 3]
    s0 = sigma_fn(r, 0)
    s1 = sigma_fn(r, 1)
    out = np.empty_like(y)
    out[:, 0] = pr
    out[:, 1] = pt
    out[:, 2] = s0 * s1 * pt * pt
    out[:, 3] = -2.0 * s1 / s0 * pr * pt
    return out


def geodesic_batch(sigma_fn, states, step, n_steps, r_lo, r_hi, record=True):
    """RK4 for the warped geodesic flow, one row of ``states`` per ray.

    State is (r, theta, r', theta').  A ray whose stage radius leaves
    (r_lo, r_hi) is frozen at its last valid state and its exit step
    recorded; otherwise the exit step is -1.
    """
    y = np.array(states, dtype=float, copy=True)
    n_rays = len(y)
    exit_step = np.full(n_rays, -1, dtype=np.int64)
    path = np.empty((n_rays, n_steps + 1, 4)) if record else None
    if record:
        path[:, 0] = y
    h = step
    with np.errstate(all="ignore"):
        for i in range(n_steps):
            alive = exit_step < 0
            if not alive.any():
                if record:
                    path[:, i + 1:] = y[:, None, :]
                break
            ya = y[alive]
            k1 = _geodesic_rhs(sigma_fn, ya)
            y2 = ya + 0.5 * h * k1
            k2 = _geodesic_rhs(sigma_fn, y2)
            y3 = ya + 0.5 * h * k2
            k3 = _geodesic_rhs(sigma_fn, y3)
            y4 = ya + h * k3
            k4 = _geodesic_rhs(sigma_fn, y4)
            new = ya + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            ok = np.ones(len(ya), dtype=bool)
            for stage in (y2, y3, y4, new):
                rs = stage[:, 0]
                ok &= (rs > r_lo) & (rs < r_hi)
            ok &= np.all(np.isfinite(new), axis=1)
            idx = np.flatnonzero(alive)
            exit_step[idx[~ok]] = i
            upd = idx[ok]
            y[upd] = new[ok]
            if record:
                path[:, i + 1] = y
    return path if record else y, exit_step


def _solve_update(terms):
    """Solve sum_d a_d (T - b_d)^2 = 1 for the upwind terms (a_d, b_d)."""
    terms = sorted(terms, key=lambda t: t[1])
    while terms:
        A = sum(a for a, _ in terms)
        B = sum(a * b for a, b in terms)
        C = sum(a * b * b for a, b in terms)
        disc = B * B - A * (C - 1.0)
        if disc >= 0:
            t = (B + math.sqrt(disc)) / A
            if t >= terms[-1][1]:
                return t
        terms = terms[:-1]
    return math.inf


def fast_marching(row_scale, n_theta, h_r, h_t, periodic, init_idx, init_val, max_distance, order):
    """Fast marching for (T_r)^2 + (T_theta / s_i)^2 = 1 on an (r, theta) grid.

    ``row_scale[i]`` is sigma(r_i); the metric length of a theta edge in row i
    is ``row_scale[i] * h_t``.  ``order`` 2 uses the second-order upwind
    difference wherever two accepted upwind nodes are available.
    Unreached nodes keep T = inf.
    """
    n_r, n_t = len(row_scale), n_theta
    T = np.full((n_r, n_t), np.inf)
    status = np.zeros((n_r, n_t), dtype=np.int8)
    heap = []
    for (i, j), v in zip(init_idx, init_val):
        T[i, j] = v
        status[i, j] = ACCEPTED

    def nbr(i, j, di, dj):
        ii, jj = i + di, j + dj
        if ii < 0 or ii >= n_r:
            return None
        if periodic:
            jj %= n_t
        elif jj < 0 or jj >= n_t:
            return None
        return ii, jj

    def upwind(i, j, di, dj, h):
        best = None
        for s in (-1, 1):
            p = nbr(i, j, s * di, s * dj)
            if p is None or status[p] != ACCEPTED:
                continue
            t1 = T[p]
            if best is not None and best[0] <= t1:
                continue
            a, b = 1.0 / (h * h), t1
            if order == 2:
                q = nbr(i, j, 2 * s * di, 2 * s * dj)
                if q is not None and status[q] == ACCEPTED and T[q] <= t1:
                    a, b = 2.25 / (h * h), (4.0 * t1 - T[q]) / 3.0
            best = (t1, a, b)
        return None if best is None else (best[1], best[2])

    def update(i, j):
        terms = []
        for di, dj, h in ((1, 0, h_r), (0, 1, row_scale[i] * h_t)):
            t = upwind(i, j, di, dj, h)
            if t is not None:
                terms.append(t)
        return _solve_update(terms)

    def relax_neighbours(i, j):
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            p = nbr(i, j, di, dj)
            if p is None or status[p] == ACCEPTED:
                continue
            t = update(*p)
            if t < T[p]:
                T[p] = t
                status[p] = TRIAL
                # ties pop the larger flat index first, matching the compiled heap
                heapq.heappush(heap, (t, -(p[0] * n_t + p[1])))

    for i, j in init_idx:
        relax_neighbours(i, j)
    while heap:
        t, neg = heapq.heappop(heap)
        i, j = divmod(-neg, n_t)
        if status[i, j] == ACCEPTED or t > T[i, j]:
            continue
        if t > max_distance:
            break
        status[i, j] = ACCEPTED
        relax_neighbours(i, j)
    T[status != ACCEPTED] = np.inf
    return T
