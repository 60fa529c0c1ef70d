# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot kernels; same contracts as ``_pykernels``.

Geodesics evaluate sigma from a family code and parameter vector in C, so
only families with a ``kernel_spec()`` reach this module.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sin, cos, sinh, cosh, sqrt, INFINITY, isfinite
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

cdef enum:
    LINEAR = 0
    EXPF = 1
    TRIG = 2
    SINHF = 3
    SINF = 4
    CONSTF = 5
    GLUED = 6


def radial_rk4(double u0, double du0, double h, double[::1] drift_nodes,
               double[::1] drift_mid, double nk, Py_ssize_t start):
    cdef Py_ssize_t n_nodes = drift_nodes.shape[0], j
    u_arr = np.zeros(n_nodes)
    du_arr = np.zeros(n_nodes)
    cdef double[::1] u = u_arr, du = du_arr
    cdef double a = u0, b = du0, dm, dn, d1
    cdef double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v
    u[start] = u0
    du[start] = du0
    for j in range(start, n_nodes - 1):
        dm = drift_mid[j]
        dn = drift_nodes[j]
        d1 = drift_nodes[j + 1]
        k1u = b
        k1v = -1.0 - nk * a - dn * b
        k2u = b + 0.5 * h * k1v
        k2v = -1.0 - nk * (a + 0.5 * h * k1u) - dm * k2u
        k3u = b + 0.5 * h * k2v
        k3v = -1.0 - nk * (a + 0.5 * h * k2u) - dm * k3u
        k4u = b + h * k3v
        k4v = -1.0 - nk * (a + h * k3u) - d1 * k4u
        a = a + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        b = b + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        u[j + 1] = a
        du[j + 1] = b
    return u_arr, du_arr


def obata_rk4(double k, int n, double y0, double step, Py_ssize_t n_steps):
    y_arr = np.empty(n_steps + 1)
    cdef double[::1] y = y_arr
    cdef double a = y0, b = 0.0, c = 1.0 / n, h = step
    cdef double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v
    cdef Py_ssize_t i
    y[0] = a
    for i in range(n_steps):
        k1u = b
        k1v = -c - k * a
        k2u = b + 0.5 * h * k1v
        k2v = -c - k * (a + 0.5 * h * k1u)
        k3u = b + 0.5 * h * k2v
        k3v = -c - k * (a + 0.5 * h * k2u)
        k4u = b + h * k3v
        k4v = -c - k * (a + h * k3u)
        a = a + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        b = b + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        y[i + 1] = a
    return y_arr


cdef inline void sigma01(int code, const double* p, double r, double* s0, double* s1) noexcept nogil:
    cdef double a, ep, em, s, f
    if code == LINEAR:
        s0[0] = p[0] + p[1] * r
        s1[0] = p[1]
    elif code == EXPF:
        a = p[2]
        ep = p[0] * exp(a * r)
        em = p[1] * exp(-a * r)
        s0[0] = ep + em
        s1[0] = a * (ep - em)
    elif code == TRIG:
        a = p[2]
        s0[0] = p[0] * cos(a * r) + p[1] * sin(a * r)
        s1[0] = a * (p[1] * cos(a * r) - p[0] * sin(a * r))
    elif code == SINHF:
        a = p[1]
        s0[0] = p[0] * sinh(a * r) / a
        s1[0] = p[0] * cosh(a * r)
    elif code == SINF:
        a = p[1]
        s0[0] = p[0] * sin(a * r) / a
        s1[0] = p[0] * cos(a * r)
    elif code == CONSTF:
        s0[0] = p[0]
        s1[0] = 0.0
    else:
        s = r - p[0]
        if s <= 0.0:
            s0[0] = r
            s1[0] = 1.0
        else:
            f = exp(-1.0 / s)
            s0[0] = r * (1.0 - f)
            s1[0] = 1.0 - f - r * f / (s * s)


cdef inline void geo_rhs(int code, const double* p, const double* y, double* out) noexcept nogil:
    cdef double s0, s1
    sigma01(code, p, y[0], &s0, &s1)
    out[0] = y[2]
    out[1] = y[3]
    out[2] = s0 * s1 * y[3] * y[3]
    out[3] = -2.0 * s1 / s0 * y[2] * y[3]


def geodesic_batch(int code, double[::1] params, states, double step, Py_ssize_t n_steps,
                   double r_lo, double r_hi, bint record=True):
    cdef double[:, ::1] st = np.ascontiguousarray(states, dtype=np.float64)
    cdef Py_ssize_t n_rays = st.shape[0]
    cdef Py_ssize_t ray, i, c
    final_arr = np.array(st, copy=True)
    exit_arr = np.full(n_rays, -1, dtype=np.int64)
    if record:
        path_arr = np.empty((n_rays, n_steps + 1, 4))
    else:
        path_arr = np.empty((0, 0, 4))
    cdef double[:, ::1] fin = final_arr
    cdef long long[::1] ex = exit_arr
    cdef double[:, :, ::1] path = path_arr
    cdef double y[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double tmp[4]
    cdef double new[4]
    cdef const double* p = &params[0]
    cdef double h = step
    cdef bint ok
    with nogil:
        for ray in range(n_rays):
            for c in range(4):
                y[c] = st[ray, c]
                if record:
                    path[ray, 0, c] = y[c]
            for i in range(n_steps):
                if ex[ray] < 0:
                    geo_rhs(code, p, y, k1)
                    for c in range(4):
                        tmp[c] = y[c] + 0.5 * h * k1[c]
                    ok = tmp[0] > r_lo and tmp[0] < r_hi
                    geo_rhs(code, p, tmp, k2)
                    for c in range(4):
                        tmp[c] = y[c] + 0.5 * h * k2[c]
                    ok = ok and tmp[0] > r_lo and tmp[0] < r_hi
                    geo_rhs(code, p, tmp, k3)
                    for c in range(4):
                        tmp[c] = y[c] + h * k3[c]
                    ok = ok and tmp[0] > r_lo and tmp[0] < r_hi
                    geo_rhs(code, p, tmp, k4)
                    for c in range(4):
                        new[c] = y[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
                        ok = ok and isfinite(new[c])
                    ok = ok and new[0] > r_lo and new[0] < r_hi
                    if ok:
                        for c in range(4):
                            y[c] = new[c]
                    else:
                        ex[ray] = i
                if record:
                    for c in range(4):
                        path[ray, i + 1, c] = y[c]
            for c in range(4):
                fin[ray, c] = y[c]
    return (path_arr if record else final_arr), exit_arr


# ---------------------------------------------------------------- fast marching

cdef enum:
    FAR = 0
    TRIAL = 1
    ACCEPTED = 2


cdef inline Py_ssize_t wrap_col(Py_ssize_t j, Py_ssize_t n_t, bint periodic) noexcept nogil:
    if periodic:
        if j < 0:
            return j + n_t
        if j >= n_t:
            return j - n_t
        return j
    if j < 0 or j >= n_t:
        return -1
    return j


cdef inline bint upwind_term(double[:, ::1] T, signed char[:, ::1] status, Py_ssize_t i, Py_ssize_t j,
                             int di, int dj, double h, int order, bint periodic,
                             double* a_out, double* b_out) noexcept nogil:
    cdef Py_ssize_t n_r = T.shape[0], n_t = T.shape[1]
    cdef int s
    cdef Py_ssize_t ii, jj, i2, j2
    cdef double t1, t2, best = INFINITY
    cdef bint found = False
    for s in range(-1, 2, 2):
        ii = i + s * di
        jj = wrap_col(j + s * dj, n_t, periodic)
        if ii < 0 or ii >= n_r or jj < 0:
            continue
        if status[ii, jj] != ACCEPTED:
            continue
        t1 = T[ii, jj]
        if found and best <= t1:
            continue
        best = t1
        found = True
        a_out[0] = 1.0 / (h * h)
        b_out[0] = t1
        if order == 2:
            i2 = i + 2 * s * di
            j2 = wrap_col(j + 2 * s * dj, n_t, periodic)
            if i2 >= 0 and i2 < n_r and j2 >= 0 and status[i2, j2] == ACCEPTED:
                t2 = T[i2, j2]
                if t2 <= t1:
                    a_out[0] = 2.25 / (h * h)
                    b_out[0] = (4.0 * t1 - t2) / 3.0
    return found


cdef inline double solve_update(int m, double* a, double* b) noexcept nogil:
    cdef double A, B, C, disc, t, ta, tb
    # order the (at most two) terms by b
    if m == 2 and b[1] < b[0]:
        ta = a[0]; tb = b[0]
        a[0] = a[1]; b[0] = b[1]
        a[1] = ta; b[1] = tb
    while m > 0:
        A = a[0] + (a[1] if m == 2 else 0.0)
        B = a[0] * b[0] + (a[1] * b[1] if m == 2 else 0.0)
        C = a[0] * b[0] * b[0] + (a[1] * b[1] * b[1] if m == 2 else 0.0)
        disc = B * B - A * (C - 1.0)
        if disc >= 0:
            t = (B + sqrt(disc)) / A
            if t >= b[m - 1]:
                return t
        m -= 1
    return INFINITY


cdef inline double update_node(double[:, ::1] T, signed char[:, ::1] status, double[::1] scale,
                               Py_ssize_t i, Py_ssize_t j, double h_r, double h_t,
                               int order, bint periodic) noexcept nogil:
    cdef double a[2]
    cdef double b[2]
    cdef int m = 0
    if upwind_term(T, status, i, j, 1, 0, h_r, order, periodic, &a[m], &b[m]):
        m += 1
    if upwind_term(T, status, i, j, 0, 1, scale[i] * h_t, order, periodic, &a[m], &b[m]):
        m += 1
    return solve_update(m, a, b)


def fast_marching(row_scale, Py_ssize_t n_theta, double h_r, double h_t, bint periodic,
                  init_idx, init_val, double max_distance, int order):
    cdef double[::1] scale = np.ascontiguousarray(row_scale, dtype=np.float64)
    cdef Py_ssize_t n_r = scale.shape[0], n_t = n_theta
    T_arr = np.full((n_r, n_t), np.inf)
    st_arr = np.zeros((n_r, n_t), dtype=np.int8)
    cdef double[:, ::1] T = T_arr
    cdef signed char[:, ::1] status = st_arr
    cdef long long[:, ::1] idx = np.ascontiguousarray(init_idx, dtype=np.int64).reshape(-1, 2)
    cdef double[::1] val = np.ascontiguousarray(init_val, dtype=np.float64)
    cdef priority_queue[pair[double, Py_ssize_t]] heap
    cdef pair[double, Py_ssize_t] top
    cdef Py_ssize_t m, i, j, ii, jj, q, d
    cdef double t
    cdef int di[4]
    cdef int dj[4]
    di[0] = 1; di[1] = -1; di[2] = 0; di[3] = 0
    dj[0] = 0; dj[1] = 0; dj[2] = 1; dj[3] = -1
    with nogil:
        for m in range(idx.shape[0]):
            T[idx[m, 0], idx[m, 1]] = val[m]
            status[idx[m, 0], idx[m, 1]] = ACCEPTED
        for m in range(idx.shape[0]):
            i = idx[m, 0]
            j = idx[m, 1]
            for d in range(4):
                ii = i + di[d]
                jj = wrap_col(j + dj[d], n_t, periodic)
                if ii < 0 or ii >= n_r or jj < 0 or status[ii, jj] == ACCEPTED:
                    continue
                t = update_node(T, status, scale, ii, jj, h_r, h_t, order, periodic)
                if t < T[ii, jj]:
                    T[ii, jj] = t
                    status[ii, jj] = TRIAL
                    heap.push(pair[double, Py_ssize_t](-t, ii * n_t + jj))
        while not heap.empty():
            top = heap.top()
            heap.pop()
            t = -top.first
            i = top.second // n_t
            j = top.second % n_t
            if status[i, j] == ACCEPTED or t > T[i, j]:
                continue
            if t > max_distance:
                break
            status[i, j] = ACCEPTED
            for d in range(4):
                ii = i + di[d]
                jj = wrap_col(j + dj[d], n_t, periodic)
                if ii < 0 or ii >= n_r or jj < 0 or status[ii, jj] == ACCEPTED:
                    continue
                t = update_node(T, status, scale, ii, jj, h_r, h_t, order, periodic)
                if t < T[ii, jj]:
                    T[ii, jj] = t
                    status[ii, jj] = TRIAL
                    heap.push(pair[double, Py_ssize_t](-t, ii * n_t + jj))
        for i in range(n_r):
            for j in range(n_t):
                if status[i, j] != ACCEPTED:
                    T[i, j] = INFINITY
    return T_arr
