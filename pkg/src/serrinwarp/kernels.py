"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``SERRINWARP_PURE`` is set to a non-empty value other
than ``0``, the numpy implementation in ``_pykernels`` is used.  Every
wrapper also takes ``backend="python"`` / ``"compiled"`` to force one.
"""
import os

import numpy as np

from . import _pykernels

_compiled = None
if os.environ.get("SERRINWARP_PURE", "") in ("", "0"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def _pick(backend):
    if backend is None:
        return _compiled or _pykernels
    if backend == "python":
        return _pykernels
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


def radial_rk4(u0, du0, h, drift_nodes, drift_mid, nk, start, backend=None):
    impl = _pick(backend)
    return impl.radial_rk4(float(u0), float(du0), float(h), np.ascontiguousarray(drift_nodes, dtype=float),
                           np.ascontiguousarray(drift_mid, dtype=float), float(nk), int(start))


def obata_rk4(k, n, y0, step, n_steps, backend=None):
    return _pick(backend).obata_rk4(float(k), int(n), float(y0), float(step), int(n_steps))


def geodesic_batch(sigma, states, step, n_steps, r_lo, r_hi, record=True, backend=None):
    """Integrate many geodesics at once; see ``_pykernels.geodesic_batch``.

    Families without a ``kernel_spec`` always use the numpy path.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    spec = sigma.kernel_spec()
    impl = _pick(backend)
    if impl is _pykernels or spec is None:
        return _pykernels.geodesic_batch(sigma._eval, states, float(step), int(n_steps),
                                         float(r_lo), float(r_hi), record)
    code, params = spec
    return impl.geodesic_batch(code, np.asarray(params, dtype=float), states, float(step), int(n_steps),
                               float(r_lo), float(r_hi), record)


def fast_marching(row_scale, n_theta, h_r, h_t, periodic, init_idx, init_val, max_distance,
                  order=2, backend=None):
    init_idx = np.asarray(init_idx, dtype=np.int64).reshape(-1, 2)
    init_val = np.asarray(init_val, dtype=float)
    impl = _pick(backend)
    if impl is _pykernels:
        init_idx = [tuple(map(int, p)) for p in init_idx]
    return impl.fast_marching(np.asarray(row_scale, dtype=float), int(n_theta), float(h_r), float(h_t),
                              bool(periodic), init_idx, init_val, float(max_distance), int(order))
