import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from serrinwarp.catalog import build_entry
from serrinwarp.errors import DegenerateRecoveryError, InadmissibleRadiusError
from serrinwarp.radial import (
    RadialProfile, closed_form_boundary_gradient, closed_form_profile, closed_form_solution,
    hessian_residual, model_sigma, obata_closed_form, obata_ode_solve, recover_metric_from_hessian,
    solve_radial_bvp,
)


def space_form(k, n):
    return build_entry("space_form", {"k": k}, n).manifold


@pytest.mark.parametrize("k", [-1, 0, 1])
@pytest.mark.parametrize("n", [2, 3, 5])
def test_closed_form_satisfies_ode_symbolically(k, n):
    r, R = sp.symbols("r R", positive=True)
    if k == 0:
        sigma, u = r, (R**2 - r**2) / (2 * n)
    elif k < 0:
        sigma, u = sp.sinh(r), sp.cosh(r) / (k * n * sp.cosh(R)) - sp.Rational(1, n * k)
    else:
        sigma, u = sp.sin(r), sp.cos(r) / (k * n * sp.cos(R)) - sp.Rational(1, n * k)
    ode = sp.diff(u, r, 2) + (n - 1) * sp.diff(sigma, r) / sigma * sp.diff(u, r) + n * k * u + 1
    assert sp.simplify(ode) == 0
    assert sp.simplify(u.subs(r, R)) == 0
    for R0 in (0.3, 0.7):
        assert closed_form_solution(k, n, R0, 0.1) == pytest.approx(float(u.subs({r: 0.1, R: R0})), rel=1e-13)
        c = float(-sp.diff(u, r).subs({r: R0, R: R0}))
        assert closed_form_boundary_gradient(k, n, R0) == pytest.approx(c, rel=1e-13)


def test_closed_form_admissibility():
    with pytest.raises(InadmissibleRadiusError):
        closed_form_solution(1.0, 2, 2.0, 0.0)
    with pytest.raises(InadmissibleRadiusError):
        closed_form_solution(0.0, 2, -1.0, 0.0)
    with pytest.raises(ValueError):
        closed_form_solution(0.0, 2, 1.0, 1.5)


@given(k=st.sampled_from([-1.0, 0.0, 1.0]), n=st.integers(2, 4), R=st.floats(0.2, 1.4))
def test_numeric_solution_matches_closed_form(k, n, R):
    prof = solve_radial_bvp(space_form(k, n), k, R, 2e-3)
    exact = closed_form_solution(k, n, R, prof.r)
    assert np.max(np.abs(prof.u - exact)) < 1e-9
    assert prof.boundary_gradient_c == pytest.approx(closed_form_boundary_gradient(k, n, R), abs=1e-9)
    assert prof.u[-1] == 0.0 or abs(prof.u[-1]) < 1e-12


def _scipy_shooting(sigma, n, k, R):
    """Independent oracle: adaptive RK45 from a series start, bisection on u(0)."""
    r0 = 1e-4

    def rhs(r, y):
        s0, s1 = sigma(r, 0), sigma(r, 1)
        return [y[1], -1 - n * k * y[0] - (n - 1) * s1 / s0 * y[1]]

    def end(u0):
        a = -(1 + n * k * u0) / (2 * n)
        sol = solve_ivp(rhs, (r0, R), [u0 + a * r0**2, 2 * a * r0], rtol=1e-12, atol=1e-14)
        return sol.y[0, -1]

    return brentq(end, 0.0, 5.0, xtol=1e-14)


def test_numeric_solution_on_glued_model_matches_independent_shooting():
    m = build_entry("glued", {"a": 0.0, "b": 0.5, "eps": 0.3}, 3).manifold
    from serrinwarp.geometry import sigma_eval

    prof = solve_radial_bvp(m, 0.0, 0.7, 5e-4)
    u0 = _scipy_shooting(lambda r, o: sigma_eval(m.sigma, r, o), 3, 0.0, 0.7)
    assert prof.u[0] == pytest.approx(u0, abs=1e-8)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_backends_agree(backend):
    from serrinwarp import kernels

    if backend == "compiled" and kernels.BACKEND != "compiled":
        pytest.skip("compiled kernels not built")
    a = solve_radial_bvp(space_form(-1.0, 3), -1.0, 1.0, 1e-3, backend=backend)
    b = solve_radial_bvp(space_form(-1.0, 3), -1.0, 1.0, 1e-3, backend="python")
    assert np.array_equal(a.u, b.u)


def test_solver_rejects_non_model():
    with pytest.raises(ValueError):
        solve_radial_bvp(build_entry("exponential", {"k": -1.0}, 2).manifold, -1.0, 1.0, 1e-3)


def test_profile_interpolation_and_csv(tmp_path):
    prof = closed_form_profile(0.0, 2, 1.0, 0.01)
    u, du, d2u = prof.derivatives(0.505)
    assert u == pytest.approx((1 - 0.505**2) / 4, abs=1e-12)
    assert du == pytest.approx(-0.505 / 2, abs=1e-10) and d2u == pytest.approx(-0.5, abs=1e-8)
    path = tmp_path / "p.csv"
    prof.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "r,u,du,d2u" and len(lines) == len(prof.r) + 1
    assert isinstance(prof, RadialProfile) and prof.ball_radius == 1.0


@pytest.mark.parametrize("k", [-1.0, 0.0, 1.0])
def test_obata_ode_against_closed_form(k):
    t, y = obata_ode_solve(k, 3, 0.2, 2.0, 1e-3)
    assert np.max(np.abs(y - obata_closed_form(k, 3, 0.2, t))) < 1e-10


def test_obata_closed_form_satisfies_ode():
    t = sp.symbols("t")
    for k in (-1, 0, 1):
        for n in (2, 3):
            shift = sp.Rational(1, k * n) if k else 0
            if k == 0:
                y = sp.Rational(2, 5) - t**2 / (2 * n)
            elif k > 0:
                y = (sp.Rational(2, 5) + shift) * sp.cos(t) - shift
            else:
                y = (sp.Rational(2, 5) + shift) * sp.cosh(t) - shift
            assert sp.simplify(sp.diff(y, t, 2) + sp.Rational(1, n) + k * y) == 0
            assert sp.diff(y, t).subs(t, 0) == 0
            for t0 in (0.0, 0.7, 1.9):
                assert obata_closed_form(k, n, 0.4, t0) == pytest.approx(float(y.subs(t, t0)), rel=1e-13)


@pytest.mark.parametrize("k,n,R", [(0.0, 2, 1.0), (1.0, 2, math.pi / 4), (-1.0, 3, 1.0), (1.0, 4, 1.2)])
def test_hessian_equation_and_metric_recovery(k, n, R):
    m = space_form(k, n)
    prof = solve_radial_bvp(m, k, R, 1e-3)
    assert hessian_residual(prof, m) < 1e-7
    rec = recover_metric_from_hessian(prof, m)
    assert rec.residual < 1e-6
    assert np.allclose(rec.sigma_branch, model_sigma(k)(prof.r))


def test_recovery_degenerate_when_gradient_vanishes():
    prof = closed_form_profile(0.0, 2, 1.0, 0.01)
    prof.du[5] = 0.0
    m = space_form(0.0, 2)
    with pytest.raises((DegenerateRecoveryError, ValueError)):
        recover_metric_from_hessian(prof, m, tol=1.0)
