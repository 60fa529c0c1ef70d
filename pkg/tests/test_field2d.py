import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from serrinwarp.analysis import refinement_order
from serrinwarp.catalog import build_entry
from serrinwarp.errors import ChartOverflowError, InsufficientResolutionError
from serrinwarp.field2d import (
    ScalarField2D, annulus_level, ball_grid, band_level, boundary_gradient_stats, core_nodes,
    effective_dimension_laplacian, eikonal_distance, ellipse_level, full_mask, geodesic_ball_mask,
    grid_for_box, integrate, make_domain, mask_from_function, mask_from_level, solve_dirichlet,
)

FLAT = build_entry("linear", {"c1": 0.0, "c2": 1.0}, 2).manifold
HYP = build_entry("space_form", {"k": -1.0}, 2).manifold
CYL = build_entry("cylinder", {}, 2).manifold


def euclid(r1, t1, r2, t2):
    return np.sqrt(r1**2 + r2**2 - 2 * r1 * r2 * np.cos(t1 - t2))


def exact_disk(h):
    """Disk of radius 0.5 about (2, 0) as an exact level set."""
    grid = grid_for_box(FLAT, (1.5, 2.5), (-0.26, 0.26), h)
    return mask_from_function(grid, ellipse_level(0.5, 0.5, 2.0, 0.0))


def test_grid_spacing_respects_metric():
    g = grid_for_box(FLAT, (1.0, 2.0), None, 0.05)
    assert g.periodic and g.h_r == 0.05
    assert g.h_theta * g.r_hi <= 0.05 + 1e-12


def test_chart_overflow():
    with pytest.raises(ChartOverflowError):
        grid_for_box(FLAT, (-0.5, 0.5), None, 0.05)
    with pytest.raises(ChartOverflowError):
        grid_for_box(build_entry("space_form", {"k": 0.0}, 2).manifold, (0.0, 0.5), None, 0.05)
    with pytest.raises(ChartOverflowError):
        make_domain(FLAT, "ellipse", {"a": 2.0, "b": 1.0, "x0": 1.0}, 0.05)


def test_unknown_domain_kind():
    with pytest.raises(KeyError):
        make_domain(FLAT, "triangle", {}, 0.05)


def test_flat_disk_solution_second_order():
    hs = [1 / 32, 1 / 64, 1 / 128]
    errs = []
    for h in hs:
        mask = exact_disk(h)
        u = solve_dirichlet(FLAT, 0.0, mask)
        R, T = mask.grid.mesh()
        d2 = R**2 + 4 - 4 * R * np.cos(T)
        exact = (0.25 - d2) / 4
        errs.append(float(np.max(np.abs(u.values - exact)[mask.inside])))
    assert errs[-1] < 1e-4
    assert refinement_order(hs, errs) >= 1.5


def test_geodesic_ball_max_value_and_area():
    mask = geodesic_ball_mask(FLAT, (2.0, 0.0), 0.5, ball_grid(FLAT, (2.0, 0.0), 0.5, 1 / 128))
    u = solve_dirichlet(FLAT, 0.0, mask)
    assert np.nanmax(u.values) == pytest.approx(0.0625, abs=5e-4)
    area = integrate(FLAT, mask, np.ones(mask.grid.shape))
    assert area == pytest.approx(math.pi / 4, abs=2e-3)


def test_hyperbolic_ball_area():
    R = 0.5
    mask = geodesic_ball_mask(HYP, (2.0, 0.0), R, ball_grid(HYP, (2.0, 0.0), R, 1 / 128))
    area = integrate(HYP, mask, np.ones(mask.grid.shape))
    assert area == pytest.approx(2 * math.pi * (math.cosh(R) - 1), abs=2e-3)


def test_annulus_area_and_components():
    mask = mask_from_function(grid_for_box(FLAT, (1.0, 2.0), None, 1 / 64), annulus_level(1.0, 2.0))
    assert mask.n_components() == 1
    assert integrate(FLAT, mask, np.ones(mask.grid.shape)) == pytest.approx(3 * math.pi, abs=1e-12)


def test_two_component_mask_is_rejected():
    g = grid_for_box(FLAT, (1.0, 3.0), None, 1 / 32)
    mask = mask_from_level(g, np.minimum(np.abs(g.mesh()[0] - 1.3), np.abs(g.mesh()[0] - 2.7)) - 0.1)
    assert mask.n_components() == 2
    with pytest.raises(ValueError):
        solve_dirichlet(FLAT, 0.0, mask)


def test_cylinder_band_is_exact():
    mask = make_domain(CYL, "band", {"w": 0.5}, 1 / 32)
    u = solve_dirichlet(CYL, 0.0, mask)
    R, _ = mask.grid.mesh()
    assert np.max(np.abs(u.values - (0.25 - R**2) / 2)[mask.inside]) < 1e-12
    stats = boundary_gradient_stats(CYL, u)
    assert stats.mean == pytest.approx(0.5, abs=1e-10)
    assert stats.relative_defect < 1e-10


@given(w=st.floats(0.2, 1.0))
def test_band_gradient_equals_half_width(w):
    mask = make_domain(CYL, "band", {"w": w}, 1 / 16)
    stats = boundary_gradient_stats(CYL, solve_dirichlet(CYL, 0.0, mask))
    assert stats.mean == pytest.approx(w, rel=1e-6)


def test_disk_boundary_gradient_converges():
    defects, means = [], []
    for h in (1 / 64, 1 / 128):
        u = solve_dirichlet(FLAT, 0.0, exact_disk(h))
        stats = boundary_gradient_stats(FLAT, u)
        defects.append(stats.relative_defect)
        means.append(stats.mean)
    assert defects[1] < defects[0] < 0.02
    assert means[1] == pytest.approx(0.25, abs=2e-3)


def test_ellipse_defect_is_large():
    mask = make_domain(FLAT, "ellipse", {"a": 1.0, "b": 0.6, "x0": 3.0}, 1 / 64)
    assert boundary_gradient_stats(FLAT, solve_dirichlet(FLAT, 0.0, mask)).relative_defect > 0.1


@given(a=st.floats(0.3, 0.8), b=st.floats(0.3, 0.8), k=st.sampled_from([0.0, -1.0]))
def test_maximum_principle(a, b, k):
    m = FLAT if k == 0 else HYP
    mask = make_domain(m, "ellipse", {"a": a, "b": b, "x0": 2.5}, 1 / 32)
    u = solve_dirichlet(m, k, mask)
    assert np.all(u.inside_values() > 0) and not u.warnings


@given(scale=st.floats(-3.0, 3.0).filter(lambda x: abs(x) > 0.1))
def test_solution_is_linear_in_rhs(scale):
    mask = exact_disk(1 / 16)
    base = solve_dirichlet(FLAT, 0.0, mask)
    scaled = solve_dirichlet(FLAT, 0.0, mask, rhs=-scale)
    assert np.allclose(scaled.inside_values(), scale * base.inside_values(), rtol=1e-10, atol=1e-14)


def test_discrete_laplacian_of_smooth_field():
    mask = mask_from_function(grid_for_box(HYP, (1.0, 2.0), None, 1 / 64), annulus_level(1.0, 2.0))
    f = ScalarField2D.from_function(mask, lambda r, t: r**2 * np.cos(t))
    lap = effective_dimension_laplacian(HYP, f)
    R, T = mask.grid.mesh()
    exact = (2 + 2 * R * np.cosh(R) / np.sinh(R) - R**2 / np.sinh(R) ** 2) * np.cos(T)
    core = core_nodes(mask, 1)
    assert np.max(np.abs(lap.values - exact)[core]) < 5e-3


def test_n3_requires_flat_torus_fiber():
    sphere_fiber = build_entry("space_form", {"k": -1.0}, 3).manifold
    mask = make_domain(sphere_fiber, "annulus", {"r1": 1.0, "r2": 1.5}, 1 / 16)
    with pytest.raises(ValueError):
        solve_dirichlet(sphere_fiber, -1.0, mask)


def test_eikonal_matches_law_of_cosines_second_order():
    errs, hs = [], [1 / 64, 1 / 128, 1 / 256]
    for h in hs:
        grid = ball_grid(FLAT, (2.0, 0.0), 0.5, h)
        d = eikonal_distance(FLAT, (2.0, 0.0), grid)
        R, T = grid.mesh()
        ref = euclid(R, T, 2.0, 0.0)
        sel = ref <= 0.5
        errs.append(float(np.max(np.abs(d.values - ref)[sel])))
    assert errs[-1] < 1 / 128
    assert refinement_order(hs, errs) > 1.8
    assert float(eikonal_distance(FLAT, (2.0, 0.0), ball_grid(FLAT, (2.0, 0.0), 0.6, 1 / 64)).at(2.5, 0.0)) \
        == pytest.approx(0.5, abs=1 / 64)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_eikonal_backends_agree(backend):
    from serrinwarp import kernels

    if backend == "compiled" and kernels.BACKEND != "compiled":
        pytest.skip("compiled kernels not built")
    grid = ball_grid(HYP, (2.0, 0.3), 0.4, 1 / 32)
    a = eikonal_distance(HYP, (2.0, 0.3), grid, backend=backend).values
    b = eikonal_distance(HYP, (2.0, 0.3), grid, backend="python").values
    assert np.array_equal(np.isfinite(a), np.isfinite(b))
    assert np.allclose(a[np.isfinite(a)], b[np.isfinite(b)], atol=1e-13)


@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2), r=st.floats(1.6, 2.4), t=st.floats(-0.2, 0.2))
def test_bilinear_interpolation_reproduces_bilinear_functions(a, b, c, r, t):
    mask = full_mask(grid_for_box(FLAT, (1.5, 2.5), (-0.3, 0.3), 1 / 16))
    f = ScalarField2D.from_function(mask, lambda R, T: a + b * R + c * T)
    assert float(f.at(r, t)) == pytest.approx(a + b * r + c * t, abs=1e-10)


def test_insufficient_boundary_samples():
    mask = make_domain(FLAT, "ellipse", {"a": 0.06, "b": 0.06, "x0": 2.0}, 1 / 16)
    u = solve_dirichlet(FLAT, 0.0, mask)
    with pytest.raises(InsufficientResolutionError):
        boundary_gradient_stats(FLAT, u)


def test_artifacts(tmp_path):
    mask = make_domain(CYL, "band", {"w": 0.25}, 1 / 8, )
    u = solve_dirichlet(CYL, 0.0, mask)
    u.to_csv(tmp_path / "u.csv")
    header, *rows = (tmp_path / "u.csv").read_text().splitlines()
    assert header == "r,theta,value" and len(rows) == mask.n_inside
    mask.save(tmp_path / "mask.npz")
    data = np.load(tmp_path / "mask.npz")
    assert np.array_equal(data["inside"], mask.inside)
    band = mask_from_function(mask.grid, band_level(0.25))
    assert np.array_equal(band.inside, mask.inside)
