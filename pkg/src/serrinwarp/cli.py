"""Command-line driver: build catalog entries, run solvers and checks, write reports.

Every command produces a bundle ``{command, config, entry, checks, notes,
data, all_pass}``.  Checks run in the order listed in each handler's
docstring; the exit status is 0 iff every check passes, 1 if any check
fails and 2 on an error (unknown entry, bad config, chart overflow, ...).
Reports are JSON with sorted keys, written atomically, so identical
configurations give byte-identical files.
"""
from __future__ import annotations

import argparse
import ast
import json
import math
import operator
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    commutator_identity_residual, compatibility_integral, intermediate_identity_checks,
    p_function, p_subharmonicity_check, pohozaev_sides, refinement_order, with_order,
)
from .catalog import ENTRY_NAMES, Hypothesis, build_entry, default_entries, parse_entry_spec
from .errors import (
    ChartOverflowError, ConstructionError, DegenerateRecoveryError, DomainError, InadmissibleRadiusError,
    InsufficientResolutionError, NoSolutionError, NotFoundError, SolverError,
)
from .field2d import (
    ScalarField2D, ball_grid, boundary_gradient_stats, eikonal_distance, make_domain, solve_dirichlet,
)
from .geodesics import distance_by_shooting, geodesic_shoot, star_shapedness_check
from .geometry import check_ricci_bound, serrin_coefficient
from .radial import (
    closed_form_boundary_gradient, closed_form_profile, closed_form_solution, hessian_residual,
    solve_radial_bvp,
)

__all__ = ["RunConfig", "Suite", "run_suite", "load_config", "main"]

COMMANDS = {
    "catalog": ("list",),
    "check-curvature": (None,),
    "solve-radial": (None,),
    "solve-2d": (None,),
    "verify": ("pohozaev", "pfunction", "compat", "identity", "intermediate"),
    "geodesics": ("shoot", "distance", "star"),
}

DEFAULT_ENTRY = "space_form:k=0"
NO_RIGIDITY_NOTE = "hypothesis σ′≢0 violated; rigidity not expected"

_ERRORS = (KeyError, ValueError, ConstructionError, ChartOverflowError, NotFoundError, SolverError,
           InsufficientResolutionError, NoSolutionError, InadmissibleRadiusError,
           DegenerateRecoveryError)


# ---------------------------------------------------------------- value parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_number(text) -> float:
    """A float, allowing ``pi`` and arithmetic such as ``pi/8`` or ``1/128``."""
    if isinstance(text, (int, float)):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(f"not a number: {text!r}")

    try:
        return ev(ast.parse(str(text).strip(), mode="eval"))
    except SyntaxError:
        raise ValueError(f"not a number: {text!r}") from None


def parse_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(parse_number(x) for x in text)
    return tuple(parse_number(x) for x in str(text).split(",") if x.strip())


def parse_point(text) -> tuple:
    p = parse_list(text)
    if len(p) != 2:
        raise ValueError(f"expected a point r,theta; got {text!r}")
    return p


def parse_domain(text) -> tuple[str, dict]:
    """``"kind:key=val,..."`` with numeric values (``pi`` allowed)."""
    kind, _, rest = str(text).partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"bad domain parameter {item!r} (expected key=value)")
        params[key.strip()] = parse_number(val)
    return kind.strip(), params


# ---------------------------------------------------------------- configuration


@dataclass
class RunConfig:
    """Everything a run depends on; serialised verbatim into the report."""

    command: str
    action: str | None = None
    entry: str | None = None
    n: int = 2
    k: float | None = None
    ball: float = 1.0
    h: tuple = ()
    domain: str | None = None
    source: str = "numeric"
    tol: float | None = None
    min_order: float = 1.0
    defect_tol: float = 0.02
    expect: str = "constant"
    report_defect: bool = False
    field: str = "r**2*cos(theta)"
    start: tuple | None = None
    direction: float = 0.0
    length: float = 1.0
    step: float = 1e-3
    p: tuple | None = None
    q: tuple | None = None
    center: tuple | None = None
    radius: float = 0.5
    rays: int = 64
    method: str = "eikonal"
    pairs: int = 0
    samples: int = 1000
    seed: int = 0
    backend: str | None = None
    out: str | None = None
    csv: str | None = None
    mask_out: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.action not in COMMANDS[self.command]:
            raise ValueError(f"unknown action {self.action!r} for {self.command}")
        self.h = tuple(float(x) for x in self.h)
        if any(x <= 0 for x in self.h):
            raise ValueError("resolutions must be positive")
        if any(b >= a for a, b in zip(self.h, self.h[1:])):
            raise ValueError(f"resolutions must have strictly decreasing spacings, got {list(self.h)}")
        if self.expect not in ("constant", "nonconstant"):
            raise ValueError("expect must be 'constant' or 'nonconstant'")
        if self.source not in ("numeric", "closed_form"):
            raise ValueError("source must be 'numeric' or 'closed_form'")

    @property
    def label(self) -> str:
        return self.command if self.action is None else f"{self.command} {self.action}"


_CONVERT = {
    "n": int, "rays": int, "pairs": int, "samples": int, "seed": int,
    "k": parse_number, "ball": parse_number, "tol": parse_number, "min_order": parse_number,
    "defect_tol": parse_number, "direction": parse_number, "length": parse_number,
    "step": parse_number, "radius": parse_number,
    "h": parse_list, "start": parse_point, "p": parse_point, "q": parse_point, "center": parse_point,
}
_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command", "action"}


def _to_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def load_config(path) -> dict:
    """Read a flat ``key=value`` file (``#`` comments, comma lists) or a JSON object.

    Keys are RunConfig field names; dashes are accepted for underscores.
    Values are converted to the field types.  Raises ValueError on unknown
    keys or unparsable values.
    """
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ValueError(f"config {path}: expected a JSON object")
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"config {path}:{lineno}: expected key=value, got {line!r}")
            raw[key.strip()] = val.strip()
    out = {}
    for key, val in raw.items():
        name = key.replace("-", "_")
        if name not in _CONFIG_KEYS:
            raise ValueError(f"config {path}: unknown key {key!r}")
        if name == "report_defect":
            out[name] = _to_bool(val)
        elif name in _CONVERT and val is not None:
            out[name] = _CONVERT[name](val)
        else:
            out[name] = val
    return out


# ---------------------------------------------------------------- suite plumbing


def _plain(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def atomic_write(path, write):
    """Call ``write(tmp_path)`` then move the temporary file onto ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.stem}.", suffix=path.suffix)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Suite:
    """Collects checks, notes and data for one run; ``stage`` names the step in progress."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.checks: list[dict] = []
        self.notes: list[str] = []
        self.data: dict = {}
        self.entry = None
        self.stage = "setup"

    def check(self, name: str, passed, **values):
        row = {"name": name, "pass": None if passed is None else bool(passed), **values}
        self.checks.append(_plain(row))
        return row

    def note(self, text: str):
        if text not in self.notes:
            self.notes.append(text)

    @property
    def all_pass(self) -> bool:
        return all(c["pass"] is not False for c in self.checks)

    def bundle(self) -> dict:
        return _plain({
            "version": __version__,
            "command": self.config.label,
            "config": asdict(self.config),
            "entry": None if self.entry is None else self.entry.to_dict(),
            "checks": self.checks,
            "notes": self.notes,
            "data": self.data,
            "all_pass": self.all_pass,
        })


def _entry(suite: Suite):
    suite.stage = "build_entry"
    name, params = parse_entry_spec(suite.config.entry or DEFAULT_ENTRY)
    suite.entry = build_entry(name, params, suite.config.n)
    if not suite.entry.holds(Hypothesis.SIGMA_PRIME_NOT_IDENT_ZERO):
        suite.note(NO_RIGIDITY_NOTE)
    return suite.entry


def _k(suite: Suite) -> float:
    return suite.entry.manifold.k if suite.config.k is None else suite.config.k


def _resolutions(cfg: RunConfig, default) -> tuple:
    return cfg.h if cfg.h else tuple(default)


def _write_artifact(suite: Suite, path, writer, kind):
    if path:
        atomic_write(path, writer)
        suite.data.setdefault("artifacts", {})[kind] = str(path)


# ---------------------------------------------------------------- handlers


def _catalog_list(suite: Suite):
    """One line per entry; no checks (exit 0 unless construction fails)."""
    cfg = suite.config
    suite.stage = "build_catalog"
    if cfg.entry is not None:
        entries = [_entry(suite)]
    else:
        entries = default_entries(cfg.n)
    suite.data["entries"] = [e.to_dict() for e in entries]
    suite.data["lines"] = [e.summary_line() for e in entries]


def _check_curvature(suite: Suite):
    """Checks: ricci_bound; serrin_coefficient (informational)."""
    cfg = suite.config
    entry = _entry(suite)
    m, k = entry.manifold, _k(suite)
    suite.stage = "ricci_bound"
    margin = check_ricci_bound(m, k, cfg.samples)
    tol = 1e-12 if cfg.tol is None else cfg.tol
    suite.check("ricci_bound", margin >= -tol, k=k, margin=margin, tolerance=tol,
                einstein=abs(margin) <= tol)
    suite.stage = "serrin_coefficient"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        coef = serrin_coefficient(m, k, m.sigma.domain.sample(cfg.samples))
    suite.check("serrin_coefficient", None, max_abs=float(np.max(np.abs(coef))),
                min=float(np.min(coef)))


def _closed_form_k(entry):
    """Curvature of a constant-curvature model entry, else None."""
    if entry.name == "space_form":
        return float(entry.params.get("k", 0.0))
    if entry.name == "scaled_model" and entry.params.get("rho", 1.0) == 1.0:
        return float(entry.params.get("k", 0.0))
    return None


def _radial_profiles(suite: Suite, default_h=(1e-3,)):
    cfg = suite.config
    entry = suite.entry
    m, k = entry.manifold, _k(suite)
    out = []
    for h in _resolutions(cfg, default_h):
        suite.stage = f"radial_solve h={h:g}"
        if cfg.source == "closed_form":
            kc = _closed_form_k(entry)
            if kc is None or kc != k:
                raise ValueError("closed_form source needs a constant-curvature model entry with matching k")
            out.append((h, closed_form_profile(k, m.n, cfg.ball, h)))
        else:
            out.append((h, solve_radial_bvp(m, k, cfg.ball, h, backend=cfg.backend)))
    return out


def _solve_radial(suite: Suite):
    """Checks per h: closed_form_center, closed_form_gradient (constant-curvature models only)."""
    cfg = suite.config
    entry = _entry(suite)
    m, k = entry.manifold, _k(suite)
    kc = _closed_form_k(entry)
    rows = []
    profiles = _radial_profiles(suite)
    for h, prof in profiles:
        row = {"h": h, "u_center": float(prof.u[0]), "boundary_gradient": prof.boundary_gradient_c,
               "hessian_residual": hessian_residual(prof, m, k)}
        rows.append(row)
        if kc is not None and kc == k:
            tol = 1e-7 if cfg.tol is None else cfg.tol
            exact0 = float(closed_form_solution(k, m.n, cfg.ball, 0.0))
            exact_c = closed_form_boundary_gradient(k, m.n, cfg.ball)
            suite.check("closed_form_center", abs(prof.u[0] - exact0) < tol, h=h, value=prof.u[0],
                        exact=exact0, error=abs(prof.u[0] - exact0), tolerance=tol)
            gtol = 1e-6 if cfg.tol is None else cfg.tol
            suite.check("closed_form_gradient", abs(prof.boundary_gradient_c - exact_c) < gtol, h=h,
                        value=prof.boundary_gradient_c, exact=exact_c,
                        error=abs(prof.boundary_gradient_c - exact_c), tolerance=gtol)
    suite.data["profiles"] = rows
    _write_artifact(suite, cfg.csv, profiles[-1][1].to_csv, "profile_csv")


def _fields_2d(suite: Suite, default_h=(1 / 64,)):
    """Solve on the configured domain at every resolution; returns (h, mask, field)."""
    cfg = suite.config
    m, k = suite.entry.manifold, _k(suite)
    kind, params = parse_domain(cfg.domain)
    out = []
    for h in _resolutions(cfg, default_h):
        suite.stage = f"domain {kind} h={h:g}"
        mask = make_domain(m, kind, params, h, backend=cfg.backend)
        if mask.n_inside == 0:
            raise ChartOverflowError(f"domain {cfg.domain} has no grid nodes at h={h:g}")
        suite.stage = f"solve_dirichlet h={h:g}"
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            u = solve_dirichlet(m, k, mask)
        for w in caught:
            suite.note(str(w.message))
        out.append((h, mask, u))
    return out


def _solve_2d(suite: Suite):
    """Rows per h: solution (INFO), boundary_gradient_defect (with --report-defect)."""
    cfg = suite.config
    if cfg.domain is None:
        raise ValueError("solve-2d needs --domain")
    entry = _entry(suite)
    m = entry.manifold
    rows = []
    results = _fields_2d(suite)
    for h, mask, u in results:
        vals = u.inside_values()
        row = {"h": h, "n_inside": mask.n_inside, "components": mask.n_components(),
               "max_u": float(np.max(vals)), "min_u": float(np.min(vals))}
        suite.check("solution", None, **row)
        if cfg.report_defect:
            suite.stage = f"boundary_gradient h={h:g}"
            stats = boundary_gradient_stats(m, u)
            row["boundary_gradient"] = stats.to_dict()
            defect = stats.relative_defect
            small = defect < cfg.defect_tol
            suite.check("boundary_gradient_defect", small if cfg.expect == "constant" else not small,
                        h=h, defect=defect, tolerance=cfg.defect_tol, expect=cfg.expect,
                        mean=stats.mean)
            kind = parse_domain(cfg.domain)[0]
            if small and kind != "ball" and not entry.holds(Hypothesis.SIGMA_PRIME_NOT_IDENT_ZERO):
                suite.note("counterexample witness: non-ball domain with constant boundary gradient")
        rows.append(row)
    suite.data["fields"] = rows
    _, mask, u = results[-1]
    _write_artifact(suite, cfg.csv, u.to_csv, "field_csv")
    _write_artifact(suite, cfg.mask_out, mask.save, "mask")


def _sources(suite: Suite, default_radial=(1e-3, 5e-4), default_2d=(1 / 32, 1 / 64)):
    """(h, u, c) triples from the radial ball solver or from a 2D domain."""
    cfg = suite.config
    if cfg.domain is None:
        return [(h, p, p.boundary_gradient_c) for h, p in _radial_profiles(suite, default_radial)]
    m = suite.entry.manifold
    out = []
    for h, _, u in _fields_2d(suite, default_2d):
        suite.stage = f"boundary_gradient h={h:g}"
        out.append((h, u, boundary_gradient_stats(m, u).mean))
    return out


def _order_check(suite: Suite, name: str, reports, lo=None, hi=None, informative=False):
    res = [r.residual for r in reports]
    hs = [r.grid_spacing for r in reports]
    if len(reports) < 2 or min(res) <= 0:
        return
    order = refinement_order(hs, res)
    lo = suite.config.min_order if lo is None else lo
    ok = order >= lo and (hi is None or order <= hi)
    if informative:
        ok = None
    suite.check(f"{name}_order", ok, order_estimate=order, min_order=lo, max_order=hi,
                h=hs, residuals=res)


def _default_identity_tol(cfg, h):
    if cfg.tol is not None:
        return cfg.tol
    return 1e-5 if cfg.domain is None else 2.0 * h


def _scale_tolerances(cfg, reports):
    """2D defaults are relative: the cut-cell quadrature error scales with the integrals."""
    if cfg.tol is None and cfg.domain is not None:
        for r in reports:
            r.tolerance *= max(1.0, abs(r.lhs), abs(r.rhs))
    return reports


def _verify_pohozaev(suite: Suite):
    """Checks per h: pohozaev; then pohozaev_order when several h are given."""
    entry = _entry(suite)
    m, k = entry.manifold, _k(suite)
    reports = []
    for h, u, c in _sources(suite):
        suite.stage = f"pohozaev h={h:g}"
        reports.append(pohozaev_sides(u, m, k, c, tolerance=_default_identity_tol(suite.config, h)))
    with_order(_scale_tolerances(suite.config, reports))
    for r in reports:
        suite.check(**{"passed": r.passed, **r.to_dict()})
    _order_check(suite, "pohozaev", reports, informative=suite.config.domain is not None)


def _is_ball_source(cfg):
    return cfg.domain is None or parse_domain(cfg.domain)[0] == "ball"


def _verify_pfunction(suite: Suite):
    """Checks per h: p_constant (ball sources only), p_subharmonic (min Delta P >= -10 h)."""
    cfg = suite.config
    entry = _entry(suite)
    m, k = entry.manifold, _k(suite)
    for h, u, c in _sources(suite, default_2d=(1 / 64,)):
        suite.stage = f"p_function h={h:g}"
        P = p_function(u, m, k)
        vals = P if isinstance(P, np.ndarray) else P.inside_values()
        dev = float(np.max(np.abs(vals - c * c)))
        if _is_ball_source(cfg):
            if cfg.tol is not None:
                tol = cfg.tol
            elif cfg.domain is None:
                tol = 1e-8 if cfg.source == "closed_form" else 1e-6
            else:
                tol = 5e-3
            suite.check("p_constant", dev < tol, h=h, max_deviation=dev, c=c, tolerance=tol)
        else:
            suite.check("p_constant", None, h=h, max_deviation=dev, c=c)
        suite.stage = f"p_subharmonicity h={h:g}"
        sub = p_subharmonicity_check(u, m, k)
        bound = -10.0 * h
        suite.check("p_subharmonic", sub.min_laplacian >= bound, h=h, bound=bound,
                    ricci_bound_holds=entry.holds(Hypothesis.RICCI_BOUND), **sub.to_dict())
        if isinstance(P, ScalarField2D):
            suite.data.setdefault("max_p_minus_c2", []).append(float(np.max(vals) - c * c))


def _verify_compat(suite: Suite):
    """Checks per h: compatibility (integral >= -tol)."""
    cfg = suite.config
    entry = _entry(suite)
    m, k = entry.manifold, _k(suite)
    tol = 1e-8 if cfg.tol is None else cfg.tol
    for h, u, _ in _sources(suite, default_radial=(1e-3,), default_2d=(1 / 64,)):
        suite.stage = f"compatibility h={h:g}"
        val = compatibility_integral(u, m, k)
        suite.check("compatibility", val >= -tol, h=h, value=val, tolerance=tol,
                    coefficient_nonneg=entry.holds(Hypothesis.COMPATIBILITY_TRIVIAL))


def _identity_domain(m) -> str:
    lo, hi = m.sigma.domain.window()
    if m.is_model:
        lo = 0.0
    if math.isinf(m.sigma.domain.hi):
        return "annulus:r1=1,r2=2" if lo < 1 else f"annulus:r1={lo + 1},r2={lo + 2}"
    span = hi - lo
    return f"annulus:r1={lo + 0.3 * span!r},r2={lo + 0.7 * span!r}"


def _verify_identity(suite: Suite):
    """Checks: commutator_order (estimate within 2 +- 0.3 over the --h list)."""
    cfg = suite.config
    entry = _entry(suite)
    m = entry.manifold
    dom = cfg.domain or _identity_domain(m)
    kind, params = parse_domain(dom)
    reports = []
    rows = []
    for h in _resolutions(cfg, (1 / 32, 1 / 64, 1 / 128)):
        suite.stage = f"commutator h={h:g}"
        mask = make_domain(m, kind, params, h, backend=cfg.backend)
        res = commutator_identity_residual(cfg.field, m, mask)
        rows.append({"h": h, "residual": res})
        reports.append(_Residual(h, res))
    suite.data["commutator"] = {"field": cfg.field, "domain": dom, "rows": rows}
    if len(reports) < 2:
        suite.check("commutator_order", None, h=rows[0]["h"], residual=rows[0]["residual"])
        return
    _order_check(suite, "commutator", reports, lo=1.7, hi=2.3)


@dataclass
class _Residual:
    grid_spacing: float
    residual: float


def _verify_intermediate(suite: Suite):
    """Checks per h: sigma_dr_divergence, sigma2_u_ur_divergence, weighted_energy; then their orders."""
    entry = _entry(suite)
    m, k = entry.manifold, _k(suite)
    reports = []
    for h, u, c in _sources(suite):
        suite.stage = f"intermediate h={h:g}"
        reports.extend(intermediate_identity_checks(u, m, k, c, _default_identity_tol(suite.config, h)))
    with_order(_scale_tolerances(suite.config, reports))
    for r in reports:
        suite.check(**{"passed": r.passed, **r.to_dict()})
    for name in ("sigma_dr_divergence", "sigma2_u_ur_divergence", "weighted_energy"):
        _order_check(suite, name, [r for r in reports if r.name == name],
                     informative=suite.config.domain is not None)


def _default_point(m):
    lo, hi = m.sigma.domain.window()
    if m.is_model or math.isinf(m.sigma.domain.hi) or lo <= 0 < hi:
        return (2.0, 0.0) if hi > 2.5 else (0.5 * (lo + hi), 0.0)
    return (0.5 * (lo + hi), 0.0)


def _geodesics_shoot(suite: Suite):
    """Checks: within_chart, speed_drift, clairaut_drift."""
    cfg = suite.config
    entry = _entry(suite)
    m = entry.manifold
    start = cfg.start or _default_point(m)
    suite.stage = "geodesic_shoot"
    path = geodesic_shoot(m, start, cfg.direction, cfg.length, cfg.step, backend=cfg.backend)
    tol = 1e-8 if cfg.tol is None else cfg.tol
    suite.check("within_chart", not path.exited, exit_time=path.exit_time)
    suite.check("speed_drift", path.max_speed_drift < tol, value=path.max_speed_drift, tolerance=tol)
    suite.check("clairaut_drift", path.max_clairaut_drift < tol, value=path.max_clairaut_drift,
                tolerance=tol)
    suite.data["endpoint"] = path.endpoint
    suite.data["clairaut_constant"] = path.clairaut_constant
    _write_artifact(suite, cfg.csv, path.to_csv, "path_csv")


def _random_pairs(m, center, radius, count, rng):
    """Pairs within ``radius`` of each other near ``center`` (offsets in the orthonormal frame)."""
    from .geometry import sigma_eval

    pairs = []
    while len(pairs) < count:
        rp = center[0] + radius * rng.uniform(-0.5, 0.5)
        tp = center[1] + radius * rng.uniform(-0.5, 0.5) / sigma_eval(m.sigma, center[0])
        rho = 0.7 * radius * math.sqrt(rng.uniform(0.01, 1.0))
        ang = rng.uniform(0, 2 * math.pi)
        rq = rp + rho * math.cos(ang)
        tq = tp + rho * math.sin(ang) / sigma_eval(m.sigma, rp)
        pairs.append(((rp, tp), (rq, tq)))
    return pairs


def _geodesics_distance(suite: Suite):
    """Checks: eikonal_agreement for --p/--q (with --h) and for --pairs random pairs."""
    cfg = suite.config
    entry = _entry(suite)
    m = entry.manifold
    h = _resolutions(cfg, (1 / 64,))[-1]
    tol = max(h, 1e-6) if cfg.tol is None else cfg.tol
    pairs = []
    if cfg.p is not None or cfg.q is not None:
        if cfg.p is None or cfg.q is None:
            raise ValueError("geodesics distance needs both --p and --q")
        pairs.append((cfg.p, cfg.q))
    if cfg.pairs:
        rng = np.random.default_rng(cfg.seed)
        center = cfg.center or _default_point(m)
        pairs.extend(_random_pairs(m, center, cfg.radius, cfg.pairs, rng))
    if not pairs:
        raise ValueError("geodesics distance needs --p/--q or --pairs")
    rows = []
    for idx, (p, q) in enumerate(pairs):
        suite.stage = f"distance_by_shooting pair {idx}"
        d_shoot = distance_by_shooting(m, p, q, step=cfg.step, backend=cfg.backend)
        row = {"p": p, "q": q, "shooting": d_shoot}
        if cfg.h or cfg.pairs:
            suite.stage = f"eikonal pair {idx}"
            try:
                grid = ball_grid(m, p, d_shoot + 0.1, h)
            except (ChartOverflowError, DomainError) as exc:
                # e.g. the minimiser runs through the pole, which no chart grid covers
                suite.note(f"pair {idx}: fast-marching comparison skipped ({exc})")
            else:
                d_eik = float(eikonal_distance(m, p, grid, max_distance=d_shoot + 0.1,
                                               backend=cfg.backend).at(q[0], q[1]))
                row["eikonal"] = d_eik
                row["difference"] = abs(d_eik - d_shoot) if math.isfinite(d_eik) else math.inf
        rows.append(row)
    suite.data["distances"] = rows
    if cfg.p is not None:
        suite.check("distance", None, value=rows[0]["shooting"], p=rows[0]["p"], q=rows[0]["q"])
    diffs = [r["difference"] for r in rows if "difference" in r]
    if diffs:
        worst = max(diffs)
        suite.check("eikonal_agreement", worst <= tol, max_difference=worst, tolerance=tol,
                    n_pairs=len(diffs), h=h, seed=cfg.seed)


def _geodesics_star(suite: Suite):
    """Checks: star_shaped (margin >= -h)."""
    cfg = suite.config
    entry = _entry(suite)
    m = entry.manifold
    center = cfg.center or _default_point(m)
    h = _resolutions(cfg, (1 / 64,))[-1]
    suite.stage = "star_shapedness"
    margin = star_shapedness_check(m, center, cfg.radius, cfg.rays, h=h, step=cfg.step,
                                   method=cfg.method, backend=cfg.backend)
    tol = h if cfg.tol is None else cfg.tol
    suite.check("star_shaped", margin >= -tol, margin=margin, tolerance=tol, rays=cfg.rays,
                method=cfg.method, center=center, radius=cfg.radius)


_HANDLERS = {
    ("catalog", "list"): _catalog_list,
    ("check-curvature", None): _check_curvature,
    ("solve-radial", None): _solve_radial,
    ("solve-2d", None): _solve_2d,
    ("verify", "pohozaev"): _verify_pohozaev,
    ("verify", "pfunction"): _verify_pfunction,
    ("verify", "compat"): _verify_compat,
    ("verify", "identity"): _verify_identity,
    ("verify", "intermediate"): _verify_intermediate,
    ("geodesics", "shoot"): _geodesics_shoot,
    ("geodesics", "distance"): _geodesics_distance,
    ("geodesics", "star"): _geodesics_star,
}


def run_suite(config: RunConfig) -> tuple[dict, int]:
    """Run one command; returns (report bundle, exit status).

    Errors are caught and reported in the bundle under ``error`` together
    with the stage that raised; the status is then 2.
    """
    suite = Suite(config)
    try:
        _HANDLERS[(config.command, config.action)](suite)
    except _ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        bundle = suite.bundle()
        bundle["error"] = {"stage": suite.stage, "type": type(exc).__name__, "message": str(msg)}
        bundle["all_pass"] = False
        status = 2
    else:
        bundle = suite.bundle()
        status = 0 if suite.all_pass else 1
    if config.out:
        text = json.dumps(bundle, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
        atomic_write(config.out, lambda p: Path(p).write_text(text, encoding="utf-8"))
    return bundle, status


# ---------------------------------------------------------------- argument parsing


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("common")
    g.add_argument("--entry", help="catalog entry, name:key=val,... (names: " + ", ".join(ENTRY_NAMES) + ")")
    g.add_argument("--n", type=int, help="dimension (default 2)")
    g.add_argument("--k", type=parse_number, help="curvature constant (default: the entry's k)")
    g.add_argument("--h", type=parse_list, help="comma list of spacings, strictly decreasing")
    g.add_argument("--tol", type=parse_number, help="override the check tolerance")
    g.add_argument("--seed", type=int, help="seed for random sampling (default 0)")
    g.add_argument("--backend", choices=("compiled", "python"), help="kernel backend")
    g.add_argument("--config", help="key=value or JSON file supplying any of these options")
    g.add_argument("--out", help="write the JSON report here")
    g.add_argument("--csv", help="write the field, profile or path as CSV")
    g.add_argument("--quiet", action="store_true", help="print nothing on success")


def _add_solver(p):
    p.add_argument("--ball", type=parse_number, help="radial ball radius (default 1)")
    p.add_argument("--domain", help="ball:r0=,theta0=,radius= | ellipse:a=,b=,x0=,y0= | "
                                    "band:w=,center= | annulus:r1=,r2=")
    p.add_argument("--source", choices=("numeric", "closed_form"), help="radial profile source")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="serrinwarp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog", help="catalog of warped products").add_subparsers(
        dest="action", required=True)
    _add_common(cat.add_parser("list", help="one line per entry with hypotheses and margins"))

    p = sub.add_parser("check-curvature", help="Ricci lower-bound margin")
    _add_common(p)
    p.add_argument("--samples", type=int, help="number of sampled radii (default 1000)")

    p = sub.add_parser("solve-radial", help="radial torsion problem on a ball around the pole")
    _add_common(p)
    _add_solver(p)

    p = sub.add_parser("solve-2d", help="torsion problem on a domain in the (r, theta) chart")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--report-defect", action="store_true", default=None,
                   help="check the boundary-gradient relative defect")
    p.add_argument("--defect-tol", type=parse_number, help="defect threshold (default 0.02)")
    p.add_argument("--expect", choices=("constant", "nonconstant"),
                   help="expected boundary gradient (default constant)")
    p.add_argument("--mask-out", help="save the finest mask as .npz")

    ver = sub.add_parser("verify", help="integral identities and P-function checks").add_subparsers(
        dest="action", required=True)
    for name, text in (("pohozaev", "Pohozaev-type identity"), ("pfunction", "P-function checks"),
                       ("compat", "compatibility integral"), ("identity", "commutator identity"),
                       ("intermediate", "integration-by-parts identities")):
        p = ver.add_parser(name, help=text)
        _add_common(p)
        _add_solver(p)
        p.add_argument("--min-order", type=parse_number, help="minimum refinement order (default 1)")
        if name == "identity":
            p.add_argument("--field", help="test field in r and theta (default r**2*cos(theta))")

    geo = sub.add_parser("geodesics", help="geodesic shooting and distances").add_subparsers(
        dest="action", required=True)
    p = geo.add_parser("shoot", help="integrate one geodesic")
    _add_common(p)
    p.add_argument("--start", type=parse_point, help="r,theta")
    p.add_argument("--direction", type=parse_number, help="angle from e_r in the orthonormal frame")
    p.add_argument("--length", type=parse_number, help="arclength")
    p.add_argument("--step", type=parse_number, help="RK4 step (default 1e-3)")
    p = geo.add_parser("distance", help="distance by shooting, optionally against fast marching")
    _add_common(p)
    p.add_argument("--p", type=parse_point, help="r,theta")
    p.add_argument("--q", type=parse_point, help="r,theta")
    p.add_argument("--pairs", type=int, help="number of random pairs to compare")
    p.add_argument("--center", type=parse_point, help="centre of the random-pair region")
    p.add_argument("--radius", type=parse_number, help="size of the random-pair region")
    p.add_argument("--step", type=parse_number, help="RK4 step (default 1e-3)")
    p = geo.add_parser("star", help="star-shapedness margin of a geodesic ball")
    _add_common(p)
    p.add_argument("--center", type=parse_point, help="r,theta")
    p.add_argument("--radius", type=parse_number, help="ball radius (default 0.5)")
    p.add_argument("--rays", type=int, help="number of rays (default 64)")
    p.add_argument("--method", choices=("eikonal", "shooting"), help="distance along rays")
    p.add_argument("--step", type=parse_number, help="RK4 step (default 1e-3)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge config-file values under explicit flags."""
    values = load_config(args.config) if getattr(args, "config", None) else {}
    for name in _CONFIG_KEYS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(command=args.command, action=getattr(args, "action", None), **values)


def _print_report(bundle: dict, stream):
    for line in bundle.get("data", {}).get("lines", []):
        print(line, file=stream)
    for c in bundle["checks"]:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[c["pass"]]
        keys = [k for k in ("h", "value", "margin", "residual", "defect", "max_deviation",
                            "min_laplacian", "order_estimate", "max_difference", "error", "n_inside", "max_u",
                            "tolerance")
                if k in c and isinstance(c[k], (int, float, str))]
        detail = " ".join(f"{k}={c[k]:.6g}" if isinstance(c[k], float) else f"{k}={c[k]}" for k in keys)
        print(f"{status} {c['name']} {detail}".rstrip(), file=stream)
    for n in bundle["notes"]:
        print(f"note: {n}", file=stream)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"serrinwarp: error in check 'config': {exc}", file=sys.stderr)
        return 2
    bundle, status = run_suite(cfg)
    if "error" in bundle:
        err = bundle["error"]
        print(f"serrinwarp: error in check '{err['stage']}': {err['type']}: {err['message']}",
              file=sys.stderr)
        return status
    if not args.quiet or status:
        _print_report(bundle, sys.stdout)
    return status


if __name__ == "__main__":
    sys.exit(main())
