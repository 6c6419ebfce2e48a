"""Command-line driver: build the iteration, verify snapshots, run the rigidity checks, export meshes.

Configuration is a plain ``key = value`` file; command-line flags override
it. Reports are JSON with sorted keys and a ``schema_version``; no timing or
host data enters them, so identical configurations give identical bytes.

Exit codes: 0 success, 2 configuration (including an unresolvable
frequency), 3 a failed hypothesis or hard margin, 4 a solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rigidity
from .bootstrap import DecompNotPositive, FrequencyUnresolvable, bootstrap, init_stage_state
from .capgeom import CapParams, ParamsInfeasible, Unresolvable, build_h, build_phi, build_short_map, cap_metric
from .capgeom import standard_cap_chart
from .decomp import NewtonDiverged, SmallnessViolated
from .fields import Grid, JetField, MetricField, interp_local, pullback, write_csv
from .mollify import SupportViolation, commutator_test, pullback_commutator_slope
from .normals import DegenerateGram, NotPlanar, TooFar
from .stage import (
    SCHEMA_VERSION,
    HierarchyViolated,
    HypothesisFailed,
    NyquistViolated,
    StageAborted,
    StageReport,
    StageState,
    check_resolvable,
    convergence_table,
    make_schedule,
    metric_error,
    run_stage,
    sandwich_margins,
    verify_stage,
)

__all__ = ["RunConfig", "ConfigError", "load_config", "export_mesh", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_SOLVER = 0, 2, 3, 4

# hard thresholds on the build report
CLAMP_TOL = 1e-12
RESIDUAL_TOL = 1e-10
NEWTON_MEDIAN_MAX = 8
ORTH_TOL = 1e-10
TANG_TOL = 1e-8
ANSATZ_TOL = 1e-8
OBSERVABLE_TOL = 1e-6


class ConfigError(ValueError):
    """Unknown key or unparsable value in the configuration."""


@dataclass
class RunConfig:
    """Every knob of a run. ``R`` is the cap radius, ``support_R`` the cutoff constant."""

    grid: int = 2049
    stages: int = 2
    R: float = 2.0
    a_base: float = 76.3
    b: float = 1.02
    c: float = 1.302
    alpha: float = 0.3
    seed: int = 0
    out_dir: str = "capflex_out"
    # schedule constants
    support_R: float = 4.0
    sigma0: float = 0.16
    C_tilde: float = 1.0
    C_hat: float = 1.0
    Lambda: float = 4.0
    C0: float = 50.0
    r0: float = 0.25
    # short map
    eta_param: float = 0.94
    eps_param: float = 0.29
    smoothing: float = 0.25
    # first approximation
    boot_delta: float = 0.1
    boot_sigma: float = 0.16
    rho_factor: float = 0.95
    twist_frequency: float = 0.0  # 0 selects lambda_1
    w_C_hat: float = 8.0
    # numerics
    min_ppw: float = 16.0
    min_ppw_w: float = 8.0
    strip_rows: int = 128
    newton_tol: float = 1e-12
    max_newton: int = 30
    # outputs
    mesh_stride: int = 8
    csv_stride: int = 8
    snapshot: bool = True

    def schedule(self):
        return make_schedule(
            self.a_base,
            self.b,
            self.c,
            Q=max(self.stages, 1),
            C_tilde=self.C_tilde,
            C_hat=self.C_hat,
            sigma0=self.sigma0,
            R=self.support_R,
            Lambda=self.Lambda,
            C0=self.C0,
            r0=self.r0,
        )

    def cap_params(self) -> CapParams:
        return CapParams(R=self.R, eta_param=self.eta_param, eps_param=self.eps_param, smoothing=self.smoothing)


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown configuration key {name!r}")
    kind = types[name]
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {raw!r} as {kind}") from None


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Dashes in keys become underscores."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, val)
    return out


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the file, then ``overrides`` (flags win)."""
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    cfg = RunConfig(**values)
    if cfg.stages < 0:
        raise ConfigError("stages must be >= 0")
    if cfg.grid < 3:
        raise ConfigError("grid must be >= 3")
    if cfg.mesh_stride < 1 or cfg.csv_stride < 1:
        raise ConfigError("strides must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def coarsen(v: JetField, stride: int) -> JetField:
    """The same field on every ``stride``-th node (needs ``stride | n - 1``)."""
    n = v.grid.n
    if stride == 1:
        return v
    if (n - 1) % stride:
        raise ConfigError(f"stride {stride} does not divide grid intervals {n - 1}")
    g = Grid((n - 1) // stride + 1)
    jac = None if v.jacobian is None else v.jacobian[..., ::stride, ::stride]
    return JetField(g, v.values[:, ::stride, ::stride], jac)


def export_mesh(v: JetField, projection: Sequence[int], path) -> dict:
    """ASCII PLY of the masked nodes projected to three coordinates.

    Faces split every grid cell whose four corners are masked into two
    triangles. Vertex and face order follow the row-major node order.
    """
    proj = [int(p) for p in projection]
    if len(proj) != 3 or min(proj) < 0 or max(proj) >= v.dim:
        raise ValueError(f"projection {proj} needs three indices below {v.dim}")
    grid = v.grid
    m = grid.mask
    index = -np.ones(grid.shape, dtype=np.int64)
    index[m] = np.arange(int(m.sum()))
    verts = np.stack([v.values[p][m] for p in proj], axis=1)
    a, b = index[:-1, :-1], index[1:, :-1]
    c, d = index[:-1, 1:], index[1:, 1:]
    full = (a >= 0) & (b >= 0) & (c >= 0) & (d >= 0)
    tri1 = np.stack([a[full], b[full], d[full]], axis=1)
    tri2 = np.stack([a[full], d[full], c[full]], axis=1)
    faces = np.empty((2 * tri1.shape[0], 3), dtype=np.int64)
    faces[0::2], faces[1::2] = tri1, tri2
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {verts.shape[0]}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write(f"element face {faces.shape[0]}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        np.savetxt(fh, verts, fmt="%.9g")
        np.savetxt(fh, np.column_stack([np.full(faces.shape[0], 3), faces]), fmt="%d")
    return {"vertices": int(verts.shape[0]), "faces": int(faces.shape[0]), "projection": proj}


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and triangle faces of an ASCII PLY written by :func:`export_mesh`."""
    with open(path) as fh:
        nv = nf = 0
        for line in fh:
            if line.startswith("element vertex"):
                nv = int(line.split()[-1])
            elif line.startswith("element face"):
                nf = int(line.split()[-1])
            elif line.strip() == "end_header":
                break
        verts = np.loadtxt(fh, max_rows=nv, ndmin=2)
        faces = np.loadtxt(fh, max_rows=nf, dtype=np.int64, ndmin=2)[:, 1:]
    return verts, faces


def dominant_wavenumber(v: JetField, component: int, radius: float, samples: int = 4096) -> float:
    """Dominant wavenumber of one coordinate along a circle.

    The trace ``theta -> v(radius e^{i theta})`` of a plane wave with
    frequency ``lam`` has Bessel coefficients ``J_n(lam * radius)``, which
    stay large up to ``n ~ lam * radius`` and then decay super-exponentially.
    The reported value is the highest angular frequency carrying at least
    half the peak amplitude, divided by ``radius``.
    """
    th = 2.0 * np.pi * np.arange(samples) / samples
    pts = radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    trace = interp_local(v.values[component], v.grid, pts)
    spec = np.abs(np.fft.rfft(trace - trace.mean()))
    return float(np.nonzero(spec >= 0.5 * spec.max())[0].max()) / radius


def save_snapshot(path: Path, state: StageState, cfg: RunConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            q=np.int64(state.q),
            v_values=state.v.values,
            v_jacobian=state.v.jacobian,
            h=state.h,
            eta_values=state.eta.values,
            eta_jacobian=state.eta.jacobian,
            g_tilde=state.g_tilde.entries,
            u_values=state.u_tilde.values,
            u_jacobian=state.u_tilde.jacobian,
            config=np.array(dumps(asdict(cfg))),
        )


def load_snapshot(path) -> tuple[StageState, RunConfig]:
    with np.load(path) as z:
        cfg = RunConfig(**json.loads(str(z["config"])))
        grid = Grid(z["h"].shape[0])
        state = StageState(
            int(z["q"]),
            JetField(grid, z["v_values"], z["v_jacobian"]),
            z["h"],
            JetField(grid, z["eta_values"], z["eta_jacobian"]),
            MetricField(grid, z["g_tilde"]),
            cfg.schedule(),
            JetField(grid, z["u_values"], z["u_jacobian"]),
        )
    return state, cfg


# ---------------------------------------------------------------------------
# build


def _guard(cfg: RunConfig, grid: Grid):
    """Config validation that must pass before any field is computed."""
    try:
        cfg.cap_params().check()
        sched = cfg.schedule()
    except (ParamsInfeasible, HierarchyViolated) as exc:
        raise _Exit(EXIT_CONFIG, type(exc).__name__, str(exc)) from None
    try:
        twist = cfg.twist_frequency or sched.lam(1)
        check_resolvable(twist, grid, cfg.min_ppw)
        check_resolvable(cfg.w_C_hat / sched.delta(1), grid, cfg.min_ppw_w)
        for q in range(cfg.stages):
            check_resolvable(sched.lam(q + 1), grid, cfg.min_ppw)
    except NyquistViolated as exc:
        raise _Exit(EXIT_CONFIG, "NyquistViolated", str(exc)) from None
    return sched


class _Exit(Exception):
    def __init__(self, code: int, kind: str, message: str, module: str = ""):
        super().__init__(message)
        self.code, self.kind, self.message, self.module = code, kind, message, module

    def as_dict(self) -> dict:
        return {"exit_code": self.code, "kind": self.kind, "message": self.message, "module": self.module}


_SOLVER_ERRORS = (NewtonDiverged, StageAborted)
_HYPOTHESIS_ERRORS = (
    HypothesisFailed,
    DecompNotPositive,
    SmallnessViolated,
    SupportViolation,
    TooFar,
    DegenerateGram,
    NotPlanar,
)


def _classify(exc: Exception, module: str) -> _Exit:
    if isinstance(exc, (NyquistViolated, FrequencyUnresolvable, Unresolvable, HierarchyViolated)):
        return _Exit(EXIT_CONFIG, type(exc).__name__, str(exc), module)
    if isinstance(exc, _SOLVER_ERRORS):
        return _Exit(EXIT_SOLVER, type(exc).__name__, str(exc), module)
    if isinstance(exc, _HYPOTHESIS_ERRORS):
        return _Exit(EXIT_HYPOTHESIS, type(exc).__name__, str(exc), module)
    raise exc


def final_map_checks(state: StageState, w: Optional[JetField], R: float, alpha: float) -> dict:
    """Rim observable of ``(v, w)`` and the mollified pullback slope of ``v``."""
    Yv, Z = rigidity.boundary_vectors(state.v, R)
    norm2 = np.sum(Yv**2, axis=0)
    if w is not None:
        Yw, _ = rigidity.boundary_vectors(w, R)
        norm2 = norm2 + np.sum(Yw**2, axis=0)
    # Z has no component along w, so only v enters the pairing
    obs = float(np.mean(np.sum(Yv * Z, axis=0)))
    h = state.grid.spacing
    eps_list = [4.0 * h, 6.0 * h, 8.0 * h, 12.0 * h, 16.0 * h]
    slope, errs = pullback_commutator_slope(state.v, eps_list, return_values=True)
    return {
        "observable": obs,
        "observable_gap": abs(obs - 1.0),
        "pushforward_length_gap": float(np.abs(np.sqrt(norm2) - 1.0).max()),
        "pullback_slope": float(slope),
        "pullback_slope_bound": 2.0 * alpha - 1.0 - 0.3,
        "pullback_eps": eps_list,
        "pullback_errors": errs,
        "alpha": alpha,
    }


def _hard_failures(report: dict) -> list[str]:
    bad = []
    boot = report.get("hypotheses", {})
    if boot and min(boot["sandwich_lower"], boot["sandwich_upper"]) < 0.0:
        bad.append("stage 0 sandwich")
    for st in report.get("stages", []):
        q = st["q"]
        m, d, f, cl, inc = st["margins"], st["decomposition"], st["frames"], st["clamp"], st["increments"]
        if min(m["sandwich_lower"], m["sandwich_upper"]) < 0.0:
            bad.append(f"q={q}: sandwich")
        if m["ansatz_identity"] > ANSATZ_TOL:
            bad.append(f"q={q}: ansatz identity")
        if d["max_residual"] > RESIDUAL_TOL or d["newton_median"] > NEWTON_MEDIAN_MAX:
            bad.append(f"q={q}: decomposition")
        if f["orthonormality"] > ORTH_TOL or f["tangency"] > TANG_TOL:
            bad.append(f"q={q}: frames")
        if max(cl["rim_value"], cl["rim_jacobian"]) > CLAMP_TOL:
            bad.append(f"q={q}: rim clamp")
        if max(inc["C0_c0"], inc["C0_c1"]) > inc["C0_cap"]:
            bad.append(f"q={q}: increments")
    fin = report.get("final")
    if fin is not None:
        if fin["observable_gap"] > OBSERVABLE_TOL:
            bad.append("observable")
        if fin["pullback_slope"] < fin["pullback_slope_bound"]:
            bad.append("pullback slope")
    return bad


def build(cfg: RunConfig, log=print) -> tuple[int, dict]:
    """Run the pipeline and write its artifacts; returns ``(exit_code, report)``."""
    out = Path(cfg.out_dir)
    grid = Grid(cfg.grid)
    report: dict = {"schema_version": SCHEMA_VERSION, "config": asdict(cfg)}
    try:
        sched = _guard(cfg, grid)
    except _Exit as ex:
        report["error"] = ex.as_dict()
        _write(out / "report.json", dumps(report))
        log(f"error: {ex.kind}: {ex.message}")
        return ex.code, report
    report["schedule"] = sched.table()
    report["stages"] = []
    params = cfg.cap_params()
    cap = standard_cap_chart(cfg.R, grid, dim=3)
    report["standard_cap"] = {
        "observable": rigidity.boundary_observable(cap, cfg.R),
        "a_cap": params.a_cap,
    }
    report["standard_cap"]["observable_gap"] = abs(report["standard_cap"]["observable"] - params.a_cap)
    export_mesh(coarsen(cap, cfg.mesh_stride), (0, 1, 2), out / "standard_cap.ply")
    del cap

    module = "bootstrap"
    stage_reports: list[StageReport] = []
    state = None
    boot = None
    try:
        prof = build_phi(params)
        u = build_short_map(prof, grid)
        h = build_h(params, grid).values[0]
        g = cap_metric(cfg.R, grid)
        log("bootstrap")
        boot = bootstrap(
            u,
            h,
            g,
            cfg.boot_sigma,
            cfg.boot_delta,
            sched,
            frequency=cfg.twist_frequency or None,
            rho_factor=cfg.rho_factor,
            C_hat=cfg.w_C_hat,
            min_ppw=cfg.min_ppw,
            min_ppw_w=cfg.min_ppw_w,
        )
        del u, h, g
        report["bootstrap"] = boot.report
        state, hyp = init_stage_state(boot, sched, check=False)
        report["hypotheses"] = hyp
        report["hypotheses"]["metric_error"] = metric_error(state)
        init_stage_state(boot, sched, check=True)
        module = "stage"
        for q in range(cfg.stages):
            log(f"stage {q} -> {q + 1}")
            state, rep = run_stage(
                state,
                strip_rows=cfg.strip_rows,
                min_ppw=cfg.min_ppw,
                newton_tol=cfg.newton_tol,
                max_newton=cfg.max_newton,
            )
            stage_reports.append(rep)
            report["stages"].append(rep.to_dict())
    except (ValueError, RuntimeError) as exc:
        ex = _classify(exc, module)
        report["error"] = ex.as_dict()
        log(f"error in {module}: {ex.kind}: {ex.message}")
    w = boot.w if boot is not None else None
    if state is not None:
        final = final_map_checks(state, w, cfg.R, cfg.alpha)
        final["q"] = state.q
        final["wavenumber_trace"] = {
            "radius": 0.5,
            "dominant": dominant_wavenumber(state.v, 2, 0.5),
            "lambda_q": sched.lam(state.q) if state.q > 0 else report["bootstrap"]["twist_frequency"],
        }
        report["final"] = final
        export_mesh(coarsen(state.v, cfg.mesh_stride), (0, 1, 2), out / "final_map.ply")
        write_csv(coarsen(state.v, cfg.csv_stride), out / "final_map.csv")
        if cfg.snapshot:
            save_snapshot(out / "snapshot.npz", state, cfg)
    if len(stage_reports) >= 2:
        report["holder_table"] = convergence_table(stage_reports, cfg.alpha, sched)
    report["hard_failures"] = _hard_failures(report)
    code = report["error"]["exit_code"] if "error" in report else EXIT_OK
    if code == EXIT_OK and report["hard_failures"]:
        code = EXIT_HYPOTHESIS
    report["exit_code"] = code
    _write(out / "report.json", dumps(report))
    return code, report


# ---------------------------------------------------------------------------
# verify / rigidity / holder-table


def verify(snapshots: Sequence[str], cfg: Optional[RunConfig] = None) -> tuple[int, dict]:
    """Re-measure a snapshot, or the stage between two consecutive snapshots."""
    states = [load_snapshot(p) for p in snapshots]
    state, scfg = states[-1]
    cfg = cfg or scfg
    lower, upper = sandwich_margins(state)
    grid = state.grid
    rim = grid.rim
    report = {
        "schema_version": SCHEMA_VERSION,
        "q": state.q,
        "sandwich_lower": lower,
        "sandwich_upper": upper,
        "metric_error": metric_error(state),
        "rim_value": float(np.abs(state.v.values[:, rim] - state.u_tilde.values[:, rim]).max()),
        "rim_jacobian": float(np.abs(state.v.jacobian[..., rim] - state.u_tilde.jacobian[..., rim]).max()),
        "observable": rigidity.boundary_observable(state.v, scfg.R),
    }
    if len(states) == 2:
        prev = states[0][0]
        if prev.q + 1 != state.q:
            raise ConfigError("snapshots must be consecutive stages")
        report["stage"] = verify_stage(prev, state).to_dict()
    ok = min(lower, upper) >= 0.0 and max(report["rim_value"], report["rim_jacobian"]) <= CLAMP_TOL
    return (EXIT_OK if ok else EXIT_HYPOTHESIS), report


def rigidity_report(cfg: RunConfig, n_curve: int = 256) -> tuple[int, dict, dict]:
    """Pairing sweeps, connection defects and commutator slopes; returns tables too."""
    rng = np.random.default_rng(cfg.seed)
    N = 64
    x = -np.pi + np.arange(4096) * (2.0 * np.pi / 4096)

    def trig(deg):
        a, b = rng.standard_normal(deg + 1), rng.standard_normal(deg + 1)
        k = np.arange(deg + 1)
        val = lambda t: np.cos(np.multiply.outer(t, k)) @ a + np.sin(np.multiply.outer(t, k)) @ b
        der = lambda t: np.sin(np.multiply.outer(t, k)) @ (-k * a) + np.cos(np.multiply.outer(t, k)) @ (k * b)
        return val, der

    gaps = []
    for _ in range(5):
        (f, _), (g, dg), (p, _) = trig(32), trig(32), trig(32)
        four = rigidity.bilinear_pairing(*(rigidity.PeriodicSample.from_function(fn, N) for fn in (f, g, p)))
        quad = float(np.sum(f(x) * dg(x) * p(x)) * (2.0 * np.pi / x.size))
        gaps.append(abs(four - quad) / max(1.0, abs(quad)))
    sweeps = {
        a: rigidity.lacunary_sweep(a, range(4, 11), conjugate=True, phi=lambda n: rigidity.bump_test(1.0, 0.9, n))
        for a in (0.6, 0.4)
    }
    # connection defect of the cap chart under refinement
    defects = []
    for n in (129, 257, 513):
        gr = Grid(n)
        chart = standard_cap_chart(cfg.R, gr, dim=3)
        defects.append(
            {"grid": n, "defect": rigidity.connection_defect(chart, pullback(chart), rigidity.circle_curve(0.8, n_curve))}
        )
    # mollified rough flat immersion with alpha > 1/2
    gr = Grid(1025)
    rough = rigidity.rough_flat_immersion(gr, 0.7, 7)
    eps = [0.1, 0.07, 0.05, 0.035, 0.025, 0.018, 0.0125]
    moll = rigidity.mollified_defects(rough, MetricField.identity(gr), rigidity.circle_curve(0.6, n_curve), eps)
    gr = Grid(513)
    x1, x2 = gr.x1, gr.x2
    comm = commutator_test(np.sin(3 * x1) * np.cos(2 * x2), np.cos(x1 + 2 * x2), gr, [0.16, 0.12, 0.08, 0.06, 0.04])
    max_ratio = max(r["ratio"] for r in sweeps[0.6])
    ratios = [defects[i]["defect"] / defects[i + 1]["defect"] for i in range(len(defects) - 1)]
    monotone = all(moll[i + 1]["defect"] < moll[i]["defect"] for i in range(len(moll) - 1))
    report = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "pairing_quadrature_gap": max(gaps),
        "sweep_max_ratio_alpha_0.6": max_ratio,
        "sweep_ratio_growth_alpha_0.4": sweeps[0.4][-1]["ratio"] / sweeps[0.4][0]["ratio"],
        "cap_defects": defects,
        "cap_defect_ratios": ratios,
        "mollified_defects": moll,
        "mollified_monotone": monotone,
        "commutator_slope": comm,
    }
    ok = max(gaps) <= 1e-8 and max_ratio <= 20.0 and min(ratios) >= 3.5 and monotone and comm >= 1.9
    tables = {"sweep_alpha_0.6.csv": sweeps[0.6], "sweep_alpha_0.4.csv": sweeps[0.4], "mollified_defects.csv": moll}
    return (EXIT_OK if ok else EXIT_HYPOTHESIS), report, tables


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capflex", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--grid", type=int, help="nodes per axis")
        sp.add_argument("--stages", type=int, help="number of stages Q")
        sp.add_argument("--R", type=float, dest="R", help="cap radius")
        sp.add_argument("--a-base", type=float, dest="a_base")
        sp.add_argument("--b", type=float)
        sp.add_argument("--c", type=float)
        sp.add_argument("--alpha", type=float, help="Hölder exponent for tables and slopes")
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")

    common(sub.add_parser("build", help="run the iteration and write report, CSV, meshes"))
    sp = sub.add_parser("verify", help="re-measure one snapshot, or the stage between two")
    common(sp)
    sp.add_argument("snapshot", nargs="+")
    common(sub.add_parser("rigidity", help="pairing sweeps and connection defects"))
    sp = sub.add_parser("holder-table", help="Hölder convergence table from a build report")
    common(sp)
    sp.add_argument("--report", help="report.json of a build (default: <out-dir>/report.json)")
    sp = sub.add_parser("export-mesh", help="PLY mesh of a snapshot's map")
    common(sp)
    sp.add_argument("snapshot")
    sp.add_argument("--projection", default="0,1,2")
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--output", required=True)
    return p


_FLAG_KEYS = ("grid", "stages", "R", "a_base", "b", "c", "alpha", "out_dir", "seed")


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip().replace("-", "_")
        overrides[k] = _coerce(k, v)
    overrides.update({k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k) is not None})
    return load_config(args.config, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out_dir)
    log = lambda msg: print(msg, file=sys.stderr)
    try:
        if args.command == "build":
            code, report = build(cfg, log)
            fin = report.get("final", {})
            print(
                dumps(
                    {
                        "exit_code": code,
                        "stages_completed": len(report.get("stages", [])),
                        "observable": fin.get("observable"),
                        "standard_cap_observable": report.get("standard_cap", {}).get("observable"),
                        "hard_failures": report.get("hard_failures", []),
                        "error": report.get("error"),
                    }
                ),
                end="",
            )
            return code
        if args.command == "verify":
            code, report = verify(args.snapshot)
            _write(out / "verify.json", dumps(report))
            print(dumps(report), end="")
            return code
        if args.command == "rigidity":
            code, report, tables = rigidity_report(cfg)
            _write(out / "rigidity.json", dumps(report))
            for name, rows in tables.items():
                out.mkdir(parents=True, exist_ok=True)
                rigidity.write_table_csv(rows, out / name)
            print(dumps(report), end="")
            return code
        if args.command == "holder-table":
            path = Path(args.report) if args.report else out / "report.json"
            build_report = json.loads(path.read_text())
            reps = []
            for d in build_report.get("stages", []):
                reps.append(StageReport(q=d["q"], increments=d["increments"]))
            if len(reps) < 2:
                print(f"holder-table needs two completed stages, {path} has {len(reps)}", file=sys.stderr)
                return EXIT_CONFIG
            rcfg = RunConfig(**build_report["config"])
            rows = convergence_table(reps, cfg.alpha, rcfg.schedule())
            out.mkdir(parents=True, exist_ok=True)
            rigidity.write_table_csv(rows, out / "holder_table.csv")
            print(dumps(rows), end="")
            return EXIT_OK
        if args.command == "export-mesh":
            state, _ = load_snapshot(args.snapshot)
            proj = [int(s) for s in args.projection.split(",")]
            info = export_mesh(coarsen(state.v, args.stride), proj, args.output)
            print(dumps(info), end="")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
