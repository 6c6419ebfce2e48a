"""One iteration of the convex-integration scheme and its verification.

A stage takes ``v_q`` with metric error of size ``delta_{q+1}`` and returns
``v_{q+1}`` with error of size ``delta_{q+2}``: mollify, decompose the
rescaled error into primitive metrics corrected for the oscillatory terms,
and add one corrugation per direction along a pair of normal fields.

Work is done in row strips with a halo so that frame jacobians and the
coefficient gradients never exist on the whole grid at once.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .capgeom import build_cutoff
from .decomp import NewtonDiverged, nonlinear_decompose, primitive_basis, smallness
from .fields import Grid, JetField, MetricField, pullback, sym_eigvalsh, sym_norm
from .mollify import Kernel, SupportViolation
from .normals import frame_residuals, frame_vectors

__all__ = [
    "HierarchyViolated",
    "NyquistViolated",
    "HypothesisFailed",
    "StageAborted",
    "ParameterSchedule",
    "StageState",
    "StageReport",
    "make_schedule",
    "check_resolvable",
    "h_blend",
    "relative_margin",
    "sandwich_margins",
    "metric_error",
    "run_stage",
    "verify_stage",
    "convergence_table",
]

SCHEMA_VERSION = 1


class HierarchyViolated(ValueError):
    """A parameter inequality fails for some stage index."""


class NyquistViolated(ValueError):
    """A frequency is too high for the grid."""


class HypothesisFailed(ValueError):
    """A stage hypothesis fails numerically; ``index`` names the inequality."""

    def __init__(self, index: int, message: str):
        super().__init__(f"hypothesis ({index}): {message}")
        self.index = index


class StageAborted(RuntimeError):
    """The stage cannot proceed (for instance ``h_q`` underflows)."""


@dataclass(frozen=True)
class ParameterSchedule:
    """Frequencies, error levels and constants of the iteration.

    ``delta(q) = a_base^(-b^q)``, ``lam(q) = a_base^(c b^(q+1))`` and
    ``ell(q) = delta(q+1)^(1/2) / (C_tilde delta(q)^(1/2) lam(q))``.
    """

    a_base: float
    b: float
    c: float
    Q: int = 2
    C_tilde: float = 1.0
    C_hat: float = 1.0
    sigma0: float = 0.16
    R: float = 4.0
    Lambda: float = 4.0
    C0: float = 50.0
    r0: float = 0.25

    def delta(self, q: int) -> float:
        return self.a_base ** (-(self.b**q))

    def lam(self, q: int) -> float:
        return self.a_base ** (self.c * self.b ** (q + 1))

    def ell(self, q: int) -> float:
        return math.sqrt(self.delta(q + 1) / self.delta(q)) / (self.C_tilde * self.lam(q))

    def table(self) -> dict:
        qs = range(self.Q + 2)
        return {
            "delta": [self.delta(q) for q in qs],
            "lambda": [self.lam(q) for q in qs],
            "ell": [self.ell(q) for q in qs],
        }


def make_schedule(a_base: float, b: float, c: float, Q: int = 2, **constants) -> ParameterSchedule:
    """Build a schedule and verify its inequalities for ``q = 0..Q``.

    Besides the frequency hierarchy and the error-size inequality, the
    mollified support must stay inside the next working ball:
    ``ell(q) <= R (delta(q+1) - delta(q+2))`` for ``q >= 1``.
    """
    if not (c > b > 1.0):
        raise HierarchyViolated(f"exponents need c > b > 1 (b = {b}, c = {c})")
    if a_base <= 1.0:
        raise HierarchyViolated("a_base > 1")
    s = ParameterSchedule(a_base, b, c, Q, **constants)
    if not 0.0 < s.sigma0 < 0.5:
        raise HierarchyViolated("sigma0 in ]0, 1/2[")
    if s.R < 1.0 or s.Lambda < 1.0 or s.C0 < 1.0:
        raise HierarchyViolated("R, Lambda and C0 must be at least 1")
    if (s.R + 1.0) * s.delta(1) >= 1.0:
        raise HierarchyViolated(f"(R+1) delta_1 = {(s.R + 1) * s.delta(1):.4g} must be < 1")
    for q in range(Q + 1):
        d1, d2, ell, lam1 = s.delta(q + 1), s.delta(q + 2), s.ell(q), s.lam(q + 1)
        if not 1.0 / d1 <= 1.0 / d2:
            raise HierarchyViolated(f"q={q}: delta_(q+1)^-1 <= delta_(q+2)^-1")
        if not 1.0 / d2 <= 1.0 / ell:
            raise HierarchyViolated(f"q={q}: delta_(q+2)^-1 = {1 / d2:.4g} <= ell^-1 = {1 / ell:.4g}")
        if not 1.0 / ell <= lam1:
            raise HierarchyViolated(f"q={q}: ell^-1 = {1 / ell:.4g} <= lambda_(q+1) = {lam1:.4g}")
        if not s.C_hat * d1 / (ell**2 * lam1**2) <= d2:
            raise HierarchyViolated(
                f"q={q}: C_hat delta_(q+1)/(ell^2 lambda_(q+1)^2) = {s.C_hat * d1 / (ell * lam1) ** 2:.4g}"
                f" <= delta_(q+2) = {d2:.4g}"
            )
        if q >= 1 and ell > s.R * (d1 - d2):
            raise HierarchyViolated(f"q={q}: ell = {ell:.4g} <= R (delta_(q+1) - delta_(q+2)) = {s.R * (d1 - d2):.4g}")
    return s


def check_resolvable(freq: float, grid: Grid, min_ppw: float = 16.0) -> float:
    """Raise :class:`NyquistViolated` unless a wavelength spans ``min_ppw`` cells."""
    ppw = 2.0 * math.pi / (freq * grid.spacing)
    if ppw < min_ppw:
        raise NyquistViolated(
            f"frequency {freq:.4g} gives {ppw:.3g} points per wavelength on a {grid.n}^2 grid (need {min_ppw})"
        )
    return ppw


def h_blend(eta, sigma0: float):
    """Weights ``(Phi, Psi)`` with ``h_{q+1} = Phi(eta) h_q + Psi(eta) delta_{q+2}``."""
    eta = np.asarray(eta, dtype=float)
    s2 = sigma0**2
    den = 1.0 - s2 * (1.0 + eta) ** 2
    return (1.0 - s2 * (1.0 + eta)) / den * (1.0 - eta**2), eta**2 / den


def relative_margin(diff: np.ndarray, h: np.ndarray, mask: np.ndarray, floor: float = 1e-12) -> float:
    """Minimum of ``diff / h`` over ``mask`` where ``h > floor``.

    Nodes with ``h <= floor`` (the rim) compare zero with zero and are skipped.
    """
    sel = mask & (h > floor)
    if not sel.any():
        return math.inf
    return float((diff[sel] / h[sel]).min())


@dataclass(frozen=True)
class StageState:
    q: int
    v: JetField
    h: np.ndarray
    eta: JetField
    g_tilde: MetricField
    schedule: ParameterSchedule
    u_tilde: Optional[JetField] = None

    @property
    def grid(self) -> Grid:
        return self.v.grid


def sandwich_margins(state: StageState, mask: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Relative margins of ``(1 -+ sigma0 (1 + eta)) h e`` around ``g_tilde - v^# e``."""
    grid = state.grid
    mask = grid.mask if mask is None else mask
    err = state.g_tilde.entries - pullback(state.v).entries
    lo, hi = sym_eigvalsh(err)
    tol = state.schedule.sigma0 * (1.0 + state.eta.values[0])
    lower = relative_margin(lo - (1.0 - tol) * state.h, state.h, mask)
    upper = relative_margin((1.0 + tol) * state.h - hi, state.h, mask)
    return lower, upper


def metric_error(state: StageState) -> float:
    """Sup of ``|g_tilde - v_q^# e|`` on the plateau where ``eta_q = 1``."""
    s = state.schedule
    grid = state.grid
    plateau = grid.r <= 1.0 - (s.R + 1.0) * s.delta(state.q + 1)
    err = state.g_tilde.entries - pullback(state.v).entries
    return float(sym_norm(err)[plateau].max(initial=0.0))


@dataclass
class StageReport:
    """Margins and measurements for one stage; serialises deterministically."""

    q: int
    margins: dict = field(default_factory=dict)
    seminorms: dict = field(default_factory=dict)
    decomposition: dict = field(default_factory=dict)
    frames: dict = field(default_factory=dict)
    increments: dict = field(default_factory=dict)
    clamp: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_clock")
        d["schema_version"] = SCHEMA_VERSION
        return _plain(d)

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _sym_outer(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Entries of ``sym(p^T q)`` for ``p, q`` of shape ``(m, 2, ...)``."""
    out = np.empty((3,) + p.shape[2:])
    out[0] = np.einsum("c...,c...->...", p[:, 0], q[:, 0])
    out[1] = 0.5 * (np.einsum("c...,c...->...", p[:, 0], q[:, 1]) + np.einsum("c...,c...->...", p[:, 1], q[:, 0]))
    out[2] = np.einsum("c...,c...->...", p[:, 1], q[:, 1])
    return out


def _gram(j: np.ndarray) -> np.ndarray:
    return _sym_outer(j, j)


def run_stage(
    state: StageState,
    strip_rows: int = 128,
    min_ppw: float = 16.0,
    newton_tol: float = 1e-12,
    max_newton: int = 30,
) -> tuple[StageState, StageReport]:
    """Advance ``state`` from ``q`` to ``q + 1``.

    The jacobian of the new map is assembled from its three explicit parts
    (amplitude times phase derivative, amplitude times frame derivative,
    coefficient gradient) rather than differentiated numerically.
    """
    t0 = time.perf_counter()
    s = state.schedule
    grid = state.grid
    q = state.q
    if state.u_tilde is None:
        raise ValueError("stage state needs the twisted reference map u_tilde")
    d1, d2 = s.delta(q + 1), s.delta(q + 2)
    lam, ell = s.lam(q + 1), s.ell(q)
    check_resolvable(lam, grid, min_ppw)
    n = grid.n
    m_dim = state.v.dim
    basis = primitive_basis()
    nu = basis.directions
    prim = basis.primitives
    eta_j = build_cutoff(d2, s.R, grid)
    eta = eta_j.values[0]
    work_all = eta > 0.0
    if (state.h[work_all] < 1e-14).any():
        raise StageAborted("h_q underflows below 1e-14 on the working ball")

    kernel = Kernel(ell, grid.spacing)
    weights = kernel.weights
    u_t = state.u_tilde
    trivial = q == 0 and np.array_equal(state.v.values, u_t.values) and np.array_equal(state.v.jacobian, u_t.jacobian)
    if not trivial:
        # v - u_tilde must vanish within one kernel radius of the rim and
        # outside the next working ball shrunk by ell
        peak = np.abs(state.v.values - u_t.values).max(axis=0) + np.abs(state.v.jacobian - u_t.jacobian).max(axis=(0, 1))
        reach = 1.0 - s.R * d2 - ell
        bad = (grid.r >= min(1.0 - ell, reach)) & (peak > 0.0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise SupportViolation(f"v - u_tilde is nonzero at |x| = {grid.r[i, j]:.5f} beyond {reach:.5f}")

    vals_new = np.empty_like(state.v.values)
    jac_new = np.empty_like(state.v.jacobian)
    reference = np.eye(m_dim)[2:]
    halo = 4
    iso = np.array([1.0, 0.0, 1.0])
    stats = {
        "ansatz": 0.0,
        "residual": 0.0,
        "orth": 0.0,
        "tang": 0.0,
        "E1": 0.0,
        "E2": 0.0,
        "smallness": 0.0,
        "min_c": math.inf,
        "max_c": 0.0,
        "tau_dev": 0.0,
        "inc_c0": 0.0,
        "inc_c1": 0.0,
        "inc_c2": 0.0,
    }
    iters_all = []
    for s_lo in range(0, n, strip_rows):
        s_hi = min(s_lo + strip_rows, n)
        lo, hi = max(s_lo - halo, 0), min(s_hi + halo, n)
        core = slice(s_lo - lo, s_hi - lo)
        rows = slice(lo, hi)
        ut_v = u_t.values[:, rows]
        ut_j = u_t.jacobian[:, :, rows]
        if trivial:
            vb_v, vb_j = ut_v.copy(), ut_j.copy()
        else:
            dv = _strip_convolve_diff(state.v.values, u_t.values, weights, lo, hi)
            dj = _strip_convolve_diff(state.v.jacobian, u_t.jacobian, weights, lo, hi)
            vb_v, vb_j = ut_v + dv, ut_j + dj
            del dv, dj
        e_s = eta[rows]
        h_s = state.h[rows]
        work = e_s > 0.0
        x1, x2 = grid.x1[rows], grid.x2[rows]
        new_v = vb_v.copy()
        new_j = vb_j.copy()
        if work.any():
            xi = frame_vectors(reference, vb_j)
            dxi = np.stack(
                [np.gradient(xi, grid.spacing, axis=-2), np.gradient(xi, grid.spacing, axis=-1)], axis=2
            )  # (6, m, 2, rows, n)
            pw = vb_j[..., work]  # (m, 2, N)
            hw = h_s[work]
            A, B, C = [], [], []
            for k in range(3):
                th = lam * (nu[k, 0] * x1[work] + nu[k, 1] * x2[work])
                sn, cs = np.sin(th), np.cos(th)
                z1, z2 = xi[k][:, work], xi[3 + k][:, work]
                dz1, dz2 = dxi[k][..., work], dxi[3 + k][..., work]
                A.append((cs * z1 - sn * z2)[:, None, :] * nu[k][None, :, None])
                B.append(sn * dz1 + cs * dz2)
                C.append(sn * z1 + cs * z2)
            M = np.stack([2.0 / (np.sqrt(hw) * lam) * _sym_outer(pw, B[k]) for k in range(3)])
            Lam = np.empty((3, 3, 3, hw.size))
            for i in range(3):
                for j in range(3):
                    Lam[i, j] = (2.0 / lam) * _sym_outer(A[i], B[j]) + _sym_outer(B[i], B[j]) / lam**2
            gbar = _gram(pw)
            tau = (state.g_tilde.entries[:, rows][:, work] - gbar - d2 * iso[:, None]) / hw
            try:
                res = nonlinear_decompose(tau, M, Lam, basis, r0=s.r0, tol=newton_tol, max_iters=max_newton, strict=False)
            except NewtonDiverged as exc:
                i, j = np.argwhere(work)[exc.node]
                i += lo
                raise NewtonDiverged(
                    f"q={q}: Newton failed at {exc.count} nodes of rows {lo}..{hi - 1}; first at node ({i}, {j}),"
                    f" x = ({grid.axis[i]:.4f}, {grid.axis[j]:.4f})",
                    exc.node,
                    exc.count,
                ) from None
            cfull = np.zeros((3,) + e_s.shape)
            cfull[:, work] = res.coefficients
            a = e_s * np.sqrt(np.maximum(h_s, 0.0)) * cfull
            da = np.stack([np.gradient(a, grid.spacing, axis=-2), np.gradient(a, grid.spacing, axis=-1)], axis=1)
            aw, daw = a[:, work], da[..., work]
            incv = np.zeros((m_dim, aw.shape[1]))
            incj = np.zeros((m_dim, 2, aw.shape[1]))
            for k in range(3):
                incv += aw[k] / lam * C[k]
                incj += aw[k] * A[k] + (aw[k] / lam) * B[k] + C[k][:, None, :] * daw[k][None] / lam
            new_v[:, work] += incv
            new_j[:, :, work] += incj
            # statistics on core rows only
            cmask = np.zeros_like(work)
            cmask[core] = True
            sel = cmask[work]
            if sel.any():
                ew = e_s[work]
                cw = res.coefficients
                lhs = _gram(new_j[:, :, work]) - gbar
                model = np.zeros_like(lhs)
                for i in range(3):
                    model += (cw[i] ** 2) * prim[i][:, None] + cw[i] * M[i]
                    for j in range(3):
                        model += cw[i] * cw[j] * Lam[i, j]
                lhs -= ew**2 * hw * model
                e1 = np.zeros_like(lhs)
                for k in range(3):
                    e1 += _sym_outer(daw[k][None], daw[k][None]) / lam**2
                    for j in range(3):
                        bc = np.einsum("cd...,c...->d...", B[k], C[j])  # (2, N)
                        e1 += (2.0 * aw[k] / lam**2) * _sym_outer(bc[None], daw[j][None])
                e2 = ew * (1.0 - ew) * hw * sum(cw[k] * M[k] for k in range(3))
                ans = np.abs(lhs - e1 - e2).max(axis=0)
                stats["ansatz"] = max(stats["ansatz"], float(ans[sel].max()))
                stats["residual"] = max(stats["residual"], float(sym_norm(res.residual)[sel].max()))
                stats["E1"] = max(stats["E1"], float(sym_norm(e1)[sel].max()))
                stats["E2"] = max(stats["E2"], float(sym_norm(e2)[sel].max()))
                stats["smallness"] = max(stats["smallness"], float(smallness(tau, M, Lam)[sel].max()))
                dev = tau - iso[:, None]
                stats["tau_dev"] = max(stats["tau_dev"], float(sym_norm(dev)[sel].max()))
                stats["min_c"] = min(stats["min_c"], float(cw[:, sel].min()))
                stats["max_c"] = max(stats["max_c"], float(cw[:, sel].max()))
                iters_all.append(res.newton_iters[sel])
                wc = work & cmask
                o, t = frame_residuals(xi[..., wc], vb_j[..., wc])
                stats["orth"] = max(stats["orth"], o)
                stats["tang"] = max(stats["tang"], t)
            del xi, dxi, A, B, C, M, Lam
        # increments v_{q+1} - v_q
        dvv = new_v - state.v.values[:, rows]
        djj = new_j - state.v.jacobian[:, :, rows]
        stats["inc_c0"] = max(stats["inc_c0"], float(np.sqrt((dvv[:, core] ** 2).sum(axis=0)).max()))
        stats["inc_c1"] = max(stats["inc_c1"], float(np.sqrt((djj[:, :, core] ** 2).sum(axis=(0, 1))).max()))
        d2j = np.sqrt(
            (np.gradient(djj, grid.spacing, axis=-2) ** 2 + np.gradient(djj, grid.spacing, axis=-1) ** 2).sum(axis=(0, 1))
        )
        stats["inc_c2"] = max(stats["inc_c2"], float(d2j[core].max()))
        vals_new[:, s_lo:s_hi] = new_v[:, core]
        jac_new[:, :, s_lo:s_hi] = new_j[:, :, core]

    phi, psi = h_blend(eta, s.sigma0)
    h_new = phi * state.h + psi * d2
    v_new = JetField(grid, vals_new, jac_new)
    nxt = StageState(q + 1, v_new, h_new, eta_j, state.g_tilde, s, u_t)
    iters = np.concatenate(iters_all) if iters_all else np.zeros(0, dtype=int)
    report = verify_stage(state, nxt)
    report.decomposition = {
        "max_residual": stats["residual"],
        "newton_median": float(np.median(iters)) if iters.size else 0.0,
        "newton_max": int(iters.max()) if iters.size else 0,
        "min_coefficient": stats["min_c"] if iters.size else 0.0,
        "max_coefficient": stats["max_c"],
        "smallness": stats["smallness"],
        "tau_deviation": stats["tau_dev"],
        "r0": s.r0,
    }
    report.frames = {"orthonormality": stats["orth"], "tangency": stats["tang"]}
    report.margins["ansatz_identity"] = stats["ansatz"]
    report.margins["E1_sup"] = stats["E1"]
    report.margins["E2_sup"] = stats["E2"]
    report.increments["c2_seminorm"] = stats["inc_c2"]
    report.parameters.update({"ell": ell, "kernel_half_width": kernel.half_width})
    report.wall_clock = time.perf_counter() - t0
    return nxt, report


def _strip_convolve_diff(a: np.ndarray, b: np.ndarray, weights: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Rows ``lo:hi`` of ``(a - b) * weights`` computed from the needed rows only."""
    m = weights.shape[0] // 2
    n = a.shape[-2]
    ra, rb = max(lo - m, 0), min(hi + m, n)
    diff = a[..., ra:rb, :] - b[..., ra:rb, :]
    lead = diff.shape[:-2]
    flat = diff.reshape((-1,) + diff.shape[-2:])
    out = np.empty((flat.shape[0], hi - lo, a.shape[-1]))
    ncol = a.shape[-1]
    for c in range(flat.shape[0]):
        if not flat[c].any():
            out[c] = 0.0
            continue
        full = signal.fftconvolve(flat[c], weights, mode="full")
        out[c] = full[lo - ra + m : hi - ra + m, m : m + ncol]
    return out.reshape(lead + (hi - lo, ncol))


def verify_stage(prev: StageState, nxt: StageState) -> StageReport:
    """Measure the conclusions of a stage; never raises on a failed inequality."""
    s = nxt.schedule
    grid = nxt.grid
    q = prev.q
    d1 = s.delta(q + 1)
    lam = s.lam(q + 1)
    lower, upper = sandwich_margins(nxt)
    ball = grid.r <= 1.0 - s.R * s.delta(q + 2)
    hb = nxt.h[ball]
    d2 = s.delta(q + 2)
    sq = np.zeros(grid.shape)
    for c in range(nxt.v.dim):
        sq += (nxt.v.values[c] - prev.v.values[c]) ** 2
    c0 = float(np.sqrt(sq[grid.mask].max()))
    sq[:] = 0.0
    for c in range(nxt.v.dim):
        for k in range(2):
            sq += (nxt.v.jacobian[c, k] - prev.v.jacobian[c, k]) ** 2
    c1 = float(np.sqrt(sq[grid.mask].max()))
    del sq
    rim = grid.rim
    ref = nxt.u_tilde if nxt.u_tilde is not None else prev.v
    clamp_v = float(np.abs(nxt.v.values[:, rim] - ref.values[:, rim]).max())
    clamp_j = float(np.abs(nxt.v.jacobian[..., rim] - ref.jacobian[..., rim]).max())
    outside = grid.r > 1.0 - s.R * d2
    frozen_v = float(np.abs(nxt.v.values[:, outside] - ref.values[:, outside]).max(initial=0.0))
    frozen_h = float(np.abs(nxt.h[outside] - prev.h[outside]).max(initial=0.0))
    err_prev, err_next = metric_error(prev), metric_error(nxt)
    rep = StageReport(q=q + 1)
    rep.margins = {
        "sandwich_lower": lower,
        "sandwich_upper": upper,
        "h_lower": float((hb / d2).min() - 1.0),
        "h_upper": float(s.Lambda - (hb / d2).max()),
        "metric_error_prev": err_prev,
        "metric_error": err_next,
        "error_ratio": err_next / err_prev if err_prev > 0 else math.inf,
        "delta_ratio": d2 / d1,
    }
    rep.increments = {
        "c0": c0,
        "c1": c1,
        "C0_c0": c0 * lam / math.sqrt(d1),
        "C0_c1": c1 / math.sqrt(d1),
        "C0_cap": s.C0,
    }
    rep.clamp = {"rim_value": clamp_v, "rim_jacobian": clamp_j, "frozen_value": frozen_v, "frozen_h": frozen_h}
    rep.parameters = {"delta_q1": d1, "delta_q2": d2, "lambda_q1": lam, "sigma0": s.sigma0, "R": s.R}
    return rep


def convergence_table(reports: Sequence[StageReport], alpha: float, schedule: ParameterSchedule) -> list[dict]:
    """Measured ``||v_{q+1} - v_q||_{1,alpha}`` next to the predicted geometric bound.

    The Hölder norm is estimated by interpolation
    ``||.||_1^(1-alpha) [.]_2^alpha`` from the C^1 and C^2 increment sizes
    stored in each report.
    """
    if len(reports) < 2:
        raise ValueError("the table needs at least two stages")
    admissible = alpha < 1.0 / (2.0 * schedule.b * schedule.c)
    rows = []
    for rep in reports:
        q = rep.q - 1
        c1 = rep.increments["c0"] + rep.increments["c1"]
        c2 = rep.increments["c2_seminorm"]
        measured = c1 ** (1.0 - alpha) * c2**alpha if alpha > 0 else c1
        predicted = schedule.a_base ** (-0.5 * schedule.b**q * (1.0 - 2.0 * alpha * schedule.b * schedule.c))
        rows.append(
            {
                "q": q,
                "alpha": alpha,
                "measured": measured,
                "predicted": predicted,
                "ratio": measured / predicted,
                "admissible": admissible,
            }
        )
    return rows
