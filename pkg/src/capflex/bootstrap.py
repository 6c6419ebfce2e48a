"""First approximation of the target metric and the stage-0 state.

The short map ``u`` is twisted along constant normal pairs to make the
metric deficit nearly isotropic away from the rim, then six extra coordinates
``w`` absorb most of what remains in the interior. The result seeds the
iteration in :mod:`capflex.stage`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .capgeom import build_cutoff
from .decomp import SmallnessViolated, linear_decompose, primitive_basis
from .fields import Grid, JetField, MetricField, fd_gradient, holder_seminorm, pullback, sym_eigvalsh, sym_norm
from .stage import (
    HypothesisFailed,
    NyquistViolated,
    ParameterSchedule,
    StageState,
    h_blend,
    relative_margin,
    sandwich_margins,
    check_resolvable,
)

__all__ = [
    "DecompNotPositive",
    "FrequencyUnresolvable",
    "FirstApproximation",
    "BootstrapState",
    "first_approximation",
    "build_w",
    "bootstrap",
    "init_stage_state",
    "twist_blend",
]


class DecompNotPositive(ValueError):
    """A primitive-metric coefficient is not positive somewhere it must be."""


class FrequencyUnresolvable(ValueError):
    """No resolvable twist frequency reaches the error target."""


def twist_blend(eta, sigma):
    """Rational weights ``(Phi, Psi)`` blending ``h`` and ``rho`` in the twist step."""
    eta = np.asarray(eta, dtype=float)
    s2 = sigma**2
    phi = (1.0 - 2.0 * s2 * (2.0 + eta)) / (1.0 - s2 * (2.0 + eta) ** 2) * (1.0 - eta**2)
    psi = eta**2 / (2.0 - 2.0 * s2 * (2.0 + eta) ** 2)
    return phi, psi


def _locate(grid: Grid, mask: np.ndarray, values: np.ndarray) -> str:
    idx = np.argwhere(mask)[np.argmin(values[mask])]
    i, j = int(idx[0]), int(idx[1])
    return f"node ({i}, {j}) at x = ({grid.x1[i, j]:.4f}, {grid.x2[i, j]:.4f})"


def _phases(grid: Grid, freq: float, basis) -> np.ndarray:
    nu = basis.directions
    return freq * (nu[:, 0, None, None] * grid.x1[None] + nu[:, 1, None, None] * grid.x2[None])


@dataclass
class FirstApproximation:
    """Twisted short map ``u_tilde`` with its blended profile ``h_tilde``."""

    u_tilde: JetField
    h_tilde: np.ndarray  # (n, n)
    cutoff: JetField
    rho: float
    frequency: float
    amplitudes: np.ndarray  # (3, n, n): eta a_k
    error_norm: float
    margins: dict = field(default_factory=dict)

    def __iter__(self):
        # unpacks as (u_tilde, h_tilde, cutoff)
        return iter((self.u_tilde, self.h_tilde, self.cutoff))


def _coefficient_check(lk: np.ndarray, mask: np.ndarray, grid: Grid, what: str):
    low = lk.min(axis=0)
    if mask.any() and low[mask].min() <= 0.0:
        raise DecompNotPositive(f"{what}: min coefficient {low[mask].min():.4g} at {_locate(grid, mask, low)}")


def first_approximation(
    u: JetField,
    h: np.ndarray,
    g: MetricField,
    sigma0_tilde: float,
    delta: float,
    rho: Optional[float] = None,
    rho_factor: float = 0.95,
    frequency: float = 64.0,
    max_doublings: int = 8,
    min_ppw: float = 16.0,
) -> FirstApproximation:
    """Twist ``u`` on ``B_{1-delta}`` so that ``g - u_tilde^# e`` is close to ``h_tilde e``.

    Parameters
    ----------
    u : JetField
        Short immersion with values in the first two coordinates and at least
        six spare coordinates.
    h : array (n, n)
        Boundary profile, positive inside the disk and zero on the rim.
    sigma0_tilde : float
        Relative tolerance of the two-sided bound, in ``]0, 1/4[``.
    delta : float
        Width of the untouched outer annulus; the twist is fully switched on
        inside ``B_{1-2 delta}``.
    rho : float, optional
        Target deficit level. By default the largest admissible value on
        ``B_{1-delta}`` scaled by ``rho_factor``.
    frequency : float
        Starting twist frequency, doubled until the error term is below
        ``sigma0_tilde * rho``.
    """
    grid = u.grid
    if not 0.0 < sigma0_tilde < 0.25:
        raise ValueError("sigma0_tilde must lie in ]0, 1/4[")
    if u.dim < 8:
        raise ValueError("the twist needs eight target coordinates")
    basis = primitive_basis()
    deficit = g.entries - pullback(u).entries
    inner = grid.r <= 1.0 - delta
    lo, _ = sym_eigvalsh(deficit)
    lk = linear_decompose(deficit, basis)
    _coefficient_check(lk, inner, grid, "deficit g - u^# e")
    rho_max = min(float(lo[inner].min()), 3.0 * float(lk.min(axis=0)[inner].min()))
    if rho is None:
        rho = rho_factor * rho_max
    if not 0.0 < rho <= float(lo[inner].min()):
        raise DecompNotPositive(f"rho = {rho:.4g} exceeds the deficit floor {lo[inner].min():.4g} on B_(1-delta)")
    iso = np.array([1.0, 0.0, 1.0]).reshape(3, 1, 1)
    target = deficit - 0.5 * rho * iso
    coeffs = linear_decompose(target, basis)
    _coefficient_check(coeffs, inner, grid, "twist target g - u^# e - (rho/2) e")

    cutoff = build_cutoff(delta, 1.0, grid)
    eta = cutoff.values[0]
    amp = np.zeros((3,) + grid.shape)
    on = eta > 0.0
    amp[:, on] = eta[on] * np.sqrt(coeffs[:, on])
    damp = fd_gradient(amp, grid.spacing, grid.mask)
    # amp vanishes on an open set outside the cutoff support; drop stencil leakage there
    damp[:, :, ~on] = 0.0
    # E = sum_k lambda^-2 d(eta a_k) d(eta a_k)^T
    gram = np.zeros((3,) + grid.shape)
    gram[0] = (damp[:, 0] ** 2).sum(axis=0)
    gram[1] = (damp[:, 0] * damp[:, 1]).sum(axis=0)
    gram[2] = (damp[:, 1] ** 2).sum(axis=0)
    gnorm = float(sym_norm(gram)[grid.mask].max())
    lam = float(frequency)
    for _ in range(max_doublings + 1):
        try:
            check_resolvable(lam, grid, min_ppw)
        except NyquistViolated as exc:
            raise FrequencyUnresolvable(str(exc)) from None
        if gnorm / lam**2 < sigma0_tilde * rho:
            break
        lam *= 2.0
    else:
        raise FrequencyUnresolvable(f"error term above sigma0_tilde*rho after {max_doublings} doublings")
    err = gram / lam**2

    theta = _phases(grid, lam, basis)
    nu = basis.directions
    vals = u.values.copy()
    jac = u.jacobian.copy()
    for k in range(3):
        s, c = np.sin(theta[k]), np.cos(theta[k])
        p, q = 2 + k, 5 + k
        vals[p] += amp[k] / lam * s
        vals[q] += amp[k] / lam * c
        for d in range(2):
            jac[p, d] += amp[k] * c * nu[k, d] + s * damp[k, d] / lam
            jac[q, d] += -amp[k] * s * nu[k, d] + c * damp[k, d] / lam
    del theta
    u_tilde = JetField(grid, vals, jac)

    phi, psi = twist_blend(eta, sigma0_tilde)
    h_tilde = phi * h + psi * rho
    twisted = g.entries - pullback(u_tilde).entries
    tol = sigma0_tilde * (2.0 + eta)
    lo_t, hi_t = sym_eigvalsh(twisted)
    lower = relative_margin(lo_t - (1.0 - tol) * h_tilde, h_tilde, grid.mask)
    upper = relative_margin((1.0 + tol) * h_tilde - hi_t, h_tilde, grid.mask)
    ball = grid.r <= 1.0 - delta
    ratio = np.maximum(h_tilde[ball] / delta, delta / h_tilde[ball])
    margins = {
        "twist_lower": lower,
        "twist_upper": upper,
        "rho": float(rho),
        "rho_max": rho_max,
        "min_twist_coefficient": float(coeffs.min(axis=0)[inner].min()),
        "lambda_bar": float(ratio.max()),
        "twist_error": float(sym_norm(err)[grid.mask].max()),
    }
    return FirstApproximation(u_tilde, h_tilde, cutoff, float(rho), lam, amp, margins["twist_error"], margins)


@dataclass
class BootstrapState:
    """Stage-0 ingredients: twisted map, profile, extra coordinates and reduced target."""

    u_tilde: JetField
    h_tilde: np.ndarray
    eta_boot: JetField
    w_amplitude: np.ndarray  # (3, n, n): eta_0 h_tilde^(1/2) c_k
    w_gradient: np.ndarray  # (3, 2, n, n)
    g_tilde: MetricField
    x0: np.ndarray
    delta: float
    rho: float
    mu: float
    delta1: float
    R: float
    eta0: JetField
    report: dict = field(default_factory=dict)

    @property
    def w(self) -> JetField:
        return assemble_w(self.u_tilde.grid, self.w_amplitude, self.w_gradient, self.mu, self.x0)


def assemble_w(grid: Grid, amp: np.ndarray, damp: np.ndarray, mu: float, x0) -> JetField:
    basis = primitive_basis()
    nu = basis.directions
    theta = _phases(grid, mu, basis)
    vals = np.zeros((6,) + grid.shape)
    jac = np.zeros((6, 2) + grid.shape)
    for k in range(3):
        s, c = np.sin(theta[k]), np.cos(theta[k])
        vals[k] = x0[k] + amp[k] / mu * s
        vals[3 + k] = x0[3 + k] + amp[k] / mu * c
        for d in range(2):
            jac[k, d] = amp[k] * c * nu[k, d] + s * damp[k, d] / mu
            jac[3 + k, d] = -amp[k] * s * nu[k, d] + c * damp[k, d] / mu
    return JetField(grid, vals, jac)


def build_w(
    u_tilde: JetField,
    h_tilde: np.ndarray,
    g: MetricField,
    x0=None,
    C_hat: float = 1.0,
    delta1: float = 0.01,
    R: float = 4.0,
    r0: float = 0.25,
    strict: bool = False,
    min_ppw: float = 16.0,
):
    """Extra coordinates ``w`` with ``w^# e ~ g - u_tilde^# e - delta1 e`` deep inside.

    Returns ``(w, g_tilde, info)`` where ``g_tilde = g - w^# e``. The amplitude
    is cut off by ``eta_0``, which vanishes outside ``B_{1-R delta1}``, so ``w``
    equals ``x0`` with zero jacobian near the rim. With ``strict`` the
    smallness ``|tau - e| < r0`` is enforced; otherwise only positivity of the
    coefficients is required and the smallness is reported.
    """
    grid = u_tilde.grid
    basis = primitive_basis()
    x0 = np.zeros(6) if x0 is None else np.asarray(x0, dtype=float)
    mu = C_hat / delta1
    check_resolvable(mu, grid, min_ppw)
    eta0 = build_cutoff(delta1, R, grid)
    e0 = eta0.values[0]
    closed = grid.r <= 1.0 - R * delta1
    work = (e0 > 0.0) | closed
    iso = np.array([1.0, 0.0, 1.0]).reshape(3, 1, 1)
    tau = np.zeros((3,) + grid.shape)
    tau[:, work] = (g.entries[:, work] - pullback(u_tilde).entries[:, work] - delta1 * iso[:, 0]) / h_tilde[work]
    dev = tau - iso
    small = np.where(work, sym_norm(dev), 0.0)
    if strict and small[closed].max() >= r0:
        raise SmallnessViolated(f"|tau - e| = {small[closed].max():.4g} >= r0 = {r0}")
    lk = linear_decompose(tau, basis)
    _coefficient_check(lk, closed, grid, "w-step tau")
    amp = np.zeros((3,) + grid.shape)
    amp[:, work] = e0[work] * np.sqrt(h_tilde[work]) * np.sqrt(np.maximum(lk[:, work], 0.0))
    damp = fd_gradient(amp, grid.spacing, grid.mask)
    damp[:, :, e0 == 0.0] = 0.0
    w = assemble_w(grid, amp, damp, mu, x0)
    g_tilde = g - pullback(w)
    info = {
        "mu": mu,
        "smallness": float(small[closed].max()),
        "min_coefficient": float(lk.min(axis=0)[closed].min()),
        "w_sup": float(np.abs(w.values - x0[:, None, None]).max()),
        "w_bound": 3.0 * float(amp.max()) / mu,
    }
    return w, g_tilde, info, eta0, amp, damp


def bootstrap(
    u: JetField,
    h: np.ndarray,
    g: MetricField,
    sigma0_tilde: float,
    delta: float,
    schedule: ParameterSchedule,
    x0=None,
    frequency: Optional[float] = None,
    rho_factor: float = 0.95,
    C_hat: float = 8.0,
    min_ppw: float = 16.0,
    min_ppw_w: float = 8.0,
) -> BootstrapState:
    """Run the twist and the ``w`` step for the given schedule.

    The twist starts at the first stage frequency ``lambda_1`` unless
    ``frequency`` is given. ``C_hat`` sets the ``w`` frequency
    ``mu = C_hat / delta_1``; it is independent of the schedule constant of
    the same name.
    """
    freq = schedule.lam(1) if frequency is None else frequency
    fa = first_approximation(u, h, g, sigma0_tilde, delta, rho_factor=rho_factor, frequency=freq, min_ppw=min_ppw)
    d1 = schedule.delta(1)
    w, g_tilde, info, eta0, amp, damp = build_w(
        fa.u_tilde, fa.h_tilde, g, x0, C_hat, d1, schedule.R, schedule.r0, min_ppw=min_ppw_w
    )
    x0v = np.zeros(6) if x0 is None else np.asarray(x0, dtype=float)
    report = dict(fa.margins)
    report.update({f"w_{k}": v for k, v in info.items()})
    report["twist_frequency"] = fa.frequency
    del w
    return BootstrapState(
        fa.u_tilde, fa.h_tilde, fa.cutoff, amp, damp, g_tilde, x0v, delta, fa.rho, info["mu"], d1, schedule.R, eta0, report
    )


def init_stage_state(boot: BootstrapState, schedule: ParameterSchedule, check: bool = True):
    """Stage-0 state ``(v_0, h_0, eta_0)`` with the hypotheses measured.

    Returns ``(state, report)``. Hypotheses are numbered as follows: 21 for
    the seminorms of ``g_tilde``, 23 for the bounds on ``h_0``, 24 for the
    support of ``v_0 - u_tilde`` and 25 for the two-sided metric bound. With
    ``check`` a failing one raises :class:`HypothesisFailed`.
    """
    grid = boot.u_tilde.grid
    s0 = schedule.sigma0
    d1 = schedule.delta(1)
    eta0 = boot.eta0
    e0 = eta0.values[0]
    den = 1.0 - s0**2 * (2.0 + e0) ** 2
    h0 = (1.0 - s0**2 * (2.0 + e0)) / den * (1.0 - e0**2) * boot.h_tilde + e0**2 / den * d1
    v0 = boot.u_tilde
    state = StageState(0, v0, h0, eta0, boot.g_tilde, schedule, boot.u_tilde)
    lower, upper = sandwich_margins(state)
    ball = grid.r <= 1.0 - schedule.R * d1
    hb = h0[ball]
    lam_meas = float(max((hb / d1).max(), (d1 / hb).max()))
    # hypothesis (21): seminorms of the reduced target
    semis = []
    gt = JetField(grid, boot.g_tilde.entries)
    for k in range(3):
        semis.append(holder_seminorm(gt, k, 0.0, mask=grid.mask).value)
    c0 = max(s / (1.0 + d1 ** (1 - k)) for k, s in enumerate(semis))
    report = {
        "sandwich_lower": lower,
        "sandwich_upper": upper,
        "h_bound_ratio": lam_meas,
        "g_tilde_seminorms": semis,
        "C0_g_tilde": c0,
        "support_gap": 0.0,
    }
    if check:
        if c0 > schedule.C0:
            raise HypothesisFailed(21, f"[g_tilde]_k / (1 + delta1^(1-k)) reaches {c0:.4g} > C0 = {schedule.C0}")
        if lam_meas > schedule.Lambda:
            raise HypothesisFailed(23, f"h_0 / delta_1 leaves [1/Lambda, Lambda]: measured {lam_meas:.4g}")
        if min(lower, upper) < 0.0:
            raise HypothesisFailed(25, f"two-sided bound margins ({lower:.4g}, {upper:.4g})")
    return state, report
