"""Geometry of the polar cap: metric, strictly short map, boundary profile, cutoffs.

The cap of the sphere of radius ``R`` over the unit disk has, in polar
coordinates, the metric ``R^2/(R^2-r^2) dr^2 + r^2 dtheta^2``. The short map
is radial, ``u = phi(r) (cos theta, sin theta, 0, ..., 0)``, with ``phi``
obtained by smoothing a piecewise-linear speed profile.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy.interpolate import CubicHermiteSpline

from .fields import Grid, JetField, MetricField

__all__ = [
    "CapParams",
    "ParamsInfeasible",
    "Unresolvable",
    "RadialProfile",
    "SmoothPiecewise",
    "cap_metric",
    "build_phi",
    "build_short_map",
    "standard_cap_chart",
    "build_h",
    "build_cutoff",
    "ramp_profile",
    "shortness_gaps",
    "feasibility_search",
]


class ParamsInfeasible(ValueError):
    """A geometric constraint on (R, eta_param, eps_param) fails; the message names it."""


class Unresolvable(ValueError):
    """A cutoff transition band is too thin for the grid."""


# --- partial moments of the one-dimensional bump -----------------------------

_GL_X, _GL_W = legendre.leggauss(16)


def _bump1(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    ins = np.abs(t) < 1.0
    out[ins] = np.exp(-1.0 / (1.0 - t[ins] ** 2))
    return out


@functools.lru_cache(maxsize=None)
def _bump_mass() -> float:
    edges = np.linspace(-1.0, 1.0, 65)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1] - edges[0])
    return float(np.sum(_bump1(mid + half * _GL_X) * half * _GL_W))


def _partial_moments(sigma: np.ndarray, kmax: int = 2, panels: int = 24) -> np.ndarray:
    """``int_{-1}^{sigma} t^k b(t) dt`` for the unit-mass bump ``b``; shape ``(kmax+1, P)``."""
    sigma = np.clip(np.asarray(sigma, dtype=float), -1.0, 1.0)
    edges = -1.0 + (sigma[:, None] + 1.0) * np.linspace(0.0, 1.0, panels + 1)[None, :]
    a = edges[:, :-1]
    b = edges[:, 1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    t = mid[..., None] + half[..., None] * _GL_X  # (P, panels, 16)
    base = _bump1(t) * half[..., None] * _GL_W / _bump_mass()
    return np.stack([np.sum(base * t**k, axis=(1, 2)) for k in range(kmax + 1)])


@dataclass(frozen=True)
class SmoothPiecewise:
    """A piecewise polynomial convolved with a symmetric bump of radius ``width``.

    ``pieces`` lists ``(start, coefficients)`` in increasing order; each
    polynomial (ascending power coefficients, in the variable ``x``) holds from
    its start to the next start. The function must be continuous; its
    derivative may jump.
    """

    pieces: tuple
    width: float

    def _convolve(self, pieces, x):
        x = np.asarray(x, dtype=float)
        w = self.width
        out = np.zeros_like(x)
        starts = [p[0] for p in pieces] + [np.inf]
        for (a, coeffs), b in zip(pieces, starts[1:]):
            # contributions from t with x - t in [a, b), i.e. t in (x - b, x - a]
            hi = np.clip((x - a) / w, -1.0, 1.0)
            lo = np.clip((x - b) / w, -1.0, 1.0) if np.isfinite(b) else -np.ones_like(x)
            if a == -np.inf:
                hi = np.ones_like(x)
            live = hi > lo
            if not live.any():
                continue
            mom_hi = _partial_moments(hi[live], len(coeffs) - 1)
            mom_lo = _partial_moments(lo[live], len(coeffs) - 1)
            xs = x[live]
            # p(x - t) = sum_k c_k (x - t)^k = sum_j d_j t^j
            acc = np.zeros_like(xs)
            for k, ck in enumerate(coeffs):
                if ck == 0.0:
                    continue
                for j in range(k + 1):
                    d = ck * math.comb(k, j) * xs ** (k - j) * (-1.0) ** j
                    acc += d * w**j * (mom_hi[j] - mom_lo[j])
            out[live] += acc
        return out

    @staticmethod
    def _derivative(pieces):
        out = []
        for a, coeffs in pieces:
            dc = tuple(k * coeffs[k] for k in range(1, len(coeffs))) or (0.0,)
            out.append((a, dc))
        return out

    def _jumps(self, pieces):
        jumps = []
        for (a0, c0), (a1, c1) in zip(pieces[:-1], pieces[1:]):
            left = sum(c * a1**k for k, c in enumerate(c0))
            right = sum(c * a1**k for k, c in enumerate(c1))
            if right != left:
                jumps.append((a1, right - left))
        return jumps

    def value(self, x):
        return self._convolve(list(self.pieces), x)

    def d1(self, x):
        return self._convolve(self._derivative(list(self.pieces)), x)

    def d2(self, x):
        dp = self._derivative(list(self.pieces))
        out = self._convolve(self._derivative(dp), x)
        x = np.asarray(x, dtype=float)
        for pos, jump in self._jumps(dp):
            out = out + jump * _bump1((x - pos) / self.width) / (self.width * _bump_mass())
        return out


# --- cap parameters ----------------------------------------------------------


@dataclass(frozen=True)
class CapParams:
    """Parameters of the short map.

    ``eta_param`` is the slope of ``phi`` near the origin, ``eps_param`` the
    length of the two outer pieces of the speed profile, and ``smoothing`` the
    bump radius used to round its corners, as a fraction of ``eps_param``.
    """

    R: float = 2.0
    eta_param: float = 0.94
    eps_param: float = 0.29
    sigma0_bar: float = 0.1
    smoothing: float = 0.25

    @property
    def gamma(self) -> float:
        return self.R / math.sqrt(self.R**2 - 1.0)

    @property
    def a_cap(self) -> float:
        return math.sqrt(1.0 - self.R**-2)

    @property
    def K(self) -> float:
        g = self.gamma
        return 1.0 - 1.0 / g + g**3 / self.R**2

    @property
    def beta(self) -> float:
        e, g = self.eps_param, self.gamma
        return (1.0 - e * (self.eta_param + g) + 0.5 * e**2 * self.K) / (1.0 - 2.0 * e)

    @property
    def slope(self) -> float:
        """``|h'(1)|`` for the boundary profile ``h``."""
        return 2.0 * (self.gamma - 1.0)

    def check(self) -> None:
        if self.R <= 1.0:
            raise ParamsInfeasible("R > 1")
        g, e, eta = self.gamma, self.eps_param, self.eta_param
        if not 2.0 - g < eta < 1.0:
            raise ParamsInfeasible(f"eta_param in ]2-gamma, 1[ = ]{2 - g:.4f}, 1[")
        if not 0.0 < e < 0.5:
            raise ParamsInfeasible("eps_param in ]0, 1/2[")
        if not 0.0 < self.smoothing < 1.0:
            raise ParamsInfeasible("smoothing fraction in ]0, 1[")
        beta = self.beta
        if not 0.0 < beta < 1.0:
            raise ParamsInfeasible(f"beta in ]0, 1[ (beta = {beta:.6f})")
        if not g - e * self.K > 1.0:
            raise ParamsInfeasible("speed profile > 1 on the outer piece (gamma - eps K > 1)")
        if not 1.0 - e * (eta + g) + 0.5 * e**2 * self.K > 0.0:
            raise ParamsInfeasible("positive numerator of beta")
        if not g**4 / self.R**2 - g * self.K < 0.0:
            raise ParamsInfeasible("radial gap decreasing at the rim (gamma^4/R^2 < gamma K)")


# --- radial profile ----------------------------------------------------------


@dataclass
class RadialProfile:
    """Smooth ``phi`` on [0, 1] tabulated on knots with two derivatives.

    Beyond ``r = 1`` the quadratic Taylor polynomial at 1 is used; it agrees
    with the unsmoothed outer piece.
    """

    params: CapParams
    knots: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    beta: float
    _splines: tuple = field(default=None, repr=False)

    def _spl(self):
        if self._splines is None:
            self._splines = (
                CubicHermiteSpline(self.knots, self.phi, self.dphi),
                CubicHermiteSpline(self.knots, self.dphi, self.d2phi),
            )
        return self._splines

    def evaluate(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(phi(r), phi'(r))`` for ``r >= 0``."""
        r = np.asarray(r, dtype=float)
        s0, s1 = self._spl()
        inner = r <= 1.0
        phi = np.empty_like(r)
        dphi = np.empty_like(r)
        phi[inner] = s0(r[inner])
        dphi[inner] = s1(r[inner])
        t = r[~inner] - 1.0
        k = self.d2phi[-1]
        phi[~inner] = self.phi[-1] + self.dphi[-1] * t + 0.5 * k * t**2
        dphi[~inner] = self.dphi[-1] + k * t
        return phi, dphi

    def phi_over_r(self, r: np.ndarray) -> np.ndarray:
        """``phi(r)/r`` with its limit ``eta_param`` at the origin."""
        r = np.asarray(r, dtype=float)
        phi, _ = self.evaluate(r)
        out = np.full_like(r, self.params.eta_param)
        pos = r > 0
        out[pos] = phi[pos] / r[pos]
        return out


def _phi_pieces(p: CapParams, beta: float):
    e, eta, g, K = p.eps_param, p.eta_param, p.gamma, p.K
    c2 = 1.0 - e
    v1 = eta * e
    v2 = v1 + beta * (c2 - e)
    s3 = g - K * e  # slope at the start of the outer piece
    # outer piece: v2 + s3 (r - c2) + K/2 (r - c2)^2 expanded in powers of r
    q0 = v2 - s3 * c2 + 0.5 * K * c2**2
    q1 = s3 - K * c2
    q2 = 0.5 * K
    return (
        (-np.inf, (0.0, eta)),
        (e, (v1 - beta * e, beta)),
        (c2, (q0, q1, q2)),
    )


def build_phi(params: CapParams, n_knots: int = 2**14) -> RadialProfile:
    """Smoothed radial profile with ``phi(0) = 0``, ``phi(1) = 1``, ``phi'(1) = gamma``.

    The corners of the speed profile are rounded by convolving with a bump of
    radius ``smoothing * eps_param``. Smoothing the quadratic outer piece shifts
    ``phi(1)`` by a second-moment term; the middle plateau is re-solved so that
    ``phi(1) = 1`` holds after smoothing.
    """
    params.check()
    width = params.smoothing * params.eps_param
    one = np.array([1.0])

    def phi_at_one(beta):
        return float(SmoothPiecewise(_phi_pieces(params, beta), width).value(one)[0])

    b0 = params.beta
    f0 = phi_at_one(b0)
    f1 = phi_at_one(b0 + 1e-3)
    beta = b0 + (1.0 - f0) * 1e-3 / (f1 - f0)
    sp = SmoothPiecewise(_phi_pieces(params, beta), width)
    knots = np.linspace(0.0, 1.0, n_knots + 1)
    prof = RadialProfile(params, knots, sp.value(knots), sp.d1(knots), sp.d2(knots), beta)
    # pin the endpoint values the smoothing reproduces only to rounding
    prof.phi[0] = 0.0
    prof.phi[-1] = 1.0
    prof.dphi[-1] = params.gamma
    gaps = shortness_gaps(prof, np.linspace(1e-4, 1.0 - 1e-4, 10_000))
    bad = np.argmin(np.minimum(gaps[0], gaps[1]))
    if gaps[0].min() <= 0.0:
        raise ParamsInfeasible(f"radial shortness gap positive (fails near r = {gaps[2][bad]:.4f})")
    if gaps[1].min() <= 0.0:
        raise ParamsInfeasible(f"angular shortness gap positive (fails near r = {gaps[2][bad]:.4f})")
    return prof


def shortness_gaps(prof: RadialProfile, r: np.ndarray):
    """Radial and angular eigenvalues of ``g - u^# e`` at radii ``r``."""
    R = prof.params.R
    phi, dphi = prof.evaluate(r)
    gr = R**2 / (R**2 - r**2) - dphi**2
    gt = 1.0 - (phi / r) ** 2
    return gr, gt, r


def feasibility_search(
    R: float = 2.0,
    etas: Sequence[float] | None = None,
    epss: Sequence[float] | None = None,
    r_max: float = 0.99,
):
    """Scan ``(eta_param, eps_param)`` for the best worst-case primitive cone margin.

    For each feasible pair the score is the minimum over ``r <= r_max`` of
    ``(tr - 2 |G_r - G_theta|) / tr`` where ``G_r, G_theta`` are the shortness
    gaps: positive exactly when the 0/60/120 degree coefficients of
    ``g - u^# e`` stay positive in every orientation. Returns
    ``(best_params, best_score, rejections)`` where ``rejections`` counts the
    binding constraint for infeasible pairs.
    """
    gamma = R / math.sqrt(R**2 - 1.0)
    etas = np.linspace(2.0 - gamma + 0.01, 0.99, 20) if etas is None else etas
    epss = np.linspace(0.05, 0.45, 17) if epss is None else epss
    rs = np.linspace(1e-3, r_max, 2000)
    best, best_score = None, -np.inf
    rejections: dict[str, int] = {}
    for eta in etas:
        for eps in epss:
            p = CapParams(R=R, eta_param=float(eta), eps_param=float(eps))
            try:
                prof = build_phi(p, n_knots=2**11)
            except ParamsInfeasible as exc:
                rejections[str(exc)] = rejections.get(str(exc), 0) + 1
                continue
            gr, gt, _ = shortness_gaps(prof, rs)
            tr = gr + gt
            score = float(np.min((tr - 2.0 * np.abs(gr - gt)) / tr))
            if score > best_score:
                best, best_score = p, score
    return best, best_score, rejections


# --- fields on the grid ------------------------------------------------------


def cap_metric(R: float, grid: Grid) -> MetricField:
    """``g_ij = delta_ij + x_i x_j / (R^2 - |x|^2)`` on the whole square."""
    x1, x2 = grid.x1, grid.x2
    den = R**2 - grid.r**2
    e = np.empty((3,) + grid.shape)
    e[0] = 1.0 + x1 * x1 / den
    e[1] = x1 * x2 / den
    e[2] = 1.0 + x2 * x2 / den
    return MetricField(grid, e)


def build_short_map(prof: RadialProfile, grid: Grid, dim: int = 8) -> JetField:
    """``u(x) = phi(|x|) x/|x|`` in the first two coordinates of ``R^dim``."""
    r = grid.r
    _, dphi = prof.evaluate(r)
    q = prof.phi_over_r(r)
    x1, x2 = grid.x1, grid.x2
    vals = np.zeros((dim,) + grid.shape)
    vals[0] = q * x1
    vals[1] = q * x2
    # jacobian: phi' xhat xhat^T + (phi/r)(I - xhat xhat^T)
    with np.errstate(invalid="ignore", divide="ignore"):
        u1 = np.where(r > 0, x1 / r, 1.0)
        u2 = np.where(r > 0, x2 / r, 0.0)
    diff = dphi - q
    jac = np.zeros((dim, 2) + grid.shape)
    jac[0, 0] = q + diff * u1 * u1
    jac[0, 1] = diff * u1 * u2
    jac[1, 0] = diff * u1 * u2
    jac[1, 1] = q + diff * u2 * u2
    return JetField(grid, vals, jac)


def standard_cap_chart(R: float, grid: Grid, dim: int = 3) -> JetField:
    """``(x1, x2, sqrt(R^2-|x|^2) - sqrt(R^2-1))``: the cap as a graph over the disk."""
    x1, x2 = grid.x1, grid.x2
    s = np.sqrt(R**2 - grid.r**2)
    vals = np.zeros((dim,) + grid.shape)
    vals[0] = x1
    vals[1] = x2
    vals[2] = s - math.sqrt(R**2 - 1.0)
    jac = np.zeros((dim, 2) + grid.shape)
    jac[0, 0] = 1.0
    jac[1, 1] = 1.0
    jac[2, 0] = -x1 / s
    jac[2, 1] = -x2 / s
    return JetField(grid, vals, jac)


def build_h(params: CapParams, grid: Grid) -> JetField:
    """Boundary profile ``h(r) = 2(gamma-1)(1-r)`` as a scalar jet."""
    lam = params.slope
    r = grid.r
    vals = lam * (1.0 - r)
    with np.errstate(invalid="ignore", divide="ignore"):
        jac = np.stack([np.where(r > 0, -lam * grid.x1 / r, 0.0), np.where(r > 0, -lam * grid.x2 / r, 0.0)])
    return JetField(grid, vals[None], jac[None])


_RAMP_CACHE: dict = {}


def ramp_profile(width: float = 0.24, n_knots: int = 4096):
    """Smooth ramp: 0 for s <= 0, 1 for s >= 1, the mollified linear ramp on [1/4, 3/4] between.

    Returns a callable ``s -> (value, first, second derivative)``.
    """
    key = (width, n_knots)
    if key not in _RAMP_CACHE:
        if not 0.0 < width < 0.25:
            raise ValueError("ramp smoothing width must lie in ]0, 1/4[")
        sp = SmoothPiecewise(((-np.inf, (0.0,)), (0.25, (-0.5, 2.0)), (0.75, (1.0,))), width)
        knots = np.linspace(0.0, 1.0, n_knots + 1)
        v, d1, d2 = sp.value(knots), sp.d1(knots), sp.d2(knots)
        v[0], d1[0], d2[0] = 0.0, 0.0, 0.0
        v[-1], d1[-1], d2[-1] = 1.0, 0.0, 0.0
        s0 = CubicHermiteSpline(knots, v, d1)
        s1 = CubicHermiteSpline(knots, d1, d2)

        def evaluate(s):
            s = np.asarray(s, dtype=float)
            sc = np.clip(s, 0.0, 1.0)
            val = np.where(s <= 0.0, 0.0, np.where(s >= 1.0, 1.0, np.clip(s0(sc), 0.0, 1.0)))
            der = np.where((s <= 0.0) | (s >= 1.0), 0.0, s1(sc))
            return val, der

        _RAMP_CACHE[key] = evaluate
    return _RAMP_CACHE[key]


def build_cutoff(delta: float, R: float, grid: Grid, width: float = 0.24, min_cells: float = 8.0) -> JetField:
    """Radial cutoff ``eta(x) = ramp((1 - R delta - |x|)/delta)``.

    It vanishes for ``|x| >= 1 - R delta`` and equals 1 for
    ``|x| <= 1 - (R+1) delta``.
    """
    if (R + 1.0) * delta >= 1.0:
        raise Unresolvable(f"(R+1) delta = {(R + 1) * delta:.4g} must be < 1")
    if delta / grid.spacing < min_cells:
        raise Unresolvable(f"transition band {delta:.4g} spans fewer than {min_cells} grid cells")
    ramp = ramp_profile(width)
    r = grid.r
    s = (1.0 - R * delta - r) / delta
    val, der = ramp(s)
    with np.errstate(invalid="ignore", divide="ignore"):
        g1 = np.where(r > 0, -der / delta * grid.x1 / r, 0.0)
        g2 = np.where(r > 0, -der / delta * grid.x2 / r, 0.0)
    return JetField(grid, val[None], np.stack([g1, g2])[None])
