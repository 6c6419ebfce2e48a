"""Rigidity side: Fourier pairing of Hölder functions, the connection identity, and the rim observable.

Periodic functions live on ``[-pi, pi)`` and are sampled at ``2N`` uniform
nodes ``x_j = -pi + j pi / N``. Their coefficients ``f_k``, ``|k| <= N``, are
those of ``f(x) = sum_k f_k exp(i k x)``; the Nyquist bin is split evenly
between ``k = N`` and ``k = -N`` so that real input gives conjugate-symmetric
coefficients.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fields import Grid, JetField, MetricField, fd_gradient, interp_local
from .mollify import Kernel, _convolve_arrays, bump, loglog_slope

__all__ = [
    "ImaginaryResidue",
    "SingularMetric",
    "PeriodicSample",
    "even_extension",
    "zero_extension",
    "bump_test",
    "holder_norm",
    "c1_holder_norm",
    "bilinear_pairing",
    "estimate_ratio",
    "lacunary_series",
    "lacunary_sweep",
    "bernstein_check",
    "decay_check",
    "CurveData",
    "circle_curve",
    "christoffel",
    "connection_defect",
    "rough_flat_immersion",
    "mollified_defects",
    "boundary_vectors",
    "boundary_observable",
    "write_table_csv",
]


class ImaginaryResidue(ValueError):
    """The Fourier double sum kept an imaginary part above tolerance."""


class SingularMetric(ValueError):
    """The metric is not invertible at some node."""


# ---------------------------------------------------------------------------
# periodic samples


@dataclass(frozen=True)
class PeriodicSample:
    """Uniform samples of a real ``2 pi``-periodic function and its coefficients."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 2 or s.size % 2:
            raise ValueError("need an even number (2N) of samples")
        object.__setattr__(self, "samples", s)

    @property
    def N(self) -> int:
        return self.samples.size // 2

    @staticmethod
    def nodes(N: int) -> np.ndarray:
        return -np.pi + np.arange(2 * N) * (np.pi / N)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], N: int) -> "PeriodicSample":
        return cls(np.asarray(fn(cls.nodes(N)), dtype=float))

    @functools.cached_property
    def coefficients(self) -> np.ndarray:
        """Complex coefficients for ``k = -N..N`` (index ``k + N``)."""
        N = self.N
        F = np.fft.fft(self.samples) / (2 * N)
        k = np.arange(2 * N)
        k = np.where(k <= N, k, k - 2 * N)
        # the nodes start at -pi, which multiplies bin k by (-1)^k
        F = F * np.where(k % 2 == 0, 1.0, -1.0)
        out = np.zeros(2 * N + 1, dtype=complex)
        for idx in range(2 * N):
            kk = k[idx]
            if kk == N:
                out[0] += 0.5 * F[idx]
                out[2 * N] += 0.5 * F[idx]
            else:
                out[kk + N] = F[idx]
        return out

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Trigonometric interpolant at arbitrary points."""
        x = np.asarray(x, dtype=float)
        e = np.exp(1j * np.multiply.outer(x, self.wavenumbers))
        return (e @ self.coefficients).real

    def derivative(self) -> "PeriodicSample":
        """Spectral derivative, sampled on the same nodes."""
        N = self.N
        dc = 1j * self.wavenumbers * self.coefficients
        # the split Nyquist bins cancel, so fold back with the FFT
        folded = np.concatenate([dc[N : 2 * N], dc[: N]]) + 0j
        folded[N] += dc[2 * N]
        k = np.arange(2 * N)
        k = np.where(k <= N, k, k - 2 * N)
        vals = np.fft.ifft(folded * np.where(k % 2 == 0, 1.0, -1.0)) * (2 * N)
        return PeriodicSample(vals.real)

    def roundtrip_error(self) -> float:
        return float(np.abs(self.evaluate(self.nodes(self.N)) - self.samples).max())


def even_extension(fn: Callable[[np.ndarray], np.ndarray], N: int) -> PeriodicSample:
    """Periodic sample of ``x -> fn(|x|)`` for ``fn`` given on ``[0, pi]`` (keeps C^alpha)."""
    return PeriodicSample.from_function(lambda x: fn(np.abs(x)), N)


def zero_extension(fn: Callable[[np.ndarray], np.ndarray], N: int) -> PeriodicSample:
    """Periodic sample of ``fn`` on ``[0, pi]`` extended by zero on ``[-pi, 0)``.

    Keeps ``C^{1,alpha}`` when ``fn`` and ``fn'`` vanish at both endpoints.
    """

    def ext(x):
        out = np.zeros_like(x)
        pos = x >= 0.0
        out[pos] = fn(x[pos])
        return out

    return PeriodicSample.from_function(ext, N)


def bump_test(center: float, radius: float, N: int) -> PeriodicSample:
    """Smooth bump supported in ``]center - radius, center + radius[``, zero-extended."""
    if center - radius < 0.0 or center + radius > np.pi:
        raise ValueError("bump support must lie in [0, pi]")
    return zero_extension(lambda x: bump((x - center) / radius), N)


# ---------------------------------------------------------------------------
# Hölder norms of periodic samples


def holder_norm(values: np.ndarray, alpha: float, period: float = 2.0 * np.pi) -> float:
    """``sup |f| + [f]_alpha`` over all node pairs, with periodic distance."""
    v = np.asarray(values, dtype=float)
    n = v.size
    h = period / n
    semi = 0.0
    for d in range(1, n // 2 + 1):
        diff = float(np.abs(np.roll(v, -d) - v).max())
        semi = max(semi, diff / (d * h) ** alpha)
    return float(np.abs(v).max()) + semi


def c1_holder_norm(f: PeriodicSample, alpha: float) -> float:
    """``sup |f| + sup |f'| + [f']_alpha``."""
    d = f.derivative().samples
    return float(np.abs(f.samples).max()) + holder_norm(d, alpha)


# ---------------------------------------------------------------------------
# the bilinear pairing


def bilinear_pairing(f: PeriodicSample, g: PeriodicSample, phi: PeriodicSample, tol: float = 1e-10) -> float:
    """``int_{-pi}^{pi} f g' phi`` from the Fourier double sum.

    With real ``phi`` the sum over ``k`` pairs ``(f g')_k`` with
    ``conj(phi_k)``; the ``2 pi`` is the measure of the circle.
    """
    N = f.N
    if g.N != N or phi.N != N:
        raise ValueError("all three samples need the same N")
    fk = f.coefficients
    dg = 1j * g.wavenumbers * g.coefficients
    prod = np.convolve(fk, dg)[N : 3 * N + 1]  # wavenumbers -N..N
    val = 2.0 * np.pi * np.sum(prod * np.conj(phi.coefficients))
    if abs(val.imag) > tol * max(1.0, abs(val.real)):
        raise ImaginaryResidue(f"imaginary part {val.imag:.3g} exceeds {tol:g}")
    return float(val.real)


def estimate_ratio(f: PeriodicSample, g: PeriodicSample, phi: PeriodicSample, alpha: float) -> float:
    """``|int f g' phi| / (||f||_alpha ||g||_alpha ||phi||_{1,alpha})``."""
    num = abs(bilinear_pairing(f, g, phi))
    den = holder_norm(f.samples, alpha) * holder_norm(g.samples, alpha) * c1_holder_norm(phi, alpha)
    return num / den


def lacunary_series(alpha: float, J: int, N: int, conjugate: bool = False) -> PeriodicSample:
    """``sum_{j=1..J} 2^{-alpha j} cos(2^j x)`` (``sin`` when ``conjugate``)."""
    if 2**J >= N:
        raise ValueError(f"N = {N} cannot resolve frequency 2^{J}")
    trig = np.sin if conjugate else np.cos

    def fn(x):
        return sum(2.0 ** (-alpha * j) * trig(2.0**j * x) for j in range(1, J + 1))

    return PeriodicSample.from_function(fn, N)


def lacunary_sweep(
    alpha: float,
    J_values: Sequence[int],
    phi: Optional[Callable[[int], PeriodicSample]] = None,
    conjugate: bool = False,
    oversample: int = 8,
) -> list[dict]:
    """Pairing ratio along ``f = g = lacunary series`` as the top frequency grows.

    With ``conjugate`` the second factor is the sine series, which makes the
    diagonal terms of ``f g'`` add up against a nonnegative test function.
    """
    rows = []
    for J in J_values:
        N = oversample * 2**J
        f = lacunary_series(alpha, J, N)
        g = lacunary_series(alpha, J, N, conjugate=conjugate)
        test = phi(N) if phi is not None else bump_test(np.pi / 2, np.pi / 2, N)
        pairing = bilinear_pairing(f, g, test)
        nf, ng = holder_norm(f.samples, alpha), holder_norm(g.samples, alpha)
        nphi = c1_holder_norm(test, alpha)
        rows.append(
            {
                "J": int(J),
                "alpha": float(alpha),
                "pairing": pairing,
                "norm_f": nf,
                "norm_g": ng,
                "norm_phi": nphi,
                "ratio": abs(pairing) / (nf * ng * nphi),
            }
        )
    return rows


def bernstein_check(f: PeriodicSample, alpha: float, beta: Optional[float] = None) -> float:
    """``sum_k (1 + |k|^{2 beta}) |f_k|^2 / ||f||_alpha^2`` with ``beta = alpha - 0.05`` by default."""
    beta = alpha - 0.05 if beta is None else beta
    k = np.abs(f.wavenumbers).astype(float)
    lhs = float(np.sum((1.0 + k ** (2.0 * beta)) * np.abs(f.coefficients) ** 2))
    return lhs / holder_norm(f.samples, alpha) ** 2


def decay_check(phi: PeriodicSample, alpha: float) -> float:
    """``max_k |phi_k| (1 + |k|)^{1 + alpha} / ||phi||_{1,alpha}``."""
    k = np.abs(phi.wavenumbers).astype(float)
    scaled = np.abs(phi.coefficients) * (1.0 + k) ** (1.0 + alpha)
    return float(scaled.max()) / c1_holder_norm(phi, alpha)


# ---------------------------------------------------------------------------
# connection identity


@dataclass
class CurveData:
    """A curve in the disk with a vector field along it.

    ``t`` holds the parameter samples: the ``2N`` periodic nodes for a closed
    curve, or ``N + 1`` nodes ``0, pi/N, ..., pi`` for an open one. Vectors
    are stored as ``(2, T)`` arrays in the disk coordinates.
    """

    t: np.ndarray
    points: np.ndarray
    velocity: np.ndarray
    field: np.ndarray
    field_dot: np.ndarray
    closed: bool = True
    metric: Optional[np.ndarray] = None  # (3, T)
    christoffel: Optional[np.ndarray] = None  # (2, 2, 2, T)

    def __post_init__(self):
        speed = np.hypot(self.velocity[0], self.velocity[1])
        if speed.min() <= 1e-12 * max(1.0, speed.max()):
            raise ValueError("curve speed vanishes somewhere")
        if self.christoffel is not None:
            sym = np.abs(self.christoffel - np.swapaxes(self.christoffel, 1, 2)).max()
            if sym > 1e-12:
                raise ValueError(f"Christoffel symbols not symmetric (defect {sym:.3g})")

    @property
    def N(self) -> int:
        return self.t.size // 2 if self.closed else self.t.size - 1


def circle_curve(radius: float, N: int, center=(0.0, 0.0)) -> CurveData:
    """Closed circle ``t -> center + radius (cos t, sin t)`` carrying its velocity field."""
    t = PeriodicSample.nodes(N)
    c = np.asarray(center, dtype=float)[:, None]
    pts = c + radius * np.stack([np.cos(t), np.sin(t)])
    vel = radius * np.stack([-np.sin(t), np.cos(t)])
    acc = radius * np.stack([-np.cos(t), -np.sin(t)])
    return CurveData(t, pts, vel, vel.copy(), acc, closed=True)


def christoffel(g: MetricField, mask: Optional[np.ndarray] = None, atol: float = 1e-12) -> np.ndarray:
    """Christoffel symbols ``Gamma[i, j, k]`` of a metric on the grid, shape ``(2, 2, 2, n, n)``.

    Derivatives of the metric entries are second-order finite differences.
    """
    grid = g.grid
    mask = grid.mask if mask is None else mask
    e = g.entries
    g11, g12, g22 = e
    det = g11 * g22 - g12**2
    if (det[mask] <= atol).any():
        i, j = np.argwhere(mask & (det <= atol))[0]
        raise SingularMetric(f"metric determinant {det[i, j]:.3g} at node ({i}, {j})")
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.array([[g22, -g12], [-g12, g11]]) / np.where(det != 0.0, det, np.nan)
    full = np.array([[g11, g12], [g12, g22]])
    d = fd_gradient(full, grid.spacing)  # d[a, b, k] = d_k g_ab
    gamma = np.zeros((2, 2, 2) + grid.shape)
    for i in range(2):
        for j in range(2):
            for k in range(j, 2):
                acc = 0.0
                for l in range(2):
                    acc = acc + inv[i, l] * (d[l, k, j] + d[l, j, k] - d[j, k, l])
                gamma[i, j, k] = 0.5 * acc
                gamma[i, k, j] = gamma[i, j, k]
    return gamma


def _curve_metric(curve: CurveData, g: MetricField) -> tuple[np.ndarray, np.ndarray]:
    pts = curve.points.T
    if curve.metric is None:
        metric = interp_local(g.entries, g.grid, pts)
    else:
        metric = curve.metric
    if curve.christoffel is None:
        gam = interp_local(christoffel(g), g.grid, pts)
    else:
        gam = curve.christoffel
    return metric, gam


def _to_periodic(values: np.ndarray, curve: CurveData) -> np.ndarray:
    """Samples on the periodic nodes; open curves are reflected evenly."""
    if curve.closed:
        return values
    N = curve.N
    # nodes -pi + j pi/N, j = 0..2N-1 correspond to |x| = |j - N| pi / N
    idx = np.abs(np.arange(2 * N) - N)
    return values[..., idx]


def _default_tests(N: int) -> list[PeriodicSample]:
    q = np.pi / 4
    return [bump_test(c, q, N) for c in (q, 2 * q, 3 * q)]


def connection_defect(
    u: JetField,
    g: MetricField,
    curve: CurveData,
    tests: Optional[Sequence[PeriodicSample]] = None,
    return_terms: bool = False,
):
    """Weak defect of the identity between the ambient and the intrinsic connection.

    For each tangent index ``l`` and each test function ``psi`` compare
    ``int <d/dt (u_* W), d_l u> psi`` (evaluated through
    :func:`bilinear_pairing`) with
    ``int sum_i (dW^i/dt + Gamma^i_jk gdot^j W^k) g_il psi``. The defect is
    the largest absolute difference.
    """
    N = curve.N
    tests = _default_tests(N) if tests is None else list(tests)
    jac = interp_local(u.jacobian, u.grid, curve.points.T)  # (m, 2, T)
    push = np.einsum("mit,it->mt", jac, curve.field)
    metric, gam = _curve_metric(curve, g)
    gfull = np.array([[metric[0], metric[1]], [metric[1], metric[2]]])
    cov = curve.field_dot + np.einsum("ijkt,jt,kt->it", gam, curve.velocity, curve.field)
    rhs = np.einsum("it,ilt->lt", cov, gfull)  # (2, T)
    push_p = _to_periodic(push, curve)
    jac_p = _to_periodic(jac, curve)
    rhs_p = _to_periodic(rhs, curve)
    weight = 2.0 * np.pi / (2 * N)
    defect = 0.0
    terms = []
    for l in range(2):
        for m, psi in enumerate(tests):
            lhs = 0.0
            for c in range(jac.shape[0]):
                lhs += bilinear_pairing(PeriodicSample(jac_p[c, l]), PeriodicSample(push_p[c]), psi)
            right = float(np.sum(rhs_p[l] * psi.samples) * weight)
            terms.append({"index": l, "test": m, "lhs": lhs, "rhs": right})
            defect = max(defect, abs(lhs - right))
    if return_terms:
        return defect, terms
    return defect


def rough_flat_immersion(grid: Grid, alpha: float, J: int, amplitude: float = 0.3) -> JetField:
    """Isometric immersion of the flat disk into R^3 with a C^alpha jacobian.

    ``u(x) = (c(x_1), x_2)`` where ``c`` is the unit-speed plane curve with
    turning angle ``theta(s) = amplitude sum_{j=1..J} 2^{-alpha j} cos(2^j s)``.
    """
    s = grid.axis
    theta = amplitude * sum(2.0 ** (-alpha * j) * np.cos(2.0**j * s) for j in range(1, J + 1))
    ct, st = np.cos(theta), np.sin(theta)
    h = grid.spacing
    c1 = np.concatenate([[0.0], np.cumsum(0.5 * h * (ct[1:] + ct[:-1]))])
    c2 = np.concatenate([[0.0], np.cumsum(0.5 * h * (st[1:] + st[:-1]))])
    n = grid.n
    vals = np.zeros((3, n, n))
    vals[0] = c1[:, None]
    vals[1] = c2[:, None]
    vals[2] = grid.x2
    jac = np.zeros((3, 2, n, n))
    jac[0, 0] = ct[:, None]
    jac[1, 0] = st[:, None]
    jac[2, 1] = 1.0
    return JetField(grid, vals, jac)


def mollified_defects(
    u: JetField,
    g: MetricField,
    curve: CurveData,
    eps_list: Sequence[float],
) -> list[dict]:
    """Connection defect of ``u * phi_eps`` against the metric of ``u`` for each ``eps``."""
    rows = []
    for eps in eps_list:
        k = Kernel(eps, u.grid.spacing)
        jac = _convolve_arrays(u.jacobian, k)
        ue = JetField(u.grid, u.values, jac)
        rows.append({"eps": float(eps), "defect": connection_defect(ue, g, curve)})
    if len(rows) >= 2:
        slope = loglog_slope([r["eps"] for r in rows], [max(r["defect"], 1e-300) for r in rows])
        for r in rows:
            r["slope"] = slope
    return rows


# ---------------------------------------------------------------------------
# boundary observable


def boundary_vectors(v: JetField, R: float, points: Optional[np.ndarray] = None):
    """``Y = v_* X`` and ``Z`` at points of the unit circle.

    ``X`` is the inward unit normal of the rim for the cap metric rescaled by
    ``1/R``; in disk coordinates ``(v/R)_* X = -(1/gamma) d_r v`` with
    ``gamma = R / sqrt(R^2 - 1)``. ``Z`` is the inward unit radial vector of
    the boundary circle. By default the points are the rim nodes pushed
    radially onto the circle; jacobians are interpolated there.
    """
    grid = v.grid
    if points is None:
        rim = grid.rim
        x = np.stack([grid.x1[rim], grid.x2[rim]], axis=1)
        points = x / np.hypot(x[:, 0], x[:, 1])[:, None]
    gamma = R / math.sqrt(R * R - 1.0)
    jac = interp_local(v.jacobian, grid, points)  # (m, 2, P)
    radial = np.einsum("mkp,pk->mp", jac, points)
    Y = -radial / gamma
    Z = np.zeros_like(Y)
    Z[0] = -points[:, 0]
    Z[1] = -points[:, 1]
    return Y, Z


def boundary_observable(v: JetField, R: float, points: Optional[np.ndarray] = None) -> float:
    """Mean of ``<Y, Z>`` over the rim."""
    Y, Z = boundary_vectors(v, R, points)
    return float(np.mean(np.sum(Y * Z, axis=0)))


def write_table_csv(rows: Sequence[dict], path) -> None:
    """Rows of equal keys as CSV with full-precision floats."""
    if not rows:
        raise ValueError("no rows")
    keys = list(rows[0].keys())
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else r[k] for k in keys])
