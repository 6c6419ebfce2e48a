"""Mollification by a compactly supported bump and commutator measurements."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, signal

from .fields import Grid, JetField, MetricField, fd_gradient, pullback, sym_norm

__all__ = [
    "Kernel",
    "SupportViolation",
    "convolve",
    "convolve_jet",
    "commutator_test",
    "pullback_commutator_slope",
    "loglog_slope",
]


class SupportViolation(ValueError):
    """The field to be mollified does not vanish within one kernel radius of the rim."""


def bump(t: np.ndarray) -> np.ndarray:
    """Unnormalised C-infinity bump ``exp(-1/(1-t^2))`` on ``|t| < 1``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True)
class Kernel:
    """Radial bump of radius ``ell`` discretised on a grid with the given spacing."""

    ell: float
    spacing: float

    @property
    def half_width(self) -> int:
        return int(np.floor(self.ell / self.spacing))

    @property
    def weights(self) -> np.ndarray:
        m = self.half_width
        if m == 0:
            return np.ones((1, 1))
        offs = np.arange(-m, m + 1) * self.spacing
        rr = np.hypot(offs[:, None], offs[None, :]) / self.ell
        w = bump(rr)
        return w / w.sum()

    @property
    def support_radius(self) -> float:
        # nonzero weights sit strictly inside the disk of radius ell
        return min(self.ell, self.half_width * self.spacing * np.sqrt(2.0))


def _convolve_arrays(f: np.ndarray, kernel: Kernel) -> np.ndarray:
    w = kernel.weights
    lead = f.shape[:-2]
    flat = f.reshape((-1,) + f.shape[-2:])
    out = np.empty_like(flat)
    direct = kernel.half_width <= 4
    for c in range(flat.shape[0]):
        if not flat[c].any():
            out[c] = 0.0
        elif direct:
            out[c] = ndimage.correlate(flat[c], w, mode="constant", cval=0.0)
        else:
            out[c] = signal.fftconvolve(flat[c], w, mode="same")
    return out.reshape(lead + f.shape[-2:])


def convolve(
    f: np.ndarray,
    kernel: Kernel,
    grid: Grid,
    check_support: bool = True,
    atol: float = 0.0,
) -> np.ndarray:
    """Discrete convolution of ``f`` (shape ``(..., n, n)``) with the kernel.

    ``f`` is extended by zero outside the square. When ``check_support`` is set
    the input must vanish at every node within ``ell`` of the unit circle and
    beyond it; otherwise :class:`SupportViolation` is raised.
    """
    f = np.asarray(f, dtype=float)
    if check_support:
        outer = grid.r >= 1.0 - kernel.ell
        peak = np.abs(f).reshape((-1,) + grid.shape).max(axis=0)
        bad = outer & (peak > atol)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise SupportViolation(
                f"field is nonzero at node ({i}, {j}), |x| = {grid.r[i, j]:.6f}, within {kernel.ell:.3g} of the rim"
            )
    return _convolve_arrays(f, kernel)


def convolve_jet(v: JetField, kernel: Kernel, check_support: bool = True) -> JetField:
    """Mollify values and jacobian (convolution commutes with differentiation)."""
    vals = convolve(v.values, kernel, v.grid, check_support)
    jac = convolve(v.jacobian, kernel, v.grid, check_support=False)
    return JetField(v.grid, vals, jac)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.maximum(np.asarray(ys, dtype=float), 1e-300))
    return float(np.polyfit(lx, ly, 1)[0])


def _inner_mask(grid: Grid, radius: float) -> np.ndarray:
    return grid.r <= radius


def commutator_field(f: np.ndarray, g: np.ndarray, kernel: Kernel, grid: Grid) -> np.ndarray:
    """``(fg)*phi - (f*phi)(g*phi)`` on the grid."""
    fg = _convolve_arrays(f * g, kernel)
    return fg - _convolve_arrays(f, kernel) * _convolve_arrays(g, kernel)


def commutator_test(
    f: np.ndarray,
    g: np.ndarray,
    grid: Grid,
    ell_list: Sequence[float],
    radius: float = 0.5,
    return_values: bool = False,
):
    """Log-log slope of the sup of the convolution commutator against ``ell``.

    The sup is taken over the ball of the given radius so that zero extension
    at the square's edges does not enter.
    """
    inner = _inner_mask(grid, radius)
    vals = []
    for ell in ell_list:
        k = Kernel(ell, grid.spacing)
        c = commutator_field(f, g, k, grid)
        vals.append(float(np.abs(c[inner]).max()))
    slope = loglog_slope(ell_list, vals)
    if return_values:
        return slope, vals
    return slope


def pullback_error(v: JetField, eps: float, radius: float = 0.5) -> float:
    """C^1 norm over the ball of ``(v*phi_eps)^# e - v^# e``."""
    grid = v.grid
    k = Kernel(eps, grid.spacing)
    jac = _convolve_arrays(v.jacobian, k)
    mv = pullback(JetField(grid, v.values, jac))
    err = mv.entries - pullback(v).entries
    inner = _inner_mask(grid, radius)
    c0 = float(sym_norm(err)[inner].max())
    derr = fd_gradient(err, grid.spacing)
    c1 = float(max(sym_norm(derr[:, 0])[inner].max(), sym_norm(derr[:, 1])[inner].max()))
    return c0 + c1


def pullback_commutator_slope(
    v: JetField,
    eps_list: Sequence[float],
    radius: float = 0.5,
    return_values: bool = False,
):
    """Slope of ``||(v*phi_eps)^# e - v^# e||_{C^1(B_radius)}`` against ``eps``."""
    vals = [pullback_error(v, eps, radius) for eps in eps_list]
    if max(vals) == 0.0:
        slope = float("inf")
    else:
        slope = loglog_slope(eps_list, vals)
    if return_values:
        return slope, vals
    return slope
