"""Sampled fields on the closed unit disk.

Fields live on a Cartesian grid over the square [-1, 1]^2 with a boolean mask
selecting the closed unit disk. Array layout is ``(component, ..., i, j)`` with
``i`` indexing ``x1`` and ``j`` indexing ``x2`` (``indexing="ij"``).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Grid",
    "JetField",
    "MetricField",
    "HolderEstimate",
    "fd_gradient",
    "sample",
    "pullback",
    "derivative_stack",
    "holder_seminorm",
    "seminorm",
    "check_interpolation",
    "write_csv",
    "sym_eigvalsh",
    "sym_norm",
    "interp_local",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid over [-1, 1]^2 with a mask for the closed unit disk."""

    n_per_axis: int

    def __post_init__(self):
        if self.n_per_axis < 3:
            raise ValueError("n_per_axis must be at least 3")

    @property
    def n(self) -> int:
        return self.n_per_axis

    @property
    def spacing(self) -> float:
        return 2.0 / (self.n_per_axis - 1)

    @functools.cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n_per_axis)

    @functools.cached_property
    def x1(self) -> np.ndarray:
        return np.broadcast_to(self.axis[:, None], self.shape)

    @functools.cached_property
    def x2(self) -> np.ndarray:
        return np.broadcast_to(self.axis[None, :], self.shape)

    @functools.cached_property
    def r(self) -> np.ndarray:
        return np.hypot(self.axis[:, None], self.axis[None, :])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_per_axis, self.n_per_axis)

    @functools.cached_property
    def mask(self) -> np.ndarray:
        # a hair of slack so that nodes exactly on the circle are kept
        return self.r <= 1.0 + 1e-12

    def annulus(self, lo: float, hi: float) -> np.ndarray:
        """Mask of nodes with ``lo <= |x| <= hi``."""
        return (self.r >= lo - 1e-12) & (self.r <= hi + 1e-12)

    def ball(self, radius: float) -> np.ndarray:
        return self.r <= radius + 1e-12

    @functools.cached_property
    def rim(self) -> np.ndarray:
        """Masked nodes with an unmasked 4-neighbour."""
        m = self.mask
        inner = m.copy()
        inner[1:, :] &= m[:-1, :]
        inner[:-1, :] &= m[1:, :]
        inner[:, 1:] &= m[:, :-1]
        inner[:, :-1] &= m[:, 1:]
        inner[0, :] = inner[-1, :] = False
        inner[:, 0] = inner[:, -1] = False
        return m & ~inner


@dataclass
class JetField:
    """Vector-valued map sampled with its jacobian.

    ``values`` has shape ``(dim, n, n)`` and ``jacobian`` has shape
    ``(dim, 2, n, n)`` with ``jacobian[c, k] = d values[c] / d x_k``.
    """

    grid: Grid
    values: np.ndarray
    jacobian: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.shape[1:] != self.grid.shape:
            raise ValueError("values do not match the grid")
        if self.jacobian is None:
            self.jacobian = fd_gradient(self.values, self.grid.spacing, self.grid.mask)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def component(self, idx) -> "JetField":
        return JetField(self.grid, self.values[idx], self.jacobian[idx])

    def __sub__(self, other: "JetField") -> "JetField":
        return JetField(self.grid, self.values - other.values, self.jacobian - other.jacobian)

    def __add__(self, other: "JetField") -> "JetField":
        return JetField(self.grid, self.values + other.values, self.jacobian + other.jacobian)

    def padded(self, dim: int) -> "JetField":
        """Embed into a higher dimensional target by appending zero components."""
        if dim < self.dim:
            raise ValueError("cannot pad to a smaller dimension")
        vals = np.zeros((dim,) + self.grid.shape)
        jac = np.zeros((dim, 2) + self.grid.shape)
        vals[: self.dim] = self.values
        jac[: self.dim] = self.jacobian
        return JetField(self.grid, vals, jac)


@dataclass
class MetricField:
    """Symmetric 2x2 tensor per node, stored as ``(g11, g12, g22)``."""

    grid: Grid
    entries: np.ndarray

    def __post_init__(self):
        if self.entries.shape[0] != 3:
            raise ValueError("entries must have leading dimension 3")

    @classmethod
    def identity(cls, grid: Grid) -> "MetricField":
        e = np.zeros((3,) + grid.shape)
        e[0] = 1.0
        e[2] = 1.0
        return cls(grid, e)

    def __add__(self, other: "MetricField") -> "MetricField":
        return MetricField(self.grid, self.entries + other.entries)

    def __sub__(self, other: "MetricField") -> "MetricField":
        return MetricField(self.grid, self.entries - other.entries)

    def scaled(self, factor) -> "MetricField":
        return MetricField(self.grid, self.entries * factor)

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        return sym_eigvalsh(self.entries)

    def min_eigenvalue(self, mask: Optional[np.ndarray] = None) -> float:
        lo, _ = self.eigenvalues()
        m = self.grid.mask if mask is None else mask
        return float(lo[m].min())

    def norm(self) -> np.ndarray:
        """Frobenius norm per node."""
        return sym_norm(self.entries)

    def sup_norm(self, mask: Optional[np.ndarray] = None) -> float:
        m = self.grid.mask if mask is None else mask
        return float(self.norm()[m].max(initial=0.0))


@dataclass(frozen=True)
class HolderEstimate:
    order: int
    exponent: float
    value: float
    pair_budget: int
    degraded: bool = False


def sym_eigvalsh(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (low, high) of symmetric 2x2 tensors stored as (s11, s12, s22)."""
    mean = 0.5 * (s[0] + s[2])
    rad = np.hypot(0.5 * (s[0] - s[2]), s[1])
    return mean - rad, mean + rad


def sym_norm(s: np.ndarray) -> np.ndarray:
    return np.sqrt(s[0] ** 2 + 2.0 * s[1] ** 2 + s[2] ** 2)


def _shift(a: np.ndarray, step: int, axis: int) -> np.ndarray:
    """Value at index ``i + step`` along ``axis``; out-of-range entries are 0."""
    out = np.zeros_like(a)
    n = a.shape[axis]
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis] = slice(step, n)
        dst[axis] = slice(0, n - step)
    else:
        src[axis] = slice(0, n + step)
        dst[axis] = slice(-step, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def fd_gradient(f: np.ndarray, spacing: float, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Second-order finite-difference gradient of ``f`` over its last two axes.

    Returns an array of shape ``f.shape[:-2] + (2,) + f.shape[-2:]``. Centered
    differences are used where both neighbours lie in ``mask``; otherwise a
    one-sided second-order stencil pointing into the mask is used. Without a
    mask only the square's edges get one-sided stencils.
    """
    f = np.asarray(f, dtype=float)
    lead = f.shape[:-2]
    out = np.empty(lead + (2,) + f.shape[-2:])
    for k in range(2):
        axis = f.ndim - 2 + k
        out[(Ellipsis, k, slice(None), slice(None))] = np.gradient(f, spacing, axis=axis, edge_order=2)
    if mask is None:
        return out
    mask = np.asarray(mask, dtype=bool)
    for k in range(2):
        has_p = _shift(mask, 1, k)
        has_m = _shift(mask, -1, k)
        bad = mask & ~(has_p & has_m)
        if not bad.any():
            continue
        has_p2 = _shift(mask, 2, k)
        has_m2 = _shift(mask, -2, k)
        fwd = bad & has_p & has_p2
        bwd = bad & ~fwd & has_m & has_m2
        fwd1 = bad & ~fwd & ~bwd & has_p
        bwd1 = bad & ~fwd & ~bwd & ~fwd1 & has_m
        axis = f.ndim - 2 + k
        comp = out[(Ellipsis, k, slice(None), slice(None))]
        if fwd.any():
            d = (-3.0 * f + 4.0 * _shift(f, 1, axis) - _shift(f, 2, axis)) / (2.0 * spacing)
            comp[..., fwd] = d[..., fwd]
        if bwd.any():
            d = (3.0 * f - 4.0 * _shift(f, -1, axis) + _shift(f, -2, axis)) / (2.0 * spacing)
            comp[..., bwd] = d[..., bwd]
        if fwd1.any():
            d = (_shift(f, 1, axis) - f) / spacing
            comp[..., fwd1] = d[..., fwd1]
        if bwd1.any():
            d = (f - _shift(f, -1, axis)) / spacing
            comp[..., bwd1] = d[..., bwd1]
    return out


def sample(
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grid: Grid,
    dim: int,
    jac: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
) -> JetField:
    """Sample a closed-form map on the grid.

    ``fn(x1, x2)`` returns an array of shape ``(dim, n, n)``; ``jac(x1, x2)``
    returns ``(dim, 2, n, n)``. Without ``jac`` the jacobian is computed by
    finite differences.
    """
    x1, x2 = grid.x1, grid.x2
    vals = np.array(np.broadcast_to(fn(x1, x2), (dim,) + grid.shape), dtype=float)
    jacobian = None
    if jac is not None:
        jacobian = np.array(np.broadcast_to(jac(x1, x2), (dim, 2) + grid.shape), dtype=float)
    return JetField(grid, vals, jacobian)


def pullback(v: JetField) -> MetricField:
    """Induced metric of ``v``: the Gram matrix of its two partial derivatives."""
    j = v.jacobian
    e = np.empty((3,) + v.grid.shape)
    e[0] = np.einsum("cij,cij->ij", j[:, 0], j[:, 0])
    e[1] = np.einsum("cij,cij->ij", j[:, 0], j[:, 1])
    e[2] = np.einsum("cij,cij->ij", j[:, 1], j[:, 1])
    return MetricField(v.grid, e)


def _as_jet(f) -> JetField:
    if isinstance(f, JetField):
        return f
    raise TypeError("expected a JetField")


def derivative_stack(f: JetField, k: int) -> np.ndarray:
    """All order-``k`` partial derivatives of ``f``.

    Returns shape ``(n_multi, dim, n, n)``: one entry per multi-index of order
    ``k`` (in the order (), (1,), (2,), (11,), (12,), (22,)).
    """
    if k == 0:
        return f.values[None]
    if k == 1:
        return np.moveaxis(f.jacobian, 1, 0)
    if k == 2:
        hess = fd_gradient(f.jacobian, f.grid.spacing, f.grid.mask)  # (dim, 2, 2, n, n)
        mixed = 0.5 * (hess[:, 0, 1] + hess[:, 1, 0])
        return np.stack([hess[:, 0, 0], mixed, hess[:, 1, 1]])
    if k == 3:
        hess = derivative_stack(f, 2)
        third = fd_gradient(hess, f.grid.spacing, f.grid.mask)  # (3, dim, 2, n, n)
        return np.stack([third[0, :, 0], third[0, :, 1], third[2, :, 0], third[2, :, 1]])
    raise ValueError("order must be 0..3")


def _lattice_offsets(n: int) -> list[tuple[int, int]]:
    offs = []
    step = 1
    while step < n:
        offs.extend([(step, 0), (0, step), (step, step), (step, -step)])
        step *= 2
    return offs


def holder_seminorm(
    f,
    k: int,
    alpha: float,
    pair_budget: int = 4096,
    seed: int = 0,
    mask: Optional[np.ndarray] = None,
    derivs: Optional[np.ndarray] = None,
) -> HolderEstimate:
    """Estimate ``[f]_{k, alpha}`` on the masked nodes.

    With ``alpha == 0`` this is the sup over the mask of ``|D^k f|`` (maximum
    over multi-indices, Euclidean norm over components). For ``alpha > 0`` the
    difference quotient is maximised over two pair families: every pair at a
    dyadic lattice offset along the axes and diagonals, and ``pair_budget``
    seeded random pairs in each dyadic separation band.
    """
    f = _as_jet(f)
    grid = f.grid
    m = grid.mask if mask is None else mask
    d = derivative_stack(f, k) if derivs is None else derivs
    degraded = pair_budget < grid.n_per_axis
    if alpha == 0:
        norms = np.sqrt(np.sum(d**2, axis=1))  # (n_multi, n, n)
        val = float(norms[:, m].max(initial=0.0))
        return HolderEstimate(k, 0.0, val, 0, False)
    h = grid.spacing
    n = grid.n_per_axis
    best = 0.0
    for a, b in _lattice_offsets(n):
        dist = h * math.hypot(a, b)
        sa = slice(0, n - a)
        ta = slice(a, n)
        if b >= 0:
            sb, tb = slice(0, n - b), slice(b, n)
        else:
            sb, tb = slice(-b, n), slice(0, n + b)
        both = m[sa, sb] & m[ta, tb]
        if not both.any():
            continue
        diff = d[..., ta, tb] - d[..., sa, sb]
        q = np.sqrt(np.sum(diff**2, axis=1))[:, both]
        best = max(best, float(q.max(initial=0.0)) / dist**alpha)
    idx = np.argwhere(m)
    if len(idx) > 1 and pair_budget > 0:
        rng = np.random.default_rng(seed)
        lo_band = h
        hi = 2.0
        bands = []
        top = hi
        while top > lo_band:
            bands.append((top / 2.0, top))
            top /= 2.0
        for lo, top in bands:
            p = idx[rng.integers(0, len(idx), pair_budget)]
            rad = rng.uniform(lo, top, pair_budget)
            ang = rng.uniform(0.0, 2.0 * np.pi, pair_budget)
            qi = p[:, 0] + np.rint(rad * np.cos(ang) / h).astype(int)
            qj = p[:, 1] + np.rint(rad * np.sin(ang) / h).astype(int)
            ok = (qi >= 0) & (qi < n) & (qj >= 0) & (qj < n)
            p, qi, qj = p[ok], qi[ok], qj[ok]
            ok = m[qi, qj] & ((qi != p[:, 0]) | (qj != p[:, 1]))
            p, qi, qj = p[ok], qi[ok], qj[ok]
            if len(p) == 0:
                continue
            dist = h * np.hypot(qi - p[:, 0], qj - p[:, 1])
            diff = d[..., qi, qj] - d[..., p[:, 0], p[:, 1]]
            q = np.sqrt(np.sum(diff**2, axis=1)) / dist**alpha
            best = max(best, float(q.max()))
    return HolderEstimate(k, float(alpha), best, int(pair_budget), degraded)


def seminorm(f: JetField, s: float, **kw) -> float:
    """``[f]_s`` for real ``s``: integer part is the derivative order."""
    k = int(math.floor(s + 1e-12))
    alpha = s - k
    if k > 2:
        raise ValueError("s must be at most 2")
    return holder_seminorm(f, k, alpha, **kw).value


def check_interpolation(f: JetField, r: float, s: float, constant: float = 3.0, **kw) -> float:
    """Margin ``[f]_s - C ||f||_0^(1-s/r) [f]_r^(s/r)``; nonpositive means the inequality holds."""
    if not 0 <= s <= r <= 2:
        raise ValueError("need 0 <= s <= r <= 2")
    sup = seminorm(f, 0.0, **kw)
    fs = seminorm(f, s, **kw)
    if r == 0:
        return fs - constant * sup
    fr = seminorm(f, r, **kw)
    return fs - constant * sup ** (1.0 - s / r) * fr ** (s / r)


def write_csv(field: JetField, path) -> None:
    """Dump masked node values: header ``x1,x2,c0,...``, row-major order."""
    grid = field.grid
    m = grid.mask
    cols = [grid.x1[m], grid.x2[m]] + [field.values[c][m] for c in range(field.dim)]
    data = np.column_stack(cols)
    header = ",".join(["x1", "x2"] + [f"c{c}" for c in range(field.dim)])
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def interp_local(arr: np.ndarray, grid: Grid, pts: np.ndarray) -> np.ndarray:
    """Fourth-order tensor Lagrange interpolation at points ``pts`` of shape (P, 2).

    ``arr`` has shape ``(..., n, n)``; returns ``(..., P)``.
    """
    h = grid.spacing
    n = grid.n_per_axis
    s = (pts + 1.0) / h
    base = np.clip(np.floor(s).astype(int) - 1, 0, n - 4)
    t = s - base  # local coordinate in [1, 2] for interior points
    nodes = np.arange(4.0)

    def weights(tt):
        w = np.ones((len(tt), 4))
        for a in range(4):
            for b in range(4):
                if a != b:
                    w[:, a] *= (tt - nodes[b]) / (nodes[a] - nodes[b])
        return w

    w1 = weights(t[:, 0])
    w2 = weights(t[:, 1])
    out = np.zeros(arr.shape[:-2] + (len(pts),))
    for a in range(4):
        for b in range(4):
            out += w1[:, a] * w2[:, b] * arr[..., base[:, 0] + a, base[:, 1] + b]
    return out
