"""Decompositions of symmetric 2x2 tensors into primitive metrics.

Symmetric tensors are stored as ``(s11, s12, s22)`` along the leading axis;
every routine here works on arrays with arbitrary trailing node shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import sym_norm

__all__ = [
    "PrimitiveBasis",
    "DecompositionResult",
    "SmallnessViolated",
    "NewtonDiverged",
    "primitive_basis",
    "linear_decompose",
    "reconstruct",
    "nonlinear_decompose",
    "smallness",
]


class SmallnessViolated(ValueError):
    """The perturbation data are too large for the local solve."""


class NewtonDiverged(RuntimeError):
    """Newton iteration did not reach the tolerance at some node.

    ``node`` is the flat index of the first failing node in the input.
    """

    def __init__(self, message: str, node: int = -1, count: int = 0):
        super().__init__(message)
        self.node = node
        self.count = count


@dataclass(frozen=True)
class PrimitiveBasis:
    angles: np.ndarray  # radians
    directions: np.ndarray  # (3, 2) unit vectors
    primitives: np.ndarray  # (3, 3): row k is nu_k (x) nu_k as (s11, s12, s22)
    inverse: np.ndarray  # (3, 3): L(S) = inverse @ (s11, s12, s22)


def primitive_basis(angles_deg=(0.0, 60.0, 120.0)) -> PrimitiveBasis:
    angles = np.deg2rad(np.asarray(angles_deg, dtype=float))
    nu = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    prim = np.stack([nu[:, 0] ** 2, nu[:, 0] * nu[:, 1], nu[:, 1] ** 2], axis=1)
    inverse = np.linalg.inv(prim.T)
    return PrimitiveBasis(angles, nu, prim, inverse)


def linear_decompose(s: np.ndarray, basis: PrimitiveBasis) -> np.ndarray:
    """Coefficients ``L_k(S)`` with ``S = sum_k L_k(S) nu_k (x) nu_k``; shape ``(3, ...)``."""
    return np.tensordot(basis.inverse, s, axes=(1, 0))


def reconstruct(coeffs: np.ndarray, basis: PrimitiveBasis) -> np.ndarray:
    return np.tensordot(basis.primitives.T, coeffs, axes=(1, 0))


@dataclass
class DecompositionResult:
    coefficients: np.ndarray  # (3, ...)
    residual: np.ndarray  # (3, ...) symmetric tensor entries
    newton_iters: np.ndarray  # (...) int

    @property
    def max_residual(self) -> float:
        return float(sym_norm(self.residual).max(initial=0.0))

    @property
    def min_coefficient(self) -> float:
        return float(self.coefficients.min(initial=np.inf))


def smallness(tau: np.ndarray, m: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Nodewise ``|tau - Id| + sum |M_i| + sum |Lambda_ij|`` (Frobenius norms)."""
    dev = tau.copy()
    dev[0] -= 1.0
    dev[2] -= 1.0
    out = sym_norm(dev)
    out = out + sum(sym_norm(m[i]) for i in range(m.shape[0]))
    out = out + sum(sym_norm(lam[i, j]) for i in range(lam.shape[0]) for j in range(lam.shape[1]))
    return out


def _residual(c, tau, m, lam, prim):
    res = -tau.copy()
    for i in range(3):
        res += (c[i] ** 2)[None] * prim[i][:, None] + c[i][None] * m[i]
        for j in range(3):
            res += (c[i] * c[j])[None] * lam[i, j]
    return res


def _solve3(jac: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``jac[:, :, p] x[:, p] = rhs[:, p]`` for 3x3 systems via the adjugate."""
    a = jac
    cof = np.empty_like(a)
    cof[0, 0] = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    cof[0, 1] = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    cof[0, 2] = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    cof[1, 0] = a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]
    cof[1, 1] = a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
    cof[1, 2] = a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]
    cof[2, 0] = a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]
    cof[2, 1] = a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]
    cof[2, 2] = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    det = a[0, 0] * cof[0, 0] + a[0, 1] * cof[0, 1] + a[0, 2] * cof[0, 2]
    # x = adj(a) rhs / det with adj = cof^T
    x = np.einsum("jip,jp->ip", cof, rhs) / det
    return x, det


def nonlinear_decompose(
    tau: np.ndarray,
    m: np.ndarray,
    lam: np.ndarray,
    basis: PrimitiveBasis | None = None,
    r0: float = 0.25,
    tol: float = 1e-12,
    max_iters: int = 25,
    strict: bool = True,
    max_halvings: int = 8,
) -> DecompositionResult:
    """Solve ``sum c_i^2 nu_i nu_i + sum c_i M_i + sum c_i c_j Lam_ij = tau`` per node.

    Parameters
    ----------
    tau : array (3, ...)
        Target tensor entries.
    m : array (3, 3, ...)
        ``m[i]`` holds the entries of ``M_i``.
    lam : array (3, 3, 3, ...)
        ``lam[i, j]`` holds the entries of ``Lambda_ij``.
    r0 : float
        Smallness radius. With ``strict`` the solve refuses nodes where
        :func:`smallness` reaches ``r0``.
    tol : float
        Frobenius tolerance on the residual.

    max_halvings : int
        Step halvings allowed per iteration when the residual does not drop.

    Newton starts from ``c_i = sqrt(L_i(tau))`` and linearises with the
    jacobian ``2 c_i nu_i nu_i + M_i + sum_j c_j (Lam_ij + Lam_ji)``.
    """
    basis = primitive_basis() if basis is None else basis
    shape = tau.shape[1:]
    tau = tau.reshape(3, -1)
    m = m.reshape(3, 3, -1)
    lam = lam.reshape(3, 3, 3, -1)
    if strict:
        small = smallness(tau, m, lam)
        if np.any(small >= r0):
            p = int(np.argmax(small))
            loc = np.unravel_index(p, shape) if shape else ()
            raise SmallnessViolated(f"smallness {small[p]:.4g} >= r0 = {r0} at node {tuple(int(i) for i in loc)}")
    prim = basis.primitives
    c = np.sqrt(np.maximum(linear_decompose(tau, basis), 1e-12))
    iters = np.zeros(c.shape[1], dtype=int)
    active = np.arange(c.shape[1])
    res = _residual(c, tau, m, lam, prim)
    err = sym_norm(res)
    active = active[err > tol]
    for _ in range(max_iters):
        if active.size == 0:
            break
        ca = c[:, active]
        la = lam[..., active]
        jac = np.empty((3, 3, active.size))
        for i in range(3):
            col = 2.0 * ca[i][None] * prim[i][:, None] + m[i][:, active]
            for j in range(3):
                col = col + ca[j][None] * (la[i, j] + la[j, i])
            jac[:, i] = col
        step, _ = _solve3(jac, res[:, active])
        e0 = sym_norm(res[:, active])
        ta, ma = tau[:, active], m[:, :, active]
        # backtrack until the residual decreases; full steps near the root
        t = np.ones(active.size)
        for _ in range(max_halvings + 1):
            trial = ca - t[None] * step
            ra = _residual(trial, ta, ma, la, prim)
            ea = sym_norm(ra)
            worse = ~(ea < e0)
            if not worse.any():
                break
            t = np.where(worse, 0.5 * t, t)
        c[:, active] = trial
        iters[active] += 1
        res[:, active] = ra
        ok = np.isfinite(ea)
        if not ok.all():
            bad = active[~ok][0]
            loc = tuple(int(i) for i in np.unravel_index(bad, shape))
            raise NewtonDiverged(f"non-finite Newton iterate at node {loc}", int(bad), int((~ok).sum()))
        active = active[ea > tol]
    if active.size:
        bad = active[0]
        loc = tuple(int(i) for i in np.unravel_index(bad, shape))
        raise NewtonDiverged(
            f"{active.size} nodes above tol after {max_iters} iterations, first at {loc}", int(bad), int(active.size)
        )
    return DecompositionResult(c.reshape((3,) + shape), res.reshape((3,) + shape), iters.reshape(shape))
