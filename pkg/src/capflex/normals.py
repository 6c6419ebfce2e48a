"""Orthonormal normal frames along immersions of the disk into R^m.

The reference immersion is planar (image in the ``x1 x2``-plane), so its
normal bundle is spanned by the constant vectors ``e_3, ..., e_m``. Frames
along nearby immersions are obtained by removing the tangential part of each
reference vector and running a re-orthogonalised Gram-Schmidt in the
reference order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import Grid, JetField, fd_gradient

__all__ = [
    "NormalFrame",
    "NotPlanar",
    "TooFar",
    "DegenerateGram",
    "reference_frame",
    "frame_vectors",
    "perturbed_frame",
    "frame_residuals",
]


class NotPlanar(ValueError):
    pass


class TooFar(ValueError):
    pass


class DegenerateGram(ValueError):
    pass


def reference_frame(u: JetField, atol: float = 0.0) -> np.ndarray:
    """Constant frame ``e_3..e_m`` normal to a planar immersion; shape ``(m-2, m)``."""
    if u.dim < 3:
        raise NotPlanar("target dimension must be at least 3")
    off = np.abs(u.values[2:]).max()
    if off > atol:
        idx = np.unravel_index(np.argmax(np.abs(u.values[2:])), u.values[2:].shape)
        raise NotPlanar(f"component {idx[0] + 2} is {off:.3g} at node {idx[1:]}")
    return np.eye(u.dim)[2:]


def frame_vectors(reference: np.ndarray, jac: np.ndarray, min_gram: float = 1e-6) -> np.ndarray:
    """Normal frame from the jacobian of an immersion.

    Parameters
    ----------
    reference : array (d, m)
        Constant reference vectors.
    jac : array (m, 2, ...)
        Jacobian samples.

    Returns
    -------
    array (d, m, ...)
    """
    d, m = reference.shape
    tail = jac.shape[2:]
    p1 = jac[:, 0]
    p2 = jac[:, 1]
    g11 = np.einsum("c...,c...->...", p1, p1)
    g12 = np.einsum("c...,c...->...", p1, p2)
    g22 = np.einsum("c...,c...->...", p2, p2)
    det = g11 * g22 - g12**2
    lo = 0.5 * (g11 + g22) - np.hypot(0.5 * (g11 - g22), g12)
    if lo.size and lo.min() < min_gram:
        raise DegenerateGram(f"minimum eigenvalue of the induced metric is {lo.min():.3g}")
    inv11, inv12, inv22 = g22 / det, -g12 / det, g11 / det

    def tangential_part(vec):
        # orthogonal projection of vec (m, ...) onto span(p1, p2)
        b1 = np.einsum("c...,c...->...", vec, p1)
        b2 = np.einsum("c...,c...->...", vec, p2)
        r1 = inv11 * b1 + inv12 * b2
        r2 = inv12 * b1 + inv22 * b2
        return r1[None] * p1 + r2[None] * p2

    out = np.empty((d, m) + tail)
    for i in range(d):
        zeta = np.broadcast_to(reference[i].reshape((m,) + (1,) * len(tail)), (m,) + tail)
        theta = zeta - tangential_part(zeta)
        # two Gram-Schmidt sweeps against the earlier vectors and the tangent plane
        for _ in range(2):
            for j in range(i):
                theta = theta - np.einsum("c...,c...->...", theta, out[j])[None] * out[j]
            theta = theta - tangential_part(theta)
        out[i] = theta / np.sqrt(np.einsum("c...,c...->...", theta, theta))[None]
    return out


@dataclass
class NormalFrame:
    base: JetField
    vectors: np.ndarray  # (d, m, n, n)
    reference: np.ndarray  # (d, m)
    jacobian: Optional[np.ndarray] = None  # (d, m, 2, n, n)

    @property
    def grid(self) -> Grid:
        return self.base.grid

    def field(self, i: int) -> JetField:
        jac = None if self.jacobian is None else self.jacobian[i]
        return JetField(self.grid, self.vectors[i], jac)


def perturbed_frame(
    reference: np.ndarray,
    v: JetField,
    rho0: float = 1.0,
    u: Optional[JetField] = None,
    with_jacobian: bool = True,
    min_gram: float = 1e-6,
) -> NormalFrame:
    """Normal frame along ``v`` obtained by perturbing ``reference``.

    If the reference immersion ``u`` is given, ``||v - u||_1 < rho0`` is
    checked first (sup of the difference plus sup of its jacobian).
    """
    if u is not None:
        diff = v - u
        dist = np.sqrt((diff.values**2).sum(axis=0)).max() + np.sqrt((diff.jacobian**2).sum(axis=0)).max()
        if dist >= rho0:
            raise TooFar(f"||v - u||_1 = {dist:.4g} >= rho0 = {rho0}")
    vec = frame_vectors(reference, v.jacobian, min_gram)
    jac = fd_gradient(vec, v.grid.spacing, v.grid.mask) if with_jacobian else None
    return NormalFrame(v, vec, reference, jac)


def frame_residuals(vectors: np.ndarray, jac: np.ndarray, mask=None) -> tuple[float, float]:
    """Max orthonormality defect and max tangency ``|<dv, xi>|`` over the nodes."""
    d = vectors.shape[0]
    orth = 0.0
    for i in range(d):
        for j in range(i, d):
            ip = np.einsum("c...,c...->...", vectors[i], vectors[j])
            dev = np.abs(ip - (1.0 if i == j else 0.0))
            orth = max(orth, float(dev[mask].max() if mask is not None else dev.max()))
    tang = 0.0
    for i in range(d):
        for k in range(2):
            ip = np.abs(np.einsum("c...,c...->...", vectors[i], jac[:, k]))
            tang = max(tang, float(ip[mask].max() if mask is not None else ip.max()))
    return orth, tang
