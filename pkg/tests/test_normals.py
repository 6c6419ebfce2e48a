import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capflex.capgeom import CapParams, build_phi, build_short_map
from capflex.fields import Grid, JetField, holder_seminorm
from capflex.mollify import bump
from capflex.normals import (
    DegenerateGram,
    NotPlanar,
    TooFar,
    frame_residuals,
    frame_vectors,
    perturbed_frame,
    reference_frame,
)


@pytest.fixture(scope="module")
def short_map():
    grid = Grid(129)
    return build_short_map(build_phi(CapParams()), grid, dim=8)


def test_reference_frame_is_standard_basis(short_map):
    ref = reference_frame(short_map)
    assert ref.shape == (6, 8)
    assert np.array_equal(ref, np.eye(8)[2:])


def test_reference_frame_orthonormal_and_normal(short_map):
    ref = reference_frame(short_map)
    assert np.array_equal(ref @ ref.T, np.eye(6))
    assert np.abs(np.einsum("dm,mkij->dkij", ref, short_map.jacobian)).max() == 0.0


def test_not_planar(short_map):
    vals = short_map.values.copy()
    vals[4, 10, 60] = 1e-3
    with pytest.raises(NotPlanar, match="component 4"):
        reference_frame(JetField(short_map.grid, vals, short_map.jacobian))


def test_unperturbed_frame_is_reference(short_map):
    ref = reference_frame(short_map)
    frame = perturbed_frame(ref, short_map, rho0=1.0, u=short_map, with_jacobian=False)
    expected = np.broadcast_to(ref[:, :, None, None], frame.vectors.shape)
    assert np.array_equal(frame.vectors, expected)


def _bumped(u, amp, comp=3, freq=3.0):
    """``u`` plus a bump along one normal coordinate; that coordinate's jacobian by finite differences."""
    grid = u.grid
    vals = u.values.copy()
    vals[comp] += amp * bump(grid.r / 0.8) * np.sin(freq * grid.x1)
    jac = u.jacobian.copy()
    jac[comp] = JetField(grid, vals[comp]).jacobian[0]
    return JetField(grid, vals, jac)


def test_frame_close_to_reference(short_map):
    ref = reference_frame(short_map)
    v = _bumped(short_map, 0.01)
    frame = perturbed_frame(ref, v, rho0=1.0, u=short_map, with_jacobian=False)
    diff = v - short_map
    dist = holder_seminorm(diff, 0, 0.0).value + holder_seminorm(diff, 1, 0.0).value
    gap = np.sqrt(((frame.vectors - ref[:, :, None, None]) ** 2).sum(axis=1)).max()
    assert gap <= 10.0 * dist


def test_too_far(short_map):
    ref = reference_frame(short_map)
    v = _bumped(short_map, 0.5)
    with pytest.raises(TooFar):
        perturbed_frame(ref, v, rho0=0.1, u=short_map)


def test_degenerate_gram():
    jac = np.zeros((4, 2, 3))
    jac[0, 0] = 1.0
    jac[1, 1] = 1e-4
    with pytest.raises(DegenerateGram):
        frame_vectors(np.eye(4)[2:], jac)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(4, 10), st.floats(0.0, 0.5))
def test_frame_invariants_random_jacobians(seed, m, size):
    rng = np.random.default_rng(seed)
    jac = np.zeros((m, 2, 50))
    jac[0, 0] = 1.0
    jac[1, 1] = 1.0
    jac += size * rng.uniform(-1, 1, jac.shape)
    vec = frame_vectors(np.eye(m)[2:], jac)
    orth, tang = frame_residuals(vec, jac)
    assert orth <= 1e-10
    assert tang <= 1e-8


def test_frame_seminorm_growth(short_map):
    # [xi]_1 <= C (1 + [v]_2) with the fitted constant reported by the assertion message
    ref = reference_frame(short_map)
    for amp in (0.01, 0.03):
        v = _bumped(short_map, amp, freq=6.0)
        frame = perturbed_frame(ref, v, rho0=1.0, u=None, with_jacobian=True)
        inner = v.grid.r <= 0.95
        xi1 = np.sqrt((frame.jacobian**2).sum(axis=(1, 2)))[:, inner].max()
        v2 = holder_seminorm(v, 2, 0.0, mask=inner).value
        C = xi1 / (1.0 + v2)
        assert C <= 2.0, f"fitted constant {C:.3g}"
