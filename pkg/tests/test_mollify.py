import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capflex.fields import Grid, JetField, holder_seminorm, sample
from capflex.mollify import (
    Kernel,
    SupportViolation,
    bump,
    commutator_field,
    commutator_test,
    convolve,
    convolve_jet,
    loglog_slope,
    pullback_commutator_slope,
)


@pytest.mark.parametrize("ell_cells", [0.5, 2.0, 4.5, 9.0])
def test_kernel_weights(ell_cells):
    k = Kernel(ell_cells * 0.01, 0.01)
    w = k.weights
    assert (w >= 0).all()
    assert abs(w.sum() - 1.0) <= 1e-15
    assert k.support_radius <= k.ell + k.spacing


def test_convolve_zero():
    grid = Grid(129)
    assert np.abs(convolve(np.zeros(grid.shape), Kernel(0.05, grid.spacing), grid)).max() == 0.0


def test_convolve_constant_on_eroded_support():
    grid = Grid(129)
    ell = 0.05
    f = np.where(grid.r <= 0.6, 2.0, 0.0)
    out = convolve(f, Kernel(ell, grid.spacing), grid)
    inner = grid.r <= 0.6 - ell - grid.spacing
    assert np.abs(out[inner] - 2.0).max() <= 1e-13


def test_support_violation_near_rim():
    grid = Grid(65)
    f = np.where(grid.r <= 0.99, 1.0, 0.0)
    with pytest.raises(SupportViolation):
        convolve(f, Kernel(0.1, grid.spacing), grid)


def test_smoothing_error_quadratic_in_scale():
    grid = Grid(513)
    env = bump(grid.r / 0.7)
    f = JetField(grid, np.sin(16 * grid.x1) * env)
    ell = 8 * grid.spacing
    out = convolve(f.values[0], Kernel(ell, grid.spacing), grid)
    lhs = np.abs(out - f.values[0])[grid.mask].max()
    rhs = 2.0 * ell**2 * holder_seminorm(f, 2, 0.0).value
    assert lhs <= rhs


def test_commutator_slope_smooth():
    grid = Grid(513)
    f = np.sin(3 * grid.x1) * np.cos(2 * grid.x2)
    g = np.cos(grid.x1 + 2 * grid.x2)
    assert commutator_test(f, g, grid, [0.16, 0.12, 0.08, 0.06, 0.04]) >= 1.9


def test_commutator_nonnegative_for_equal_factors():
    grid = Grid(129)
    f = np.sin(5 * grid.x1 + grid.x2) * grid.x2
    c = commutator_field(f, f, Kernel(0.1, grid.spacing), grid)
    inner = grid.r <= 0.8
    assert c[inner].min() >= -1e-14


def test_commutator_slope_weierstrass():
    grid = Grid(2049)
    alpha = 0.4
    f = sum(2.0 ** (-alpha * j) * np.cos(2.0**j * grid.x1) for j in range(1, 9))
    g = sum(2.0 ** (-alpha * j) * np.cos(2.0**j * grid.x2 + 1.0) for j in range(1, 9))
    slope = commutator_test(f, g, grid, [0.2, 0.1, 0.05, 0.025, 0.0125])
    assert 0.6 <= slope <= 1.1


def test_pullback_slope_smooth_map():
    grid = Grid(257)
    v = sample(
        lambda x1, x2: np.stack([x1 + 0.1 * np.sin(2 * x2), x2, 0.2 * np.cos(x1 * x2)]),
        grid,
        3,
        lambda x1, x2: np.stack(
            [
                np.stack([np.ones_like(x1), 0.2 * np.cos(2 * x2)]),
                np.stack([np.zeros_like(x1), np.ones_like(x1)]),
                np.stack([-0.2 * x2 * np.sin(x1 * x2), -0.2 * x1 * np.sin(x1 * x2)]),
            ]
        ),
    )
    h = grid.spacing
    assert pullback_commutator_slope(v, [4 * h, 6 * h, 8 * h, 12 * h]) >= 1.8


def test_pullback_commutator_identity_map():
    grid = Grid(129)
    jac = np.zeros((2, 2) + grid.shape)
    jac[0, 0] = jac[1, 1] = 1.0
    v = JetField(grid, np.stack([grid.x1, grid.x2]), jac)
    _, errs = pullback_commutator_slope(v, [0.05, 0.1], return_values=True)
    assert max(errs) <= 1e-10


def test_convolve_jet_commutes_with_derivative():
    grid = Grid(257)
    env = bump(grid.r / 0.6)
    v = JetField(grid, (np.sin(4 * grid.x1) * env)[None])
    out = convolve_jet(v, Kernel(0.04, grid.spacing))
    fd = JetField(grid, out.values)
    inner = grid.r <= 0.5
    assert np.abs(fd.jacobian - out.jacobian)[..., inner].max() <= 5e-3


def test_loglog_slope_exact_power():
    xs = [0.1, 0.2, 0.4]
    assert loglog_slope(xs, [x**1.5 for x in xs]) == pytest.approx(1.5, abs=1e-12)


def _trig(grid, rng, deg=4):
    a = rng.standard_normal((deg, deg))
    out = np.zeros(grid.shape)
    for i in range(deg):
        for j in range(deg):
            out += a[i, j] * np.sin(i * grid.x1 + j * grid.x2 + 0.7)
    return out


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.02, 0.1))
def test_convolution_contracts_sup_and_preserves_positivity(seed, ell):
    rng = np.random.default_rng(seed)
    grid = Grid(65)
    f = _trig(grid, rng) * (grid.r <= 1.0 - ell - 2 * grid.spacing)
    out = convolve(f, Kernel(ell, grid.spacing), grid)
    assert np.abs(out).max() <= np.abs(f).max() + 1e-12
    pos = convolve(np.abs(f), Kernel(ell, grid.spacing), grid)
    assert pos.min() >= 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.02, 0.1), st.floats(0.02, 0.1))
def test_convolution_is_linear(seed, ell, scale):
    rng = np.random.default_rng(seed)
    grid = Grid(65)
    keep = grid.r <= 0.8
    f, g = _trig(grid, rng) * keep, _trig(grid, rng) * keep
    k = Kernel(ell, grid.spacing)
    lhs = convolve(f + scale * g, k, grid)
    rhs = convolve(f, k, grid) + scale * convolve(g, k, grid)
    assert np.abs(lhs - rhs).max() <= 1e-12


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([(0, 1), (1, 1)]))
def test_smoothing_estimate(seed, rs):
    r, s = rs
    rng = np.random.default_rng(seed)
    grid = Grid(129)
    keep = bump(grid.r / 0.7)
    f = JetField(grid, _trig(grid, rng) * keep)
    ell = 0.05
    sm = JetField(grid, convolve(f.values[0], Kernel(ell, grid.spacing), grid))
    lhs = holder_seminorm(sm, r + s, 0.0).value
    rhs = 4.0 * ell ** (-s) * holder_seminorm(f, r, 0.0).value
    assert lhs <= rhs
