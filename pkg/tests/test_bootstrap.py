import numpy as np
import pytest

from capflex.bootstrap import (
    FrequencyUnresolvable,
    assemble_w,
    build_w,
    first_approximation,
    init_stage_state,
    twist_blend,
)
from capflex.capgeom import CapParams, build_h, build_phi, build_short_map, cap_metric
from capflex.decomp import SmallnessViolated
from capflex.fields import Grid, JetField, MetricField, pullback, sym_norm

ISO = np.array([1.0, 0.0, 1.0])[:, None, None]


@pytest.fixture(scope="module")
def cap_inputs():
    grid = Grid(513)
    params = CapParams()
    u = build_short_map(build_phi(params), grid)
    h = build_h(params, grid).values[0]
    return grid, u, h, cap_metric(2.0, grid)


@pytest.fixture(scope="module")
def twisted(cap_inputs):
    grid, u, h, g = cap_inputs
    return first_approximation(u, h, g, 0.16, 0.1, frequency=16.0, min_ppw=8.0)


def test_twist_blend_endpoints():
    phi, psi = twist_blend(np.array([0.0, 1.0]), 0.16)
    assert phi.tolist() == [1.0, 0.0]
    assert psi[0] == 0.0 and psi[1] > 0.5


def test_twist_leaves_outer_annulus_untouched(cap_inputs, twisted):
    grid, u, _, _ = cap_inputs
    outer = grid.r >= 1.0 - 0.1
    assert np.abs(twisted.u_tilde.values[:, outer] - u.values[:, outer]).max() == 0.0
    assert np.abs(twisted.u_tilde.jacobian[..., outer] - u.jacobian[..., outer]).max() == 0.0


def test_twisted_profile_linear_on_outer_annulus(cap_inputs, twisted):
    grid, _, h, _ = cap_inputs
    outer = grid.mask & (grid.r >= 1.0 - 0.1)
    assert np.abs(twisted.h_tilde[outer] - h[outer]).max() == 0.0
    slope = 2.0 * (CapParams().gamma - 1.0)
    assert np.abs(h[outer] - slope * (1.0 - grid.r[outer])).max() <= 1e-14
    on_circle = grid.r == 1.0
    assert on_circle.sum() == 4 and np.abs(twisted.h_tilde[on_circle]).max() == 0.0


def test_twist_two_sided_bound(twisted):
    assert twisted.margins["twist_lower"] >= 0.0
    assert twisted.margins["twist_upper"] >= 0.0
    assert twisted.margins["twist_error"] < 0.16 * twisted.rho


def test_twist_frequency_doubles_until_small(twisted):
    assert twisted.frequency == 16.0 * 2 ** round(np.log2(twisted.frequency / 16.0))
    assert twisted.frequency > 16.0


def test_twist_unresolvable(cap_inputs):
    grid, u, h, g = cap_inputs
    with pytest.raises(FrequencyUnresolvable):
        first_approximation(u, h, g, 0.16, 0.1, frequency=16.0, min_ppw=64.0)


def _flat_setup(grid, h_level=0.05):
    vals = np.zeros((8,) + grid.shape)
    vals[0], vals[1] = grid.x1, grid.x2
    jac = np.zeros((8, 2) + grid.shape)
    jac[0, 0] = jac[1, 1] = 1.0
    u = JetField(grid, vals, jac)
    h = h_level * (1.0 + 0.3 * np.cos(grid.x1 + 2.0 * grid.x2))
    return u, h


def _w_inputs(grid, delta1):
    u, h = _flat_setup(grid)
    g = MetricField(grid, pullback(u).entries + (h + delta1) * ISO)
    return u, h, g


def test_w_is_x0_where_cutoff_vanishes():
    grid = Grid(257)
    delta1 = 0.08
    u, h, g = _w_inputs(grid, delta1)
    x0 = np.arange(6, dtype=float)
    w, _, _, eta0, _, _ = build_w(u, h, g, x0, C_hat=1.0, delta1=delta1, R=4.0)
    off = eta0.values[0] == 0.0
    assert np.abs(w.values[:, off] - x0[:, None]).max() == 0.0
    assert np.abs(w.jacobian[..., off]).max() == 0.0
    assert np.abs(w.values[:, grid.rim] - x0[:, None]).max() == 0.0


def test_w_sup_bound():
    grid = Grid(257)
    delta1 = 0.08
    u, h, g = _w_inputs(grid, delta1)
    _, _, info, _, _, _ = build_w(u, h, g, None, C_hat=1.0, delta1=delta1, R=4.0)
    assert info["w_sup"] <= info["w_bound"]


def test_w_analytic_jacobian():
    grid = Grid(513)
    delta1 = 0.05
    u, h, g = _w_inputs(grid, delta1)
    w, _, _, _, _, _ = build_w(u, h, g, None, C_hat=1.0, delta1=delta1, R=4.0)
    fd = JetField(grid, w.values)
    inner = grid.r <= 0.7
    assert np.abs(fd.jacobian - w.jacobian)[..., inner].max() <= 5e-3


def test_reduced_target_error_decays_like_inverse_square_frequency():
    # with tau = e exactly the leftover is -grad(amp) grad(amp)^T / mu^2
    grid = Grid(513)
    delta1 = 0.05
    u, h, g = _w_inputs(grid, delta1)
    inner = grid.r <= 1.0 - 5.0 * delta1
    fitted = []
    for c_hat in (1.0, 2.0, 4.0):
        _, g_tilde, info, _, _, _ = build_w(u, h, g, None, C_hat=c_hat, delta1=delta1, R=4.0, min_ppw=8.0)
        err = sym_norm(g_tilde.entries - pullback(u).entries - delta1 * ISO)[inner].max()
        fitted.append(err * info["mu"] ** 2)
    assert max(fitted) <= 1.0
    assert max(fitted) / min(fitted) <= 1.0 + 1e-6


def test_w_smallness_enforced():
    grid = Grid(257)
    delta1 = 0.08
    u, h, _ = _w_inputs(grid, delta1)
    g = MetricField(grid, pullback(u).entries + (1.5 * h + delta1) * ISO)
    with pytest.raises(SmallnessViolated):
        build_w(u, h, g, None, C_hat=1.0, delta1=delta1, R=4.0, strict=True)


def test_assemble_w_zero_amplitude():
    grid = Grid(33)
    x0 = np.linspace(-1, 1, 6)
    w = assemble_w(grid, np.zeros((3,) + grid.shape), np.zeros((3, 2) + grid.shape), 10.0, x0)
    assert np.array_equal(w.values, np.broadcast_to(x0[:, None, None], w.values.shape))
    assert np.abs(w.jacobian).max() == 0.0


# Full-scale bootstrap at the shipped defaults, read from the session build.


def test_default_bootstrap_hypotheses(default_build):
    hyp = default_build.report["hypotheses"]
    assert hyp["sandwich_lower"] >= 0.0 and hyp["sandwich_upper"] >= 0.0
    assert hyp["C0_g_tilde"] <= default_build.report["config"]["C0"]
    assert hyp["h_bound_ratio"] <= default_build.report["config"]["Lambda"]


def test_default_bootstrap_twist(default_build):
    boot = default_build.report["bootstrap"]
    assert boot["twist_lower"] >= 0.0 and boot["twist_upper"] >= 0.0
    assert boot["w_w_sup"] <= boot["w_w_bound"]
