import math

import numpy as np
import pytest

from capflex.capgeom import (
    CapParams,
    ParamsInfeasible,
    Unresolvable,
    build_cutoff,
    build_h,
    build_phi,
    build_short_map,
    cap_metric,
    ramp_profile,
    shortness_gaps,
    standard_cap_chart,
)
from capflex.fields import Grid, JetField, holder_seminorm, pullback, sym_eigvalsh

PARAMS = CapParams()


@pytest.fixture(scope="module")
def profile():
    return build_phi(PARAMS)


def _node(grid, x1, x2):
    i = int(round((x1 + 1) / grid.spacing))
    j = int(round((x2 + 1) / grid.spacing))
    return i, j


def test_cap_metric_identity_at_origin():
    grid = Grid(65)
    g = cap_metric(2.0, grid)
    i, j = _node(grid, 0.0, 0.0)
    assert np.array_equal(g.entries[:, i, j], [1.0, 0.0, 1.0])


def test_cap_metric_on_rim():
    grid = Grid(65)
    i, j = _node(grid, 1.0, 0.0)
    assert np.allclose(cap_metric(2.0, grid).entries[:, i, j], [4.0 / 3.0, 0.0, 1.0], atol=1e-15)


def test_cap_metric_matches_polar_form():
    grid = Grid(257)
    R = 2.0
    g = cap_metric(R, grid)
    rng = np.random.default_rng(0)
    idx = np.argwhere(grid.mask & (grid.r > 0))
    idx = idx[rng.choice(len(idx), 100, replace=False)]
    for i, j in idx:
        x = np.array([grid.x1[i, j], grid.x2[i, j]])
        r = np.hypot(*x)
        th = math.atan2(x[1], x[0])
        # dr = xhat . dx, r dtheta = (-sin, cos) . dx
        er = np.array([math.cos(th), math.sin(th)])
        et = np.array([-math.sin(th), math.cos(th)])
        G = R**2 / (R**2 - r**2) * np.outer(er, er) + np.outer(et, et)
        assert np.abs(G - [[g.entries[0, i, j], g.entries[1, i, j]], [g.entries[1, i, j], g.entries[2, i, j]]]).max() <= 1e-12


def test_params_derived_quantities():
    assert PARAMS.gamma == pytest.approx(2.0 / math.sqrt(3.0))
    assert PARAMS.a_cap == pytest.approx(math.sqrt(3.0) / 2.0)
    assert 2.0 - PARAMS.gamma < PARAMS.eta_param < 1.0
    assert 0.0 < PARAMS.beta < 1.0


@pytest.mark.parametrize(
    "kw, message",
    [
        ({"R": 0.9}, "R > 1"),
        ({"eta_param": 0.5}, "eta_param"),
        ({"eps_param": 0.6}, "eps_param"),
    ],
)
def test_infeasible_params_name_the_constraint(kw, message):
    with pytest.raises(ParamsInfeasible, match=message):
        CapParams(**kw).check()


def test_phi_endpoints(profile):
    phi, dphi = profile.evaluate(np.array([0.0, 1.0]))
    assert phi[0] == 0.0
    assert abs(phi[1] - 1.0) <= 1e-12
    assert abs(dphi[1] - PARAMS.gamma) <= 1e-10


def test_phi_slope_near_origin(profile):
    r = np.linspace(0.0, PARAMS.eps_param / 2, 50)
    _, dphi = profile.evaluate(r)
    assert np.abs(dphi - PARAMS.eta_param).max() <= 1e-10


def test_shortness_margins_positive(profile):
    gr, gt, _ = shortness_gaps(profile, np.linspace(1e-4, 1 - 1e-4, 10_000))
    assert gr.min() > 0.0 and gt.min() > 0.0


def test_short_map_rim_values(profile):
    grid = Grid(65)
    u = build_short_map(profile, grid)
    for x1, x2 in [(1, 0), (0, 1), (-1, 0), (0, -1)]:
        i, j = _node(grid, x1, x2)
        expect = np.zeros(8)
        expect[:2] = (x1, x2)
        assert np.abs(u.values[:, i, j] - expect).max() <= 1e-12


def test_short_map_linear_near_origin(profile):
    grid = Grid(129)
    u = build_short_map(profile, grid)
    inner = grid.r <= PARAMS.eps_param / 2
    assert np.abs(u.values[0][inner] - PARAMS.eta_param * grid.x1[inner]).max() <= 1e-10
    assert np.abs(u.values[1][inner] - PARAMS.eta_param * grid.x2[inner]).max() <= 1e-10
    assert np.abs(u.values[2:]).max() == 0.0


def test_short_map_strictly_short(profile):
    grid = Grid(513)
    u = build_short_map(profile, grid)
    gap = cap_metric(2.0, grid).entries - pullback(u).entries
    lo, _ = sym_eigvalsh(gap)
    assert lo[grid.r <= 0.999].min() > 0.0


def test_short_map_analytic_jacobian(profile):
    grid = Grid(513)
    u = build_short_map(profile, grid, dim=3)
    fd = JetField(grid, u.values)
    inner = (grid.r <= 0.95) & (grid.r > 0.05)
    assert np.abs(fd.jacobian - u.jacobian)[..., inner].max() <= 1e-4


def test_deficit_matches_h_near_rim(profile):
    grid = Grid(1025)
    u = build_short_map(profile, grid)
    h = build_h(PARAMS, grid).values[0]
    dev = cap_metric(2.0, grid).entries - pullback(u).entries
    dev[0] -= h
    dev[2] -= h
    band = (1 - grid.r >= 1e-3) & (1 - grid.r <= 1e-2)
    ratio = np.sqrt(dev[0] ** 2 + 2 * dev[1] ** 2 + dev[2] ** 2)[band] / h[band]
    assert ratio.max() <= 0.1


def test_boundary_hypotheses_on_outer_annulus(profile):
    # (1 - s) h <= g - u#e <= (1 + s) h on 1 - r <= 1e-2
    r = np.linspace(1 - 1e-2, 1 - 1e-6, 2000)
    gr, gt, _ = shortness_gaps(profile, r)
    h = PARAMS.slope * (1 - r)
    s = PARAMS.sigma0_bar
    for gap in (gr, gt):
        assert ((1 - s) * h <= gap).all() and (gap <= (1 + s) * h).all()


def test_h_values():
    grid = Grid(65)
    h = build_h(PARAMS, grid).values[0]
    g = PARAMS.gamma
    assert h[_node(grid, 1.0, 0.0)] == pytest.approx(0.0, abs=1e-15)
    assert h[_node(grid, 0.0, 0.0)] == pytest.approx(2 * (g - 1))
    assert h[_node(grid, 0.5, 0.0)] == pytest.approx(g - 1)
    assert g - 1 == pytest.approx(0.1547, abs=1e-4)


@pytest.fixture(scope="module")
def cutoff():
    grid = Grid(1025)
    delta, R = 0.05, 4.0
    return grid, delta, R, build_cutoff(delta, R, grid)


def test_cutoff_support_and_plateau(cutoff):
    grid, delta, R, eta = cutoff
    e = eta.values[0]
    assert (e >= 0).all() and (e <= 1).all()
    assert np.abs(e[grid.r >= 1 - R * delta]).max() == 0.0
    assert np.abs(e[grid.r <= 1 - (R + 1) * delta] - 1.0).max() == 0.0


def test_cutoff_gradient_square_controlled_by_value(cutoff):
    grid, delta, R, eta = cutoff
    e = eta.values[0]
    grad2 = (eta.jacobian[0] ** 2).sum(axis=0)
    small = (e > 0) & (e <= 0.05)
    const = (grad2[small] * delta**2 / e[small]).max()
    assert np.isfinite(const) and const <= 64.0


@pytest.mark.parametrize("k", [1, 2])
def test_cutoff_seminorms(cutoff, k):
    grid, delta, R, eta = cutoff
    assert holder_seminorm(eta, k, 0.0).value <= 8.0 * delta ** (-k)


def test_cutoff_unresolvable():
    with pytest.raises(Unresolvable):
        build_cutoff(0.01, 4.0, Grid(257))


def test_ramp_profile_endpoints():
    ramp = ramp_profile()
    val, der = ramp(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert val.tolist()[:2] == [0.0, 0.0] and val.tolist()[3:] == [1.0, 1.0]
    assert val[2] == pytest.approx(0.5, abs=1e-12)
    assert der.max() <= 2.0 + 1e-9


def test_standard_cap_chart_is_on_sphere():
    grid = Grid(65)
    R = 2.0
    v = standard_cap_chart(R, grid)
    center = np.array([0.0, 0.0, -math.sqrt(R**2 - 1)])
    pts = v.values[:, grid.mask].T - center
    assert np.abs(np.linalg.norm(pts, axis=1) - R).max() <= 1e-12
