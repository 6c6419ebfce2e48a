import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capflex.capgeom import standard_cap_chart
from capflex.fields import (
    Grid,
    JetField,
    MetricField,
    check_interpolation,
    fd_gradient,
    holder_seminorm,
    interp_local,
    pullback,
    sample,
    seminorm,
    sym_eigvalsh,
    write_csv,
)


def identity_jac(x1, x2):
    j = np.zeros((2, 2) + x1.shape)
    j[0, 0] = 1.0
    j[1, 1] = 1.0
    return j


def test_sample_identity_jacobian():
    grid = Grid(65)
    v = sample(lambda x1, x2: np.stack([x1, x2]), grid, 2, identity_jac)
    assert np.array_equal(v.jacobian, identity_jac(grid.x1, grid.x2))


def test_sample_constant_has_zero_jacobian():
    grid = Grid(65)
    v = sample(lambda x1, x2: np.array([3.0, -1.0])[:, None, None], grid, 2)
    assert np.abs(v.jacobian).max() == 0.0


def test_sample_fd_matches_analytic():
    grid = Grid(129)
    fn = lambda x1, x2: np.stack([x1**2, x2])
    fd = sample(fn, grid, 2)
    exact = np.zeros((2, 2) + grid.shape)
    exact[0, 0] = 2.0 * grid.x1
    exact[1, 1] = 1.0
    gap = np.abs(fd.jacobian - exact)[..., grid.mask].max()
    assert gap <= 1e-3


def test_pullback_identity():
    grid = Grid(33)
    v = sample(lambda x1, x2: np.stack([x1, x2]), grid, 2, identity_jac)
    assert np.array_equal(pullback(v).entries, MetricField.identity(grid).entries)


def test_pullback_stretch():
    grid = Grid(33)
    v = sample(lambda x1, x2: np.stack([2 * x1, x2, 0 * x1]), grid, 3)
    e = pullback(v).entries[:, grid.mask]
    assert np.allclose(e[0], 4.0) and np.allclose(e[1], 0.0) and np.allclose(e[2], 1.0)


def test_pullback_of_cap_chart_is_cap_metric():
    grid = Grid(129)
    R = 2.0
    v = standard_cap_chart(R, grid)
    g = pullback(v).entries
    den = R**2 - grid.r**2
    exact = np.stack([1 + grid.x1**2 / den, grid.x1 * grid.x2 / den, 1 + grid.x2**2 / den])
    assert np.abs(g - exact)[:, grid.mask].max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_pullback_is_positive_semidefinite(seed, dim):
    rng = np.random.default_rng(seed)
    grid = Grid(9)
    jac = rng.standard_normal((dim, 2) + grid.shape)
    lo, _ = sym_eigvalsh(pullback(JetField(grid, np.zeros((dim,) + grid.shape), jac)).entries)
    assert lo.min() >= -1e-12


def test_seminorm_of_constant_vanishes():
    grid = Grid(65)
    f = JetField(grid, np.full(grid.shape, 2.5))
    # order 0 with exponent 0 is the sup norm, not a seminorm
    assert holder_seminorm(f, 0, 0.0).value == 2.5
    for k, alpha in [(0, 0.5), (0, 1.0), (1, 0.0), (1, 0.5), (2, 0.0), (2, 1.0)]:
        assert holder_seminorm(f, k, alpha).value == 0.0


def test_lipschitz_constant_of_coordinate():
    grid = Grid(257)
    f = JetField(grid, grid.x1.copy())
    est = holder_seminorm(f, 0, 1.0).value
    assert 1.0 - 1e-6 <= est <= 1.0 + 1e-12


def test_lipschitz_of_plane_wave():
    grid = Grid(513)
    lam = 64.0
    nu = np.array([math.cos(0.3), math.sin(0.3)])
    f = JetField(grid, np.sin(lam * (nu[0] * grid.x1 + nu[1] * grid.x2)))
    assert holder_seminorm(f, 0, 1.0).value >= 0.9 * lam


def test_degraded_flag():
    grid = Grid(65)
    f = JetField(grid, grid.x1.copy())
    assert holder_seminorm(f, 0, 0.5, pair_budget=10).degraded
    assert not holder_seminorm(f, 0, 0.5, pair_budget=4096).degraded


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.5), st.floats(0.55, 1.0))
def test_seminorm_monotone_in_exponent(seed, a1, a2):
    rng = np.random.default_rng(seed)
    grid = Grid(33)
    f = JetField(grid, rng.standard_normal(grid.shape))
    # all pair distances are at most 2 on [-1, 1]^2; restrict to the unit ball where they are <= 1
    mask = grid.r <= 0.5
    e1 = holder_seminorm(f, 0, a1, seed=1, mask=mask).value
    e2 = holder_seminorm(f, 0, a2, seed=1, mask=mask).value
    assert e1 <= e2 + 1e-12


def test_interpolation_constant_field():
    grid = Grid(65)
    f = JetField(grid, np.ones(grid.shape))
    assert check_interpolation(f, 1.0, 0.5) <= 0.0


@pytest.mark.parametrize(
    "fn",
    [
        lambda x: np.sin(8 * x),
        lambda x: sum(2.0 ** (-j / 2) * np.cos(2.0**j * x) for j in range(1, 7)),
    ],
    ids=["sine", "weierstrass"],
)
def test_interpolation_inequality(fn):
    grid = Grid(257)
    f = JetField(grid, fn(grid.x1))
    assert check_interpolation(f, 1.0, 0.5, constant=3.0) <= 0.0


def _trig_field(grid, rng, deg=3):
    a = rng.standard_normal((deg, deg))
    out = np.zeros(grid.shape)
    for i in range(deg):
        for j in range(deg):
            out += a[i, j] * np.cos(i * grid.x1 + j * grid.x2 + 0.3 * (i - j))
    return out / deg


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 1.0]))
def test_leibniz_rule(seed, r):
    rng = np.random.default_rng(seed)
    grid = Grid(65)
    f = JetField(grid, _trig_field(grid, rng))
    g = JetField(grid, _trig_field(grid, rng))
    fg = JetField(grid, f.values[0] * g.values[0])
    lhs = seminorm(fg, r)
    rhs = 4.0 * (seminorm(f, r) * seminorm(g, 0.0) + seminorm(f, 0.0) * seminorm(g, r))
    assert lhs <= rhs


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2]))
def test_composition_estimate(seed, k):
    # [Psi(u)]_k <= C ([Psi]_1 [u]_k + [Psi]_k ||u||_1^k) with Psi = sin(a t + b)
    rng = np.random.default_rng(seed)
    grid = Grid(65)
    u = JetField(grid, _trig_field(grid, rng))
    a, b = rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
    comp = JetField(grid, np.sin(a * u.values[0] + b))
    psi1, psik = a, a**k
    u1 = seminorm(u, 0.0) + seminorm(u, 1.0)
    lhs = seminorm(comp, float(k))
    rhs = 8.0 * (psi1 * seminorm(u, float(k)) + psik * u1**k)
    assert lhs <= rhs


def test_fd_gradient_exact_on_quadratics():
    grid = Grid(33)
    f = grid.x1**2 + 3 * grid.x1 * grid.x2
    d = fd_gradient(f, grid.spacing, grid.mask)
    assert np.abs(d[0] - (2 * grid.x1 + 3 * grid.x2))[grid.mask].max() <= 1e-12
    assert np.abs(d[1] - 3 * grid.x1)[grid.mask].max() <= 1e-12


def test_interp_local_exact_on_cubics():
    grid = Grid(33)
    f = grid.x1**3 - 2 * grid.x1 * grid.x2**2 + grid.x2
    pts = np.array([[0.113, -0.52], [0.0, 0.99], [-0.7, 0.3]])
    exact = pts[:, 0] ** 3 - 2 * pts[:, 0] * pts[:, 1] ** 2 + pts[:, 1]
    assert np.allclose(interp_local(f, grid, pts), exact, atol=1e-12)


def test_csv_dump_layout(tmp_path):
    grid = Grid(9)
    v = JetField(grid, np.stack([grid.x1, grid.x2]))
    write_csv(v, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,c0,c1"
    assert len(lines) - 1 == int(grid.mask.sum())
    first = [float(s) for s in lines[1].split(",")]
    i, j = np.argwhere(grid.mask)[0]
    assert first[:2] == [grid.x1[i, j], grid.x2[i, j]]
