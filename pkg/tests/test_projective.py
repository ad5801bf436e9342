import math

import numpy as np
import pytest

from lyapcrit.disorder import DisorderLaw
from lyapcrit.gridfn import GridSpec
from lyapcrit.matprod import lyapunov_direct
from lyapcrit.projective import (XChainConfig, default_burnin, empirical_cdf_x, furstenberg_blocks,
                                 h_gamma, h_gamma_inv, lyapunov_furstenberg, operator_grid)

GAUSS = DisorderLaw.gaussian(1.0)


def test_h_gamma_examples():
    assert h_gamma(5.0, 0.0) == 0.0
    g = 3.0
    for x in (-2.0, 0.5, 4.0):
        want = x - math.log1p(math.exp(x - g)) + math.log1p(math.exp(-x - g))
        assert h_gamma(g, x) == pytest.approx(want, rel=1e-14)
    # saturation at +-gamma
    assert h_gamma(g, 800.0) == pytest.approx(g, abs=1e-12)
    assert h_gamma(g, -800.0) == pytest.approx(-g, abs=1e-12)


def test_h_gamma_is_odd_increasing_contraction():
    x = np.linspace(-40, 40, 8001)
    for g in (0.5, 4.0, 20.0):
        y = h_gamma(g, x)
        assert np.allclose(y, -h_gamma(g, -x), atol=1e-13)
        assert np.all(np.diff(y) >= 0)
        # slope from finite differences where it does not underflow
        xs = np.linspace(-10, 10, 2001)
        d = np.diff(h_gamma(g, xs)) / np.diff(xs)
        assert np.all(d > 0) and np.all(d < 1)
        assert np.all(np.abs(y) <= g)


def test_h_gamma_inverse_roundtrip():
    for g in (1.0, 10.0):
        y = np.linspace(-0.999 * g, 0.999 * g, 1001)
        assert np.allclose(h_gamma(g, h_gamma_inv(g, y)), y, atol=1e-10)
        x = np.linspace(-5, 5, 101)
        assert np.allclose(h_gamma_inv(g, h_gamma(g, x)), x, atol=1e-9)
    with pytest.raises(ValueError):
        h_gamma_inv(2.0, 2.0)


def test_h_gamma_inv_diverges_at_the_edges():
    g = 4.0
    assert h_gamma_inv(g, g * (1 - 1e-9)) > 15
    assert h_gamma_inv(g, -g * (1 - 1e-9)) < -15


def test_config_validation_and_burnin():
    assert default_burnin(10.0, GAUSS) == 37_000
    with pytest.raises(ValueError):
        XChainConfig(0.0, GAUSS, 1000)
    with pytest.raises(ValueError):
        XChainConfig(1.0, GAUSS, 100, burnin=100)


def test_l_and_l_star_telescoping():
    """Along one chain, L - L* = (sum z + X_0 - X_n) / n, so the two ergodic
    averages differ by O(1/n)."""
    cfg = XChainConfig(4.0, GAUSS, 200_000, burnin=1000, seed=3)
    v = furstenberg_blocks(cfg, range(4))
    assert np.all(np.abs(v[:, 0] - v[:, 1]) < 0.01)


def test_furstenberg_agrees_with_direct():
    g = 3.0
    cfg = XChainConfig(g, GAUSS, 400_000, seed=4)
    L, Ls = lyapunov_furstenberg(cfg, 8)
    d = lyapunov_direct(g, GAUSS, 400_000, 8, seed=5)
    assert L.agrees_with(d)
    assert L.value > 0


def test_independent_seeds_agree():
    a, _ = lyapunov_furstenberg(XChainConfig(6.0, GAUSS, 200_000, seed=1), 8)
    b, _ = lyapunov_furstenberg(XChainConfig(6.0, GAUSS, 200_000, seed=2), 8)
    assert a.agrees_with(b)
    assert a.value != b.value


def test_thread_count_does_not_change_results():
    cfg = XChainConfig(5.0, GAUSS, 50_000, seed=7)
    assert np.array_equal(furstenberg_blocks(cfg, range(6), 1), furstenberg_blocks(cfg, range(6), 2))


def test_empirical_cdf_limits():
    g = 5.0
    cfg = XChainConfig(g, GAUSS, 200_000, seed=8)
    F = empirical_cdf_x(cfg, operator_grid(g, 0.05))
    assert F(-g - 10) < 1e-3 and F(g + 10) > 1 - 1e-3
    assert np.all(np.diff(F.values) >= 0)
    # symmetric law: the median sits at 0
    assert abs(F(0.0) - 0.5) < 0.05
    with pytest.raises(ValueError):
        empirical_cdf_x(cfg, GridSpec(-5.0, 5.0, 0.1))


def test_operator_grid_has_zero_node():
    g = operator_grid(7.3, 0.01)
    x = g.nodes()
    assert np.min(np.abs(x)) < 1e-9
    assert x[0] <= -47.3 and x[-1] >= 47.3


def test_doubling_burnin_stays_within_ci():
    g = 6.0
    base = XChainConfig(g, GAUSS, 400_000, seed=8)
    a = lyapunov_furstenberg(base, 8)[0]
    b = lyapunov_furstenberg(XChainConfig(g, GAUSS, 400_000, 2 * base.burnin, seed=8), 8)[0]
    assert abs(a.value - b.value) <= 1.959964 * math.hypot(a.std_error, b.std_error)
