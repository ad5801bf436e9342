import math

import numpy as np
import pytest

from lyapcrit.disorder import DisorderLaw
from lyapcrit.dh import (L_functional, L_star_functional, build_gamma_probability, dh_constants,
                         fit_kappas_from_sweep, kappa1_from_edge, kappa1_from_measure,
                         kappa2_from_intercepts, lyapunov_dh, risk_to_cdf)
from lyapcrit.errors import ContractError
from lyapcrit.gridfn import Constant, EstimateCI, GridFunction, GridSpec, Zero
from lyapcrit.operator import OperatorConfig, one_step_distance
from lyapcrit.projective import XChainConfig, furstenberg_to_precision, operator_grid
from lyapcrit.ychain import edge_fits

GAUSS = DisorderLaw.gaussian(1.0)
LAWS = [GAUSS, DisorderLaw.logistic(), DisorderLaw.laplace(1.0), DisorderLaw.uniform(math.sqrt(3)),
        DisorderLaw.powertail(8.0)]


@pytest.fixture(scope="module")
def all_fits(gauss_fits, logistic_fits):
    out = {GAUSS.spec: gauss_fits, DisorderLaw.logistic().spec: logistic_fits}
    for law in LAWS:
        if law.spec not in out:
            out[law.spec] = edge_fits(law, tol=1e-12, max_iter=20000)
    return out


def test_gamma_probability_branches_meet_at_zero(gauss_fits):
    g = 10.0
    fl, fr = gauss_fits
    G, C = build_gamma_probability(g, fl, fr)
    assert C == pytest.approx(fl.F(g) + fr.F(g))
    assert fr.F(g) / C == pytest.approx(1 - fl.F(g) / C, abs=1e-14)
    assert G(0.0) == pytest.approx(fr.F(g) / C, abs=1e-12)


def test_gamma_probability_is_symmetric_risk(gauss_fits):
    G, _ = build_gamma_probability(10.0, *gauss_fits)
    x = np.linspace(-30, 30, 601)
    assert np.max(np.abs(G(x) + G(-x) - 1)) < 1e-9
    assert np.all(np.diff(G.values) <= 1e-12)
    assert G.left_limit == 1.0 and G.right_limit == 0.0
    assert G.values[0] == pytest.approx(1.0, abs=1e-9) and G.values[-1] == pytest.approx(0.0, abs=1e-9)
    # first absolute moment is finite: the tails are negligible at the grid edge
    F = risk_to_cdf(G)
    assert F.role == "CDF" and F(60.0) == 1.0


def test_slope_mismatch_rejected(gauss_fits):
    from dataclasses import replace
    fl, fr = gauss_fits
    with pytest.raises(ContractError):
        build_gamma_probability(10.0, replace(fl, c=1.01), fr)


def test_l_functional_of_point_mass():
    g, a = 6.0, 1.5
    grid = operator_grid(g, 0.001)
    x = grid.nodes()
    G = GridFunction(grid.x_min, grid.dx, (x < a).astype(float), Constant(1.0), Zero(), "Risk")
    assert L_functional(g, G) == pytest.approx(math.log1p(math.exp(a - g)), abs=2e-3)
    z = G.with_values(np.zeros_like(x), left_ext=Zero())
    assert L_functional(g, z) == 0.0
    F = GridFunction(grid.x_min, grid.dx, (x >= a).astype(float), Zero(), Constant(1.0), "CDF")
    assert L_star_functional(g, F) == pytest.approx(math.log1p(math.exp(-a - g)), abs=2e-3)


def test_l_and_l_star_agree_on_empirical_law():
    from lyapcrit.projective import empirical_cdf_x
    g = 4.0
    grid = operator_grid(g, 0.01)
    F = empirical_cdf_x(XChainConfig(g, GAUSS, 2_000_000, seed=3), grid, n_chains=2)
    G = GridFunction(F.x0, F.dx, 1 - F.values, Constant(1.0), Zero(), "Risk")
    assert L_functional(g, G) == pytest.approx(L_star_functional(g, F), rel=0.02)


@pytest.mark.parametrize("law", LAWS, ids=lambda l: l.spec)
def test_kappa1_three_ways(all_fits, law):
    fl, fr = all_fits[law.spec]
    target = law.variance() / 4
    edge = kappa1_from_edge(fr)
    left = kappa1_from_measure(fl)
    assert edge == pytest.approx(target, rel=0.02)
    assert left == pytest.approx(target, rel=0.02)
    assert edge == pytest.approx(left, rel=0.02)


def test_kappa1_logistic_closed_form(logistic_fits):
    assert kappa1_from_edge(logistic_fits[1]) == pytest.approx(math.pi ** 2 / 12, rel=0.01)


def test_kappa2_examples(logistic_fits):
    assert kappa2_from_intercepts(1.0, 3.0) == 2.0
    assert kappa2_from_intercepts(-0.4, -0.4) == -0.4
    assert abs(kappa2_from_intercepts(logistic_fits[0].d, logistic_fits[1].d)) < 1e-3


@pytest.mark.parametrize("law", LAWS, ids=lambda l: l.spec)
def test_c_gamma_matches_two_gamma_plus_two_kappa2(all_fits, law):
    c = dh_constants(16.0, *all_fits[law.spec])
    assert c.kappa1 > 0
    assert c.C_gamma == pytest.approx(2 * 16.0 + 2 * c.kappa2, abs=0.02)


def test_lyapunov_dh_logistic(logistic_fits):
    v = lyapunov_dh(12.0, logistic_fits)
    assert v == pytest.approx(math.pi ** 2 / 12 / 12, rel=0.01)
    # large gamma: gamma * L -> kappa1
    assert 100.0 * lyapunov_dh(100.0, logistic_fits, dh_constants(100.0, *logistic_fits)) == \
        pytest.approx(math.pi ** 2 / 12, rel=0.01)


def test_logistic_furstenberg_brackets_prediction():
    law = DisorderLaw.logistic()
    est, _ = furstenberg_to_precision(XChainConfig(12.0, law, 2_000_000, seed=21), 0.01)
    assert abs(est.value - math.pi ** 2 / 12 / 12) <= 0.05 * math.pi ** 2 / 144


def test_fit_kappas_synthetic():
    g = np.array([8.0, 12.0, 16.0, 24.0])
    k = fit_kappas_from_sweep(g, 0.25 / (g + 1.0))
    assert k.kappa1 == pytest.approx(0.25, rel=1e-12)
    assert k.kappa2 == pytest.approx(1.0, rel=1e-12)


def test_fit_kappas_errors():
    with pytest.raises(ValueError):
        fit_kappas_from_sweep([1, 2, 3], [0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        fit_kappas_from_sweep([1, 2, 3, 4], [0.1, -0.1, 0.1, 0.1])
    wide = [EstimateCI(0.1, 0.01, 16)] * 4
    with pytest.raises(ValueError):
        fit_kappas_from_sweep([1, 2, 3, 4], wide)


def test_gaussian_sweep_fit_matches_edge_constants(gaussian_sweep, gauss_fits):
    fit = fit_kappas_from_sweep(list(gaussian_sweep), list(gaussian_sweep.values()))
    c = dh_constants(12.0, *gauss_fits)
    # kappa1 within the fit's 95% CI, kappa2 within two fit standard errors
    assert abs(fit.kappa1 - 0.25) <= 1.959964 * fit.se1
    assert abs(fit.kappa2 - c.kappa2) <= 2 * fit.se2


def test_consistency_inequality(gauss_fits, gaussian_sweep):
    g = 8.0
    cfg = OperatorConfig(g, GAUSS)
    G, _ = build_gamma_probability(g, *gauss_fits, cfg.grid)
    dist = one_step_distance(cfg, G)
    bound = 75 * g ** 2 * dist
    est = gaussian_sweep[g]
    assert abs(lyapunov_dh(g, gauss_fits) - est.value) <= bound + est.half_width


def test_constants_record(gauss_fits):
    c = dh_constants(12.0, *gauss_fits)
    d = c.as_dict()
    assert set(d) == {"kappa1", "kappa2", "C_gamma", "gamma", "law"}
    assert d["law"] == GAUSS.spec
