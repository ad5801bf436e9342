import math

import numpy as np
import pytest

from lyapcrit.disorder import DisorderLaw
from lyapcrit.ladder import (F_direct, F_via_J, exponential_sampler, extract_ladders, f_table_direct,
                             f_table_via_j, first_descent_times, ladder_height_sampler, renewal_estimate,
                             theta_chain, theta_step)
from lyapcrit.ychain import step_y

GAUSS = DisorderLaw.gaussian(1.0)


def test_descending_hand_case():
    r = extract_ladders([-1.0, -1.0, -1.0])
    assert r.desc_rho.tolist() == [1, 2, 3]
    assert np.allclose(r.desc_delta, 1.0)
    assert np.allclose(r.desc_eta, math.exp(-1))
    assert r.asc_alpha.size == 0


def test_ascending_hand_case():
    r = extract_ladders([1.0, 1.0])
    assert r.asc_alpha.tolist() == [1, 2]
    assert r.asc_height.tolist() == [1.0, 2.0]
    assert np.allclose(r.asc_eta, 1.0)
    assert r.desc_rho.size == 0


def test_zero_step_is_weak_ascent_only():
    r = extract_ladders([0.0])
    assert r.asc_alpha.tolist() == [1]
    assert r.desc_rho.size == 0


def test_eta_sums_over_the_excursion():
    # S = (1, -0.5): rho_1 = 2, eta_1 = e^(S_2 - S_0) + e^(S_2 - S_1)
    r = extract_ladders([1.0, -1.5])
    assert r.desc_rho.tolist() == [2]
    assert r.desc_eta[0] == pytest.approx(math.exp(-0.5) + math.exp(-1.5))
    assert r.desc_delta[0] == pytest.approx(0.5)


def test_truncated_flag_and_empty_input():
    assert extract_ladders([1.0, -2.0, 1.0]).truncated
    with pytest.raises(ValueError):
        extract_ladders([])


def test_sign_reversal_swaps_families():
    z = np.random.default_rng(0).normal(size=5000)
    a, b = extract_ladders(z), extract_ladders(-z)
    assert np.array_equal(a.desc_rho, b.asc_alpha)
    assert np.allclose(-a.desc_delta.cumsum(), -b.asc_height)


def test_ladder_record_invariants():
    z = np.random.default_rng(1).normal(size=20000)
    r = extract_ladders(z)
    s = np.concatenate([[0.0], np.cumsum(z)])
    assert np.all(np.diff(r.desc_rho) > 0) and np.all(np.diff(r.asc_alpha) > 0)
    assert np.all(np.diff(s[r.desc_rho]) < 0)
    assert np.all(np.diff(r.asc_height) >= 0)
    assert np.all(r.desc_delta > 0)
    # every term of eta is below 1, every excursion sum of eta~ contains the term 1
    dlen = np.diff(np.concatenate([[0], r.desc_rho]))
    alen = np.diff(np.concatenate([[0], r.asc_alpha]))
    assert np.all(r.desc_eta > 0) and np.all(r.desc_eta < dlen)
    assert np.all(r.asc_eta >= 1) and np.all(r.asc_eta <= alen)


def test_theta_chain_matches_y_at_descent_epochs():
    z = np.random.default_rng(2).normal(size=20000)
    r = extract_ladders(z)
    th = theta_chain(2.0, r)
    y = [2.0]
    for zi in z:
        y.append(step_y(y[-1], zi))
    assert np.max(np.abs(th[1:] - np.array(y)[r.desc_rho])) < 1e-8


def test_theta_step_limits():
    assert theta_step(3.0, 1.0, 1e-300) == pytest.approx(2.0, abs=1e-12)
    t, d, e = 40.0, 1.0, 2.0
    assert abs(theta_step(t, d, e) - (t - d)) < 1e-10
    assert theta_step(0.0, 1.0, 1.0) == pytest.approx(math.log(math.exp(-1) + 1))
    with pytest.raises(ValueError):
        theta_step(0.0, 0.0, 1.0)


def test_start_above_interval_gives_zero():
    # before the first strict descent, Y_n >= theta + S_n >= theta
    e = F_direct(50.0, GAUSS, 0.0, 1.0, 2000, seed=1)
    assert e.value == 0.0 and e.std_error == 0.0


def test_start_inside_interval_counts_at_least_once():
    t = f_table_direct([0.5], GAUSS, [0.0], [1.0], 2000, seed=2)
    assert t.estimates[0][0].value >= 1.0
    tj = f_table_via_j([0.5], GAUSS, [0.0], [1.0], 2000, seed=3)
    assert tj.estimates[0][0].value >= 1.0


def test_interval_validation():
    with pytest.raises(ValueError):
        F_direct(0.0, GAUSS, 2.0, 1.0, 10, seed=1)


def test_direct_and_j_agree_on_one_cell():
    a = F_direct(1.0, GAUSS, 3.0, 4.0, 40_000, seed=4)
    b = F_via_J(1.0, GAUSS, 3.0, 4.0, 40_000, 64, seed=5)
    assert a.agrees_with(b)


def test_thread_count_does_not_change_tables():
    a = f_table_via_j([0.0, 1.0], GAUSS, [2.0], [3.0], 3000, seed=6, threads=1)
    b = f_table_via_j([0.0, 1.0], GAUSS, [2.0], [3.0], 3000, seed=6, threads=2)
    assert list(a.rows()) == list(b.rows())


def test_exponential_renewal():
    x = np.linspace(0, 10, 21)
    fit = renewal_estimate(exponential_sampler(1.0), x, 50_000, seed=7)
    sel = x >= 1
    assert np.all(np.abs(fit.R_hat[sel] - (x[sel] + 1)) <= 0.02 * (x[sel] + 1))
    assert fit.c_R == pytest.approx(1.0, rel=0.02)
    assert fit.c_R_prime == pytest.approx(1.0, rel=0.03)
    assert np.all(np.diff(fit.R_hat) >= 0)
    assert fit.R_hat[0] >= 1


def test_renewal_rejects_negative():
    with pytest.raises(ValueError):
        renewal_estimate(lambda rng, n: -np.ones(n), [1.0], 10, seed=1)
    with pytest.raises(ValueError):
        renewal_estimate(exponential_sampler(), [-1.0], 10, seed=1)


def test_gaussian_ladder_height_mean():
    # E[H_1] = sigma / sqrt(2) for the weak ascending ladder height of a Gaussian walk
    from lyapcrit.rng import make_rng
    h = ladder_height_sampler(GAUSS)(make_rng(8), 200_000)
    assert np.all(h >= 0)
    se = h.std() / math.sqrt(h.size)
    assert abs(h.mean() - 1 / math.sqrt(2)) < 3 * se


def test_first_descent_heavy_tail():
    t = first_descent_times(GAUSS, 20_000, seed=9, cap=10**6)
    assert np.median(t) <= 3
    # infinite mean: the running mean keeps growing with the sample size
    assert t[:20_000].mean() > t[:200].mean()
    assert t.max() > 1000


@pytest.mark.slow
def test_j_chain_window_count_tends_to_c_r():
    # c_R = 1 / E[H_1] = sqrt(2) for Gaussian(1)
    e = F_via_J(1.0, GAUSS, 30.0, 31.0, 100_000, 64, seed=10)
    assert e.value == pytest.approx(math.sqrt(2), rel=0.05)
