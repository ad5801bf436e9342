import math

import numpy as np
import pytest

from lyapcrit.disorder import DisorderLaw
from lyapcrit.errors import InvariantError
from lyapcrit.matprod import (NEG, LogMat2, contraction_mean_tau, lyapunov_direct, mul, n_gamma_sigma,
                              product_taus, tau, transfer_matrix)
from lyapcrit.rng import DIRECT, make_rng

GAUSS = DisorderLaw.gaussian(1.0)


def _lin(gamma, z):
    return np.array([[1.0, math.exp(-gamma)], [math.exp(-gamma + z), math.exp(z)]])


def test_transfer_matrix_entries():
    m = transfer_matrix(2.0, 0.5)
    assert np.allclose(m.to_linear(), _lin(2.0, 0.5))
    d = transfer_matrix(math.inf, 0.5)
    assert np.allclose(d.to_linear(), [[1.0, 0.0], [0.0, math.exp(0.5)]])


@pytest.mark.parametrize("gamma", [0.0, -1.0, math.nan])
def test_transfer_matrix_rejects(gamma):
    with pytest.raises(ValueError):
        transfer_matrix(gamma, 0.0)


def test_mul_matches_linear_product():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g1, g2 = rng.uniform(0.1, 5, 2)
        z1, z2 = rng.normal(size=2)
        a, b = transfer_matrix(g1, z1), transfer_matrix(g2, z2)
        assert np.allclose(mul(a, b).to_linear(), _lin(g1, z1) @ _lin(g2, z2), rtol=1e-13)


def test_identity_and_shift():
    a = transfer_matrix(3.0, -0.7)
    i = LogMat2.identity()
    assert np.allclose(mul(a, i).to_linear(), a.to_linear())
    assert np.allclose(mul(i, a).to_linear(), a.to_linear())
    # tau is scale invariant
    assert tau(a.shifted(12.5)) == pytest.approx(tau(a), rel=1e-14)


def test_tau_examples():
    # single transfer matrix: det / (a d) = 1 - e^(-2 gamma)
    for g in (0.5, 2.0, 10.0):
        assert tau(transfer_matrix(g, 0.3)) == pytest.approx(-math.expm1(-2 * g), rel=1e-14)
    assert tau(transfer_matrix(math.inf, 0.3)) == 1.0
    with pytest.raises(InvariantError):
        tau(LogMat2(0.0, 0.0, 0.0, 0.0))


def test_n_gamma_sigma():
    assert n_gamma_sigma(10, 1) == 3700
    assert n_gamma_sigma(10, 2) == 925
    assert n_gamma_sigma(1, 1) == 37
    assert n_gamma_sigma(0.1, 1) == 1
    with pytest.raises(ValueError):
        n_gamma_sigma(0, 1)


def _naive_growth(seed, k, n, g, eps):
    """Renormalized linear product with the same draws as block k."""
    z = GAUSS.sample(make_rng(seed, DIRECT, k), n)
    P, acc = np.eye(2), 0.0
    for zi in z:
        P = P @ np.array([[1.0, eps], [eps * math.exp(zi), math.exp(zi)]])
        m = np.abs(P).max()
        acc += math.log(m)
        P /= m
    return acc / n


def test_direct_matches_naive_product():
    n, g = 400, 2.0
    est = lyapunov_direct(g, GAUSS, n, 3, seed=11)
    naive = [_naive_growth(11, k, n, g, math.exp(-g)) for k in range(3)]
    assert est.value == pytest.approx(np.mean(naive), rel=1e-10)


def test_negative_epsilon_matches_naive_product():
    n, g = 300, 1.0
    est = lyapunov_direct(g, GAUSS, n, 2, seed=5, eps_sign=-1)
    naive = [_naive_growth(5, k, n, g, -math.exp(-g)) for k in range(2)]
    assert est.value == pytest.approx(np.mean(naive), rel=1e-10)


def test_tiny_disorder_limit():
    """With z close to 0 the product is that of a fixed matrix, whose top
    eigenvalue is 1 + e^-gamma."""
    g = 1.5
    est = lyapunov_direct(g, DisorderLaw.gaussian(1e-9), 20_000, 2, seed=1)
    assert est.value == pytest.approx(math.log1p(math.exp(-g)), abs=1e-3)


def test_direct_rejects_bad_arguments():
    with pytest.raises(ValueError):
        lyapunov_direct(0.0, GAUSS, 10, 2, 1)
    with pytest.raises(ValueError):
        lyapunov_direct(1.0, GAUSS, 10, 1, 1)


def test_contraction_small_n():
    assert contraction_mean_tau(3.0, GAUSS, 0, 10, 1).value == 1.0
    t = product_taus(3.0, GAUSS, 1, 20, 1)
    assert np.allclose(t, -math.expm1(-6.0), rtol=1e-13)


def test_taus_match_naive_products():
    g, n = 1.0, 30
    taus = product_taus(g, GAUSS, n, 5, seed=9, chunk=5)
    from lyapcrit.rng import TAU
    r = make_rng(9, TAU, 0)
    for t in taus:
        z = GAUSS.sample(r, n)
        P = np.eye(2)
        for zi in z:
            P = P @ _lin(g, zi)
        assert t == pytest.approx(np.linalg.det(P) / (P[0, 0] * P[1, 1]), rel=1e-9)


def test_long_product_taus_stay_in_range():
    t = product_taus(10.0, GAUSS, 3700, 40, seed=3)
    assert np.all(t >= 0) and np.all(t <= 1)
    assert np.all(np.isfinite(t))


def test_neg_sentinel_is_log_zero():
    m = LogMat2(0.0, NEG, NEG, 0.0)
    assert np.array_equal(m.to_linear(), np.eye(2))
