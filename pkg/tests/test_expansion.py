import numpy as np
import pytest

from hpexp.expansion import (CoeffTensor, InsufficientQuadratureError,
                             differentiate, evaluate, expand, l2_norm,
                             mode_energy_norm, named_function,
                             reference_expansion, sobolev_seminorm,
                             weighted_seminorm)
from hpexp.orthopoly import gauss_rule, legendre_table
from hpexp.expansion import FunctionOracle


def _oracle(dim, f):
    return FunctionOracle(dim=dim, f=f)


def test_expand_extracts_single_legendre_mode():
    f = _oracle(2, lambda x, y: 0.5 * (3 * x ** 2 - 1) * np.ones_like(y))
    u = expand(f, (4, 4), 10)
    expect = np.zeros((5, 5))
    expect[2, 0] = 1.0
    assert np.max(np.abs(u.coeffs - expect)) < 1e-13


def test_expand_constant():
    u = expand(_oracle(2, lambda x, y: 1.0 + 0 * x * y), (3, 3), 6)
    assert u.coeffs[0, 0] == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(u.coeffs)) == pytest.approx(1.0)


def test_expand_reconstructs_sine():
    f = named_function("sine", 2)
    u = expand(f, (30, 30), 41)
    val = evaluate(u, np.array([[0.3, 0.7]]))[0]
    assert val == pytest.approx(np.sin(0.3 * np.pi) * np.sin(0.7 * np.pi),
                                abs=1e-12)


def test_expand_rejects_insufficient_quadrature():
    with pytest.raises(InsufficientQuadratureError):
        expand(named_function("sine", 2), (10, 10), 9)


def test_differentiate_psi_and_constant():
    # psi_1 = (x^2-1)/2 = (L_2 - L_0)/3, derivative is L_1
    c = np.zeros(4)
    c[0], c[2] = -1.0 / 3.0, 1.0 / 3.0
    du = differentiate(CoeffTensor(coeffs=c), 0)
    assert du.coeffs == pytest.approx([0.0, 1.0, 0.0], abs=1e-15)
    const = CoeffTensor(coeffs=np.ones((1, 1)))
    assert np.all(differentiate(const, 0).coeffs == 0.0)


def test_differentiate_matches_self_derivative_function():
    f = named_function("expsum", 2)
    u = expand(f, (24, 24), 40)
    d1 = differentiate(u, 0)
    # expsum is its own derivative in every direction
    sl = tuple(slice(0, n) for n in d1.coeffs.shape)
    assert np.max(np.abs(d1.coeffs - u.coeffs[sl])) < 1e-9
    d11 = differentiate(d1, 0)
    sl = tuple(slice(0, n) for n in d11.coeffs.shape)
    assert np.max(np.abs(d11.coeffs - u.coeffs[sl])) < 1e-9


def test_mixed_partials_commute():
    rng = np.random.default_rng(7)
    u = CoeffTensor(coeffs=rng.standard_normal((9, 8)))
    a = differentiate(differentiate(u, 0), 1)
    b = differentiate(differentiate(u, 1), 0)
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-12


def test_mode_energy_norm_cases():
    c = np.zeros((6, 6))
    c[4, 0] = 1.0
    u = CoeffTensor(coeffs=c)
    expect = np.sqrt((2.0 / 9.0) * 2.0)
    assert mode_energy_norm(u, lambda i, j: np.ones_like(i, bool)) == \
        pytest.approx(expect, abs=1e-14)
    assert mode_energy_norm(u, lambda i, j: np.ones_like(i, bool)) == \
        pytest.approx(l2_norm(u), abs=1e-14)


def test_mode_energy_norm_against_bruteforce():
    rng = np.random.default_rng(3)
    p = 5
    u = CoeffTensor(coeffs=rng.standard_normal((p + 4, p + 4)))
    val = mode_energy_norm(u, lambda i, j: i + j >= p + 1)
    brute = 0.0
    for i in range(p + 4):
        for j in range(p + 4):
            if i + j >= p + 1:
                brute += u.coeffs[i, j] ** 2 * (2.0 / (2 * i + 1)) * (2.0 / (2 * j + 1))
    assert val == pytest.approx(np.sqrt(brute), rel=1e-13)


def test_weighted_seminorm_cases():
    rng = np.random.default_rng(11)
    u = CoeffTensor(coeffs=rng.standard_normal((7, 7)))
    assert weighted_seminorm(u, 0) == pytest.approx(l2_norm(u), rel=1e-14)
    c = np.zeros((10, 2))
    c[9, 1] = 1.0
    single = CoeffTensor(coeffs=c)
    assert weighted_seminorm(single, 1) == pytest.approx(
        np.sqrt((2.0 / 19.0) * (2.0 / 3.0) * 92.0), rel=1e-13)


def test_weighted_seminorm_below_sobolev():
    f = named_function("sine", 2)
    u = reference_expansion(f, 6)
    for s in (1, 2, 3):
        assert weighted_seminorm(u, s) <= sobolev_seminorm(u, s) + 1e-9


def test_weighted_seminorm_identity_against_quadrature():
    # coefficient form of sum_{|alpha|=s} ||W^alpha D^alpha u||^2 vs quadrature
    f = named_function("expsum", 2)
    u = expand(f, (18, 18), 30)
    rule = gauss_rule(30)
    X, Y = np.meshgrid(rule.nodes, rule.nodes, indexing="ij", sparse=True)
    W2 = np.outer(rule.weights, rule.weights)
    for s in (1, 2):
        total = 0.0
        for a1 in range(s + 1):
            a2 = s - a1
            v = u
            for _ in range(a1):
                v = differentiate(v, 0)
            for _ in range(a2):
                v = differentiate(v, 1)
            tab1 = legendre_table(v.coeffs.shape[0] - 1, rule.nodes)
            tab2 = legendre_table(v.coeffs.shape[1] - 1, rule.nodes)
            vals = tab1.T @ v.coeffs @ tab2
            wgt = (1.0 - rule.nodes ** 2)[:, None] ** a1 \
                * (1.0 - rule.nodes ** 2)[None, :] ** a2
            total += np.sum(W2 * wgt * vals ** 2)
        assert weighted_seminorm(u, s) == pytest.approx(np.sqrt(total), rel=1e-8)


def test_sobolev_seminorm_cases():
    c = np.zeros((2, 1))
    c[1, 0] = 1.0      # u = x1 on the square
    u = CoeffTensor(coeffs=c.reshape(2, 1))
    assert sobolev_seminorm(u, 1) == pytest.approx(2.0, rel=1e-14)
    const = CoeffTensor(coeffs=np.ones((1, 1)))
    assert sobolev_seminorm(const, 2) == 0.0


def test_sobolev_seminorm_sine_second_order():
    f = named_function("sine", 2)
    u = reference_expansion(f, 10)
    # quadrature of the three analytic second derivatives
    rule = gauss_rule(40)
    X, Y = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    W2 = np.outer(rule.weights, rule.weights)
    pi = np.pi
    dxx = -pi ** 2 * np.sin(pi * X) * np.sin(pi * Y)
    dxy = pi ** 2 * np.cos(pi * X) * np.cos(pi * Y)
    dyy = dxx
    # |u|_{H^2}^2 sums over the multi-indices (2,0), (1,1), (0,2)
    expect = np.sqrt(np.sum(W2 * (dxx ** 2 + dxy ** 2 + dyy ** 2)))
    assert sobolev_seminorm(u, 2) == pytest.approx(expect, rel=1e-8)


def test_parseval_against_quadrature():
    f = named_function("runge1d-tensor", 2)
    u = expand(f, (25, 25), 40)
    rule = gauss_rule(45)
    X, Y = np.meshgrid(rule.nodes, rule.nodes, indexing="ij", sparse=True)
    vals = f.f(X, Y)
    # subtract the truncation remainder: compare against the expansion itself
    tab = legendre_table(25, rule.nodes)
    uh = tab.T @ u.coeffs @ tab
    quad = np.sqrt(np.sum(np.outer(rule.weights, rule.weights) * uh ** 2))
    assert l2_norm(u) == pytest.approx(quad, rel=1e-10)
    assert float(np.max(np.abs(uh - vals))) < 1e-4   # sanity: good truncation


def test_reference_expansion_tail_flag():
    smooth = reference_expansion(named_function("sine", 2), 8)
    assert smooth.tail_trusted
    rough = reference_expansion(_oracle(2, lambda x, y: np.abs(x) + 0 * y), 4,
                                margin=6)
    assert not rough.tail_trusted
