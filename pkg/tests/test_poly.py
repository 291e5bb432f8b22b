"""Polynomial arithmetic against naive dense oracles."""

import itertools
import math
import random

import numpy as np
import pytest

from reachsos.poly import (
    Polynomial,
    PolyVector,
    lie_derivative,
    monomial_basis,
    parse_polynomial,
)


def P(text, n=2):
    return parse_polynomial(text, n)


# -- naive oracles: dense exponent-array arithmetic, written independently ---

def dense_from(poly, size):
    """Dense coefficient array indexed by exponent tuple."""
    arr = np.zeros((size,) * poly.dimension)
    for mono, coeff in poly.terms.items():
        arr[mono] += coeff
    return arr


def dense_add(a, b):
    return a + b


def dense_mul(a, b):
    n = a.ndim
    out = np.zeros(tuple(sa + sb - 1 for sa, sb in zip(a.shape, b.shape)))
    for ia in itertools.product(*(range(s) for s in a.shape)):
        if a[ia] == 0.0:
            continue
        for ib in itertools.product(*(range(s) for s in b.shape)):
            if b[ib] == 0.0:
                continue
            out[tuple(x + y for x, y in zip(ia, ib))] += a[ia] * b[ib]
    return out


def random_poly(rng, n, degree, terms=6):
    basis = monomial_basis(n, degree)
    chosen = rng.sample(basis, min(terms, len(basis)))
    return Polynomial(n, {m: rng.uniform(-3, 3) for m in chosen})


def assert_matches_dense(poly, dense, tol=1e-12):
    scale = max(1.0, np.abs(dense).max())
    got = dense_from(poly, max(dense.shape))
    pad = tuple(slice(0, s) for s in got.shape)
    want = np.zeros_like(got)
    want[tuple(slice(0, s) for s in dense.shape)] = dense
    assert np.abs(got - want).max() / scale <= tol


class TestExamples:
    def test_add_cancellation(self):
        assert P("x1^2 + x2") + P("-x1^2 + 1") == P("x2 + 1")

    def test_add_identity(self):
        p = P("3*x1^2*x2 - 0.5*x2")
        assert p + Polynomial.zero(2) == p

    def test_add_derived(self):
        # hand expansion: (2x + 3y^2) + (x + y^2) = 3x + 4y^2
        assert P("2*x1 + 3*x2^2") + P("x1 + x2^2") == P("3*x1 + 4*x2^2")

    def test_mul_difference_of_squares(self):
        assert P("x1 + x2") * P("x1 - x2") == P("x1^2 - x2^2")

    def test_mul_identity(self):
        p = P("x1^3 - 2*x1*x2 + 1")
        assert p * Polynomial.constant(2, 1.0) == p

    def test_mul_derived(self):
        # naive double-loop expansion: (x + 2)(x^2 + 3x) = x^3 + 5x^2 + 6x
        assert P("x1 + 2", 1) * P("x1^2 + 3*x1", 1) == P("x1^3 + 5*x1^2 + 6*x1", 1)

    def test_gradient_power_rule(self):
        grad = P("x1^2", 1).gradient()
        assert grad[0] == P("2*x1", 1)

    def test_gradient_derived(self):
        grad = P("x1^2*x2 + x2^3").gradient()
        assert grad[0] == P("2*x1*x2")
        assert grad[1] == P("x1^2 + 3*x2^2")

    def test_gradient_constant(self):
        grad = Polynomial.constant(2, 5.0).gradient()
        assert grad[0].is_zero() and grad[1].is_zero()

    def test_lie_rotational_invariant(self):
        v = P("x1^2 + x2^2")
        f = PolyVector([P("-x2"), P("x1")])
        assert lie_derivative(v, f).is_zero()

    def test_lie_picks_first_component(self):
        # gradient of x is (1, 0), so the derivative equals f_1
        f1 = P("-0.5*x1 - 0.5*x2 + 0.5*x1*x2")
        f = PolyVector([f1, P("-0.5*x2 + 0.5")])
        assert lie_derivative(P("x1"), f) == f1

    def test_lie_derived(self):
        f = PolyVector([P("x2"), P("x1")])
        assert lie_derivative(P("x1*x2"), f) == P("x2^2 + x1^2")

    def test_eval_direct(self):
        assert P("x1^2*x2").eval([2, 3]) == pytest.approx(12.0)

    def test_eval_zero(self):
        assert Polynomial.zero(2).eval([17.0, -4.0]) == 0.0

    def test_eval_derived(self):
        # 1.5^3 - 2*1.5*(-2) + 1 = 3.375 + 6 + 1
        assert P("x1^3 - 2*x1*x2 + 1").eval([1.5, -2]) == pytest.approx(10.375)

    def test_eval_dimension_mismatch(self):
        with pytest.raises(ValueError):
            P("x1 + x2").eval([1.0])

    def test_add_dimension_mismatch(self):
        with pytest.raises(ValueError):
            P("x1", 1) + P("x1 + x2", 2)


class TestMonomialBasis:
    def test_n2_d2(self):
        basis = monomial_basis(2, 2)
        assert len(basis) == 6
        assert set(basis) == {(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)}

    def test_counts(self):
        assert len(monomial_basis(2, 4)) == 15
        assert len(monomial_basis(3, 4)) == 35

    def test_count_formula(self):
        for n in range(1, 6):
            for d in range(0, 11):
                assert len(monomial_basis(n, d)) == math.comb(n + d, n)

    def test_graded_order(self):
        basis = monomial_basis(3, 5)
        degrees = [sum(m) for m in basis]
        assert degrees == sorted(degrees)
        assert len(set(basis)) == len(basis)


class TestRandomizedOracles:
    def test_add_mul_against_dense(self):
        rng = random.Random(20240817)
        for _ in range(1000):
            n = rng.randint(1, 3)
            a = random_poly(rng, n, rng.randint(0, 4))
            b = random_poly(rng, n, rng.randint(0, 4))
            da, db = dense_from(a, 5), dense_from(b, 5)
            assert_matches_dense(a + b, dense_add(da, db))
            assert_matches_dense(a * b, dense_mul(da, db))

    def test_lie_linearity(self):
        rng = random.Random(7)
        for _ in range(200):
            n = rng.randint(1, 3)
            v = random_poly(rng, n, 3)
            w = random_poly(rng, n, 3)
            f = PolyVector([random_poly(rng, n, 2) for _ in range(n)])
            a, b = rng.uniform(-2, 2), rng.uniform(-2, 2)
            lhs = lie_derivative(a * v + b * w, f)
            rhs = a * lie_derivative(v, f) + b * lie_derivative(w, f)
            assert (lhs - rhs).max_abs_coeff() <= 1e-12 * max(1.0, lhs.max_abs_coeff())

    def test_lie_product_rule(self):
        rng = random.Random(8)
        for _ in range(200):
            n = rng.randint(1, 3)
            v = random_poly(rng, n, 3)
            w = random_poly(rng, n, 3)
            f = PolyVector([random_poly(rng, n, 2) for _ in range(n)])
            lhs = lie_derivative(v * w, f)
            rhs = v * lie_derivative(w, f) + w * lie_derivative(v, f)
            assert (lhs - rhs).max_abs_coeff() <= 1e-10 * max(1.0, lhs.max_abs_coeff())

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(99)
        pyrng = random.Random(99)
        step = 1e-5
        for _ in range(100):
            n = pyrng.randint(1, 3)
            p = random_poly(pyrng, n, 4)
            scale = p.max_abs_coeff()
            if scale == 0.0:
                continue
            p = p * (1.0 / scale)
            grad = p.gradient()
            x = rng.uniform(-1, 1, size=n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = step
                fd = (p.eval(x + e) - p.eval(x - e)) / (2 * step)
                exact = grad[i].eval(x)
                assert fd == pytest.approx(exact, rel=1e-6, abs=1e-7)


class TestParsing:
    def test_round_trip(self):
        texts = ["x1^2 + x2^2 - 1", "-2*x2", "0.8*x1 - 2.1*x2 + 10.0*x1^2*x2"]
        for text in texts:
            p = P(text)
            assert parse_polynomial(p.to_string(), 2) == p

    def test_omitted_units(self):
        assert P("x1*x2") == Polynomial(2, {(1, 1): 1.0})
        assert P("x1") == Polynomial.variable(2, 0)

    def test_parentheses_and_powers(self):
        assert P("(1 - x1)^2", 1) == P("1 - 2*x1 + x1^2", 1)

    def test_division_by_constant(self):
        assert P("x1^2/4 + x2^2/9 - 1") == Polynomial(
            2, {(2, 0): 0.25, (0, 2): 1 / 9, (0, 0): -1.0})

    def test_division_by_poly_rejected(self):
        with pytest.raises(ValueError):
            P("x1/x2")

    def test_bad_variable(self):
        with pytest.raises(ValueError):
            P("x3 + 1", 2)

    def test_garbage(self):
        with pytest.raises(ValueError):
            P("x1 + $", 2)

    def test_eval_many_matches_eval(self):
        p = P("x1^3 - 2*x1*x2 + 1")
        pts = np.random.default_rng(3).uniform(-2, 2, size=(50, 2))
        many = p.eval_many(pts)
        for i, x in enumerate(pts):
            assert many[i] == pytest.approx(p.eval(x), rel=1e-12, abs=1e-12)


class TestInvariants:
    def test_zero_threshold_pruning(self):
        p = Polynomial(2, {(1, 0): 1e-15})
        assert p.is_zero()

    def test_immutability(self):
        p = P("x1")
        with pytest.raises(AttributeError):
            p.dimension = 3

    def test_pow(self):
        p = P("x1 + x2")
        assert p**2 == p * p
        assert p**0 == Polynomial.constant(2, 1.0)
        with pytest.raises(ValueError):
            p**-1
