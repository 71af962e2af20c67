from itertools import combinations
from math import comb, prod, sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qflow.algebra import (SpeedLaw, elem_sym, esp_leave_one_out, identity_residuals, norm_sym, phi, speed,
                           speed_from_radii, speed_grad, speed_radii_grad)
from qflow.errors import DomainError, PositivityError


def brute_esp(lam, k):
    # subset enumeration: independent oracle for small n
    return float(sum(prod(c) for c in combinations(lam, k))) if k else 1.0


positive = st.floats(1e-2, 1e2, allow_nan=False)


@st.composite
def cone_vectors(draw, nmin=1, nmax=6):
    n = draw(st.integers(nmin, nmax))
    return np.array(draw(st.lists(positive, min_size=n, max_size=n)))


@st.composite
def law_and_lambda(draw, nmax=6):
    lam = draw(cone_vectors(1, nmax))
    n = lam.size
    k = draw(st.integers(1, n))
    alpha = draw(st.sampled_from([0.25, 0.5, 1.0, 1.5, 2.0, 3.0]))
    return SpeedLaw(n, k, alpha), lam


# -- worked examples ------------------------------------------------------------

def test_elem_sym_examples():
    assert elem_sym([1, 1, 1], 2) == 3
    assert elem_sym([1, 2, 3], 2) == 11
    assert elem_sym([5, 7], 0) == 1
    assert elem_sym([5, 7], 3) == 0


def test_norm_sym_examples():
    assert norm_sym([1, 2, 3], 2) == pytest.approx(11 / 3, rel=1e-15)
    assert norm_sym([4, 9], 2) == 36
    for k in range(5):
        assert norm_sym([1.7] * 4, k) == pytest.approx(1.7 ** k, rel=1e-14)


def test_speed_examples():
    assert speed([1, 2, 3], SpeedLaw(3, 2, 1.0)) == pytest.approx(11)
    assert speed([1, 2, 3], SpeedLaw(3, 2, 0.5)) == pytest.approx(sqrt(11))
    for n, k, alpha, R in [(1, 1, 1.0, 2.0), (2, 2, 0.5, 0.3), (4, 3, 2.0, 1.7)]:
        law = SpeedLaw(n, k, alpha)
        assert speed([1 / R] * n, law) == pytest.approx(comb(n, k) ** alpha * R ** (-alpha * k), rel=1e-13)
        assert law.sphere_speed(R) == pytest.approx(speed([1 / R] * n, law), rel=1e-13)


def test_speed_grad_examples():
    np.testing.assert_allclose(speed_grad([1, 1], SpeedLaw(2, 1, 1.0)), [1, 1])
    np.testing.assert_allclose(speed_grad([1, 2, 3], SpeedLaw(3, 2, 1.0)), [5, 4, 3])


def test_speed_from_radii_examples():
    assert speed_from_radii([1, 0.5, 1 / 3], SpeedLaw(3, 2, 1.0)) == pytest.approx(11, rel=1e-14)
    assert speed_from_radii([2.0] * 3, SpeedLaw(3, 2, 1.5)) == pytest.approx(3 ** 1.5 * 2 ** -3, rel=1e-14)


def test_phi_sphere():
    for n, k in [(1, 1), (3, 2), (5, 5)]:
        law = SpeedLaw(n, k, 0.7)
        assert phi([1.3] * n, law) == pytest.approx(1.3 * comb(n, k) ** (-1 / k), rel=1e-13)


def test_identity_examples():
    res = identity_residuals([1, 1, 1], SpeedLaw(3, 2, 1.0))
    assert res.worst() < 1e-15
    # product rule at (1,2,3), k=2: 5*1 + 4*4 + 3*9 = 48 = 6*11 - 3*6
    assert identity_residuals([1, 2, 3], SpeedLaw(3, 2, 1.0)).product_rule < 1e-15


def test_validation():
    with pytest.raises(DomainError):
        SpeedLaw(2, 3, 1.0)
    with pytest.raises(DomainError):
        SpeedLaw(2, 0, 1.0)
    with pytest.raises(DomainError, match="alpha > 0"):
        SpeedLaw(2, 1, 0.0)
    with pytest.raises(DomainError):
        elem_sym([1, 2], 4)
    with pytest.raises(PositivityError):
        speed([1, -2, 3], SpeedLaw(3, 1, 1.0))
    with pytest.raises(PositivityError):
        speed([1, 0, 3], SpeedLaw(3, 1, 1.0))
    with pytest.raises(DomainError):
        speed([1, 2], SpeedLaw(3, 1, 1.0))


def test_large_n_against_enumeration():
    rng = np.random.default_rng(3)
    lam = 10 ** rng.uniform(-2, 2, size=12)
    for k in range(13):
        assert elem_sym(lam, k) == pytest.approx(brute_esp(lam, k), rel=1e-12)


# -- properties -----------------------------------------------------------------

@given(cone_vectors(), st.data())
def test_matches_enumeration(lam, data):
    k = data.draw(st.integers(0, lam.size))
    assert elem_sym(lam, k) == pytest.approx(brute_esp(lam, k), rel=1e-12)


@given(cone_vectors(), st.randoms(use_true_random=False), st.data())
def test_permutation_invariance(lam, rnd, data):
    k = data.draw(st.integers(0, lam.size))
    perm = list(lam)
    rnd.shuffle(perm)
    assert elem_sym(perm, k) == pytest.approx(elem_sym(lam, k), rel=1e-13)


@given(cone_vectors(), st.floats(0.1, 10.0), st.data())
def test_homogeneity(lam, c, data):
    k = data.draw(st.integers(0, lam.size))
    assert elem_sym(c * lam, k) == pytest.approx(c ** k * elem_sym(lam, k), rel=1e-12)


@given(law_and_lambda())
def test_euler_identity(case):
    law, lam = case
    lhs = float(np.dot(speed_grad(lam, law), lam))
    assert lhs == pytest.approx(law.degree * speed(lam, law), rel=1e-12)


@given(law_and_lambda())
def test_grad_matches_central_differences(case):
    law, lam = case
    g = speed_grad(lam, law)
    errs = []
    for h in (1e-3, 5e-4):
        fd = np.empty(lam.size)
        for i in range(lam.size):
            e = np.zeros(lam.size)
            e[i] = h * lam[i]
            fd[i] = (speed(lam + e, law) - speed(lam - e, law)) / (2 * h * lam[i])
        errs.append(np.max(np.abs(fd - g)) / np.max(np.abs(g)))
    # second order: halving h quarters the error, until round-off takes over
    assert errs[1] <= max(1e-7, 0.3 * errs[0])
    assert errs[0] < 1e-4


@given(law_and_lambda())
def test_radii_substitution(case):
    law, lam = case
    r = 1.0 / lam
    assert speed_from_radii(r, law) == pytest.approx(speed(lam, law), rel=1e-12)
    # chain rule: d sigma / d r = -(d sigma / d lambda) lambda^2
    np.testing.assert_allclose(speed_radii_grad(r, law), -speed_grad(lam, law) * lam ** 2, rtol=1e-12)


@given(law_and_lambda(), st.floats(0.2, 5.0))
def test_phi_one_homogeneous(case, c):
    law, lam = case
    r = 1.0 / lam
    assert phi(c * r, law) == pytest.approx(c * phi(r, law), rel=1e-12)


@given(law_and_lambda())
def test_identity_residuals_random(case):
    law, lam = case
    assert identity_residuals(lam, law).worst() <= 1e-10


@given(cone_vectors(2, 6), st.data())
def test_maclaurin_strict_off_diagonal(lam, data):
    k = data.draw(st.integers(1, lam.size - 1))
    lo = norm_sym(lam, k) ** (1 / k)
    hi = norm_sym(lam, k + 1) ** (1 / (k + 1))
    assert hi <= lo * (1 + 1e-12)


@given(st.integers(1, 6))
def test_leave_one_out(n):
    x = np.linspace(0.3, 2.0, n)
    for k in range(0, n):
        ref = [brute_esp(np.delete(x, i), k) for i in range(n)]
        np.testing.assert_allclose(esp_leave_one_out(x, k), ref, rtol=1e-13)


def test_phi_midpoint_concavity():
    rng = np.random.default_rng(20)
    worst = 0.0
    for n in range(1, 7):
        for k in range(1, n + 1):
            for alpha in (0.5, 1.0, 2.0):
                law = SpeedLaw(n, k, alpha)
                r = 10 ** rng.uniform(-1, 1, size=(10_000, n))
                s = 10 ** rng.uniform(-1, 1, size=(10_000, n))
                gap = phi((r + s) / 2, law) - (phi(r, law) + phi(s, law)) / 2
                scale = phi(r, law) + phi(s, law)
                worst = min(worst, float(np.min(gap / scale)))
    assert worst >= -1e-13


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(5)
    lam = rng.uniform(0.1, 3, size=(20, 4))
    law = SpeedLaw(4, 3, 1.5)
    batch = speed(lam, law)
    assert batch.shape == (20,)
    np.testing.assert_allclose(batch, [speed(row, law) for row in lam], rtol=1e-15)
