import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal, norm

from refactor_analysis.assoc import (
    AssociationKind,
    ContingencyTable,
    DegenerateAssociation,
    agreement,
    association,
    bvn_cdf,
    contingency,
    image,
    loevinger_h,
    phi,
    quadrant_q,
    tetrachoric,
    tetrachoric_loglik_grad,
    yule_q,
)
from refactor_analysis.core import ValidationError, as_response_matrix

T = ContingencyTable


@pytest.mark.parametrize(
    "x,y,expected",
    [
        ([1, 1, 0, 0], [1, 1, 0, 0], (2, 0, 0, 2)),
        ([1, 0], [0, 1], (0, 1, 1, 0)),
        ([1, 1, 0, 0], [1, 0, 1, 0], (1, 1, 1, 1)),
    ],
)
def test_contingency_examples(x, y, expected):
    t = contingency(np.array(x), np.array(y))
    assert (t.n11, t.n10, t.n01, t.n00) == expected


def test_contingency_uses_joint_observations_only():
    t = contingency(np.array([1, 1, 0]), np.array([1, 0, 0]), np.array([1, 0, 1], bool), None)
    assert t.total == 2
    with pytest.raises(ValueError):
        contingency(np.array([1, 0]), np.array([1, 0]), np.array([1, 0], bool), np.array([0, 1], bool))


@pytest.mark.parametrize(
    "fn,t,expected",
    [
        (quadrant_q, T(2, 0, 0, 2), 1.0),
        (quadrant_q, T(0, 1, 1, 0), -1.0),
        (quadrant_q, T(1, 1, 1, 1), 0.0),
        (phi, T(2, 0, 0, 2), 1.0),
        (phi, T(1, 1, 1, 1), 0.0),
        (phi, T(3, 1, 1, 3), 0.5),
        (yule_q, T(2, 0, 0, 2), 1.0),
        (agreement, T(1, 1, 1, 1), 0.5),
        (loevinger_h, T(1, 1, 1, 1), 0.0),
    ],
)
def test_scalar_examples(fn, t, expected):
    assert fn(t) == pytest.approx(expected, abs=1e-15)


def test_degenerate_signals():
    with pytest.raises(DegenerateAssociation):
        phi(T(2, 2, 0, 0))
    with pytest.raises(DegenerateAssociation):
        yule_q(T(1, 0, 1, 0))
    with pytest.raises(DegenerateAssociation):
        tetrachoric(T(4, 0, 0, 0))
    # quadrant stays defined on a constant variable
    assert quadrant_q(T(2, 2, 0, 0)) == 0.0


def test_loevinger_perfect_scale():
    # no Guttman errors: nobody passes the hard item while failing the easy one
    assert loevinger_h(T(3, 2, 0, 5)) == pytest.approx(1.0)


tables = st.tuples(*(st.integers(0, 40) for _ in range(4))).filter(lambda c: sum(c) > 0)


@settings(max_examples=200, deadline=None)
@given(c=tables)
def test_symmetry_and_quadrant_identity(c):
    t, tt = T(*c), T(c[0], c[2], c[1], c[3])
    for kind in AssociationKind:
        try:
            a = association(t, kind)
        except DegenerateAssociation:
            with pytest.raises(DegenerateAssociation):
                association(tt, kind)
            continue
        assert association(tt, kind) == pytest.approx(a, abs=1e-10)
        if kind in ("phi", "quadrant", "yule_q", "tetrachoric"):
            assert -1.0 <= a <= 1.0
    assert quadrant_q(t) == pytest.approx(2 * agreement(t) - 1, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(c=tables)
def test_relabeling(c):
    n11, n10, n01, n00 = c
    t = T(*c)
    both = T(n00, n01, n10, n11)
    one = T(n01, n00, n11, n10)
    assert quadrant_q(both) == pytest.approx(quadrant_q(t), abs=1e-12)
    assert quadrant_q(one) == pytest.approx(-quadrant_q(t), abs=1e-12)
    try:
        p = phi(t)
    except DegenerateAssociation:
        return
    assert phi(both) == pytest.approx(p, abs=1e-12)
    assert phi(one) == pytest.approx(-p, abs=1e-12)


def test_bvn_cdf_against_scipy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = rng.normal(size=2) * 1.5
        r = rng.uniform(-0.99, 0.99)
        ref = multivariate_normal(mean=[0, 0], cov=[[1, r], [r, 1]]).cdf([a, b])
        assert bvn_cdf(a, b, r) == pytest.approx(ref, abs=1e-6)


def test_bvn_cdf_quadrant_closed_form():
    for r in np.linspace(-0.999, 0.999, 41):
        assert bvn_cdf(0.0, 0.0, r) == pytest.approx(0.25 + math.asin(r) / (2 * math.pi), abs=1e-13)


def _exact_table(rho, h1, h2, total=1.0):
    p11 = float(multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([-h1, -h2]))
    p1 = norm.sf(h1)
    p2 = norm.sf(h2)
    return T(p11 * total, (p1 - p11) * total, (p2 - p11) * total, (1 - p1 - p2 + p11) * total)


def test_tetrachoric_examples():
    assert tetrachoric(T(0.25, 0.25, 0.25, 0.25)) == pytest.approx(0.0, abs=1e-4)
    assert tetrachoric(T(1 / 3, 1 / 6, 1 / 6, 1 / 3)) == pytest.approx(0.5, abs=1e-3)
    assert 0.95 <= tetrachoric(T(50, 0, 0, 50)) < 1.0


@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.4, 0.85])
@pytest.mark.parametrize("h", [(0.0, 0.0), (0.5, -0.3), (1.0, 0.2)])
def test_tetrachoric_recovers_exact_tables(rho, h):
    t = _exact_table(rho, *h, total=1000.0)
    assert tetrachoric(t) == pytest.approx(rho, abs=1e-5)


def test_tetrachoric_gradient_is_zero_at_interior_solution():
    t = T(40, 11, 17, 32)
    r = tetrachoric(t)
    assert abs(tetrachoric_loglik_grad(r, 40, 11, 17, 32)) < 1e-6


def test_image_examples():
    X = as_response_matrix([[1, 1, 0], [0, 0, 1], [1, 1, 1], [0, 0, 0], [1, 1, 0]])
    for kind in AssociationKind:
        A = image(X, kind).values
        assert np.allclose(A, A.T, atol=1e-12)
        assert np.all(np.diag(A) == 1.0)
        if kind is AssociationKind.TETRACHORIC:
            # zero cells get +0.5, so identical columns give the corrected estimate, not 1
            assert A[0, 1] == pytest.approx(tetrachoric(T(3, 0, 0, 2)), abs=1e-12)
        else:
            assert A[0, 1] == pytest.approx(1.0)
    big = as_response_matrix(np.repeat([[1, 1], [0, 0]], 500, axis=0))
    assert image(big, "tetrachoric").values[0, 1] >= 0.99


def test_image_duality_and_phi_oracle(rng):
    M = rng.integers(0, 2, size=(12, 3)).astype(float)
    M[rng.random(M.shape) < 0.1] = np.nan
    X = as_response_matrix(M)
    for kind in ("phi", "quadrant", "tetrachoric"):
        assert np.array_equal(image(X, kind, "rows").values, image(X.T, kind, "columns").values)
    A = image(X, "phi").values
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            t = contingency(X.values[:, i], X.values[:, j], X.mask[:, i], X.mask[:, j])
            try:
                ref = phi(t)
            except DegenerateAssociation:
                ref = 0.0
            assert A[i, j] == pytest.approx(ref, abs=1e-12)


def test_image_constant_column_handling():
    X = as_response_matrix([[1, 1, 0], [0, 1, 1], [1, 1, 1], [0, 1, 0]])
    im = image(X, "phi")
    assert im.degenerate_flags.tolist() == [False, True, False]
    assert im.values[1, 0] == 0.0 and im.values[1, 1] == 1.0
    q = image(X, "quadrant")
    assert not q.degenerate_flags.any()
    assert q.constant_flags.tolist() == [False, True, False]
    assert q.values[1, 0] == pytest.approx(0.0)  # agreement 1/2


def test_image_warning_when_mostly_degenerate():
    X = as_response_matrix([[1, 1, 1, 0], [1, 1, 1, 1], [1, 1, 1, 0]])
    im = image(X, "phi")
    assert im.warning is not None
    with pytest.raises(ValueError):
        image(X, "phi", axis="diagonal")


@pytest.mark.parametrize("a,b,r", [(0.3, -0.4, 0.6), (-1.0, 0.5, -0.7), (1.2, 1.1, 0.95), (0.0, 0.0, 0.2)])
def test_bvn_cdf_against_high_precision_conditional_integral(a, b, r):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 30
    s = mpmath.sqrt(1 - mpmath.mpf(r) ** 2)

    # P(X <= a, Y <= b) = int_{-inf}^{a} phi(x) Phi((b - r x) / s) dx
    def integrand(x):
        return mpmath.npdf(x) * mpmath.ncdf((b - r * x) / s)

    ref = mpmath.quad(integrand, [-mpmath.inf, min(a, 0.0), a])
    assert bvn_cdf(a, b, r) == pytest.approx(float(ref), abs=1e-12)
