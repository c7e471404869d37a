"""Retraction kernel tests: charts, trivialized tangents, duals, adjoints."""

import numpy as np
import pytest

from discvar import lie
from discvar.errors import DimensionMismatch, OutOfChart


def groups(retraction):
    return [lie.real_n(3, retraction=retraction),
            lie.so3(retraction=retraction),
            lie.se3(retraction=retraction)]


def random_algebra(rng, n, count, radius=2.0):
    v = rng.normal(size=(count, n))
    scale = rng.uniform(0.025 * radius, radius, size=(count, 1))
    return v / np.linalg.norm(v, axis=1, keepdims=True) * scale


def mat_t(a):
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------------------
# hat / vee
# ---------------------------------------------------------------------------

def test_hat3_antisymmetric_and_cross_product():
    rng = np.random.default_rng(0)
    w = rng.normal(size=3)
    v = rng.normal(size=3)
    W = lie.hat3(w)
    assert np.allclose(W, -W.T)
    assert np.allclose(W @ v, np.cross(w, v))
    assert np.allclose(lie.vee3(W), w)


def test_hat4_embedding_and_roundtrip():
    rng = np.random.default_rng(1)
    xi = rng.normal(size=6)
    X = lie.hat4(xi)
    assert X.shape == (4, 4)
    assert np.allclose(X[:3, :3], lie.hat3(xi[:3]))
    assert np.allclose(X[:3, 3], xi[3:])
    assert np.allclose(X[3], 0.0)
    assert np.allclose(lie.vee4(X), xi)


def test_hat_rejects_wrong_length():
    with pytest.raises(DimensionMismatch):
        lie.hat3(np.zeros(4))
    with pytest.raises(DimensionMismatch):
        lie.hat4(np.zeros(3))


# ---------------------------------------------------------------------------
# chart maps
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_tau_inverse_element(retraction):
    rng = np.random.default_rng(2)
    for g in groups(retraction):
        xi = random_algebra(rng, g.dim, 200)
        prod = g.multiply(g.tau(xi), g.tau(-xi))
        assert np.max(np.abs(prod - g.identity())) < 1e-12


@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_tau_roundtrip(retraction):
    rng = np.random.default_rng(3)
    for g in groups(retraction):
        xi = random_algebra(rng, g.dim, 200)
        assert np.max(np.abs(g.tau_inv(g.tau(xi)) - xi)) < 1e-10


def test_so3_exponential_is_axis_angle_rotation():
    # independent closed-form oracle for rotation about the x axis
    theta = 0.3
    g = lie.so3(retraction=lie.EXPONENTIAL)
    R = g.tau(np.array([theta, 0.0, 0.0]))
    c, s = np.cos(theta), np.sin(theta)
    oracle = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    assert np.max(np.abs(R - oracle)) < 1e-10


def test_exponential_matches_scipy_expm():
    scipy = pytest.importorskip("scipy.linalg")
    rng = np.random.default_rng(4)
    g = lie.se3(retraction=lie.EXPONENTIAL)
    for _ in range(20):
        xi = rng.normal(size=6)
        assert np.max(np.abs(g.tau(xi) - scipy.expm(lie.hat4(xi)))) < 1e-12


def test_cayley_matches_exponential_to_second_order():
    rng = np.random.default_rng(5)
    for gc, ge in zip(groups(lie.CAYLEY), groups(lie.EXPONENTIAL)):
        xi = random_algebra(rng, gc.dim, 100, radius=1e-3)
        assert np.max(np.abs(gc.tau(xi) - ge.tau(xi))) < 1e-6


def test_so3_cayley_closed_form():
    # cay(w) = (I - hat(w)/2)^(-1) (I + hat(w)/2), assembled independently
    rng = np.random.default_rng(6)
    g = lie.so3(retraction=lie.CAYLEY)
    for _ in range(20):
        w = rng.normal(size=3)
        W = lie.hat3(w)
        oracle = np.linalg.solve(np.eye(3) - W / 2.0, np.eye(3) + W / 2.0)
        assert np.max(np.abs(g.tau(w) - oracle)) < 1e-13


def test_se3_cayley_is_matrix_cayley_transform():
    rng = np.random.default_rng(7)
    g = lie.se3(retraction=lie.CAYLEY)
    for _ in range(20):
        xi = rng.normal(size=6)
        X = lie.hat4(xi)
        oracle = np.linalg.solve(np.eye(4) - X / 2.0, np.eye(4) + X / 2.0)
        assert np.max(np.abs(g.tau(xi) - oracle)) < 1e-12


@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_chart_guard_near_half_turn(retraction):
    g = lie.so3(retraction=retraction)
    R = g.tau(np.array([np.pi - 1e-12, 0.0, 0.0])) if retraction == lie.EXPONENTIAL \
        else lie.so3(retraction=lie.EXPONENTIAL).tau(np.array([np.pi - 1e-12, 0.0, 0.0]))
    with pytest.raises(OutOfChart):
        g.tau_inv(R)


def test_se3_chart_guard():
    ge = lie.se3(retraction=lie.EXPONENTIAL)
    near_half_turn = ge.tau(np.array([np.pi - 1e-12, 0.0, 0.0, 0.3, 0.0, 0.0]))
    for retraction in (lie.CAYLEY, lie.EXPONENTIAL):
        with pytest.raises(OutOfChart):
            lie.se3(retraction=retraction).tau_inv(near_half_turn)


# ---------------------------------------------------------------------------
# group element validity
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_products_and_inverses_stay_valid(retraction):
    rng = np.random.default_rng(8)
    for g in groups(retraction):
        xi = random_algebra(rng, g.dim, 50)
        elems = g.tau(xi)
        prod = g.multiply(elems[:-1], elems[1:])
        g.check(prod, tol=1e-10)
        g.check(g.inverse(prod), tol=1e-10)


def test_se3_bottom_row_exact():
    rng = np.random.default_rng(9)
    g = lie.se3()
    elems = g.tau(random_algebra(rng, 6, 10))
    prod = g.multiply(elems[0], elems[1])
    assert np.array_equal(prod[3], np.array([0.0, 0.0, 0.0, 1.0]))


def test_check_rejects_invalid_matrix():
    g = lie.so3()
    bad = np.eye(3)
    bad = bad.copy()
    bad[0, 0] = 1.5
    with pytest.raises(DimensionMismatch):
        g.check(bad)


# ---------------------------------------------------------------------------
# trivialized tangent maps
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_dtau_and_inverse_compose_to_identity(retraction):
    rng = np.random.default_rng(10)
    for g in groups(retraction):
        xi = random_algebra(rng, g.dim, 200)
        prod = np.einsum(
            "kij,kjl->kil", g.dtau_matrix(xi), g.dtau_inv_matrix(xi)
        )
        assert np.max(np.abs(prod - np.eye(g.dim))) < 1e-10


@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_dtau_left_right_swap_identity(retraction):
    # dtau(xi) eta equals Ad of tau(xi) applied to dtau(-xi) eta
    rng = np.random.default_rng(11)
    for g in groups(retraction):
        xi = random_algebra(rng, g.dim, 200)
        eta = rng.normal(size=(200, g.dim))
        lhs = g.dtau(xi, eta)
        rhs = g.Ad(g.tau(xi), g.dtau(-xi, eta))
        assert np.max(np.abs(lhs - rhs)) < 1e-10


@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_dtau_inv_left_right_swap_identity(retraction):
    # dtau_inv(xi) eta equals dtau_inv(-xi) applied to Ad of tau(-xi) eta
    rng = np.random.default_rng(12)
    for g in groups(retraction):
        xi = random_algebra(rng, g.dim, 200)
        eta = rng.normal(size=(200, g.dim))
        lhs = g.dtau_inv(xi, eta)
        rhs = g.dtau_inv(-xi, g.Ad(g.tau(-xi), eta))
        assert np.max(np.abs(lhs - rhs)) < 1e-10


@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_dtau_finite_difference_consistency(retraction):
    # tau(xi + t eta) = (I + t hat(dtau(xi, eta))) tau(xi) + O(t^2);
    # Richardson slope of the defect must be >= 1.9
    rng = np.random.default_rng(13)
    for g in (lie.so3(retraction=retraction), lie.se3(retraction=retraction)):
        xi = rng.normal(size=g.dim) * 0.7
        eta = rng.normal(size=g.dim)
        hat = lie.hat3 if g.dim == 3 else lie.hat4
        ts = np.array([1e-3, 5e-4, 2.5e-4])
        defects = []
        for t in ts:
            approx = (np.eye(g.matrix_size) + t * hat(g.dtau(xi, eta))) @ g.tau(xi)
            defects.append(np.max(np.abs(g.tau(xi + t * eta) - approx)))
        slope = np.polyfit(np.log(ts), np.log(defects), 1)[0]
        assert slope >= 1.9


def test_se3_dcay_inv_closed_form_blocks():
    # block structure: [[I - W/2 + w w^T/4, 0], [-1/2 (I - W/2) vhat, I - W/2]]
    rng = np.random.default_rng(14)
    g = lie.se3(retraction=lie.CAYLEY)
    for _ in range(50):
        xi = rng.normal(size=6)
        w, v = xi[:3], xi[3:]
        W = lie.hat3(w)
        A = np.eye(3) - W / 2.0 + np.outer(w, w) / 4.0
        B = np.eye(3) - W / 2.0
        oracle = np.zeros((6, 6))
        oracle[:3, :3] = A
        oracle[3:, :3] = -0.5 * (B @ lie.hat3(v))
        oracle[3:, 3:] = B
        assert np.max(np.abs(g.dtau_inv_matrix(xi) - oracle)) < 1e-13


@pytest.mark.parametrize("retraction", [lie.CAYLEY, lie.EXPONENTIAL])
def test_dual_maps_satisfy_pairing(retraction):
    rng = np.random.default_rng(15)
    for g in groups(retraction):
        xi = random_algebra(rng, g.dim, 100)
        eta = rng.normal(size=(100, g.dim))
        mu = rng.normal(size=(100, g.dim))
        lhs = np.einsum("ki,ki->k", g.dtau_inv_dual(xi, mu), eta)
        rhs = np.einsum("ki,ki->k", mu, g.dtau_inv(xi, eta))
        assert np.max(np.abs(lhs - rhs)) < 1e-12
        lhs = np.einsum("ki,ki->k", g.dtau_dual(xi, mu), eta)
        rhs = np.einsum("ki,ki->k", mu, g.dtau(xi, eta))
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_dtau_at_zero_is_identity():
    for retraction in (lie.CAYLEY, lie.EXPONENTIAL):
        for g in groups(retraction):
            zero = np.zeros(g.dim)
            eta = np.arange(1.0, g.dim + 1.0)
            assert np.allclose(g.dtau(zero, eta), eta)
            assert np.allclose(g.dtau_inv(zero, eta), eta)
            assert np.allclose(g.dtau_inv_dual(zero, eta), eta)


# ---------------------------------------------------------------------------
# adjoints
# ---------------------------------------------------------------------------

def test_adjoint_of_product_is_product_of_adjoints():
    rng = np.random.default_rng(16)
    for g in (lie.so3(), lie.se3()):
        a = g.tau(rng.normal(size=g.dim))
        b = g.tau(rng.normal(size=g.dim))
        lhs = g.Ad_matrix(g.multiply(a, b))
        rhs = g.Ad_matrix(a) @ g.Ad_matrix(b)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_co_adjoint_pairing():
    rng = np.random.default_rng(17)
    for g in (lie.so3(), lie.se3()):
        elem = g.tau(rng.normal(size=g.dim))
        mu = rng.normal(size=g.dim)
        eta = rng.normal(size=g.dim)
        lhs = g.coAd(elem, mu) @ eta
        rhs = mu @ g.Ad(elem, eta)
        assert abs(lhs - rhs) < 1e-12


def test_ad_matrix_is_bracket():
    rng = np.random.default_rng(18)
    g = lie.se3()
    x = rng.normal(size=6)
    y = rng.normal(size=6)
    bracket = lie.hat4(x) @ lie.hat4(y) - lie.hat4(y) @ lie.hat4(x)
    assert np.max(np.abs(g.ad_matrix(x) @ y - lie.vee4(bracket))) < 1e-12


def test_abelian_group_is_trivial():
    g = lie.real_n(4)
    rng = np.random.default_rng(19)
    x = rng.normal(size=4)
    eta = rng.normal(size=4)
    assert np.allclose(g.tau(x), x)
    assert np.allclose(g.tau_inv(x), x)
    assert np.allclose(g.multiply(x, eta), x + eta)
    assert np.allclose(g.inverse(x), -x)
    assert np.allclose(g.dtau(x, eta), eta)
    assert np.allclose(g.Ad(x, eta), eta)
