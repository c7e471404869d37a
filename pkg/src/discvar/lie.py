"""Matrix Lie group kernel for R^n, SO(3) and SE(3).

Group elements are plain numpy arrays: vectors for the abelian group R^n,
3x3 rotation matrices for SO(3), 4x4 homogeneous matrices for SE(3).
Algebra and coalgebra vectors are coordinate arrays of length ``dim``;
the pairing between them is the Euclidean dot product, so every dual map
is the transpose of the corresponding primal coordinate matrix.

All operations broadcast over leading batch dimensions.

Two retractions are provided:

* ``cay``: Cayley transform, in closed form for SO(3)/SE(3).
* ``exp``: matrix exponential, closed form (Rodrigues) for the map itself;
  its trivialized tangent maps are evaluated by power series in the adjoint
  operator.  ``series_order`` is the minimum number of series terms; the sum
  continues past it until the terms fall below round-off so that the tangent
  maps and their inverses stay mutually consistent to machine precision.

se(3) coordinates are ordered (angular, linear): xi = (omega, v).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, OutOfChart

CAYLEY = "cay"
EXPONENTIAL = "exp"

_CHART_ANGLE_TOL = 1e-8


# ---------------------------------------------------------------------------
# hat / vee
# ---------------------------------------------------------------------------

def hat3(w):
    """Skew-symmetric 3x3 matrix of w, i.e. hat3(w) @ x == cross(w, x)."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != 3:
        raise DimensionMismatch("expected vectors of length 3")
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee3(W):
    W = np.asarray(W, dtype=float)
    return np.stack(
        [W[..., 2, 1], W[..., 0, 2], W[..., 1, 0]], axis=-1
    )


def hat4(xi):
    """4x4 se(3) matrix of xi = (omega, v)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 6:
        raise DimensionMismatch("expected vectors of length 6")
    out = np.zeros(xi.shape[:-1] + (4, 4))
    out[..., :3, :3] = hat3(xi[..., :3])
    out[..., :3, 3] = xi[..., 3:]
    return out


def vee4(X):
    X = np.asarray(X, dtype=float)
    return np.concatenate([vee3(X[..., :3, :3]), X[..., :3, 3]], axis=-1)


def _mt(A):
    """Batched matrix transpose."""
    return np.swapaxes(A, -1, -2)


def _mv(A, x):
    """Batched matrix-vector product."""
    return np.einsum("...ij,...j->...i", A, x)


def _eye_like(shape_src, n):
    out = np.zeros(shape_src + (n, n))
    out[...] = np.eye(n)
    return out


# ---------------------------------------------------------------------------
# SO(3) closed forms
# ---------------------------------------------------------------------------

def _so3_exp(w):
    w = np.asarray(w, dtype=float)
    th2 = np.einsum("...i,...i->...", w, w)
    th = np.sqrt(th2)
    small = th < 1e-8
    th_safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(th_safe) / th_safe)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(th_safe)) / th_safe**2)
    W = hat3(w)
    return np.eye(3) + a[..., None, None] * W + b[..., None, None] * (W @ W)


def _so3_angle(R):
    tr = np.trace(R, axis1=-2, axis2=-1)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def _so3_log(R):
    R = np.asarray(R, dtype=float)
    th = _so3_angle(R)
    if np.any(th > np.pi - _CHART_ANGLE_TOL):
        raise OutOfChart("rotation angle too close to pi for the exp chart")
    small = th < 1e-8
    th_safe = np.where(small, 1.0, th)
    f = np.where(small, 0.5 + th**2 / 12.0, th_safe / (2.0 * np.sin(th_safe)))
    return f[..., None] * vee3(R - _mt(R))


def _so3_cay(w):
    # cay(w) = (I - hat(w)/2)^-1 (I + hat(w)/2), rational closed form
    w = np.asarray(w, dtype=float)
    s = np.einsum("...i,...i->...", w, w)
    W = hat3(w)
    return np.eye(3) + (4.0 / (4.0 + s))[..., None, None] * (W + 0.5 * (W @ W))


def _so3_cay_inv(R):
    R = np.asarray(R, dtype=float)
    th = _so3_angle(R)
    if np.any(th > np.pi - _CHART_ANGLE_TOL):
        raise OutOfChart("rotation angle too close to pi for the Cayley chart")
    # hat(w) = 2 (R - I)(R + I)^-1; solve on the transposed system
    X = _mt(np.linalg.solve(_mt(R + np.eye(3)), _mt(2.0 * (R - np.eye(3)))))
    return vee3(0.5 * (X - _mt(X)))


def _inv_i_minus_half_hat(w):
    """(I - hat(w)/2)^-1 = (4 I + 2 hat(w) + w w^T) / (4 + |w|^2)."""
    w = np.asarray(w, dtype=float)
    s = np.einsum("...i,...i->...", w, w)
    W = hat3(w)
    num = 4.0 * np.eye(3) + 2.0 * W + w[..., :, None] * w[..., None, :]
    return num / (4.0 + s)[..., None, None]


def _so3_dcay(w):
    """Right-trivialized tangent of the SO(3) Cayley map, on coordinates."""
    w = np.asarray(w, dtype=float)
    s = np.einsum("...i,...i->...", w, w)
    return (2.0 / (4.0 + s))[..., None, None] * (2.0 * np.eye(3) + hat3(w))


def _so3_dcay_inv(w):
    w = np.asarray(w, dtype=float)
    return (
        np.eye(3)
        - 0.5 * hat3(w)
        + 0.25 * w[..., :, None] * w[..., None, :]
    )


# ---------------------------------------------------------------------------
# SE(3) closed forms
# ---------------------------------------------------------------------------

def _se3_build(R, t):
    out = np.zeros(R.shape[:-2] + (4, 4))
    out[..., :3, :3] = R
    out[..., :3, 3] = t
    out[..., 3, 3] = 1.0
    return out


def _se3_exp(xi):
    xi = np.asarray(xi, dtype=float)
    w, v = xi[..., :3], xi[..., 3:]
    th2 = np.einsum("...i,...i->...", w, w)
    th = np.sqrt(th2)
    small = th < 1e-8
    th_safe = np.where(small, 1.0, th)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(th_safe)) / th_safe**2)
    c = np.where(small, 1.0 / 6.0 - th2 / 120.0,
                 (th_safe - np.sin(th_safe)) / th_safe**3)
    W = hat3(w)
    V = np.eye(3) + b[..., None, None] * W + c[..., None, None] * (W @ W)
    return _se3_build(_so3_exp(w), _mv(V, v))


def _se3_log(g):
    g = np.asarray(g, dtype=float)
    w = _so3_log(g[..., :3, :3])
    th2 = np.einsum("...i,...i->...", w, w)
    th = np.sqrt(th2)
    small = th < 1e-4
    th_safe = np.where(small, 1.0, th)
    # V^-1 = I - hat(w)/2 + k hat(w)^2
    k = np.where(
        small,
        1.0 / 12.0 + th2 / 720.0,
        (1.0 - 0.5 * th_safe * np.sin(th_safe) / (1.0 - np.cos(th_safe)))
        / th_safe**2,
    )
    W = hat3(w)
    Vinv = np.eye(3) - 0.5 * W + k[..., None, None] * (W @ W)
    return np.concatenate([w, _mv(Vinv, g[..., :3, 3])], axis=-1)


def _se3_cay(xi):
    xi = np.asarray(xi, dtype=float)
    w, v = xi[..., :3], xi[..., 3:]
    return _se3_build(_so3_cay(w), _mv(_inv_i_minus_half_hat(w), v))


def _se3_cay_inv(g):
    g = np.asarray(g, dtype=float)
    w = _so3_cay_inv(g[..., :3, :3])
    t = g[..., :3, 3]
    v = t - 0.5 * _mv(hat3(w), t)
    return np.concatenate([w, v], axis=-1)


def _se3_dcay(xi):
    """Right-trivialized tangent of the SE(3) Cayley map, 6x6 on coordinates."""
    xi = np.asarray(xi, dtype=float)
    w, v = xi[..., :3], xi[..., 3:]
    Dr = _so3_dcay(w)
    P = _inv_i_minus_half_hat(w)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = Dr
    out[..., 3:, :3] = 0.5 * (hat3(v) @ Dr)
    out[..., 3:, 3:] = P
    return out


def _se3_dcay_inv(xi):
    xi = np.asarray(xi, dtype=float)
    w, v = xi[..., :3], xi[..., 3:]
    A = np.eye(3) - 0.5 * hat3(w)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = A + 0.25 * w[..., :, None] * w[..., None, :]
    out[..., 3:, :3] = -0.5 * (A @ hat3(v))
    out[..., 3:, 3:] = A
    return out


# ---------------------------------------------------------------------------
# exponential tangent series
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _bernoulli(n):
    """Bernoulli numbers B_0..B_n with the B_1 = -1/2 convention."""
    from math import comb

    b = [1.0]
    for m in range(1, n + 1):
        acc = 0.0
        for j in range(m):
            acc += comb(m + 1, j) * b[j]
        b.append(-acc / (m + 1))
    return tuple(b)


def _ad_series(ad, coeffs, min_terms, max_terms=250):
    """Sum coeffs[j] * ad^j, at least ``min_terms`` terms, then to round-off."""
    n = ad.shape[-1]
    power = _eye_like(ad.shape[:-2], n)
    total = coeffs[0] * power
    quiet = 0
    for j in range(1, max_terms):
        power = power @ ad
        if j < len(coeffs) and coeffs[j] != 0.0:
            total = total + coeffs[j] * power
        term = abs(coeffs[j]) * np.max(np.abs(power)) if j < len(coeffs) else 0.0
        if j >= min_terms:
            if term < 1e-17 * (1.0 + np.max(np.abs(total))):
                quiet += 1
                if quiet >= 2:
                    break
            else:
                quiet = 0
    return total


def _dexp_matrix(ad, order):
    m = min(max(order, 2) + 150, 169)
    coeffs = [1.0 / _factorial(j + 1) for j in range(m)]
    return _ad_series(ad, coeffs, min_terms=order, max_terms=m)


def _dexp_inv_matrix(ad, order):
    m = min(max(order, 2) + 150, 169)
    bern = _bernoulli(m)
    coeffs = [bern[j] / _factorial(j) for j in range(m)]
    return _ad_series(ad, coeffs, min_terms=order, max_terms=m)


@lru_cache(maxsize=None)
def _factorial(n):
    from math import factorial

    return float(factorial(n))


# ---------------------------------------------------------------------------
# GroupSpec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupSpec:
    """A matrix Lie group together with a choice of retraction.

    name          one of "Rn", "SO3", "SE3"
    dim           algebra dimension (n for R^n, 3 for SO(3), 6 for SE(3))
    retraction    "cay" or "exp"
    series_order  minimum series order for the exp tangent maps
    """

    name: str
    dim: int
    retraction: str = CAYLEY
    series_order: int = 12

    def __post_init__(self):
        if self.name not in ("Rn", "SO3", "SE3"):
            raise DimensionMismatch(f"unknown group name {self.name!r}")
        if self.name == "SO3" and self.dim != 3:
            raise DimensionMismatch("SO3 has algebra dimension 3")
        if self.name == "SE3" and self.dim != 6:
            raise DimensionMismatch("SE3 has algebra dimension 6")
        if self.dim < 1:
            raise DimensionMismatch("algebra dimension must be positive")
        if self.retraction not in (CAYLEY, EXPONENTIAL):
            raise DimensionMismatch(f"unknown retraction {self.retraction!r}")
        if self.retraction == EXPONENTIAL and self.series_order < 1:
            raise DimensionMismatch("series_order must be >= 1")

    # -- basic group structure ------------------------------------------

    @property
    def matrix_size(self):
        return {"Rn": None, "SO3": 3, "SE3": 4}[self.name]

    def identity(self):
        if self.name == "Rn":
            return np.zeros(self.dim)
        return np.eye(self.matrix_size)

    def multiply(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.name == "Rn":
            return a + b
        return a @ b

    def inverse(self, g):
        g = np.asarray(g, dtype=float)
        if self.name == "Rn":
            return -g
        if self.name == "SO3":
            return _mt(g)
        Rt = _mt(g[..., :3, :3])
        return _se3_build(Rt, -_mv(Rt, g[..., :3, 3]))

    def check(self, g, tol=1e-10):
        """Validate that g is a well-formed element; raises DimensionMismatch."""
        g = np.asarray(g, dtype=float)
        if self.name == "Rn":
            if g.shape[-1] != self.dim:
                raise DimensionMismatch("R^n element has wrong length")
            return g
        size = self.matrix_size
        if g.shape[-2:] != (size, size):
            raise DimensionMismatch(f"expected {size}x{size} matrices")
        R = g[..., :3, :3]
        if np.max(np.abs(_mt(R) @ R - np.eye(3))) > tol:
            raise DimensionMismatch("rotation block is not orthonormal")
        if np.max(np.abs(np.linalg.det(R) - 1.0)) > tol:
            raise DimensionMismatch("rotation block must have determinant +1")
        if self.name == "SE3":
            if np.max(np.abs(g[..., 3, :] - np.array([0.0, 0.0, 0.0, 1.0]))) != 0.0:
                raise DimensionMismatch("SE3 bottom row must be exactly (0,0,0,1)")
        return g

    # -- adjoint structure -----------------------------------------------

    def ad_matrix(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.name == "Rn":
            return np.zeros(xi.shape[:-1] + (self.dim, self.dim))
        if self.name == "SO3":
            return hat3(xi)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = hat3(xi[..., :3])
        out[..., 3:, :3] = hat3(xi[..., 3:])
        out[..., 3:, 3:] = hat3(xi[..., :3])
        return out

    def Ad_matrix(self, g):
        g = np.asarray(g, dtype=float)
        if self.name == "Rn":
            return _eye_like(g.shape[:-1], self.dim)
        if self.name == "SO3":
            return g.copy()
        R = g[..., :3, :3]
        out = np.zeros(g.shape[:-2] + (6, 6))
        out[..., :3, :3] = R
        out[..., 3:, :3] = hat3(g[..., :3, 3]) @ R
        out[..., 3:, 3:] = R
        return out

    def Ad(self, g, eta):
        return _mv(self.Ad_matrix(g), eta)

    def coAd(self, g, mu):
        """Dual of Ad: <coAd(g, mu), eta> == <mu, Ad(g, eta)>."""
        return _mv(_mt(self.Ad_matrix(g)), mu)

    # -- retraction -------------------------------------------------------

    def tau(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.dim:
            raise DimensionMismatch("algebra vector has wrong length")
        if self.name == "Rn":
            return xi.copy()
        if self.retraction == CAYLEY:
            return _so3_cay(xi) if self.name == "SO3" else _se3_cay(xi)
        return _so3_exp(xi) if self.name == "SO3" else _se3_exp(xi)

    def tau_inv(self, g):
        g = np.asarray(g, dtype=float)
        if self.name == "Rn":
            return g.copy()
        if self.retraction == CAYLEY:
            return _so3_cay_inv(g) if self.name == "SO3" else _se3_cay_inv(g)
        return _so3_log(g) if self.name == "SO3" else _se3_log(g)

    def dtau_matrix(self, xi):
        """Right-trivialized tangent of tau as a dim x dim coordinate matrix."""
        xi = np.asarray(xi, dtype=float)
        if self.name == "Rn":
            return _eye_like(xi.shape[:-1], self.dim)
        if self.retraction == CAYLEY:
            return _so3_dcay(xi) if self.name == "SO3" else _se3_dcay(xi)
        return _dexp_matrix(self.ad_matrix(xi), self.series_order)

    def dtau_inv_matrix(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.name == "Rn":
            return _eye_like(xi.shape[:-1], self.dim)
        if self.retraction == CAYLEY:
            return _so3_dcay_inv(xi) if self.name == "SO3" else _se3_dcay_inv(xi)
        return _dexp_inv_matrix(self.ad_matrix(xi), self.series_order)

    def dtau(self, xi, eta):
        return _mv(self.dtau_matrix(xi), eta)

    def dtau_inv(self, xi, eta):
        return _mv(self.dtau_inv_matrix(xi), eta)

    def dtau_dual(self, xi, mu):
        return _mv(_mt(self.dtau_matrix(xi)), mu)

    def dtau_inv_dual(self, xi, mu):
        return _mv(_mt(self.dtau_inv_matrix(xi)), mu)


def real_n(n, retraction=CAYLEY):
    return GroupSpec("Rn", n, retraction)


def so3(retraction=CAYLEY, series_order=12):
    return GroupSpec("SO3", 3, retraction, series_order)


def se3(retraction=CAYLEY, series_order=12):
    return GroupSpec("SE3", 6, retraction, series_order)
