"""
SO(3) primitives and the direct-product group SO(3) x R^m.

Rotation vectors use the right-perturbation convention ``R exp(theta)``. The
composite group is stored blockwise as ``(rotation, euclidean)``; the embedded
``(m + 4) x (m + 4)`` matrix form is never formed here.

Small-angle branches switch at ``|theta| < 1e-4`` and use fourth-order series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit

SMALL_ANGLE = 1e-4


@njit
def _skew(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@njit
def _vee(m):
    out = np.empty(3)
    out[0] = m[2, 1]
    out[1] = m[0, 2]
    out[2] = m[1, 0]
    return out


@njit
def _so3_exp(theta):
    th2 = theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]
    th = np.sqrt(th2)
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        a = np.sin(th) / th
        half = np.sin(0.5 * th)
        b = 2.0 * half * half / th2
    k = _skew(theta)
    return np.eye(3) + a * k + b * (k @ k)


@njit
def _so3_log(r):
    # sin(angle) * axis from the antisymmetric part, cos(angle) from the trace
    w = 0.5 * _vee(r - r.T)
    s = np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    c = 0.5 * (r[0, 0] + r[1, 1] + r[2, 2] - 1.0)
    angle = np.arctan2(s, c)
    if angle < SMALL_ANGLE:
        a2 = angle * angle
        return (1.0 + a2 / 6.0 + 7.0 * a2 * a2 / 360.0) * w
    if angle < np.pi - 1e-2:
        return (angle / s) * w
    # near pi: axis from the symmetric part, sign from the antisymmetric part
    sym = 0.5 * (r + r.T)
    outer = (sym - c * np.eye(3)) / (1.0 - c)
    i = 0
    if outer[1, 1] > outer[i, i]:
        i = 1
    if outer[2, 2] > outer[i, i]:
        i = 2
    axis = outer[:, i] / np.sqrt(outer[i, i])
    axis = axis / np.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
    d = axis[0] * w[0] + axis[1] * w[1] + axis[2] * w[2]
    if abs(d) > 1e-12:
        if d < 0.0:
            axis = -axis
    else:
        for j in range(3):
            if abs(axis[j]) > 1e-12:
                if axis[j] < 0.0:
                    axis = -axis
                break
    return angle * axis


@njit
def _bortz_gamma(theta):
    th2 = theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]
    th = np.sqrt(th2)
    if th < SMALL_ANGLE:
        c = 1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0
    else:
        half = 0.5 * th
        c = (1.0 - half * np.cos(half) / np.sin(half)) / th2
    k = _skew(theta)
    return np.eye(3) + 0.5 * k + c * (k @ k)


@njit
def _so3_right_jacobian(theta):
    th2 = theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]
    th = np.sqrt(th2)
    if th < SMALL_ANGLE:
        a = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
        b = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0
    else:
        half = np.sin(0.5 * th)
        a = 2.0 * half * half / th2
        b = (th - np.sin(th)) / (th2 * th)
    k = _skew(theta)
    return np.eye(3) - a * k + b * (k @ k)


def _vec3(v: ArrayLike) -> NDArray[np.float64]:
    out = np.asarray(v, dtype=np.float64)
    if out.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {out.shape}")
    return out


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """
    Skew-symmetric matrix ``[v x]`` such that ``skew(v) @ w == cross(v, w)``.
    """
    return _skew(_vec3(v))


def so3_exp(theta: ArrayLike) -> NDArray[np.float64]:
    """
    Exponential map from a rotation vector to a rotation matrix (Rodrigues).

    Parameters
    ----------
    theta : array-like, shape (3,)
        Rotation vector in radians.

    Returns
    -------
    numpy.ndarray, shape (3, 3)
        Rotation matrix.
    """
    return _so3_exp(_vec3(theta))


def so3_log(r: ArrayLike) -> NDArray[np.float64]:
    """
    Logarithm map from a rotation matrix to its canonical rotation vector.

    The result has norm at most pi. At an angle of exactly pi the axis sign is
    chosen so that its first nonzero component is positive.

    Parameters
    ----------
    r : array-like, shape (3, 3)
        Rotation matrix.

    Returns
    -------
    numpy.ndarray, shape (3,)
        Rotation vector in radians.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {r.shape}")
    return _so3_log(np.ascontiguousarray(r))


def bortz_gamma(theta: ArrayLike) -> NDArray[np.float64]:
    """
    Rotation-vector rate matrix, ``theta_dot = bortz_gamma(theta) @ omega``.

    This is the inverse of :func:`so3_right_jacobian`. Valid for
    ``|theta| < 2 pi``.
    """
    return _bortz_gamma(_vec3(theta))


def so3_right_jacobian(theta: ArrayLike) -> NDArray[np.float64]:
    """
    Right Jacobian of SO(3).

    Satisfies ``exp(theta + d) ~= exp(theta) @ exp(J_r(theta) @ d)`` to first
    order in ``d``.
    """
    return _so3_right_jacobian(_vec3(theta))


def is_rotation(m: ArrayLike, tol: float = 1e-12) -> bool:
    """Check orthogonality and unit determinant of ``m`` within ``tol``."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    ortho = np.linalg.norm(m.T @ m - np.eye(3))
    return bool(ortho < tol and abs(np.linalg.det(m) - 1.0) < tol)


@dataclass(frozen=True)
class CompositeGroupElement:
    """
    Element of SO(3) x R^m.

    Parameters
    ----------
    rotation : numpy.ndarray, shape (3, 3)
        Rotation block.
    euclidean : numpy.ndarray, shape (m,)
        Euclidean block; its length is fixed for the lifetime of the element.
    """

    rotation: NDArray[np.float64]
    euclidean: NDArray[np.float64]

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=np.float64)
        euc = np.array(self.euclidean, dtype=np.float64).reshape(-1)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        rot.setflags(write=False)
        euc.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "euclidean", euc)

    @property
    def dim(self) -> int:
        """Dimension of the Lie algebra, ``3 + m``."""
        return 3 + self.euclidean.shape[0]

    @classmethod
    def identity(cls, m: int) -> CompositeGroupElement:
        return cls(np.eye(3), np.zeros(m))

    def inverse(self) -> CompositeGroupElement:
        return CompositeGroupElement(self.rotation.T, -self.euclidean)

    def __matmul__(self, other: CompositeGroupElement) -> CompositeGroupElement:
        return composite_compose(self, other)


def _check_dim(e: NDArray[np.float64], m: int | None) -> None:
    if e.ndim != 1 or e.shape[0] < 3:
        raise ValueError(f"algebra vector must be 1-D with length >= 3, got {e.shape}")
    if m is not None and e.shape[0] != 3 + m:
        raise ValueError(f"algebra vector has length {e.shape[0]}, group needs {3 + m}")


def composite_exp(e: ArrayLike, m: int | None = None) -> CompositeGroupElement:
    """
    Exponential map of SO(3) x R^m, applied blockwise.

    Parameters
    ----------
    e : array-like, shape (3 + m,)
        Algebra vector, rotation part first.
    m : int, optional
        Expected Euclidean dimension; checked when given.
    """
    e = np.asarray(e, dtype=np.float64)
    _check_dim(e, m)
    return CompositeGroupElement(_so3_exp(np.ascontiguousarray(e[:3])), e[3:])


def composite_log(x: CompositeGroupElement) -> NDArray[np.float64]:
    """Logarithm map of SO(3) x R^m, applied blockwise."""
    return np.concatenate([_so3_log(np.ascontiguousarray(x.rotation)), x.euclidean])


def composite_compose(a: CompositeGroupElement, b: CompositeGroupElement) -> CompositeGroupElement:
    """Group product ``a * b``."""
    if a.euclidean.shape != b.euclidean.shape:
        raise ValueError("cannot compose elements of different groups")
    return CompositeGroupElement(a.rotation @ b.rotation, a.euclidean + b.euclidean)


def composite_adjoint(x: CompositeGroupElement) -> NDArray[np.float64]:
    """Adjoint matrix: ``R`` on the rotation block, identity elsewhere."""
    d = x.dim
    ad = np.eye(d)
    ad[:3, :3] = x.rotation
    return ad


def composite_right_jacobian(e: ArrayLike, m: int | None = None) -> NDArray[np.float64]:
    """Right Jacobian: SO(3) right Jacobian on the rotation block, identity elsewhere."""
    e = np.asarray(e, dtype=np.float64)
    _check_dim(e, m)
    jr = np.eye(e.shape[0])
    jr[:3, :3] = _so3_right_jacobian(np.ascontiguousarray(e[:3]))
    return jr
