"""
Accelerometer-array geometry and projection algebra.

The stacked specific forces of K triads obey ``f = h(omega) + H [omega_dot; s]``
with ``H = [-[r_k x]  I]`` stacked over k and ``h`` the centrifugal terms.
``A = (H^T H)^-1 H^T`` projects them back onto angular acceleration and the
specific force at the body origin. For centered arrays ``A`` splits into the
blocks ``A_k = (sum_i [r_i x]^T [r_i x])^-1 [r_k x]`` and ``(1/K)[I ... I]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from .lie_group import _skew

CENTER_TOL = 1e-9
COND_LIMIT = 1e12


class RankDeficientError(ValueError):
    """Accelerometer positions do not determine angular acceleration."""


@dataclass(frozen=True)
class ArrayGeometry:
    """
    Accelerometer triad positions and the derived projection matrices.

    Attributes
    ----------
    positions : numpy.ndarray, shape (K, 3)
        Triad positions in meters in the body frame (after any centering).
    offset : numpy.ndarray, shape (3,)
        Translation subtracted from the input positions during construction.
    H : numpy.ndarray, shape (3K, 6)
    A : numpy.ndarray, shape (6, 3K)
    A_k : numpy.ndarray, shape (K, 3, 3)
        Angular-acceleration blocks of ``A``.
    centered : bool
        True when ``|sum_k r_k| < 1e-9`` m.
    """

    positions: NDArray[np.float64]
    offset: NDArray[np.float64]
    H: NDArray[np.float64]
    A: NDArray[np.float64]
    A_k: NDArray[np.float64]
    centered: bool
    name: str = field(default="custom", compare=False)

    @property
    def K(self) -> int:
        return self.positions.shape[0]

    @property
    def A_omega_dot(self) -> NDArray[np.float64]:
        return self.A[:3]

    @property
    def A_s(self) -> NDArray[np.float64]:
        return self.A[3:]

    @property
    def inertia(self) -> NDArray[np.float64]:
        """``sum_k [r_k x]^T [r_k x]``."""
        return _inertia(self.positions)


def _inertia(positions: NDArray[np.float64]) -> NDArray[np.float64]:
    m = np.zeros((3, 3))
    for r in positions:
        s = _skew(r)
        m += s.T @ s
    return m


def build_geometry(positions: ArrayLike, center: bool = True, name: str = "custom") -> ArrayGeometry:
    """
    Build an :class:`ArrayGeometry` from triad positions.

    Parameters
    ----------
    positions : array-like, shape (K, 3)
        Triad positions in meters, body frame.
    center : bool, default True
        Translate positions so that they sum to zero before computing ``A``.
    name : str, optional
        Label carried for reporting.

    Returns
    -------
    ArrayGeometry

    Raises
    ------
    RankDeficientError
        If fewer than three triads are given, or ``H^T H`` is singular or has
        condition number above 1e12 (collinear or coincident triads).
    """
    pos = np.array(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError(f"positions must have shape (K, 3), got {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    k = pos.shape[0]
    if k < 3:
        raise RankDeficientError(f"at least 3 accelerometer triads are required, got {k}")

    offset = pos.mean(axis=0) if center else np.zeros(3)
    pos = pos - offset
    if center:
        # the mean subtraction can leave ~1e-19 residue; not worth a second pass
        pos -= pos.mean(axis=0)

    H = np.zeros((3 * k, 6))
    for i, r in enumerate(pos):
        H[3 * i : 3 * i + 3, :3] = -_skew(r)
        H[3 * i : 3 * i + 3, 3:] = np.eye(3)
    hth = H.T @ H
    cond = np.linalg.cond(hth)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficientError(
            f"H^T H is ill-conditioned (cond={cond:.3g}); triads must span a plane"
        )

    centered = bool(np.linalg.norm(pos.sum(axis=0)) < CENTER_TOL)
    if centered:
        m_inv = np.linalg.inv(_inertia(pos))
        A = np.zeros((6, 3 * k))
        for i, r in enumerate(pos):
            A[:3, 3 * i : 3 * i + 3] = m_inv @ _skew(r)
            A[3:, 3 * i : 3 * i + 3] = np.eye(3) / k
    else:
        A = np.linalg.solve(hth, H.T)

    A_k = np.stack([A[:3, 3 * i : 3 * i + 3] for i in range(k)])
    for arr in (pos, offset, H, A, A_k):
        arr.setflags(write=False)
    return ArrayGeometry(pos, offset, H, A, A_k, centered, name)


def paper_array(spacing: float = 6.3e-3, plane_gap: float = 2.0e-3) -> ArrayGeometry:
    """
    The 32-triad array: two 4x4 grids on either side of a board.

    Adjacent package centers are ``spacing`` apart in-plane (18.9 mm across the
    grid) and the two grids are ``plane_gap`` apart along z.
    """
    ticks = (np.arange(4) - 1.5) * spacing
    pts = []
    for z in (0.5 * plane_gap, -0.5 * plane_gap):
        for x in ticks:
            for y in ticks:
                pts.append((x, y, z))
    return build_geometry(pts, center=True, name="paper32")


def square_array(alpha: float = 0.01) -> ArrayGeometry:
    """Four triads on the corners of a square of side ``alpha`` in the z=0 plane."""
    h = 0.5 * alpha
    pts = [(h, h, 0.0), (-h, h, 0.0), (-h, -h, 0.0), (h, -h, 0.0)]
    return build_geometry(pts, center=True, name="square4")


PRESETS = {
    "paper32": paper_array,
    "square4": square_array,
}


def geometry_from_dict(spec: dict) -> ArrayGeometry:
    """
    Build a geometry from a parsed config mapping.

    Accepts either ``{"preset": "paper32"}`` (optionally with preset keyword
    arguments) or ``{"positions": [[x, y, z], ...], "centered": true}``.
    """
    if "preset" in spec:
        name = spec["preset"]
        if name not in PRESETS:
            raise ValueError(f"unknown geometry preset {name!r}; choose from {sorted(PRESETS)}")
        kwargs = {k: v for k, v in spec.items() if k != "preset"}
        return PRESETS[name](**kwargs)
    if "positions" not in spec:
        raise ValueError("geometry config needs 'preset' or 'positions'")
    return build_geometry(spec["positions"], center=bool(spec.get("centered", True)))


def load_geometry(path: str | Path) -> ArrayGeometry:
    """Load a geometry from a YAML/JSON file (see :func:`geometry_from_dict`)."""
    with open(path) as fh:
        spec = yaml.safe_load(fh)
    if not isinstance(spec, dict):
        raise ValueError(f"{path}: geometry config must be a mapping")
    return geometry_from_dict(spec.get("geometry", spec))


@njit
def _centrifugal_stack(omega, positions):
    # [w x]^2 r_k = w (w . r_k) - r_k |w|^2
    k = positions.shape[0]
    out = np.empty(3 * k)
    ww = omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]
    for i in range(k):
        wr = omega[0] * positions[i, 0] + omega[1] * positions[i, 1] + omega[2] * positions[i, 2]
        for j in range(3):
            out[3 * i + j] = omega[j] * wr - positions[i, j] * ww
    return out


@njit
def _omega_dot_jacobian(omega, positions, A_wd):
    # d/d omega of A_wd (f - [w x]^2 r) = -sum_k A_k ((w . r_k) I + w r_k^T - 2 r_k w^T)
    out = np.zeros((3, 3))
    blk = np.empty((3, 3))
    for k in range(positions.shape[0]):
        r = positions[k]
        wr = omega[0] * r[0] + omega[1] * r[1] + omega[2] * r[2]
        for j in range(3):
            for l in range(3):
                blk[j, l] = 2.0 * r[j] * omega[l] - omega[j] * r[l]
            blk[j, j] -= wr
        for i in range(3):
            for l in range(3):
                acc = 0.0
                for j in range(3):
                    acc += A_wd[i, 3 * k + j] * blk[j, l]
                out[i, l] += acc
    return out


def _omega(omega: ArrayLike) -> NDArray[np.float64]:
    out = np.asarray(omega, dtype=np.float64)
    if out.shape != (3,):
        raise ValueError(f"omega must be a 3-vector, got {out.shape}")
    return out


def centrifugal_stack(omega: ArrayLike, geometry: ArrayGeometry) -> NDArray[np.float64]:
    """Stacked centrifugal accelerations ``[omega x]^2 r_k``, shape (3K,)."""
    return _centrifugal_stack(_omega(omega), geometry.positions)


def solve_omega_dot_s(
    f_stack: ArrayLike, omega: ArrayLike, geometry: ArrayGeometry
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Recover angular acceleration and origin specific force from triad readings.

    Parameters
    ----------
    f_stack : array-like, shape (3K,)
        Stacked specific forces in m/s^2.
    omega : array-like, shape (3,)
        Angular velocity in rad/s used for the centrifugal correction.
    geometry : ArrayGeometry

    Returns
    -------
    omega_dot : numpy.ndarray, shape (3,)
    s : numpy.ndarray, shape (3,)
    """
    f = np.asarray(f_stack, dtype=np.float64)
    if f.shape != (3 * geometry.K,):
        raise ValueError(f"f_stack must have length {3 * geometry.K}, got {f.shape}")
    x = geometry.A @ (f - _centrifugal_stack(_omega(omega), geometry.positions))
    return x[:3], x[3:]


def reduce_bias(b_full: ArrayLike, geometry: ArrayGeometry) -> NDArray[np.float64]:
    """Six-dimensional bias ``(b_omega_dot, b_s) = -A b_full``."""
    b = np.asarray(b_full, dtype=np.float64)
    if b.shape != (3 * geometry.K,):
        raise ValueError(f"bias must have length {3 * geometry.K}, got {b.shape}")
    return -(geometry.A @ b)


def reduce_noise_covariance(Q_a: ArrayLike, geometry: ArrayGeometry) -> NDArray[np.float64]:
    """
    Joint 6x6 covariance of the projected noise ``(w_omega_dot, w_s)``.

    Parameters
    ----------
    Q_a : array-like, shape (3K, 3K)
        Covariance of the stacked accelerometer noise.

    Returns
    -------
    numpy.ndarray, shape (6, 6)
        ``A Q_a A^T``, including the cross-covariance blocks.
    """
    q = np.asarray(Q_a, dtype=np.float64)
    n = 3 * geometry.K
    if q.shape != (n, n):
        raise ValueError(f"Q_a must be {n}x{n}, got {q.shape}")
    out = geometry.A @ q @ geometry.A.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class ReducedNoiseModel:
    """Projected white-noise and bias-walk covariances, each 6x6."""

    cov_wdot_s: NDArray[np.float64]
    cov_bias_walk: NDArray[np.float64]


def reduced_noise_model(
    geometry: ArrayGeometry, sigma_a: float, sigma_bias_walk: float = 0.0
) -> ReducedNoiseModel:
    """Reduced covariances for isotropic per-triad noise and bias-walk levels."""
    eye = np.eye(3 * geometry.K)
    return ReducedNoiseModel(
        reduce_noise_covariance(sigma_a**2 * eye, geometry),
        reduce_noise_covariance(sigma_bias_walk**2 * eye, geometry),
    )


def omega_dot_jacobian(omega: ArrayLike, geometry: ArrayGeometry) -> NDArray[np.float64]:
    """Jacobian of the recovered angular acceleration with respect to ``omega``."""
    return _omega_dot_jacobian(_omega(omega), geometry.positions, np.ascontiguousarray(geometry.A[:3]))


def stability_eigenvalues(
    geometry: ArrayGeometry, omega0: ArrayLike, L: ArrayLike | None = None
) -> NDArray[np.complex128]:
    """
    Eigenvalues of the linearized angular-velocity dynamics with gyro feedback.

    Linearizes ``omega_dot = sum_k A_k (f_k - [omega x]^2 r_k) - L omega`` in
    ``omega`` at ``omega0``.

    Parameters
    ----------
    geometry : ArrayGeometry
    omega0 : array-like, shape (3,)
        Linearization point in rad/s.
    L : array-like, shape (3, 3), optional
        Feedback gain; zero when omitted.

    Returns
    -------
    numpy.ndarray, shape (3,), complex
    """
    jac = omega_dot_jacobian(omega0, geometry)
    if L is not None:
        jac = jac - np.asarray(L, dtype=np.float64).reshape(3, 3)
    return np.linalg.eigvals(jac)
