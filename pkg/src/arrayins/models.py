"""
The four inertial-array state-space models.

=================  ======================================  =====================
variant            state (algebra order)                   rotation increment
=================  ======================================  =====================
AccelArray2nd      R, omega, p, v, b_wdot, b_s, b_g  (21)  w T + w_dot T^2 / 2
AccelArray1st      R, omega, p, v, b_wdot, b_s, b_g  (21)  w T
Gyro2nd            R, p, v, b_s, b_g                 (15)  w T + w_dot T^2 / 2
Gyro1st            R, p, v, b_s, b_g                 (15)  w T
=================  ======================================  =====================

Accelerometer-array variants propagate ``omega`` with the array's angular
acceleration and take the gyro as a measurement; gyro variants substitute
``omega = y_g - b_g - w_g`` directly. The specific force is the triad mean
plus ``b_s`` in every variant, which presumes a centered array.

Process-noise layouts:

* AccelArray: ``w_wdot, w_s, w_b_wdot, w_b_s, w_b_g`` (15)
* Gyro2nd: ``w_wdot, w_s, w_g, w_b_s, w_b_g`` (15)
* Gyro1st: ``w_s, w_g, w_b_s, w_b_g`` (12)
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from .array_model import ArrayGeometry, _centrifugal_stack, _omega_dot_jacobian
from .lie_group import CompositeGroupElement, _skew
from .sensor_sim import GRAVITY, NoiseConfig


class Variant(IntEnum):
    ACCEL_ARRAY_2ND = 0
    ACCEL_ARRAY_1ST = 1
    GYRO_2ND = 2
    GYRO_1ST = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def is_accel_array(self) -> bool:
        return self < 2

    @property
    def second_order(self) -> bool:
        return self in (Variant.ACCEL_ARRAY_2ND, Variant.GYRO_2ND)

    @property
    def dim(self) -> int:
        return 21 if self.is_accel_array else 15

    @property
    def noise_dim(self) -> int:
        return 12 if self == Variant.GYRO_1ST else 15

    @classmethod
    def parse(cls, name: str | int | Variant) -> Variant:
        if isinstance(name, (Variant, int)):
            return cls(name)
        for v, lab in _LABELS.items():
            if name.lower() == lab.lower():
                return v
        raise ValueError(f"unknown model variant {name!r}; choose from {list(_LABELS.values())}")


_LABELS = {
    Variant.ACCEL_ARRAY_2ND: "AccelArray2nd",
    Variant.ACCEL_ARRAY_1ST: "AccelArray1st",
    Variant.GYRO_2ND: "Gyro2nd",
    Variant.GYRO_1ST: "Gyro1st",
}
ALL_VARIANTS = tuple(Variant)

_ACCEL_STATE = ("R", "omega", "p", "v", "b_wdot", "b_s", "b_g")
_GYRO_STATE = ("R", "p", "v", "b_s", "b_g")
_NOISE = {
    Variant.ACCEL_ARRAY_2ND: ("w_wdot", "w_s", "w_b_wdot", "w_b_s", "w_b_g"),
    Variant.ACCEL_ARRAY_1ST: ("w_wdot", "w_s", "w_b_wdot", "w_b_s", "w_b_g"),
    Variant.GYRO_2ND: ("w_wdot", "w_s", "w_g", "w_b_s", "w_b_g"),
    Variant.GYRO_1ST: ("w_s", "w_g", "w_b_s", "w_b_g"),
}


def state_blocks(variant: Variant) -> dict[str, slice]:
    """Algebra-index slice of every state block, in order."""
    names = _ACCEL_STATE if Variant(variant).is_accel_array else _GYRO_STATE
    return {n: slice(3 * i, 3 * i + 3) for i, n in enumerate(names)}


def noise_blocks(variant: Variant) -> dict[str, slice]:
    """Index slice of every process-noise block, in order."""
    return {n: slice(3 * i, 3 * i + 3) for i, n in enumerate(_NOISE[Variant(variant)])}


def make_state(
    variant: Variant,
    R: ArrayLike | None = None,
    omega: ArrayLike | None = None,
    p: ArrayLike | None = None,
    v: ArrayLike | None = None,
    b_wdot: ArrayLike | None = None,
    b_s: ArrayLike | None = None,
    b_g: ArrayLike | None = None,
) -> CompositeGroupElement:
    """
    Assemble a navigation state for ``variant``; omitted blocks are zero.

    ``omega`` and ``b_wdot`` are ignored by the gyro variants.
    """
    variant = Variant(variant)
    values = {"omega": omega, "p": p, "v": v, "b_wdot": b_wdot, "b_s": b_s, "b_g": b_g}
    blocks = state_blocks(variant)
    z = np.zeros(variant.dim - 3)
    for name, sl in blocks.items():
        if name != "R" and values[name] is not None:
            z[sl.start - 3 : sl.stop - 3] = np.asarray(values[name], dtype=np.float64)
    return CompositeGroupElement(np.eye(3) if R is None else R, z)


def unpack_state(variant: Variant, state: CompositeGroupElement) -> dict[str, NDArray[np.float64]]:
    """Split a state into named blocks (``R`` plus the Euclidean vectors)."""
    out = {"R": state.rotation}
    for name, sl in state_blocks(variant).items():
        if name != "R":
            out[name] = state.euclidean[sl.start - 3 : sl.stop - 3]
    return out


# ---------------------------------------------------------------------------
# kernels; vid is the integer Variant value

@njit
def _increment(vid, R, z, ya, yg, A_wd, A_s, positions, g, T, w):
    half = 0.5 * T * T
    if vid < 2:
        om = z[0:3]
        v = z[6:9]
        wd = A_wd @ (ya - _centrifugal_stack(om, positions)) + z[9:12] + w[0:3]
        s = A_s @ ya + z[12:15] + w[3:6]
        acc = g + R @ s
        out = np.empty(21)
        if vid == 0:
            out[0:3] = om * T + wd * half
        else:
            out[0:3] = om * T
        out[3:6] = wd * T
        out[6:9] = v * T + acc * half
        out[9:12] = acc * T
        out[12:21] = w[6:15]
        return out
    v = z[3:6]
    if vid == 2:
        ws = w[3:6]
        wg = w[6:9]
        walks = w[9:15]
    else:
        ws = w[0:3]
        wg = w[3:6]
        walks = w[6:12]
    om = yg - z[9:12] - wg
    s = A_s @ ya + z[6:9] + ws
    acc = g + R @ s
    out = np.empty(15)
    if vid == 2:
        wd = A_wd @ (ya - _centrifugal_stack(om, positions)) + w[0:3]
        out[0:3] = om * T + wd * half
    else:
        out[0:3] = om * T
    out[3:6] = v * T + acc * half
    out[6:9] = acc * T
    out[9:15] = walks
    return out


@njit
def _jac_state(vid, R, z, ya, yg, A_wd, A_s, positions, g, T):
    half = 0.5 * T * T
    eye = np.eye(3)
    if vid < 2:
        J = np.zeros((21, 21))
        om = z[0:3]
        s = A_s @ ya + z[12:15]
        D = _omega_dot_jacobian(om, positions, A_wd)
        dv_dR = -R @ _skew(s)
        # rotation row
        if vid == 0:
            J[0:3, 3:6] = eye * T + D * half
            J[0:3, 12:15] = eye * half
        else:
            J[0:3, 3:6] = eye * T
        # omega row
        J[3:6, 3:6] = D * T
        J[3:6, 12:15] = eye * T
        # position row
        J[6:9, 0:3] = dv_dR * half
        J[6:9, 9:12] = eye * T
        J[6:9, 15:18] = R * half
        # velocity row
        J[9:12, 0:3] = dv_dR * T
        J[9:12, 15:18] = R * T
        return J
    J = np.zeros((15, 15))
    s = A_s @ ya + z[6:9]
    dv_dR = -R @ _skew(s)
    if vid == 2:
        om = yg - z[9:12]
        D = _omega_dot_jacobian(om, positions, A_wd)
        J[0:3, 12:15] = -(eye * T + D * half)
    else:
        J[0:3, 12:15] = -eye * T
    J[3:6, 0:3] = dv_dR * half
    J[3:6, 6:9] = eye * T
    J[3:6, 9:12] = R * half
    J[6:9, 0:3] = dv_dR * T
    J[6:9, 9:12] = R * T
    return J


@njit
def _jac_noise(vid, R, z, ya, yg, A_wd, A_s, positions, g, T):
    half = 0.5 * T * T
    eye = np.eye(3)
    if vid < 2:
        J = np.zeros((21, 15))
        if vid == 0:
            J[0:3, 0:3] = eye * half
        J[3:6, 0:3] = eye * T
        J[6:9, 3:6] = R * half
        J[9:12, 3:6] = R * T
        J[12:21, 6:15] = np.eye(9)
        return J
    if vid == 2:
        J = np.zeros((15, 15))
        om = yg - z[9:12]
        D = _omega_dot_jacobian(om, positions, A_wd)
        J[0:3, 0:3] = eye * half
        J[0:3, 6:9] = -(eye * T + D * half)
        J[3:6, 3:6] = R * half
        J[6:9, 3:6] = R * T
        J[9:15, 9:15] = np.eye(6)
        return J
    J = np.zeros((15, 12))
    J[0:3, 3:6] = -eye * T
    J[3:6, 0:3] = R * half
    J[6:9, 0:3] = R * T
    J[9:15, 6:12] = np.eye(6)
    return J


# ---------------------------------------------------------------------------

def _check_geometry(geometry: ArrayGeometry) -> None:
    if not geometry.centered:
        raise ValueError("state-space models require a centered array geometry")


def _buf(x: ArrayLike) -> NDArray[np.float64]:
    return np.array(x, dtype=np.float64, order="C")


def _kernel_args(
    variant: Variant,
    state: CompositeGroupElement,
    acc: ArrayLike,
    gyro: ArrayLike | None,
    geometry: ArrayGeometry,
    T: float,
    g: ArrayLike,
):
    variant = Variant(variant)
    _check_geometry(geometry)
    if state.dim != variant.dim:
        raise ValueError(f"{variant.label} needs a {variant.dim}-dim state, got {state.dim}")
    ya = np.asarray(acc, dtype=np.float64)
    if ya.shape != (3 * geometry.K,):
        raise ValueError(f"accelerometer stack must have length {3 * geometry.K}, got {ya.shape}")
    if gyro is None:
        if not variant.is_accel_array:
            raise ValueError(f"{variant.label} consumes the gyro in propagation")
        yg = np.zeros(3)
    else:
        yg = np.asarray(gyro, dtype=np.float64)
        if yg.shape != (3,):
            raise ValueError(f"gyro reading must be a 3-vector, got {yg.shape}")
    if not T > 0:
        raise ValueError("sample period must be positive")
    # writable C-order copies; read-only arrays compile to a slower specialization
    return (
        int(variant), _buf(state.rotation), _buf(state.euclidean), _buf(ya), _buf(yg),
        _buf(geometry.A_omega_dot), _buf(geometry.A_s), _buf(geometry.positions), _buf(g), float(T),
    )


def propagate_increment(
    variant: Variant,
    state: CompositeGroupElement,
    acc: ArrayLike,
    gyro: ArrayLike | None,
    geometry: ArrayGeometry,
    T: float,
    noise: ArrayLike | None = None,
    g: ArrayLike = GRAVITY,
) -> NDArray[np.float64]:
    """
    Lie-algebra increment ``Omega`` so that ``X_next = X * exp(Omega)``.

    Parameters
    ----------
    variant : Variant
    state : CompositeGroupElement
        Current navigation state.
    acc : array-like, shape (3K,)
        Stacked accelerometer readings.
    gyro : array-like, shape (3,) or None
        Gyro reading; required by the gyro variants, unused otherwise.
    geometry : ArrayGeometry
        Centered array geometry.
    T : float
        Sample period in seconds.
    noise : array-like, optional
        Process-noise realization in the variant's layout; zero when omitted.
    g : array-like, shape (3,)

    Returns
    -------
    numpy.ndarray, shape (variant.dim,)
    """
    args = _kernel_args(variant, state, acc, gyro, geometry, T, g)
    nd = Variant(variant).noise_dim
    w = np.zeros(nd) if noise is None else np.asarray(noise, dtype=np.float64)
    if w.shape != (nd,):
        raise ValueError(f"noise vector must have length {nd}, got {w.shape}")
    return _increment(*args, w)


def jacobian_state(
    variant: Variant,
    state: CompositeGroupElement,
    acc: ArrayLike,
    gyro: ArrayLike | None,
    geometry: ArrayGeometry,
    T: float,
    g: ArrayLike = GRAVITY,
) -> NDArray[np.float64]:
    """Derivative of the increment with respect to a right perturbation of the state."""
    return _jac_state(*_kernel_args(variant, state, acc, gyro, geometry, T, g))


def jacobian_noise(
    variant: Variant,
    state: CompositeGroupElement,
    acc: ArrayLike,
    gyro: ArrayLike | None,
    geometry: ArrayGeometry,
    T: float,
    g: ArrayLike = GRAVITY,
) -> NDArray[np.float64]:
    """Derivative of the increment with respect to the process noise at zero."""
    return _jac_noise(*_kernel_args(variant, state, acc, gyro, geometry, T, g))


def gyro_measurement_model(
    variant: Variant, state: CompositeGroupElement
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Predicted gyro reading ``omega + b_g`` and its Jacobian.

    Only defined for the accelerometer-array variants.
    """
    variant = Variant(variant)
    if not variant.is_accel_array:
        raise ValueError(f"{variant.label} has no gyro measurement; the gyro drives propagation")
    blocks = state_blocks(variant)
    H = np.zeros((3, variant.dim))
    H[:, blocks["omega"]] = np.eye(3)
    H[:, blocks["b_g"]] = np.eye(3)
    return H[:, 3:] @ state.euclidean, H


def position_measurement_model(
    variant: Variant, state: CompositeGroupElement
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Predicted position and the Jacobian selecting the position block."""
    variant = Variant(variant)
    sl = state_blocks(variant)["p"]
    H = np.zeros((3, variant.dim))
    H[:, sl] = np.eye(3)
    return state.euclidean[sl.start - 3 : sl.stop - 3].copy(), H


def process_noise_covariance(
    variant: Variant, geometry: ArrayGeometry, noise: NoiseConfig
) -> NDArray[np.float64]:
    """
    Process-noise covariance in the variant's noise layout.

    The ``(w_wdot, w_s)`` block is the full projected 6x6 covariance including
    the cross terms; bias walks are projected the same way.
    """
    variant = Variant(variant)
    A = geometry.A
    white = noise.sigma_a**2 * (A @ A.T)
    walk = noise.walk_a**2 * (A @ A.T)
    eye3 = np.eye(3)
    q_g = noise.sigma_g**2 * eye3
    q_bg = noise.walk_g**2 * eye3
    Q = np.zeros((variant.noise_dim, variant.noise_dim))
    if variant.is_accel_array:
        Q[0:6, 0:6] = white
        Q[6:12, 6:12] = walk
        Q[12:15, 12:15] = q_bg
    elif variant == Variant.GYRO_2ND:
        Q[0:6, 0:6] = white
        Q[6:9, 6:9] = q_g
        Q[9:12, 9:12] = walk[3:, 3:]
        Q[12:15, 12:15] = q_bg
    else:
        Q[0:3, 0:3] = white[3:, 3:]
        Q[3:6, 3:6] = q_g
        Q[6:9, 6:9] = walk[3:, 3:]
        Q[9:12, 9:12] = q_bg
    return 0.5 * (Q + Q.T)
