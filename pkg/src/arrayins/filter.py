"""
Discrete Lie-group extended Kalman filter on SO(3) x R^m.

The estimate is a concentrated Gaussian ``X = X_hat exp(e)``, ``e ~ N(0, P)``.

Prediction::

    X_hat <- X_hat exp(Omega)
    F = Ad(exp(-Omega)) + J_r(Omega) J_x
    G = J_r(Omega) J_w
    P <- F P F^T + G Q G^T

Update with a Euclidean measurement ``y = H-block of X + noise``::

    K = P H^T (H P H^T + Q_m)^-1
    e = K (y - y_hat)
    X_hat <- X_hat exp(e)
    P <- J_r(e) (I - K H) P J_r(e)^T

``J_r`` is the right Jacobian evaluated at ``+e``: a perturbation ``d`` of the
posterior algebra vector re-expressed about the moved mean is
``log(exp(-e) exp(e + d)) = J_r(e) d + O(|d|^2)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from .array_model import ArrayGeometry
from .lie_group import CompositeGroupElement, _so3_exp, _so3_log, _so3_right_jacobian
from .models import (
    Variant,
    _check_geometry,
    _increment,
    _jac_noise,
    _jac_state,
    gyro_measurement_model,
    position_measurement_model,
    process_noise_covariance,
    state_blocks,
)
from .sensor_sim import GRAVITY, MeasurementStream, NoiseConfig

COND_LIMIT = 1e12

STATUS_OK = 0
STATUS_GYRO_UPDATE = 1
STATUS_POSITION_UPDATE = 2


class InnovationError(np.linalg.LinAlgError):
    """Innovation covariance is not positive definite or is ill-conditioned."""


class FilterError(RuntimeError):
    """
    A filter run stopped at frame ``index``.

    ``history`` holds the posterior history of the frames before the failure
    when the run got that far; its ``final`` is then ``None``.
    """

    def __init__(self, message: str, index: int, time: float, history: FilterResult | None = None) -> None:
        super().__init__(message)
        self.index = index
        self.time = time
        self.history = history


@dataclass(frozen=True)
class FilterState:
    """
    Concentrated-Gaussian estimate.

    Attributes
    ----------
    mean : CompositeGroupElement
    cov : numpy.ndarray, shape (d, d)
        Covariance on the Lie algebra.
    time : float
        Seconds.
    """

    mean: CompositeGroupElement
    cov: NDArray[np.float64]
    time: float = 0.0

    def __post_init__(self) -> None:
        cov = np.array(self.cov, dtype=np.float64)
        if cov.shape != (self.mean.dim, self.mean.dim):
            raise ValueError(f"covariance must be {self.mean.dim}x{self.mean.dim}, got {cov.shape}")
        cov = 0.5 * (cov + cov.T)
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)


# ---------------------------------------------------------------------------
# kernels

@njit
def _lg_predict(R, z, P, omega, Jx, Jw, Q):
    d = P.shape[0]
    jr = _so3_right_jacobian(omega[:3])
    E = _so3_exp(omega[:3])
    F = Jx.copy()
    F[:3] = jr @ Jx[:3]
    F[:3, :3] += E.T
    for i in range(3, d):
        F[i, i] += 1.0
    G = Jw.copy()
    G[:3] = jr @ Jw[:3]
    P_new = F @ P @ F.T + G @ Q @ G.T
    P_new = 0.5 * (P_new + P_new.T)
    return R @ E, z + omega[3:], P_new


@njit
def _chol_solve(S, B):
    # solves S X = B for symmetric positive-definite S
    L = np.linalg.cholesky(S)
    m = S.shape[0]
    n = B.shape[1]
    Y = np.empty((m, n))
    for c in range(n):
        for i in range(m):
            acc = B[i, c]
            for k in range(i):
                acc -= L[i, k] * Y[k, c]
            Y[i, c] = acc / L[i, i]
        for i in range(m - 1, -1, -1):
            acc = Y[i, c]
            for k in range(i + 1, m):
                acc -= L[k, i] * Y[k, c]
            Y[i, c] = acc / L[i, i]
    return Y


@njit
def _lg_update(R, z, P, innov, H, Qm):
    Ht = np.ascontiguousarray(H.T)
    PHt = P @ Ht
    S = H @ PHt + Qm
    S = 0.5 * (S + S.T)
    if not np.isfinite(S).all():
        return R, z, P, False
    ev = np.linalg.eigvalsh(S)
    if not ev[0] > 0.0 or ev[-1] > COND_LIMIT * ev[0]:
        return R, z, P, False
    K = np.ascontiguousarray(_chol_solve(S, np.ascontiguousarray(PHt.T)).T)
    e = K @ innov
    P_post = P - K @ (H @ P)
    jr = _so3_right_jacobian(e[:3])
    P_post[:3] = jr @ np.ascontiguousarray(P_post[:3])
    P_post[:, :3] = np.ascontiguousarray(P_post[:, :3]) @ np.ascontiguousarray(jr.T)
    P_post = 0.5 * (P_post + P_post.T)
    return R @ _so3_exp(e[:3]), z + e[3:], P_post, True


@njit
def _run_kernel(
    vid, R0, z0, P0, t, acc, gyro, pos, pos_mask, gyro_updates, skip_first_update,
    A_wd, A_s, positions, g, Q, Qg, Qpos, Hg, Hp, Hg_z, Hp_z,
):
    n = t.shape[0]
    m = z0.shape[0]
    d = m + 3
    R_hist = np.empty((n, 3, 3))
    z_hist = np.empty((n, m))
    var_hist = np.empty((n, d))
    R = R0.copy()
    z = z0.copy()
    P = P0.copy()
    w0 = np.zeros(Q.shape[0])
    accel = vid < 2
    status = 0
    fail = -1
    for i in range(n):
        if i > 0:
            T = t[i] - t[i - 1]
            ya = acc[i - 1]
            yg = gyro[i - 1]
            om = _increment(vid, R, z, ya, yg, A_wd, A_s, positions, g, T, w0)
            Jx = _jac_state(vid, R, z, ya, yg, A_wd, A_s, positions, g, T)
            Jw = _jac_noise(vid, R, z, ya, yg, A_wd, A_s, positions, g, T)
            R, z, P = _lg_predict(R, z, P, om, Jx, Jw, Q)
        if i > 0 or not skip_first_update:
            if accel and gyro_updates:
                innov = gyro[i] - Hg_z @ z
                R, z, P, ok = _lg_update(R, z, P, innov, Hg, Qg)
                if not ok:
                    status = 1
                    fail = i
                    break
            if pos_mask[i]:
                innov = pos[i] - Hp_z @ z
                R, z, P, ok = _lg_update(R, z, P, innov, Hp, Qpos)
                if not ok:
                    status = 2
                    fail = i
                    break
        R_hist[i] = R
        z_hist[i] = z
        for j in range(d):
            var_hist[i, j] = P[j, j]
    return R_hist, z_hist, var_hist, R, z, P, status, fail


# ---------------------------------------------------------------------------

def _buf(x: ArrayLike) -> NDArray[np.float64]:
    return np.array(x, dtype=np.float64, order="C")


def predict(
    fs: FilterState,
    variant: Variant,
    acc: ArrayLike,
    gyro: ArrayLike | None,
    geometry: ArrayGeometry,
    Q_p: ArrayLike,
    T: float,
    g: ArrayLike = GRAVITY,
) -> FilterState:
    """
    Propagate the estimate over one sample period.

    Parameters
    ----------
    fs : FilterState
    variant : Variant
    acc : array-like, shape (3K,)
    gyro : array-like, shape (3,) or None
    geometry : ArrayGeometry
    Q_p : array-like
        Process-noise covariance in the variant's noise layout.
    T : float
        Sample period in seconds.
    g : array-like, shape (3,)
    """
    from .models import _kernel_args

    variant = Variant(variant)
    args = _kernel_args(variant, fs.mean, acc, gyro, geometry, T, g)
    Q = np.asarray(Q_p, dtype=np.float64)
    if Q.shape != (variant.noise_dim, variant.noise_dim):
        raise ValueError(f"Q_p must be {variant.noise_dim}x{variant.noise_dim}, got {Q.shape}")
    om = _increment(*args, np.zeros(variant.noise_dim))
    Jx = _jac_state(*args)
    Jw = _jac_noise(*args)
    R, z, P = _lg_predict(args[1], args[2], _buf(fs.cov), om, Jx, Jw, _buf(Q))
    return FilterState(CompositeGroupElement(R, z), P, fs.time + T)


def update(
    fs: FilterState,
    measurement: ArrayLike,
    predicted: ArrayLike,
    H: ArrayLike,
    Q_m: ArrayLike,
) -> FilterState:
    """
    Kalman update with a Euclidean measurement.

    Parameters
    ----------
    fs : FilterState
    measurement : array-like, shape (k,)
    predicted : array-like, shape (k,)
        Measurement predicted from ``fs.mean``.
    H : array-like, shape (k, d)
    Q_m : array-like, shape (k, k)

    Raises
    ------
    InnovationError
        If ``H P H^T + Q_m`` is not positive definite or its condition number
        exceeds 1e12.
    """
    y = np.asarray(measurement, dtype=np.float64)
    innov = y - np.asarray(predicted, dtype=np.float64)
    H = _buf(H)
    Qm = _buf(Q_m)
    if H.shape != (y.shape[0], fs.mean.dim) or Qm.shape != (y.shape[0], y.shape[0]):
        raise ValueError("measurement, H and Q_m dimensions disagree")
    R, z, P, ok = _lg_update(_buf(fs.mean.rotation), _buf(fs.mean.euclidean), _buf(fs.cov), innov, H, Qm)
    if not ok:
        raise InnovationError("innovation covariance is singular or ill-conditioned")
    return FilterState(CompositeGroupElement(R, z), P, fs.time)


@dataclass(frozen=True)
class InitialStd:
    """Initial standard deviations for blocks not set by sensor statistics."""

    attitude: float = 1e-3
    omega: float = 1e-3
    position: float = 1e-3
    velocity: float = 1e-3
    acc_bias_scale: float = 3.0
    gyro_bias_scale: float = 3.0


def initial_covariance(
    variant: Variant, geometry: ArrayGeometry, noise: NoiseConfig, std: InitialStd = InitialStd()
) -> NDArray[np.float64]:
    """
    Initial covariance: navigation blocks from ``std``, bias blocks from the
    sensor noise levels projected through the array.
    """
    variant = Variant(variant)
    blocks = state_blocks(variant)
    P = np.zeros((variant.dim, variant.dim))
    eye = np.eye(3)
    P[blocks["R"], blocks["R"]] = std.attitude**2 * eye
    P[blocks["p"], blocks["p"]] = std.position**2 * eye
    P[blocks["v"], blocks["v"]] = std.velocity**2 * eye
    P[blocks["b_g"], blocks["b_g"]] = (std.gyro_bias_scale * noise.sigma_g) ** 2 * eye
    AAt = (std.acc_bias_scale * noise.sigma_a) ** 2 * (geometry.A @ geometry.A.T)
    if variant.is_accel_array:
        P[blocks["omega"], blocks["omega"]] = std.omega**2 * eye
        sl = slice(blocks["b_wdot"].start, blocks["b_s"].stop)
        P[sl, sl] = AAt
    else:
        P[blocks["b_s"], blocks["b_s"]] = AAt[3:, 3:]
    return 0.5 * (P + P.T)


@dataclass
class FilterResult:
    """
    Posterior history of one filter run.

    ``z`` holds the Euclidean blocks in the variant's layout and ``var`` the
    diagonal of the covariance after each frame.
    """

    variant: Variant
    t: NDArray[np.float64]
    R: NDArray[np.float64]
    z: NDArray[np.float64]
    var: NDArray[np.float64]
    final: FilterState | None

    def block(self, name: str) -> NDArray[np.float64]:
        sl = state_blocks(self.variant)[name]
        if name == "R":
            raise KeyError("use .R for the rotation history")
        return self.z[:, sl.start - 3 : sl.stop - 3]

    @property
    def position(self) -> NDArray[np.float64]:
        return self.block("p")

    def to_csv(self, path: str | Path) -> None:
        """Write time, rotation vector, Euclidean blocks and covariance diagonal."""
        blocks = state_blocks(self.variant)
        header = ["t", "rot_x", "rot_y", "rot_z"]
        for name in blocks:
            if name != "R":
                header += [f"{name}_{a}" for a in "xyz"]
        for name in blocks:
            header += [f"var_{name}_{a}" for a in "xyz"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.t.shape[0]):
                rot = _so3_log(np.ascontiguousarray(self.R[i]))
                row = [self.t[i], *rot, *self.z[i], *self.var[i]]
                writer.writerow([repr(float(x)) for x in row])


def run_filter(
    variant: Variant,
    init: FilterState,
    stream: MeasurementStream,
    geometry: ArrayGeometry,
    noise: NoiseConfig,
    sigma_p: float = 0.1,
    gyro_updates: bool = True,
    position_mask: ArrayLike | None = None,
    skip_first_update: bool = False,
    g: ArrayLike = GRAVITY,
) -> FilterResult:
    """
    Run the filter over a measurement stream.

    Frame ``i`` is handled as: predict from frame ``i-1`` (accelerometers, and
    the gyro for the gyro variants), gyro update with frame ``i`` (array
    variants, when enabled), then a position update when frame ``i`` carries a
    position fix selected by ``position_mask``. ``init`` is the prior at the
    first frame.

    Parameters
    ----------
    variant : Variant
    init : FilterState
    stream : MeasurementStream
    geometry : ArrayGeometry
    noise : NoiseConfig
        Noise levels assumed by the filter.
    sigma_p : float, default 0.1
        Position fix std in meters.
    gyro_updates : bool, default True
    position_mask : array-like of bool, optional
        Frames allowed to use their position fix; all frames by default.
    skip_first_update : bool, default False
        Treat ``init`` as already updated with the first frame.

    Returns
    -------
    FilterResult

    Raises
    ------
    ValueError
        On non-monotonic timestamps or shape mismatches.
    FilterError
        When an update meets an ill-conditioned innovation covariance.
    """
    variant = Variant(variant)
    _check_geometry(geometry)
    t = np.ascontiguousarray(stream.t, dtype=np.float64)
    if t.ndim != 1 or t.shape[0] == 0:
        raise ValueError("empty measurement stream")
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.argmax(dt <= 0)) + 1
        raise ValueError(f"timestamps are not strictly increasing at frame {bad}")
    if init.mean.dim != variant.dim:
        raise ValueError(f"{variant.label} needs a {variant.dim}-dim initial state")

    has_pos = stream.has_position
    mask = has_pos if position_mask is None else (np.asarray(position_mask, dtype=bool) & has_pos)
    pos = np.where(has_pos[:, None], stream.position, 0.0)
    Q = process_noise_covariance(variant, geometry, noise)
    Qg = noise.sigma_g**2 * np.eye(3)
    Qpos = sigma_p**2 * np.eye(3)
    _, Hp = position_measurement_model(variant, init.mean)
    Hg = gyro_measurement_model(variant, init.mean)[1] if variant.is_accel_array else np.zeros((3, variant.dim))

    # writable copies: numba specializes read-only arrays into a much slower path
    R_h, z_h, var_h, R, z, P, status, fail = _run_kernel(
        int(variant), _buf(init.mean.rotation), _buf(init.mean.euclidean), _buf(init.cov),
        _buf(t), _buf(stream.acc), _buf(stream.gyro), _buf(pos), np.array(mask, dtype=np.bool_),
        bool(gyro_updates), bool(skip_first_update),
        _buf(geometry.A_omega_dot), _buf(geometry.A_s), _buf(geometry.positions), _buf(g),
        Q, Qg, Qpos, _buf(Hg), _buf(Hp), _buf(Hg[:, 3:]), _buf(Hp[:, 3:]),
    )
    if status != STATUS_OK:
        kind = "gyro" if status == STATUS_GYRO_UPDATE else "position"
        history = FilterResult(variant, t[:fail], R_h[:fail], z_h[:fail], var_h[:fail], None)
        raise FilterError(
            f"{variant.label}: {kind} update failed at frame {fail} (t={t[fail]:.6f} s): "
            "innovation covariance singular or ill-conditioned",
            int(fail), float(t[fail]), history,
        )
    final = FilterState(CompositeGroupElement(R, z), P, float(t[-1]))
    return FilterResult(variant, t, R_h, z_h, var_h, final)
