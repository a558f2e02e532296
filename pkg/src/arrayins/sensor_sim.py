"""
Ground-truth trajectories and synthetic inertial-array measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from .array_model import ArrayGeometry
from .lie_group import _skew, _so3_exp

GRAVITY = np.array([0.0, 0.0, -9.81])

_GAUSS_LO = 0.5 - np.sqrt(3.0) / 6.0
_GAUSS_HI = 0.5 + np.sqrt(3.0) / 6.0


@dataclass(frozen=True)
class SinusoidProfile:
    """
    Per-axis sinusoidal angular velocity and position.

    ``omega_i(t) = omega_amp_i * sin(2 pi omega_freq_i t + omega_phase_i)`` and
    likewise for position. Amplitudes in rad/s and m, frequencies in Hz,
    phases in rad.
    """

    omega_amp: tuple[float, float, float]
    omega_freq: tuple[float, float, float]
    omega_phase: tuple[float, float, float] = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)
    pos_amp: tuple[float, float, float] = (0.5, 0.5, 0.2)
    pos_freq: tuple[float, float, float] = (0.2, 0.15, 0.25)
    pos_phase: tuple[float, float, float] = (0.0, 0.5 * np.pi, 0.25 * np.pi)

    @classmethod
    def low(cls) -> SinusoidProfile:
        return cls(omega_amp=(0.5, 0.5, 0.5), omega_freq=(0.5, 0.5, 0.5))

    @classmethod
    def high(cls) -> SinusoidProfile:
        return cls(omega_amp=(4.0, 4.0, 4.0), omega_freq=(1.0, 1.0, 1.0))

    @classmethod
    def still(cls) -> SinusoidProfile:
        return cls(omega_amp=(0.0, 0.0, 0.0), omega_freq=(0.0, 0.0, 0.0), pos_amp=(0.0, 0.0, 0.0))

    @classmethod
    def from_dict(cls, d: dict) -> SinusoidProfile:
        kw = {k: tuple(float(x) for x in v) for k, v in d.items()}
        return cls(**kw)


DYNAMICS = {"low": SinusoidProfile.low, "high": SinusoidProfile.high}


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    R: NDArray[np.float64]
    omega: NDArray[np.float64]
    omega_dot: NDArray[np.float64]
    p: NDArray[np.float64]
    v: NDArray[np.float64]
    v_dot: NDArray[np.float64]
    g: NDArray[np.float64]


@dataclass(frozen=True)
class Trajectory:
    """
    Sampled rigid-body motion.

    Arrays are indexed by sample; ``R`` has shape (N, 3, 3), the vector
    quantities (N, 3). ``g`` is the navigation-frame gravity.
    """

    t: NDArray[np.float64]
    R: NDArray[np.float64]
    omega: NDArray[np.float64]
    omega_dot: NDArray[np.float64]
    p: NDArray[np.float64]
    v: NDArray[np.float64]
    v_dot: NDArray[np.float64]
    g: NDArray[np.float64] = field(default_factory=lambda: GRAVITY.copy())

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0])

    def sample(self, i: int) -> TrajectorySample:
        return TrajectorySample(
            float(self.t[i]), self.R[i], self.omega[i], self.omega_dot[i],
            self.p[i], self.v[i], self.v_dot[i], self.g,
        )

    def every(self, n: int) -> Trajectory:
        """Every ``n``-th sample, starting from the first."""
        sl = slice(None, None, n)
        return Trajectory(
            self.t[sl], self.R[sl], self.omega[sl], self.omega_dot[sl],
            self.p[sl], self.v[sl], self.v_dot[sl], self.g,
        )


def _sinusoid(amp, freq, phase, t):
    w = 2.0 * np.pi * freq
    arg = w * t + phase
    return amp * np.sin(arg), amp * w * np.cos(arg), -amp * w * w * np.sin(arg)


@njit
def _integrate_sinusoid_rotation(amp, freq, phase, h, n, lo, hi):
    # fourth-order Magnus step on two Gauss points; R_dot = R [omega x]
    out = np.empty((n, 3, 3))
    r = np.eye(3)
    out[0] = r
    w = 2.0 * np.pi * freq
    k = np.sqrt(3.0) * h * h / 12.0
    for i in range(n - 1):
        t0 = i * h
        w1 = amp * np.sin(w * (t0 + lo * h) + phase)
        w2 = amp * np.sin(w * (t0 + hi * h) + phase)
        theta = 0.5 * h * (w1 + w2) + k * (_skew(w1) @ w2)
        r = r @ _so3_exp(theta)
        r = 0.5 * r @ (3.0 * np.eye(3) - r.T @ r)
        out[i + 1] = r
    return out


def generate_sinusoid_trajectory(
    profile: SinusoidProfile,
    duration: float,
    fine_step: float = 1e-4,
    g: ArrayLike = GRAVITY,
) -> Trajectory:
    """
    Integrate a sinusoidal motion profile on a fine time grid.

    Parameters
    ----------
    profile : SinusoidProfile
    duration : float
        Length in seconds; the grid covers ``[0, duration]`` inclusive.
    fine_step : float, default 1e-4
        Grid spacing in seconds.
    g : array-like, shape (3,)
        Navigation-frame gravity.

    Returns
    -------
    Trajectory
        Starts at ``R = I``; angular and translational quantities are analytic.
    """
    if fine_step <= 0 or duration <= 0:
        raise ValueError("duration and fine_step must be positive")
    n = int(round(duration / fine_step)) + 1
    t = np.arange(n) * fine_step
    amp, freq, phase = (np.asarray(x, dtype=np.float64) for x in
                        (profile.omega_amp, profile.omega_freq, profile.omega_phase))
    omega, omega_dot, _ = _sinusoid(amp, freq, phase, t[:, None])
    p, v, v_dot = _sinusoid(
        np.asarray(profile.pos_amp, dtype=np.float64),
        np.asarray(profile.pos_freq, dtype=np.float64),
        np.asarray(profile.pos_phase, dtype=np.float64),
        t[:, None],
    )
    R = _integrate_sinusoid_rotation(amp, freq, phase, fine_step, n, _GAUSS_LO, _GAUSS_HI)
    return Trajectory(t, R, omega, omega_dot, p, v, v_dot, np.asarray(g, dtype=np.float64).copy())


@njit
def _specific_forces(R, omega, omega_dot, v_dot, g, positions):
    n = R.shape[0]
    k = positions.shape[0]
    out = np.empty((n, 3 * k))
    for i in range(n):
        s = R[i].T @ (v_dot[i] - g)
        w = _skew(omega[i])
        c = w @ w + _skew(omega_dot[i])
        for j in range(k):
            out[i, 3 * j : 3 * j + 3] = s + c @ positions[j]
    return out


def specific_force_at(sample: TrajectorySample, r_k: ArrayLike) -> NDArray[np.float64]:
    """
    Specific force sensed at body position ``r_k`` (m/s^2, body frame).

    ``s + [omega x]^2 r_k + [omega_dot x] r_k`` with ``s = R^T (v_dot - g)``.
    """
    r = np.asarray(r_k, dtype=np.float64)
    s = sample.R.T @ (sample.v_dot - sample.g)
    w = _skew(np.asarray(sample.omega, dtype=np.float64))
    return s + w @ (w @ r) + np.cross(sample.omega_dot, r)


def specific_forces(traj: Trajectory, geometry: ArrayGeometry) -> NDArray[np.float64]:
    """Noise-free stacked specific forces for every sample, shape (N, 3K)."""
    return _specific_forces(
        np.ascontiguousarray(traj.R), np.ascontiguousarray(traj.omega),
        np.ascontiguousarray(traj.omega_dot), np.ascontiguousarray(traj.v_dot),
        traj.g, geometry.positions,
    )


@dataclass(frozen=True)
class NoiseConfig:
    """
    Sensor error levels.

    ``sigma_a`` (m/s^2) and ``sigma_g`` (rad/s) are white-noise std per axis;
    ``bias_a``/``bias_g`` are the std of the constant bias draw;
    ``walk_a``/``walk_g`` drive per-sample bias random walks.
    """

    sigma_a: float = 0.5
    sigma_g: float = float(np.deg2rad(1.0))
    bias_a: float | None = None
    bias_g: float | None = None
    walk_a: float = 0.0
    walk_g: float = 0.0

    def __post_init__(self) -> None:
        if self.bias_a is None:
            object.__setattr__(self, "bias_a", self.sigma_a)
        if self.bias_g is None:
            object.__setattr__(self, "bias_g", self.sigma_g)

    @classmethod
    def zero(cls) -> NoiseConfig:
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict) -> NoiseConfig:
        d = dict(d)
        if "sigma_g_deg" in d:
            d["sigma_g"] = float(np.deg2rad(d.pop("sigma_g_deg")))
        return cls(**d)


@dataclass(frozen=True)
class SensorBiases:
    """Initial per-triad accelerometer biases (K, 3) and gyro bias (3,)."""

    acc: NDArray[np.float64]
    gyro: NDArray[np.float64]


@dataclass(frozen=True)
class MeasurementFrame:
    t: float
    acc: NDArray[np.float64]
    gyro: NDArray[np.float64]
    position: NDArray[np.float64] | None = None


@dataclass
class MeasurementStream:
    """
    Time-ordered sensor samples.

    Attributes
    ----------
    t : numpy.ndarray, shape (N,)
    acc : numpy.ndarray, shape (N, 3K)
        Stacked accelerometer triads.
    gyro : numpy.ndarray, shape (N, 3)
        Virtual gyro triad.
    position : numpy.ndarray, shape (N, 3)
        Position measurements, NaN where none is available.
    """

    t: NDArray[np.float64]
    acc: NDArray[np.float64]
    gyro: NDArray[np.float64]
    position: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if self.position is None:
            self.position = np.full((self.t.shape[0], 3), np.nan)

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def has_position(self) -> NDArray[np.bool_]:
        return ~np.isnan(self.position).any(axis=1)

    def __iter__(self) -> Iterator[MeasurementFrame]:
        mask = self.has_position
        for i in range(len(self)):
            yield MeasurementFrame(
                float(self.t[i]), self.acc[i], self.gyro[i],
                self.position[i] if mask[i] else None,
            )


def _decimation(traj: Trajectory, fs: float) -> int:
    ratio = 1.0 / (fs * traj.step)
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-6:
        raise ValueError(f"sampling rate {fs} Hz does not divide the trajectory grid ({traj.step} s)")
    return n


def draw_biases(geometry: ArrayGeometry, noise: NoiseConfig, rng: np.random.Generator) -> SensorBiases:
    """Constant biases drawn from zero-mean normals with the configured std."""
    acc = rng.normal(0.0, noise.bias_a, size=(geometry.K, 3)) if noise.bias_a > 0 else np.zeros((geometry.K, 3))
    gyro = rng.normal(0.0, noise.bias_g, size=3) if noise.bias_g > 0 else np.zeros(3)
    return SensorBiases(acc, gyro)


def synthesize_measurements(
    traj: Trajectory,
    geometry: ArrayGeometry,
    noise: NoiseConfig,
    fs: float,
    seed: int | np.random.SeedSequence | None = 0,
    biases: SensorBiases | None = None,
) -> tuple[MeasurementStream, SensorBiases]:
    """
    Sample a trajectory at ``fs`` Hz into noisy, biased sensor readings.

    All triads are sampled simultaneously. Biases start at ``biases`` (drawn
    from ``noise`` when omitted) and follow random walks when the walk std is
    nonzero.

    Parameters
    ----------
    traj : Trajectory
        Fine-grid truth; ``fs`` must divide its grid.
    geometry : ArrayGeometry
    noise : NoiseConfig
    fs : float
        Sampling rate in Hz.
    seed : int or numpy.random.SeedSequence, optional
        Seed for all draws; identical seeds give identical streams.
    biases : SensorBiases, optional

    Returns
    -------
    stream : MeasurementStream
    biases : SensorBiases
        The initial biases used.
    """
    step = _decimation(traj, fs)
    sub = traj.every(step)
    rng = np.random.default_rng(seed)
    if biases is None:
        biases = draw_biases(geometry, noise, rng)
    n, k = len(sub), geometry.K

    f = specific_forces(sub, geometry)
    acc = f + biases.acc.reshape(1, -1)
    gyro = sub.omega + biases.gyro
    if noise.walk_a > 0:
        walk = rng.normal(0.0, noise.walk_a, size=(n, 3 * k))
        walk[0] = 0.0
        acc += np.cumsum(walk, axis=0)
    if noise.walk_g > 0:
        walk = rng.normal(0.0, noise.walk_g, size=(n, 3))
        walk[0] = 0.0
        gyro += np.cumsum(walk, axis=0)
    if noise.sigma_a > 0:
        acc += rng.normal(0.0, noise.sigma_a, size=(n, 3 * k))
    if noise.sigma_g > 0:
        gyro += rng.normal(0.0, noise.sigma_g, size=(n, 3))
    return MeasurementStream(sub.t.copy(), acc, gyro), biases


def synthesize_positions(
    traj: Trajectory,
    fs: float,
    rate: float,
    sigma_p: float,
    seed: int | np.random.SeedSequence | None = 0,
) -> NDArray[np.float64]:
    """
    Noisy position fixes at ``rate`` Hz aligned to an ``fs`` Hz stream.

    Returns an (N, 3) array with NaN rows where no fix is available.
    """
    step = _decimation(traj, fs)
    sub = traj.every(step)
    every = int(round(fs / rate))
    if every < 1 or abs(fs / rate - every) > 1e-9:
        raise ValueError(f"position rate {rate} Hz must divide the sampling rate {fs} Hz")
    out = np.full((len(sub), 3), np.nan)
    idx = np.arange(0, len(sub), every)
    rng = np.random.default_rng(seed)
    out[idx] = sub.p[idx]
    if sigma_p > 0:
        out[idx] += rng.normal(0.0, sigma_p, size=(idx.size, 3))
    return out


def fuse_virtual_gyro(readings: ArrayLike) -> NDArray[np.float64]:
    """
    Average several gyro triads into one virtual triad.

    Parameters
    ----------
    readings : array-like, shape (M, 3) or (M, N, 3)
        ``M`` triads, optionally over ``N`` samples.
    """
    arr = np.asarray(readings, dtype=np.float64)
    if arr.size == 0 or arr.shape[0] == 0:
        raise ValueError("need at least one gyro reading")
    return arr.mean(axis=0)
