"""
Central finite-difference validation of the analytic model Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .array_model import ArrayGeometry, paper_array, solve_omega_dot_s
from .lie_group import CompositeGroupElement, so3_exp
from .models import (
    ALL_VARIANTS,
    Variant,
    jacobian_noise,
    jacobian_state,
    make_state,
    noise_blocks,
    propagate_increment,
    state_blocks,
)
from .sensor_sim import GRAVITY

TOLERANCE = 1e-5
FD_STEP = 1e-6
# blocks whose reference entries are this small relative to the whole
# Jacobian are compared against that scale instead of their own
_SCALE_FLOOR = 1e-8

JacobianFn = Callable[..., NDArray[np.float64]]


@dataclass
class BlockError:
    variant: str
    kind: str  # "state" or "noise"
    row: str
    col: str
    error: float

    @property
    def name(self) -> str:
        return f"{self.variant} d{self.row}/d{self.col} ({self.kind})"


@dataclass
class JacobianReport:
    seed: int
    n_states: int
    worst: BlockError | None = None
    per_variant: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return 0.0 if self.worst is None else self.worst.error

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE

    def format(self) -> str:
        lines = [f"# seed={self.seed}", f"# states_per_variant={self.n_states}"]
        for name, err in self.per_variant.items():
            lines.append(f"{name:14s} max_rel_error={err:.3e}")
        lines.append(f"worst block: {self.worst.name} rel_error={self.worst.error:.3e}")
        lines.append(f"tolerance={TOLERANCE:.0e} -> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def random_operating_point(
    variant: Variant, geometry: ArrayGeometry, rng: np.random.Generator
) -> tuple[CompositeGroupElement, NDArray[np.float64], NDArray[np.float64]]:
    """A random state plus consistent accelerometer and gyro readings."""
    variant = Variant(variant)
    theta = rng.normal(size=3)
    theta *= rng.uniform(0.1, 3.0) / np.linalg.norm(theta)
    R = so3_exp(theta)
    omega = rng.normal(scale=2.0, size=3)
    omega_dot = rng.normal(scale=5.0, size=3)
    s_true = R.T @ (rng.normal(scale=2.0, size=3) - GRAVITY)
    state = make_state(
        variant, R,
        omega=omega + rng.normal(scale=0.05, size=3),
        p=rng.normal(scale=10.0, size=3),
        v=rng.normal(scale=2.0, size=3),
        b_wdot=rng.normal(scale=0.5, size=3),
        b_s=rng.normal(scale=0.2, size=3),
        b_g=rng.normal(scale=0.02, size=3),
    )
    w = np.cross
    acc = np.concatenate([
        s_true + w(omega, w(omega, r)) + w(omega_dot, r) for r in geometry.positions
    ]) + rng.normal(scale=0.3, size=3 * geometry.K)
    gyro = omega + rng.normal(scale=0.02, size=3)
    return state, acc, gyro


def _perturbed(state: CompositeGroupElement, e: NDArray[np.float64]) -> CompositeGroupElement:
    return CompositeGroupElement(state.rotation @ so3_exp(e[:3]), state.euclidean + e[3:])


def fd_jacobian_state(variant, state, acc, gyro, geometry, T, h=FD_STEP):
    d = Variant(variant).dim
    out = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        plus = propagate_increment(variant, _perturbed(state, e), acc, gyro, geometry, T)
        minus = propagate_increment(variant, _perturbed(state, -e), acc, gyro, geometry, T)
        out[:, j] = (plus - minus) / (2 * h)
    return out


def fd_jacobian_noise(variant, state, acc, gyro, geometry, T, h=FD_STEP):
    variant = Variant(variant)
    nd = variant.noise_dim
    out = np.empty((variant.dim, nd))
    for j in range(nd):
        w = np.zeros(nd)
        w[j] = h
        plus = propagate_increment(variant, state, acc, gyro, geometry, T, noise=w)
        minus = propagate_increment(variant, state, acc, gyro, geometry, T, noise=-w)
        out[:, j] = (plus - minus) / (2 * h)
    return out


def block_errors(
    analytic: NDArray[np.float64],
    reference: NDArray[np.float64],
    rows: dict[str, slice],
    cols: dict[str, slice],
) -> dict[tuple[str, str], float]:
    """
    Relative error per block: ``max|a - f| / max(max|f_block|, 1e-8 max|f|)``.
    """
    scale = max(np.abs(reference).max(), 1e-300)
    out = {}
    for rn, rs in rows.items():
        for cn, cs in cols.items():
            a, f = analytic[rs, cs], reference[rs, cs]
            denom = max(np.abs(f).max(), _SCALE_FLOOR * scale)
            out[(rn, cn)] = float(np.abs(a - f).max() / denom)
    return out


def validate_jacobians(
    seed: int = 0,
    n_states: int = 10,
    geometry: ArrayGeometry | None = None,
    periods: tuple[float, ...] = (0.002, 0.01),
    state_fn: JacobianFn = jacobian_state,
    noise_fn: JacobianFn = jacobian_noise,
    variants=ALL_VARIANTS,
) -> JacobianReport:
    """
    Compare analytic Jacobians with central differences of the increment.

    Each variant is checked at ``n_states`` random operating points, cycling
    through the sample ``periods``. ``state_fn``/``noise_fn`` may be replaced
    to test the checker itself.
    """
    geometry = geometry or paper_array()
    rng = np.random.default_rng(seed)
    report = JacobianReport(seed=seed, n_states=n_states)
    for variant in variants:
        variant = Variant(variant)
        sb = state_blocks(variant)
        nb = noise_blocks(variant)
        worst_v = 0.0
        for i in range(n_states):
            T = periods[i % len(periods)]
            state, acc, gyro = random_operating_point(variant, geometry, rng)
            checks = (
                ("state", state_fn(variant, state, acc, gyro, geometry, T),
                 fd_jacobian_state(variant, state, acc, gyro, geometry, T), sb),
                ("noise", noise_fn(variant, state, acc, gyro, geometry, T),
                 fd_jacobian_noise(variant, state, acc, gyro, geometry, T), nb),
            )
            for kind, analytic, fd, cols in checks:
                for (rn, cn), err in block_errors(analytic, fd, sb, cols).items():
                    worst_v = max(worst_v, err)
                    if report.worst is None or err > report.worst.error:
                        report.worst = BlockError(variant.label, kind, rn, cn, err)
        report.per_variant[variant.label] = worst_v
    return report
