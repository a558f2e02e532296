"""
Monte-Carlo simulation campaigns, dataset I/O and replay of recorded data.

Both campaign kinds run each filter with position updates for an aiding
period and then as a pure inertial navigator, and report the position RMSE
as a function of the time elapsed since aiding ceased.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation

from . import __version__
from .array_model import ArrayGeometry, geometry_from_dict
from .filter import FilterError, FilterState, InitialStd, initial_covariance, run_filter
from .lie_group import CompositeGroupElement
from .models import ALL_VARIANTS, Variant, make_state, state_blocks
from .sensor_sim import (
    DYNAMICS,
    MeasurementStream,
    NoiseConfig,
    SinusoidProfile,
    Trajectory,
    fuse_virtual_gyro,
    generate_sinusoid_trajectory,
    synthesize_measurements,
    synthesize_positions,
)

_TIME_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid campaign or replay configuration."""


class CampaignError(RuntimeError):
    """A Monte-Carlo run failed; the campaign is aborted."""

    def __init__(self, message: str, run: int | None = None, variant: str | None = None) -> None:
        super().__init__(message)
        self.run = run
        self.variant = variant


class SchemaError(ValueError):
    """A dataset file violates the CSV schema."""

    def __init__(self, message: str, path: str | Path | None = None, row: int | None = None,
                 column: str | None = None) -> None:
        where = f"{path}: " if path is not None else ""
        super().__init__(where + message)
        self.path = None if path is None else str(path)
        self.row = row
        self.column = column


# ---------------------------------------------------------------------------
# configuration

def _parse_variants(items) -> tuple[Variant, ...]:
    if isinstance(items, str):
        items = [s for s in items.split(",") if s.strip()]
    try:
        out = tuple(Variant.parse(v) for v in items)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if not out:
        raise ConfigError("at least one variant is required")
    return out


def _is_multiple(x: float, step: float) -> bool:
    n = round(x / step)
    return n >= 1 and abs(x - n * step) <= 1e-9 * max(1.0, abs(x))


@dataclass(frozen=True)
class CampaignConfig:
    """
    Monte-Carlo campaign settings.

    Attributes
    ----------
    variants : tuple of Variant
    dynamics : str
        ``"low"`` or ``"high"``; ignored when ``profile`` is given.
    fs : float
        Sensor sampling rate in Hz.
    runs : int
        Number of Monte-Carlo runs.
    aiding : float
        Seconds of position aiding before pure inertial navigation.
    horizon : float
        Seconds of pure inertial navigation.
    sigma_p : float
        Position-fix std in meters.
    position_rate : float
        Position-fix rate in Hz.
    seed : int
    noise : NoiseConfig
        Simulated sensor noise.
    filter_noise : NoiseConfig, optional
        Noise levels assumed by the filters; ``noise`` when omitted.
    geometry : dict
        Geometry spec understood by :func:`geometry_from_dict`.
    profile : SinusoidProfile, optional
        Explicit motion; overrides ``dynamics``.
    output_step : float
        Spacing of the emitted RMSE offsets in seconds.
    initial_std : InitialStd
    simulate_position_noise : bool
        Add ``sigma_p`` noise to the simulated fixes.
    convergence_ratio : float
        Bias-block covariance trace at the end of aiding must fall below this
        fraction of its initial value.
    fine_step : float
        Truth-integration step in seconds.
    workers : int
        Worker processes for the runs; 1 runs in-process.
    name : str
    """

    variants: tuple[Variant, ...] = ALL_VARIANTS
    dynamics: str = "low"
    fs: float = 500.0
    runs: int = 100
    aiding: float = 30.0
    horizon: float = 5.0
    sigma_p: float = 0.1
    position_rate: float = 100.0
    seed: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    filter_noise: NoiseConfig | None = None
    geometry: dict = field(default_factory=lambda: {"preset": "paper32"})
    profile: SinusoidProfile | None = None
    output_step: float = 0.1
    initial_std: InitialStd = field(default_factory=InitialStd)
    simulate_position_noise: bool = True
    convergence_ratio: float = 0.1
    fine_step: float = 1e-4
    workers: int = 1
    name: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "variants", _parse_variants(self.variants))
        if self.profile is None and self.dynamics not in DYNAMICS:
            raise ConfigError(f"dynamics must be one of {sorted(DYNAMICS)}, got {self.dynamics!r}")
        if not self.runs >= 1:
            raise ConfigError("runs must be at least 1")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not self.aiding > 0:
            raise ConfigError("aiding duration must be positive")
        if not self.fs > 0 or not self.position_rate > 0:
            raise ConfigError("rates must be positive")
        if not self.sigma_p > 0:
            raise ConfigError("sigma_p must be positive")
        if not _is_multiple(1.0 / self.fs, self.fine_step):
            raise ConfigError(f"fs={self.fs} Hz does not divide the truth step {self.fine_step} s")
        if not _is_multiple(self.fs / self.position_rate, 1.0):
            raise ConfigError(f"position rate {self.position_rate} Hz must divide fs={self.fs} Hz")
        for name in ("aiding", "horizon", "output_step"):
            if not _is_multiple(getattr(self, name), 1.0 / self.fs):
                raise ConfigError(f"{name} must be a whole number of sample periods")
        if not _is_multiple(self.horizon, self.output_step):
            raise ConfigError("horizon must be a whole number of output steps")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def assumed_noise(self) -> NoiseConfig:
        return self.noise if self.filter_noise is None else self.filter_noise

    @property
    def motion(self) -> SinusoidProfile:
        return self.profile if self.profile is not None else DYNAMICS[self.dynamics]()

    def build_geometry(self) -> ArrayGeometry:
        try:
            return geometry_from_dict(self.geometry)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"geometry: {exc}") from exc

    def to_dict(self) -> dict:
        """Plain, JSON-serializable mapping that round-trips through :meth:`from_dict`."""
        d = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "variants":
                value = [v.label for v in value]
            elif f.name in ("noise", "initial_std") or (f.name == "filter_noise" and value is not None):
                value = asdict(value)
            elif f.name == "profile":
                value = None if value is None else {k: list(v) for k, v in asdict(value).items()}
            d[f.name] = value
        return d

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        for volatile in ("workers", "name"):
            d.pop(volatile)
        blob = json.dumps(d, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> CampaignConfig:
        """
        Build from a parsed mapping. A ``preset`` key selects a named preset
        whose fields the remaining keys override.
        """
        if not isinstance(d, dict):
            raise ConfigError("campaign config must be a mapping")
        d = dict(d)
        base: dict = {}
        if "preset" in d:
            name = d.pop("preset")
            if name not in CAMPAIGN_PRESETS:
                raise ConfigError(f"unknown campaign preset {name!r}; choose from {sorted(CAMPAIGN_PRESETS)}")
            base = CAMPAIGN_PRESETS[name].to_dict()
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown campaign keys: {sorted(unknown)}")
        base.update(d)
        kw = dict(base)
        try:
            for key in ("noise", "filter_noise"):
                if isinstance(kw.get(key), dict):
                    kw[key] = NoiseConfig.from_dict(kw[key])
            if "initial_std" in kw and isinstance(kw["initial_std"], dict):
                kw["initial_std"] = InitialStd(**kw["initial_std"])
            if kw.get("profile") is not None and isinstance(kw["profile"], dict):
                kw["profile"] = SinusoidProfile.from_dict(kw["profile"])
            if isinstance(kw.get("geometry"), str):
                kw["geometry"] = {"preset": kw["geometry"]}
            for key in ("fs", "aiding", "horizon", "sigma_p", "position_rate", "output_step",
                        "convergence_ratio", "fine_step"):
                if key in kw:
                    kw[key] = float(kw[key])
            for key in ("runs", "seed", "workers"):
                if key in kw:
                    kw[key] = int(kw[key])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _paper_campaign(dynamics: str, fs: float) -> CampaignConfig:
    return CampaignConfig(dynamics=dynamics, fs=fs, name=f"paper-sim-{dynamics}-{int(fs)}")


CAMPAIGN_PRESETS: dict[str, CampaignConfig] = {
    f"paper-sim-{dyn}-{fs}": _paper_campaign(dyn, float(fs))
    for dyn in ("low", "high")
    for fs in (500, 100)
}


def load_campaign_config(source: str | Path) -> CampaignConfig:
    """
    Load a campaign config from a YAML file, or return a named preset.

    Raises
    ------
    ConfigError
        On unreadable files, parse errors or invalid values.
    """
    if str(source) in CAMPAIGN_PRESETS and not Path(source).exists():
        return CAMPAIGN_PRESETS[str(source)]
    try:
        with open(source) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {source}: {exc}") from exc
    if isinstance(data, dict) and "campaign" in data:
        data = data["campaign"]
    return CampaignConfig.from_dict(data if data is not None else {})


# ---------------------------------------------------------------------------
# results

@dataclass
class RmseCurve:
    """
    Position RMSE against time since aiding ceased.

    Attributes
    ----------
    variant : str
    t_offset : numpy.ndarray, shape (n,)
    rmse_axes : numpy.ndarray, shape (n, 3)
        Per-axis RMSE in meters.
    rmse_combined : numpy.ndarray, shape (n,)
        ``sqrt(mean ||p_hat - p||^2)``, the RMS of the 3-D error norm.
    n_runs : int
    """

    variant: str
    t_offset: NDArray[np.float64]
    rmse_axes: NDArray[np.float64]
    rmse_combined: NDArray[np.float64]
    n_runs: int

    @classmethod
    def from_errors(cls, variant: str, t_offset: NDArray[np.float64], errors: NDArray[np.float64]) -> RmseCurve:
        """``errors`` has shape (runs, n, 3)."""
        sq = errors**2
        return cls(
            variant, np.asarray(t_offset, dtype=np.float64),
            np.sqrt(sq.mean(axis=0)), np.sqrt(sq.sum(axis=2).mean(axis=0)), int(errors.shape[0]),
        )

    @property
    def rmse_axis_mean(self) -> NDArray[np.float64]:
        """Arithmetic mean of the per-axis RMSE."""
        return self.rmse_axes.mean(axis=1)

    def at(self, offset: float) -> float:
        """Combined RMSE at the emitted offset closest to ``offset``."""
        return float(self.rmse_combined[int(np.argmin(np.abs(self.t_offset - offset)))])


CSV_COLUMNS = ("variant", "t_offset", "rmse_x", "rmse_y", "rmse_z", "rmse_combined", "n_runs")


def format_rmse_csv(curves: dict[str, RmseCurve], provenance: dict[str, object]) -> str:
    """Render curves as CSV text with ``# key=value`` provenance lines on top."""
    buf = io.StringIO()
    for key, value in provenance.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for name, c in curves.items():
        for i in range(c.t_offset.shape[0]):
            writer.writerow([
                name, repr(round(float(c.t_offset[i]), 9)),
                *(repr(float(x)) for x in c.rmse_axes[i]), repr(float(c.rmse_combined[i])), c.n_runs,
            ])
    return buf.getvalue()


def read_rmse_csv(path: str | Path) -> tuple[dict[str, RmseCurve], dict[str, str]]:
    """Parse a file written by :func:`format_rmse_csv`."""
    provenance: dict[str, str] = {}
    rows: dict[str, list] = {}
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                provenance[key] = value
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    for r in reader:
        rows.setdefault(r["variant"], []).append(r)
    curves = {}
    for name, rs in rows.items():
        curves[name] = RmseCurve(
            name,
            np.array([float(r["t_offset"]) for r in rs]),
            np.array([[float(r[f"rmse_{a}"]) for a in "xyz"] for r in rs]),
            np.array([float(r["rmse_combined"]) for r in rs]),
            int(rs[0]["n_runs"]),
        )
    return curves, provenance


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class CampaignResult:
    curves: dict[str, RmseCurve]
    seed: int
    config_hash: str
    kind: str = "simulate"
    bias_trace_ratio: dict[str, float] = field(default_factory=dict)

    @property
    def provenance(self) -> dict[str, object]:
        return {"kind": self.kind, "seed": self.seed, "config_hash": self.config_hash, "version": __version__}

    def to_csv_text(self) -> str:
        return format_rmse_csv(self.curves, self.provenance)

    def write_csv(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_csv_text())


# ---------------------------------------------------------------------------
# simulation campaign

def _bias_indices(variant: Variant) -> NDArray[np.intp]:
    blocks = state_blocks(variant)
    return np.concatenate([np.arange(blocks[k].start, blocks[k].stop) for k in ("b_wdot", "b_s", "b_g") if k in blocks])


def truth_initial_state(variant: Variant, traj: Trajectory, index: int = 0) -> CompositeGroupElement:
    """Navigation states from the truth at ``index``; bias estimates zero."""
    s = traj.sample(index)
    return make_state(variant, s.R, omega=s.omega, p=s.p, v=s.v)


@dataclass
class _SimContext:
    config: CampaignConfig
    traj: Trajectory
    geometry: ArrayGeometry
    offsets_idx: NDArray[np.intp]
    truth_p: NDArray[np.float64]


def _simulate_run(ctx: _SimContext, run: int, seed: np.random.SeedSequence):
    cfg = ctx.config
    meas_seed, pos_seed = seed.spawn(2)
    stream, _ = synthesize_measurements(ctx.traj, ctx.geometry, cfg.noise, cfg.fs, seed=meas_seed)
    sigma = cfg.sigma_p if cfg.simulate_position_noise else 0.0
    stream.position = synthesize_positions(ctx.traj, cfg.fs, cfg.position_rate, sigma, seed=pos_seed)
    mask = stream.t <= cfg.aiding + _TIME_TOL
    i_aid = int(np.count_nonzero(mask)) - 1
    errors = {}
    ratios = {}
    assumed = cfg.assumed_noise
    for v in cfg.variants:
        P0 = initial_covariance(v, ctx.geometry, assumed, cfg.initial_std)
        init = FilterState(truth_initial_state(v, ctx.traj), P0, float(stream.t[0]))
        try:
            res = run_filter(v, init, stream, ctx.geometry, assumed, sigma_p=cfg.sigma_p, position_mask=mask)
        except FilterError as exc:
            raise CampaignError(f"run {run}, {v.label}: {exc}", run, v.label) from exc
        p_hat = res.position[ctx.offsets_idx]
        if not np.all(np.isfinite(p_hat)):
            raise CampaignError(f"run {run}, {v.label}: non-finite position estimate", run, v.label)
        errors[v.label] = p_hat - ctx.truth_p
        bidx = _bias_indices(v)
        tr0 = float(P0[bidx, bidx].sum())
        tr = float(res.var[i_aid, bidx].sum())
        ratios[v.label] = tr / tr0 if tr0 > 0 else 0.0
    return errors, ratios


def _simulate_chunk(ctx: _SimContext, items: list[tuple[int, np.random.SeedSequence]]):
    return [(run, *_simulate_run(ctx, run, seed)) for run, seed in items]


def run_simulation_campaign(
    config: CampaignConfig, progress: Callable[[int, int], None] | None = None
) -> CampaignResult:
    """
    Monte-Carlo campaign on simulated array data.

    The truth motion is deterministic and generated once. Each run draws fresh
    biases, sensor noise and position-fix noise from its own child of the
    campaign seed; every variant in a run consumes the same measurement
    stream. Filters start from the true navigation state with zero bias
    estimates.

    Parameters
    ----------
    config : CampaignConfig
    progress : callable, optional
        Called as ``progress(done, total)`` after each run.

    Returns
    -------
    CampaignResult

    Raises
    ------
    CampaignError
        If any run fails, or the bias covariance did not converge during aiding.
    """
    geometry = config.build_geometry()
    duration = config.aiding + config.horizon
    traj = generate_sinusoid_trajectory(config.motion, duration, fine_step=config.fine_step)
    sub = traj.every(int(round(1.0 / (config.fs * config.fine_step))))
    i_aid = int(round(config.aiding * config.fs))
    stride = int(round(config.output_step * config.fs))
    n_out = int(round(config.horizon / config.output_step)) + 1
    offsets_idx = i_aid + stride * np.arange(n_out)
    ctx = _SimContext(config, traj, geometry, offsets_idx, sub.p[offsets_idx])
    t_offset = sub.t[offsets_idx] - sub.t[i_aid]

    seeds = np.random.SeedSequence(config.seed).spawn(config.runs)
    items = list(enumerate(seeds))
    results: list = []
    if config.workers == 1:
        for run, seed in items:
            results.append((run, *_simulate_run(ctx, run, seed)))
            if progress:
                progress(run + 1, config.runs)
    else:
        chunks = [items[i :: config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for part in pool.map(_simulate_chunk, [ctx] * len(chunks), chunks):
                results.extend(part)
        results.sort(key=lambda r: r[0])
        if progress:
            progress(config.runs, config.runs)

    worst_ratio = {v.label: max(r[2][v.label] for r in results) for v in config.variants}
    for label, ratio in worst_ratio.items():
        if ratio >= config.convergence_ratio:
            raise CampaignError(
                f"{label}: bias covariance trace only fell to {ratio:.3g} of its initial value "
                f"during {config.aiding} s of aiding (limit {config.convergence_ratio})",
                variant=label,
            )
    curves = {
        v.label: RmseCurve.from_errors(v.label, t_offset, np.stack([r[1][v.label] for r in results]))
        for v in config.variants
    }
    return CampaignResult(curves, config.seed, config.config_hash, "simulate", worst_ratio)


# ---------------------------------------------------------------------------
# datasets

MEAS_TIME = "t"
REF_COLUMNS = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz")


def measurement_columns(K: int) -> list[str]:
    cols = [MEAS_TIME]
    cols += [f"a{k}_{a}" for k in range(1, K + 1) for a in "xyz"]
    cols += [f"g{k}_{a}" for k in range(1, K + 1) for a in "xyz"]
    return cols


@dataclass
class Dataset:
    """
    Time-aligned recording.

    ``stream.position`` carries the reference positions at the frames they
    align with; ``ref_frame`` maps each reference row to its frame.
    """

    stream: MeasurementStream
    ref_t: NDArray[np.float64]
    ref_p: NDArray[np.float64]
    ref_q: NDArray[np.float64]
    ref_frame: NDArray[np.intp]
    K: int
    name: str = ""

    @property
    def fs(self) -> float:
        return float(1.0 / np.median(np.diff(self.stream.t)))


def _fmt(x: float) -> str:
    return "%.17g" % x


def _write_rows(path: str | Path, header: Sequence[str], data: NDArray[np.float64]) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in data:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    atomic_write_text(path, buf.getvalue())


def quat_from_rotations(R: NDArray[np.float64]) -> NDArray[np.float64]:
    """Scalar-first unit quaternions (w, x, y, z) with ``w >= 0``."""
    q = Rotation.from_matrix(R).as_quat()
    q = q[:, [3, 0, 1, 2]]
    q[q[:, 0] < 0] *= -1.0
    return q


def rotation_from_quat(q: NDArray[np.float64]) -> NDArray[np.float64]:
    q = np.asarray(q, dtype=np.float64)
    return Rotation.from_quat(q[..., [1, 2, 3, 0]]).as_matrix()


def write_dataset(
    meas_path: str | Path,
    ref_path: str | Path,
    t: NDArray[np.float64],
    acc: NDArray[np.float64],
    gyro: NDArray[np.float64],
    ref_t: NDArray[np.float64],
    ref_p: NDArray[np.float64],
    ref_q: NDArray[np.float64],
) -> None:
    """
    Write measurement and reference CSVs.

    ``gyro`` is either (N, K, 3) per-triad readings or an (N, 3) virtual
    triad, which is then repeated in every gyro column.
    """
    t = np.asarray(t, dtype=np.float64)
    acc = np.asarray(acc, dtype=np.float64)
    K = acc.shape[1] // 3
    gyro = np.asarray(gyro, dtype=np.float64)
    if gyro.ndim == 2:
        gyro = np.repeat(gyro[:, None, :], K, axis=1)
    data = np.column_stack([t, acc, gyro.reshape(t.shape[0], 3 * K)])
    _write_rows(meas_path, measurement_columns(K), data)
    _write_rows(ref_path, REF_COLUMNS, np.column_stack([ref_t, ref_p, ref_q]))


def _read_table(path: str | Path, expected: Callable[[list[str]], list[str]]) -> tuple[list[str], NDArray[np.float64]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("file is empty", path) from None
        want = expected(header)
        for i, col in enumerate(want):
            if col not in header:
                raise SchemaError(f"missing column {col!r}", path, column=col)
            if i >= len(header) or header[i] != col:
                raise SchemaError(
                    f"column {i} is {header[i] if i < len(header) else None!r}, expected {col!r}",
                    path, column=col,
                )
        if len(header) != len(want):
            extra = header[len(want)]
            raise SchemaError(f"unexpected column {extra!r}", path, column=extra)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(want):
                raise SchemaError(f"row {line_no - 2} (line {line_no}) has {len(row)} fields, expected {len(want)}",
                                  path, row=line_no - 2)
            try:
                values = [float(x) for x in row]
            except ValueError:
                bad = next(j for j, x in enumerate(row) if not _is_float(x))
                raise SchemaError(f"row {line_no - 2} (line {line_no}): column {want[bad]!r} is not a number",
                                  path, row=line_no - 2, column=want[bad]) from None
            rows.append(values)
    if not rows:
        raise SchemaError("no data rows", path)
    data = np.array(rows, dtype=np.float64)
    nan_rows = np.flatnonzero(~np.isfinite(data).all(axis=1))
    if nan_rows.size:
        r = int(nan_rows[0])
        col = want[int(np.flatnonzero(~np.isfinite(data[r]))[0])]
        raise SchemaError(f"row {r}: non-finite value in column {col!r}", path, row=r, column=col)
    dt = np.diff(data[:, 0])
    if np.any(dt <= 0):
        r = int(np.flatnonzero(dt <= 0)[0]) + 1
        raise SchemaError(f"row {r}: time is not strictly increasing", path, row=r, column="t")
    return want, data


def _is_float(x: str) -> bool:
    try:
        float(x)
    except ValueError:
        return False
    return True


def _expected_measurement_header(header: list[str]) -> list[str]:
    n = len(header) - 1
    K = max(n // 6, 1)
    return measurement_columns(K)


def load_dataset(meas_path: str | Path, ref_path: str | Path, K: int | None = None) -> Dataset:
    """
    Load and align a measurement/reference CSV pair.

    Gyro triads are fused into one virtual triad. Reference rows are matched
    to the nearest measurement frame; rows outside the measurement time span
    are dropped.

    Parameters
    ----------
    meas_path, ref_path : path-like
    K : int, optional
        Expected number of triads.

    Raises
    ------
    FileNotFoundError
    SchemaError
        Wrong columns, non-numeric or non-finite values, non-monotonic time,
        or streams that do not overlap.
    """
    for p in (meas_path, ref_path):
        if not Path(p).is_file():
            raise FileNotFoundError(f"dataset file not found: {p}")
    expect = _expected_measurement_header if K is None else (lambda _h: measurement_columns(K))
    cols, meas = _read_table(meas_path, expect)
    K = (len(cols) - 1) // 6
    _, ref = _read_table(ref_path, lambda _h: list(REF_COLUMNS))

    t = meas[:, 0].copy()
    acc = meas[:, 1 : 1 + 3 * K].copy()
    triads = meas[:, 1 + 3 * K :].reshape(-1, K, 3).transpose(1, 0, 2)
    gyro = triads[0].copy() if np.all(triads == triads[0]) else fuse_virtual_gyro(triads)

    ref_t = ref[:, 0]
    half = 0.5 * float(np.min(np.diff(t))) if t.shape[0] > 1 else 0.0
    inside = (ref_t >= t[0] - half) & (ref_t <= t[-1] + half)
    if not inside.any():
        raise SchemaError(
            f"reference span [{ref_t[0]:.6g}, {ref_t[-1]:.6g}] s does not overlap measurements "
            f"[{t[0]:.6g}, {t[-1]:.6g}] s", ref_path,
        )
    ref = ref[inside]
    ref_t = ref[:, 0]
    idx = np.clip(np.searchsorted(t, ref_t), 1, t.shape[0] - 1) if t.shape[0] > 1 else np.zeros(ref_t.shape, int)
    if t.shape[0] > 1:
        idx = np.where(np.abs(t[idx - 1] - ref_t) <= np.abs(t[idx] - ref_t), idx - 1, idx)
    if np.any(np.diff(idx) == 0):
        raise SchemaError("reference rate exceeds the measurement rate", ref_path)
    position = np.full((t.shape[0], 3), np.nan)
    position[idx] = ref[:, 1:4]
    q = ref[:, 4:8]
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    stream = MeasurementStream(t, acc, gyro, position)
    return Dataset(stream, ref_t.copy(), ref[:, 1:4].copy(), q, idx.astype(np.intp), K, Path(meas_path).stem)


def synthesize_dataset(
    profile: SinusoidProfile,
    geometry: ArrayGeometry,
    noise: NoiseConfig,
    fs: float,
    duration: float,
    sigma_p: float = 0.1,
    position_rate: float = 100.0,
    seed: int | np.random.SeedSequence = 0,
    fine_step: float = 1e-4,
) -> tuple[Dataset, Trajectory]:
    """
    Simulated recording in dataset form, with noisy reference positions.

    Returns the dataset and the fine-grid truth.
    """
    traj = generate_sinusoid_trajectory(profile, duration, fine_step=fine_step)
    meas_seed, pos_seed = np.random.SeedSequence(seed).spawn(2) if isinstance(seed, int) else seed.spawn(2)
    stream, _ = synthesize_measurements(traj, geometry, noise, fs, seed=meas_seed)
    pos = synthesize_positions(traj, fs, position_rate, sigma_p, seed=pos_seed)
    stream.position = pos
    idx = np.flatnonzero(stream.has_position)
    sub = traj.every(int(round(1.0 / (fs * traj.step))))
    ds = Dataset(stream, stream.t[idx].copy(), pos[idx].copy(), quat_from_rotations(sub.R[idx]),
                 idx, geometry.K, "synthetic")
    return ds, traj


def save_dataset(ds: Dataset, meas_path: str | Path, ref_path: str | Path) -> None:
    write_dataset(meas_path, ref_path, ds.stream.t, ds.stream.acc, ds.stream.gyro, ds.ref_t, ds.ref_p, ds.ref_q)


# ---------------------------------------------------------------------------
# replay campaign

@dataclass(frozen=True)
class ReplayConfig:
    """
    Replay settings.

    The restart schedule is either explicit ``restarts`` (seconds) or
    ``count`` instants equally spaced over ``[start, stop]``. The initial
    velocity is fitted to the first ``fit_window`` seconds of reference
    positions; the initial attitude comes from the first reference quaternion.
    """

    variants: tuple[Variant, ...] = ALL_VARIANTS
    restarts: tuple[float, ...] | None = None
    start: float | None = None
    stop: float | None = None
    count: int | None = None
    horizon: float = 5.0
    sigma_p: float = 0.1
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    geometry: dict = field(default_factory=lambda: {"preset": "paper32"})
    initial_std: InitialStd = field(
        default_factory=lambda: InitialStd(attitude=1e-2, omega=1e-2, position=0.1, velocity=0.1)
    )
    fit_window: float = 1.0
    output_step: float = 0.1
    seed: int = 0
    name: str = "replay"

    def __post_init__(self) -> None:
        object.__setattr__(self, "variants", _parse_variants(self.variants))
        if self.restarts is not None:
            object.__setattr__(self, "restarts", tuple(float(x) for x in self.restarts))
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not self.sigma_p > 0:
            raise ConfigError("sigma_p must be positive")
        if not _is_multiple(self.horizon, self.output_step):
            raise ConfigError("horizon must be a whole number of output steps")
        if len(self.schedule()) == 0:
            raise ConfigError("restart schedule is empty")

    def schedule(self) -> NDArray[np.float64]:
        if self.restarts is not None:
            return np.sort(np.asarray(self.restarts, dtype=np.float64))
        if self.count is None or self.start is None or self.stop is None:
            raise ConfigError("give either 'restarts' or 'start', 'stop' and 'count'")
        if self.count < 1:
            return np.empty(0)
        if self.count > 1 and not self.stop > self.start:
            raise ConfigError("stop must exceed start")
        return np.linspace(self.start, self.stop, int(self.count))

    def build_geometry(self) -> ArrayGeometry:
        try:
            return geometry_from_dict(self.geometry)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"geometry: {exc}") from exc

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "variants":
                value = [v.label for v in value]
            elif f.name in ("noise", "initial_std"):
                value = asdict(value)
            elif f.name == "restarts" and value is not None:
                value = list(value)
            d[f.name] = value
        return d

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("name")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=float).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> ReplayConfig:
        if not isinstance(d, dict):
            raise ConfigError("replay config must be a mapping")
        kw = dict(d)
        kw.pop("datasets", None)
        known = {f.name for f in fields(cls)}
        unknown = set(kw) - known
        if unknown:
            raise ConfigError(f"unknown replay keys: {sorted(unknown)}")
        try:
            if isinstance(kw.get("noise"), dict):
                kw["noise"] = NoiseConfig.from_dict(kw["noise"])
            if isinstance(kw.get("initial_std"), dict):
                kw["initial_std"] = InitialStd(**kw["initial_std"])
            if isinstance(kw.get("geometry"), str):
                kw["geometry"] = {"preset": kw["geometry"]}
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_replay_config(path: str | Path) -> tuple[ReplayConfig, list[tuple[str, str]]]:
    """
    Load a replay config; also returns any ``datasets`` listed in it as
    ``(measurements, reference)`` path pairs, relative to the config file.
    """
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if isinstance(data, dict) and "replay" in data:
        data = data["replay"]
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("replay config must be a mapping")
    base = Path(path).parent
    pairs = []
    for item in data.get("datasets", []) or []:
        try:
            pairs.append((str(base / item["measurements"]), str(base / item["reference"])))
        except (KeyError, TypeError):
            raise ConfigError("each dataset needs 'measurements' and 'reference'") from None
    return ReplayConfig.from_dict(data), pairs


def _slice(stream: MeasurementStream, a: int, b: int) -> MeasurementStream:
    sl = slice(a, b + 1)
    return MeasurementStream(stream.t[sl], stream.acc[sl], stream.gyro[sl], stream.position[sl])


def _replay_initial_state(variant: Variant, ds: Dataset, fit_window: float) -> CompositeGroupElement:
    # velocity from a quadratic least-squares fit to the first reference fixes
    t0 = ds.ref_t[0]
    sel = ds.ref_t <= t0 + fit_window
    if np.count_nonzero(sel) >= 3:
        coef = np.polynomial.polynomial.polyfit(ds.ref_t[sel] - t0, ds.ref_p[sel], 2)
        p0, v0 = coef[0], coef[1]
    else:
        p0, v0 = ds.ref_p[0], np.zeros(3)
    return make_state(variant, rotation_from_quat(ds.ref_q[0]), omega=ds.stream.gyro[ds.ref_frame[0]], p=p0, v=v0)


def replay_dataset(ds: Dataset, config: ReplayConfig, geometry: ArrayGeometry | None = None) -> dict[str, NDArray[np.float64]]:
    """
    Position errors of every variant on one recording.

    Each filter runs aided from the first reference sample. At every restart
    instant a branch continues without position updates for ``horizon``
    seconds while the aided run carries on to the next restart.

    Returns
    -------
    dict
        Variant label to an array (restarts, offsets, 3) of ``p_hat - p_ref``.

    Raises
    ------
    ConfigError
        If a restart lies outside the data or the horizon runs past its end.
    CampaignError
        If a filter fails.
    """
    geometry = geometry or config.build_geometry()
    if geometry.K != ds.K:
        raise ConfigError(f"geometry has {geometry.K} triads but the dataset has {ds.K}")
    stream = ds.stream
    t = stream.t
    ref_of_frame = {int(f): i for i, f in enumerate(ds.ref_frame)}
    sched = config.schedule()
    first = int(ds.ref_frame[0])
    n_out = int(round(config.horizon / config.output_step)) + 1
    restarts = []
    for tr in sched:
        j = int(np.argmin(np.abs(ds.ref_t - tr)))
        if tr < t[first] - _TIME_TOL or tr < ds.ref_t[0] - _TIME_TOL or ds.ref_t[j] + config.horizon > min(t[-1], ds.ref_t[-1]) + _TIME_TOL:
            raise ConfigError(
                f"restart at {tr:.6g} s with a {config.horizon} s horizon lies outside the data "
                f"[{max(t[first], ds.ref_t[0]):.6g}, {min(t[-1], ds.ref_t[-1]):.6g}] s"
            )
        restarts.append(int(ds.ref_frame[j]))
    eval_frames = []
    for f0 in restarts:
        row = []
        for k in range(n_out):
            target = t[f0] + k * config.output_step
            f = int(np.argmin(np.abs(t - target)))
            if f not in ref_of_frame or abs(t[f] - target) > 1e-6:
                raise ConfigError(f"no reference sample at {target:.6g} s; output_step must align with the reference rate")
            row.append(f)
        eval_frames.append(row)

    out: dict[str, NDArray[np.float64]] = {}
    for v in config.variants:
        P0 = initial_covariance(v, geometry, config.noise, config.initial_std)
        state = FilterState(_replay_initial_state(v, ds, config.fit_window), P0, float(t[first]))
        pos, updated = first, False
        errs = np.empty((len(restarts), n_out, 3))
        try:
            for r, f0 in enumerate(restarts):
                if f0 > pos or not updated:
                    res = run_filter(v, state, _slice(stream, pos, f0), geometry, config.noise,
                                     sigma_p=config.sigma_p, skip_first_update=updated)
                    state, pos, updated = res.final, f0, True
                end = eval_frames[r][-1]
                branch = run_filter(
                    v, state, _slice(stream, f0, end), geometry, config.noise, sigma_p=config.sigma_p,
                    position_mask=np.zeros(end - f0 + 1, dtype=bool), skip_first_update=True,
                )
                local = np.asarray(eval_frames[r]) - f0
                ref_rows = [ref_of_frame[f] for f in eval_frames[r]]
                errs[r] = branch.position[local] - ds.ref_p[ref_rows]
        except FilterError as exc:
            raise CampaignError(f"{ds.name}, {v.label}: {exc}", variant=v.label) from exc
        out[v.label] = errs
    return out


def run_replay_campaign(datasets: Sequence[Dataset], config: ReplayConfig) -> CampaignResult:
    """
    Replay one or more recordings and pool the restarts into RMSE curves.

    The run count of each curve is the total number of restarts.
    """
    if not datasets:
        raise ConfigError("no datasets given")
    geometry = config.build_geometry()
    pooled: dict[str, list] = {v.label: [] for v in config.variants}
    for ds in datasets:
        for label, errs in replay_dataset(ds, config, geometry).items():
            pooled[label].append(errs)
    n_out = int(round(config.horizon / config.output_step)) + 1
    t_offset = config.output_step * np.arange(n_out)
    curves = {label: RmseCurve.from_errors(label, t_offset, np.concatenate(e)) for label, e in pooled.items()}
    return CampaignResult(curves, config.seed, config.config_hash, "replay")
