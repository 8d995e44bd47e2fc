"""End-to-end data-driven procedure: motor-babbling input generation, pose
ingestion, strain extraction, spectra, sparse fitting, truncation, and
report emission.

The procedure mirrors the five experimental steps — sensorize (markers at
pitch lambda_s), excite with standard signals, compute spectra by FFT,
analyse the spectrum for a wavenumber cutoff and segment count, and fit a
sparse functional-basis model — on either a simulated trajectory or an
ingested pose CSV.  All emitted artifacts are plain CSV/JSON with stable
formatting so identical configs and seeds reproduce byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import (
    NumericalError,
    SingularRotation,
    ValidationError,
)
from .fitting import (
    BPDConfig,
    FitResult,
    SeriesFit,
    backbone_errors,
    fit_series,
    fit_to_csv,
    truncate_bases,
)
from .gvs import (
    BasisDictionary,
    DynamicsOptions,
    family_atoms,
    forward_kinematics,
    simulate,
    static_strain_solve,
)
from .liealg import Pose, log_se3
from .rodmodel import ActuatorRouting, RodProperties, check_routing
from .spectra import (
    MODE_LABELS,
    Spectrum,
    StrainGrid,
    TruncationIndexWarning,
    check_spectrum_invariants,
    dsft,
    dstft,
    min_segments,
    spectrum_to_csv,
    stiffness_weighted_truncation,
    truncation_index,
)

SIGNAL_KINDS = ("step", "chirp", "white_noise")

# Gaussian babbling noise is clipped at +/- 4 sigma to bound actuator commands.
NOISE_CLIP_SIGMAS = 4.0


# ---------------------------------------------------------------------------
# input signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputSignalSpec:
    """Standard identification signal applied to the actuators.

    ``rectify`` holds one sign per actuator: +1 forces the signal through
    |.| (pressure chambers), -1 through -|.| (pulling tendons), 0 leaves it
    untouched.
    """

    kind: str
    amplitude: tuple
    f0: float = 0.0
    f1: float = 0.0
    duration: float = 1.0
    noise_std: float = 1.0
    seed: int = 0
    rectify: tuple | None = None

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValidationError(f"unknown signal kind {self.kind!r}")
        amplitude = tuple(float(a) for a in self.amplitude)
        object.__setattr__(self, "amplitude", amplitude)
        if not self.duration > 0:
            raise ValidationError("signal duration must be positive")
        if not 0 <= self.f0 <= self.f1:
            raise ValidationError("need 0 <= f0 <= f1")
        if self.rectify is not None:
            rect = tuple(int(r) for r in self.rectify)
            if len(rect) != len(amplitude) or any(r not in (-1, 0, 1) for r in rect):
                raise ValidationError("rectify must hold one of -1, 0, +1 per actuator")
            object.__setattr__(self, "rectify", rect)


def generate_input(spec: InputSignalSpec, t_grid) -> np.ndarray:
    """Actuator magnitudes over a time grid, shape (n_a, len(t_grid)).

    Deterministic given the seed; rectified rows satisfy their declared
    sign exactly (absolute value, then sign).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or (len(t_grid) > 1 and np.any(np.diff(t_grid) <= 0)):
        raise ValidationError("t_grid must be ascending")
    amp = np.array(spec.amplitude)
    n_a = len(amp)
    if spec.kind == "step":
        signal = np.tile(amp[:, None], (1, len(t_grid)))
    elif spec.kind == "chirp":
        # linear chirp f0 -> f1 over `duration`, constant f1 afterwards
        t = np.minimum(t_grid, spec.duration)
        phase = 2.0 * math.pi * (spec.f0 * t + (spec.f1 - spec.f0) * t * t / (2.0 * spec.duration))
        tail = np.maximum(t_grid - spec.duration, 0.0)
        phase = phase + 2.0 * math.pi * spec.f1 * tail
        signal = amp[:, None] * np.sin(phase)[None, :]
    else:  # white_noise
        rng = np.random.default_rng(spec.seed)
        draws = rng.normal(0.0, spec.noise_std, size=(n_a, len(t_grid)))
        clip = NOISE_CLIP_SIGMAS * spec.noise_std
        signal = amp[:, None] * np.clip(draws, -clip, clip)
    if spec.rectify is not None:
        for a, sign in enumerate(spec.rectify):
            if sign > 0:
                signal[a] = np.abs(signal[a])
            elif sign < 0:
                signal[a] = -np.abs(signal[a])
    return signal


# ---------------------------------------------------------------------------
# pose series and strain extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoseSeries:
    """Poses indexed by (marker n, time frame m) with sampling metadata.

    The base marker's frame is the identity in every time frame.
    """

    frames: tuple  # tuple over time of tuples over markers of Pose
    lambda_s: float
    T_s: float

    def __post_init__(self):
        if not (self.lambda_s > 0 and self.T_s > 0):
            raise ValidationError("lambda_s and T_s must be positive")
        frames = tuple(tuple(frame) for frame in self.frames)
        if len(frames) < 1 or len(frames[0]) < 2:
            raise ValidationError("need at least one frame of two markers")
        n = len(frames[0])
        for m, frame in enumerate(frames):
            if len(frame) != n:
                raise ValidationError(f"frame {m} has {len(frame)} markers, expected {n}")
            base = frame[0]
            if (
                np.abs(base.rotation - np.eye(3)).max() > 1e-9
                or np.abs(base.position).max() > 1e-9
            ):
                raise ValidationError(f"frame {m}: base marker pose must be the identity")
        object.__setattr__(self, "frames", frames)

    @property
    def n_markers(self) -> int:
        return len(self.frames[0])

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def at(self, marker: int, frame: int) -> Pose:
        return self.frames[frame][marker]

    @property
    def span(self) -> float:
        """Arc length covered by the marker chain."""
        return (self.n_markers - 1) * self.lambda_s


def extract_strain(poses: PoseSeries) -> StrainGrid:
    """Strain samples from consecutive marker poses.

    Sample n of a frame is the relative log between markers n and n+1
    divided by the pitch, attributed to the midpoint abscissa
    ``(n + 1/2) lambda_s`` (consistent with the midpoint collocation of the
    forward kinematics).  Raises SingularRotation with the (marker, frame)
    location if a relative rotation hits the pi singularity.
    """
    n, m = poses.n_markers, poses.n_frames
    samples = np.zeros((m, n - 1, 6))
    for j in range(m):
        frame = poses.frames[j]
        for i in range(n - 1):
            try:
                rel = frame[i].inverse() @ frame[i + 1]
                samples[j, i] = log_se3(rel) / poses.lambda_s
            except SingularRotation as exc:
                raise SingularRotation(
                    f"marker pair ({i}, {i + 1}) at frame {j}: {exc}"
                ) from exc
    return StrainGrid(
        samples,
        poses.lambda_s,
        poses.T_s,
        length=poses.span,
        s_start=poses.lambda_s / 2.0,
    )


def poses_from_trajectory(
    dictionary: BasisDictionary,
    rod: RodProperties,
    q_frames: np.ndarray,
    lambda_s: float,
    T_s: float,
) -> PoseSeries:
    """Marker poses by forward kinematics of fitted/simulated coordinates."""
    n_markers = _marker_count(rod.length, lambda_s)
    s_grid = np.arange(n_markers) * lambda_s
    frames = []
    for q in np.atleast_2d(q_frames):
        frames.append(tuple(forward_kinematics(dictionary, q, rod, s_grid)))
    return PoseSeries(tuple(frames), lambda_s, T_s)


def _marker_count(length: float, lambda_s: float) -> int:
    ratio = length / lambda_s
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ValidationError(
            f"marker pitch {lambda_s} does not divide the rod length {length}"
        )
    return int(round(ratio)) + 1


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

POSE_HEADER = ["t", "n"] + [f"R{i}{j}" for i in range(3) for j in range(3)] + ["px", "py", "pz"]
STRAIN_HEADER = ["t", "s", "kx", "ky", "kz", "sx", "sy", "sz"]


def write_pose_csv(path, poses: PoseSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POSE_HEADER)
        for m in range(poses.n_frames):
            t = m * poses.T_s
            for n in range(poses.n_markers):
                g = poses.at(n, m)
                row = [repr(float(t)), n]
                row += [repr(float(x)) for x in g.rotation.reshape(-1)]
                row += [repr(float(x)) for x in g.position]
                writer.writerow(row)


def read_pose_csv(path, lambda_s: float) -> PoseSeries:
    """Read a pose CSV (schema ``t,n,R00..R22,px,py,pz``) into a PoseSeries."""
    frames: dict[float, dict[int, Pose]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != POSE_HEADER:
            raise ValidationError(f"unexpected pose CSV header {header}")
        for row in reader:
            t = float(row[0])
            n = int(row[1])
            vals = [float(x) for x in row[2:]]
            pose = Pose(np.array(vals[:9]).reshape(3, 3), np.array(vals[9:]))
            frames.setdefault(t, {})[n] = pose
    if not frames:
        raise ValidationError("pose CSV holds no rows")
    times = sorted(frames)
    t_s = times[1] - times[0] if len(times) > 1 else 1.0
    for a, b in zip(times[1:], times[:-1]):
        if len(times) > 1 and abs((a - b) - t_s) > 1e-9 * max(t_s, 1.0):
            raise ValidationError("pose CSV time grid is not uniform")
    ordered = []
    for t in times:
        markers = frames[t]
        ordered.append(tuple(markers[i] for i in sorted(markers)))
    return PoseSeries(tuple(ordered), lambda_s, t_s)


def write_strain_csv(path, grid: StrainGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STRAIN_HEADER)
        for m in range(grid.n_time):
            t = m * grid.T_s
            for n in range(grid.n_space):
                s = grid.s_start + n * grid.lambda_s
                row = [repr(float(t)), repr(float(s))]
                row += [repr(float(x)) for x in grid.samples[m, n]]
                writer.writerow(row)


def read_strain_csv(path, length: float) -> StrainGrid:
    """Read a strain CSV (schema ``t,s,kx..sz``) back into a StrainGrid."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != STRAIN_HEADER:
            raise ValidationError(f"unexpected strain CSV header {header}")
        for row in reader:
            rows.append([float(x) for x in row])
    if not rows:
        raise ValidationError("strain CSV holds no rows")
    data = np.array(rows)
    times = np.unique(data[:, 0])
    s_values = np.unique(data[:, 1])
    n, m = len(s_values), len(times)
    if n < 2:
        raise ValidationError("strain CSV needs at least two abscissae")
    lambda_s = s_values[1] - s_values[0]
    if np.abs(np.diff(s_values) - lambda_s).max() > 1e-9 * max(lambda_s, 1.0):
        raise ValidationError("strain CSV abscissae are not uniform")
    t_s = times[1] - times[0] if m > 1 else 1.0
    samples = np.zeros((m, n, 6))
    t_index = {t: i for i, t in enumerate(times)}
    s_index = {s: i for i, s in enumerate(s_values)}
    for row in data:
        samples[t_index[row[0]], s_index[row[1]]] = row[2:]
    return StrainGrid(samples, lambda_s, t_s, length=length, s_start=float(s_values[0]))


def write_input_csv(path, t_grid, signal: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"tau{a}" for a in range(signal.shape[0])])
        for j, t in enumerate(t_grid):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in signal[:, j]])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

MODE_INDEX = {name: i for i, name in enumerate(MODE_LABELS)}


@dataclass(frozen=True)
class RobotConfig:
    rod: RodProperties
    routing: tuple
    gravity_twist: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    lambda_s: float
    T_s: float
    dt: float
    t_final: float
    quadrature_nodes: int
    dictionary: BasisDictionary
    signal: InputSignalSpec
    zero_pad_space: int
    zero_pad_time: int
    normalize_db: bool
    bpd: BPDConfig
    truncation_thresholds: tuple
    energy_cutoff: float
    poses_csv: str | None = None


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ValidationError(f"missing key {key!r} in {context}")
    return mapping[key]


def parse_robot_config(data: dict) -> RobotConfig:
    rod_data = dict(_require(data, "rod", "robot config"))
    try:
        rod = RodProperties(
            length=float(_require(rod_data, "length", "rod")),
            base_radius=float(_require(rod_data, "base_radius", "rod")),
            density=float(_require(rod_data, "density", "rod")),
            young_modulus=float(_require(rod_data, "young_modulus", "rod")),
            poisson_ratio=float(_require(rod_data, "poisson_ratio", "rod")),
            damping_coeff=float(_require(rod_data, "damping_coeff", "rod")),
            taper=float(rod_data.get("taper", 0.0)),
            stress_free_strain=tuple(
                float(x) for x in rod_data.get("stress_free_strain", (0, 0, 0, 1, 0, 0))
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad rod parameters: {exc}") from exc
    routing = []
    for i, act in enumerate(data.get("actuators", [])):
        routing.append(
            ActuatorRouting(
                kind=str(_require(act, "kind", f"actuator {i}")),
                offset_radius=float(_require(act, "offset_radius", f"actuator {i}")),
                phase=float(act.get("phase", 0.0)),
                turns=float(act.get("turns", 0.0)),
            )
        )
    routing = tuple(routing)
    check_routing(rod, routing)
    gravity = tuple(float(x) for x in data.get("gravity_twist", (0.0,) * 6))
    if len(gravity) != 6:
        raise ValidationError("gravity_twist must have six entries")
    return RobotConfig(rod, routing, gravity)


def _parse_basis(data: dict, length: float) -> BasisDictionary:
    if "per_mode" in data:
        per_mode = {}
        for name, spec in data["per_mode"].items():
            if name not in MODE_INDEX:
                raise ValidationError(f"unknown strain mode {name!r}")
            per_mode[MODE_INDEX[name]] = family_atoms(
                str(_require(spec, "family", f"basis for {name}")),
                int(_require(spec, "order", f"basis for {name}")),
            )
        return BasisDictionary.from_atoms(length, per_mode)
    family = str(_require(data, "family", "basis"))
    order = int(_require(data, "order", "basis"))
    modes = data.get("modes", list(MODE_LABELS))
    indices = []
    for m in modes:
        if isinstance(m, str):
            if m not in MODE_INDEX:
                raise ValidationError(f"unknown strain mode {m!r}")
            indices.append(MODE_INDEX[m])
        else:
            indices.append(int(m))
    return BasisDictionary.uniform(length, family, order, indices)


def parse_experiment_config(data: dict, rod: RodProperties, n_a: int) -> ExperimentConfig:
    sampling = dict(_require(data, "sampling", "experiment"))
    sim = dict(data.get("simulation", {}))
    signal_data = dict(_require(data, "signal", "experiment"))
    amplitude = signal_data.get("amplitude", [0.0] * n_a)
    if np.ndim(amplitude) == 0:
        amplitude = [float(amplitude)] * n_a
    if len(amplitude) != n_a:
        raise ValidationError(
            f"signal amplitude needs {n_a} entries (one per actuator), got {len(amplitude)}"
        )
    seed = int(data.get("seed", 0))
    signal = InputSignalSpec(
        kind=str(_require(signal_data, "kind", "signal")),
        amplitude=tuple(float(a) for a in amplitude),
        f0=float(signal_data.get("f0", 0.0)),
        f1=float(signal_data.get("f1", 0.0)),
        duration=float(signal_data.get("duration", data.get("simulation", {}).get("t_final", 1.0))),
        noise_std=float(signal_data.get("noise_std", 1.0)),
        seed=int(signal_data.get("seed", seed)),
        rectify=signal_data.get("rectify"),
    )
    spectrum = dict(data.get("spectrum", {}))
    fit_data = dict(data.get("fit", {}))
    gamma = fit_data.get("gamma", [0.0] * 6)
    if np.ndim(gamma) == 0:
        gamma = [float(gamma)] * 6
    bpd = BPDConfig(
        gamma=tuple(float(g) for g in gamma),
        max_iterations=int(fit_data.get("max_iterations", 5000)),
        tolerance=float(fit_data.get("tolerance", 1e-12)),
    )
    return ExperimentConfig(
        seed=seed,
        lambda_s=float(_require(sampling, "lambda_s", "sampling")),
        T_s=float(_require(sampling, "T_s", "sampling")),
        dt=float(sim.get("dt", 1e-3)),
        t_final=float(sim.get("t_final", 1.0)),
        quadrature_nodes=int(sim.get("quadrature_nodes", 200)),
        dictionary=_parse_basis(dict(_require(data, "basis", "experiment")), rod.length),
        signal=signal,
        zero_pad_space=int(spectrum.get("zero_pad_space", 4)),
        zero_pad_time=int(spectrum.get("zero_pad_time", 4)),
        normalize_db=bool(spectrum.get("normalize_db", True)),
        bpd=bpd,
        truncation_thresholds=tuple(float(x) for x in data.get("truncation_thresholds", (0.01, 0.05))),
        energy_cutoff=float(data.get("energy_cutoff", 0.99)),
        poses_csv=data.get("poses_csv"),
    )


def load_config(path) -> tuple[RobotConfig, ExperimentConfig, dict]:
    """Load the YAML config file (robot inline or referenced by path)."""
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a mapping")
    robot_data = _require(data, "robot", "config")
    if isinstance(robot_data, str):
        with open(path.parent / robot_data) as fh:
            robot_data = yaml.safe_load(fh)
    robot = parse_robot_config(robot_data)
    experiment = parse_experiment_config(
        dict(_require(data, "experiment", "config")), robot.rod, len(robot.routing)
    )
    return robot, experiment, data


# ---------------------------------------------------------------------------
# procedure
# ---------------------------------------------------------------------------


@dataclass
class AnalysisReport:
    out_dir: Path
    summary: dict
    files: dict


def reconstruct_backbone(
    fit: FitResult, dictionary: BasisDictionary, rod: RodProperties, s_grid
) -> list[Pose]:
    """Forward kinematics of the fitted (optionally truncated) strain field."""
    return forward_kinematics(dictionary, fit.q, rod, s_grid)


def _spatial_energy_profile(spectrum: Spectrum) -> np.ndarray:
    """Per-mode unpadded spatial power, summed over time bins, (6, N)."""
    return np.stack([_mode_power(spectrum, mode) for mode in range(6)])


def _mode_power(spectrum: Spectrum, mode: int) -> np.ndarray:
    bins = spectrum.unpadded_space_bins(mode)
    power = np.abs(bins) ** 2
    if power.ndim == 2:
        power = power.sum(axis=0)
    return power


def _recommend_cutoff(spectrum: Spectrum, cutoff: float) -> tuple[int, float]:
    """Smallest symmetric bin count holding `cutoff` of the spatial energy.

    Returns (n_max, k_max).  Counts bin 0..n_max-1 plus their conjugates, so
    it is a plain energy ratio (no N / N_max prefactor) usable as a
    monotone threshold rule.
    """
    power = _spatial_energy_profile(spectrum).sum(axis=0)
    n = len(power)
    total = power.sum()
    if total <= 0.0:
        raise NumericalError("no spectral energy to analyse")
    half = n // 2
    for n_max in range(1, half + 1):
        head = power[:n_max].sum()
        tail = power[n - n_max + 1 :].sum() if n_max > 1 else 0.0
        if (head + tail) / total >= cutoff:
            break
    k_max = 2.0 * math.pi * max(n_max - 1, 1) / (n * spectrum.lambda_s)
    return n_max, k_max


def run_procedure(robot: RobotConfig, experiment: ExperimentConfig, out_dir) -> AnalysisReport:
    """Run the full data-driven procedure and emit all artifacts.

    Stages: input generation, simulation (or pose ingestion), strain
    extraction, spectra with invariant checks, sparse fitting, truncation
    sweep with backbone reconstruction errors, and a JSON summary.
    Deterministic end to end for fixed configs and seeds.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rod, dictionary = robot.rod, experiment.dictionary
    files: dict[str, str] = {}
    summary: dict = {"seed": experiment.seed, "n_q": dictionary.n_q}

    def stage(name):
        summary.setdefault("stages", []).append(name)

    # --- motor babbling -----------------------------------------------------
    stage("babble")
    n_steps = int(round(experiment.t_final / experiment.dt))
    t_sim = np.arange(n_steps + 1) * experiment.dt
    signal = generate_input(experiment.signal, t_sim) if robot.routing else np.zeros((0, len(t_sim)))
    write_input_csv(out_dir / "input.csv", t_sim, signal)
    files["input"] = "input.csv"

    # --- trajectory: simulate or ingest -------------------------------------
    if experiment.poses_csv is not None:
        stage("ingest")
        poses = read_pose_csv(experiment.poses_csv, experiment.lambda_s)
    else:
        stage("simulate")
        options = DynamicsOptions(quadrature_nodes=experiment.quadrature_nodes)
        tau_of = _interpolator(t_sim, signal)
        traj = simulate(
            dictionary, rod, robot.routing, robot.gravity_twist,
            np.zeros(dictionary.n_q), np.zeros(dictionary.n_q),
            tau_of, experiment.t_final, experiment.dt, options,
        )
        stride = experiment.T_s / experiment.dt
        if abs(stride - round(stride)) > 1e-9:
            raise ValidationError("T_s must be an integer multiple of dt")
        q_frames = traj.q[:: int(round(stride))]
        poses = poses_from_trajectory(
            dictionary, rod, q_frames, experiment.lambda_s, experiment.T_s
        )
    write_pose_csv(out_dir / "poses.csv", poses)
    files["poses"] = "poses.csv"
    summary["n_frames"] = poses.n_frames
    summary["n_markers"] = poses.n_markers

    # --- strain extraction ---------------------------------------------------
    stage("extract-strain")
    grid = extract_strain(poses)
    write_strain_csv(out_dir / "strain.csv", grid)
    files["strain"] = "strain.csv"

    # --- spectra --------------------------------------------------------------
    stage("spectrum")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationIndexWarning)
        sft0 = dsft(grid, 0, experiment.zero_pad_space)
        check_spectrum_invariants(sft0, grid)
        spectrum_to_csv(out_dir / "sft_frame0.csv", sft0, normalize_db=experiment.normalize_db)
        files["sft_frame0"] = "sft_frame0.csv"
        if grid.n_time >= 2:
            stft = dstft(grid, (experiment.zero_pad_space, experiment.zero_pad_time))
            check_spectrum_invariants(stft, grid)
            spectrum_to_csv(out_dir / "stft.csv", stft, normalize_db=experiment.normalize_db)
            files["stft"] = "stft.csv"
            analysis_spectrum = stft
        else:
            analysis_spectrum = sft0
        n_max, k_max = _recommend_cutoff(analysis_spectrum, experiment.energy_cutoff)
        lambda_max = 2.0 * math.pi / k_max
        summary["spectrum"] = {
            "energy_cutoff": experiment.energy_cutoff,
            "n_max": n_max,
            "k_max_rad_per_m": k_max,
            "lambda_max_m": lambda_max,
            "min_segments": min_segments(lambda_max, rod.length),
            "truncation_index_per_mode": _truncation_table(sft0, n_max),
            "stiffness_weighted_truncation": _weighted_or_none(sft0, rod, n_max),
        }

    # --- fitting ----------------------------------------------------------------
    stage("fit")
    series = fit_series(grid, dictionary, rod, experiment.bpd)
    fit_to_csv(series, out_dir / "fit.csv")
    files["fit"] = "fit.csv"
    summary["fit"] = {
        "converged": series.converged,
        "mean_residual": float(np.mean([f.residual_norm for f in series.frames])),
    }

    # --- truncation sweep and reconstruction errors -----------------------------
    stage("truncate")
    marker_grid = np.arange(poses.n_markers) * experiment.lambda_s
    thresholds = (0.0,) + tuple(experiment.truncation_thresholds)
    error_summary = []
    for threshold in thresholds:
        truncated = truncate_bases(series, threshold) if threshold > 0 else series
        label = f"errors_{int(round(threshold * 100)):02d}pct.csv"
        max_pos, max_ori, tip_pos = _write_errors(
            out_dir / label, truncated, dictionary, rod, poses, marker_grid
        )
        files[f"errors_{threshold}"] = label
        kept = int(truncated.frames[0].kept_mask.sum())
        error_summary.append(
            {
                "threshold": threshold,
                "kept_dofs": kept,
                "dropped_dofs": dictionary.n_q - kept,
                "max_position_error_m": max_pos,
                "max_orientation_error_rad": max_ori,
                "tip_position_error_m": tip_pos,
            }
        )
    summary["truncation"] = error_summary

    stage("report")
    summary_path = out_dir / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump({"summary": summary, "files": files}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files["summary"] = "summary.json"
    return AnalysisReport(out_dir, summary, files)


def _interpolator(t_grid: np.ndarray, signal: np.ndarray):
    if signal.shape[0] == 0:
        return None

    def tau_of(t: float) -> np.ndarray:
        return np.array([np.interp(t, t_grid, signal[a]) for a in range(signal.shape[0])])

    return tau_of


def _truncation_table(spectrum: Spectrum, n_max: int) -> dict:
    table = {}
    for mode in range(6):
        try:
            table[MODE_LABELS[mode]] = truncation_index(spectrum, mode, n_max)
        except NumericalError:
            table[MODE_LABELS[mode]] = None
    return table


def _weighted_or_none(spectrum: Spectrum, rod: RodProperties, n_max: int):
    try:
        return stiffness_weighted_truncation(spectrum, rod, n_max)
    except NumericalError:
        return None


def _write_errors(path, series: SeriesFit, dictionary, rod, poses: PoseSeries, marker_grid):
    max_pos = 0.0
    max_ori = 0.0
    tip_pos = 0.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "n", "s", "position_error_m", "orientation_error_rad"])
        for m, fit in enumerate(series.frames):
            recon = reconstruct_backbone(fit, dictionary, rod, marker_grid)
            measured = [poses.at(n, m) for n in range(poses.n_markers)]
            pos, ori = backbone_errors(recon, measured)
            max_pos = max(max_pos, float(pos.max()))
            max_ori = max(max_ori, float(ori.max()))
            tip_pos = max(tip_pos, float(pos[-1]))
            t = m * poses.T_s
            for n in range(poses.n_markers):
                writer.writerow(
                    [
                        repr(float(t)),
                        n,
                        repr(float(marker_grid[n])),
                        repr(float(pos[n])),
                        repr(float(ori[n])),
                    ]
                )
    return max_pos, max_ori, tip_pos


def static_fit_reference(robot: RobotConfig, experiment: ExperimentConfig, tau) -> np.ndarray:
    """Static strain sampled at the experiment's marker midpoints.

    Reference for degenerate single-frame runs: the fitted coefficients of
    an equilibrium frame should reproduce this field.
    """
    sol = static_strain_solve(robot.rod, robot.routing, tau)
    n_markers = _marker_count(robot.rod.length, experiment.lambda_s)
    mids = (np.arange(n_markers - 1) + 0.5) * experiment.lambda_s
    return sol.sample(mids)
