"""Command-line interface.

Subcommands mirror the pipeline stages: ``babble``, ``simulate``,
``extract-strain``, ``spectrum``, ``fit``, ``truncate``, ``reconstruct``,
and ``report`` (the full procedure).  Exit codes: 0 on success, 2 on
configuration/validation errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .fitting import fit_series, fit_to_csv, truncate_bases
from .gvs import DynamicsOptions, simulate
from .pipeline import (
    _interpolator,
    generate_input,
    load_config,
    extract_strain,
    poses_from_trajectory,
    read_pose_csv,
    read_strain_csv,
    run_procedure,
    write_input_csv,
    write_pose_csv,
    write_strain_csv,
)
from .spectra import dsft, dstft, spectrum_to_csv

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strainwave",
        description="Cosserat-rod strain fields as space-time signals: "
        "simulate, transform, fit.",
    )
    parser.add_argument("--config", required=True, help="YAML config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("babble", help="generate the actuation input signal")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="simulate and emit marker poses")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("extract-strain", help="strain samples from a pose CSV")
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("spectrum", help="spatial or space-time spectrum of a strain CSV")
    p.add_argument("--strain", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stft", action="store_true", help="2-D space-time transform")
    p.add_argument("--zero-pad", type=int, default=4)
    p.add_argument("--normalize-db", action="store_true")
    p.add_argument("--frame", type=int, default=0, help="time frame for the plain SFT")

    p = sub.add_parser("fit", help="sparse basis fit of a strain CSV")
    p.add_argument("--strain", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", default=None, help="six comma-separated sparsity weights")

    p = sub.add_parser("truncate", help="fit then drop low-energy atoms")
    p.add_argument("--strain", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--gamma", default=None)

    p = sub.add_parser("reconstruct", help="backbone poses from a fit CSV")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="run the full data-driven procedure")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--poses", default=None, help="ingest a pose CSV instead of simulating")
    return parser


def _load(args):
    robot, experiment, _ = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        experiment = replace(
            experiment, seed=args.seed, signal=replace(experiment.signal, seed=args.seed)
        )
    return robot, experiment


def _sim_time_grid(experiment):
    n_steps = int(round(experiment.t_final / experiment.dt))
    return np.arange(n_steps + 1) * experiment.dt


def _gamma_config(experiment, gamma_arg):
    if gamma_arg is None:
        return experiment.bpd
    parts = [float(x) for x in gamma_arg.split(",")]
    if len(parts) == 1:
        parts = parts * 6
    if len(parts) != 6:
        raise ValidationError("--gamma needs one or six comma-separated values")
    from dataclasses import replace

    return replace(experiment.bpd, gamma=tuple(parts))


def _run(args) -> int:
    robot, experiment = _load(args)
    if args.command == "babble":
        t_grid = _sim_time_grid(experiment)
        signal = generate_input(experiment.signal, t_grid)
        write_input_csv(args.out, t_grid, signal)
        return EXIT_OK

    if args.command == "simulate":
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        t_grid = _sim_time_grid(experiment)
        signal = (
            generate_input(experiment.signal, t_grid)
            if robot.routing
            else np.zeros((0, len(t_grid)))
        )
        write_input_csv(out_dir / "input.csv", t_grid, signal)
        options = DynamicsOptions(quadrature_nodes=experiment.quadrature_nodes)
        traj = simulate(
            experiment.dictionary, robot.rod, robot.routing, robot.gravity_twist,
            np.zeros(experiment.dictionary.n_q), np.zeros(experiment.dictionary.n_q),
            _interpolator(t_grid, signal), experiment.t_final, experiment.dt, options,
        )
        stride = experiment.T_s / experiment.dt
        if abs(stride - round(stride)) > 1e-9:
            raise ValidationError("T_s must be an integer multiple of dt")
        poses = poses_from_trajectory(
            experiment.dictionary, robot.rod, traj.q[:: int(round(stride))],
            experiment.lambda_s, experiment.T_s,
        )
        write_pose_csv(out_dir / "poses.csv", poses)
        return EXIT_OK

    if args.command == "extract-strain":
        poses = read_pose_csv(args.poses, experiment.lambda_s)
        write_strain_csv(args.out, extract_strain(poses))
        return EXIT_OK

    if args.command == "spectrum":
        grid = read_strain_csv(args.strain, robot.rod.length)
        if args.stft:
            spec = dstft(grid, (args.zero_pad, args.zero_pad))
        else:
            spec = dsft(grid, args.frame, args.zero_pad)
        spectrum_to_csv(args.out, spec, normalize_db=args.normalize_db)
        return EXIT_OK

    if args.command in ("fit", "truncate"):
        grid = read_strain_csv(args.strain, robot.rod.length)
        config = _gamma_config(experiment, args.gamma)
        series = fit_series(grid, experiment.dictionary, robot.rod, config)
        if args.command == "truncate":
            series = truncate_bases(series, args.threshold)
        fit_to_csv(series, args.out)
        return EXIT_OK

    if args.command == "reconstruct":
        q_frames, times = _read_fit_csv(args.fit, experiment.dictionary.n_q)
        t_s = times[1] - times[0] if len(times) > 1 else experiment.T_s
        poses = poses_from_trajectory(
            experiment.dictionary, robot.rod, q_frames, experiment.lambda_s, t_s
        )
        write_pose_csv(args.out, poses)
        return EXIT_OK

    if args.command == "report":
        if args.poses is not None:
            from dataclasses import replace

            experiment = replace(experiment, poses_csv=args.poses)
        run_procedure(robot, experiment, args.out_dir)
        return EXIT_OK

    raise ValidationError(f"unknown command {args.command!r}")


def _read_fit_csv(path, n_q: int):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            rows.append((float(row[0]), int(row[1]), float(row[3])))
    if not rows:
        raise ValidationError("fit CSV holds no rows")
    times = sorted({r[0] for r in rows})
    t_index = {t: i for i, t in enumerate(times)}
    q_frames = np.zeros((len(times), n_q))
    for t, atom_id, coeff in rows:
        if atom_id >= n_q:
            raise ValidationError(
                f"fit CSV atom id {atom_id} exceeds the configured dictionary size {n_q}"
            )
        q_frames[t_index[t], atom_id] = coeff
    return q_frames, times


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
