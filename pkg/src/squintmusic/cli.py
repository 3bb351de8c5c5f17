"""Command-line experiment runner.

Subcommands::

    sweep-snr         RMSE vs SNR sweep, CSV + manifest output
    sweep-bandwidth   RMSE vs bandwidth sweep at fixed SNR
    gain-profile      per-subcarrier array-gain dump for one target
    single-trial      one verbose trial with optional spectrum dump

Every experiment flag can come from a JSON config file (``--config``; an
emitted manifest works too) and be overridden on the command line. Exit
code 0 on success, 1 on config or I/O errors, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .arrays import subcarrier_grid
from .bench import (
    ExperimentSpec,
    emit_outputs,
    load_spec,
    run_sweep,
    run_trial,
)
from .estimator import (
    MODES,
    corrected_spectrum,
    noise_subspace,
    sample_covariance,
)
from .simulate import array_gain_profile

_SPEC_FIELDS = {f.name for f in fields(ExperimentSpec)}


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats: {exc}")


def _csv_modes(text: str) -> list[str]:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise argparse.ArgumentTypeError(
                f"unknown mode {m!r}; expected subset of {','.join(MODES)}"
            )
    return modes


def _add_common(p: argparse.ArgumentParser) -> None:
    # let tokens like "-5,5" or "-1e1" pass as values (negative SNR lists);
    # "--snr=-5,5" works regardless
    if hasattr(p, "_negative_number_matcher"):
        p._negative_number_matcher = re.compile(r"^-\d+[\d.,eE+-]*$|^-\.\d")
    p.add_argument("--config", help="JSON experiment config or emitted manifest")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per sweep point")
    p.add_argument("--output", help="output directory")
    p.add_argument("--modes", type=_csv_modes, help="comma-separated estimator modes")
    p.add_argument("--grid-size", type=int, dest="grid_size", help="spectrum grid points")
    p.add_argument("--f-c", type=float, dest="f_c", help="carrier frequency [Hz]")
    p.add_argument("--bandwidth", type=float, help="bandwidth [Hz]")
    p.add_argument("--subcarriers", type=int, dest="n_subcarriers")
    p.add_argument("--antennas", type=int, dest="n_antennas")
    p.add_argument("--rf-chains", type=int, dest="n_rf")
    p.add_argument("--snapshots", type=int, dest="n_snapshots")
    p.add_argument("--targets", type=int, dest="n_targets")
    p.add_argument("--snr-g", type=float, dest="snr_g_db", help="mismatch level [dB]")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--conv-tol", type=float, dest="conv_tol")
    p.add_argument(
        "--min-separation", type=float, dest="min_separation",
        help="minimum pairwise DOA separation (spatial units)",
    )
    p.add_argument(
        "--trim-deg", type=float, dest="trim_deg",
        help="diagnostics only: drop trials with errors above this [deg]",
    )
    p.add_argument("--combiner", dest="combiner_kind", help="random-phase | scaled-unitary")
    p.add_argument("--workers", type=int, default=1, help="trial worker processes")
    crb = p.add_mutually_exclusive_group()
    crb.add_argument("--crb", dest="crb", action="store_true", default=None)
    crb.add_argument("--no-crb", dest="crb", action="store_false", default=None)


def _build_spec(args: argparse.Namespace, **forced) -> ExperimentSpec:
    base = load_spec(args.config).to_dict() if args.config else {}
    for name in _SPEC_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    if args.modes is not None:
        base["modes"] = args.modes
    base.update(forced)
    return ExperimentSpec.from_dict(base)


def _cmd_sweep(args: argparse.Namespace, axis: str) -> int:
    forced = {"sweep_axis": axis}
    if axis == "snr":
        if args.snr is not None:
            forced["sweep_values"] = sorted(args.snr)
    else:
        if args.bandwidths is not None:
            forced["sweep_values"] = sorted(args.bandwidths)
        if args.snr is not None:
            forced["snr_db"] = args.snr
    spec = _build_spec(args, **forced)
    records = run_sweep(spec, workers=args.workers)
    paths = emit_outputs(records, spec, spec.output)
    for r in records:
        crb = f"  crb={r.crb_theta_deg:.4g} deg" if r.crb_theta_deg is not None else ""
        print(
            f"{spec.sweep_axis}={r.sweep_value:g}  mode={r.mode:<12s} "
            f"rmse={r.rmse_theta_deg:.4g} deg  conv={r.convergence_rate:.0%}{crb}"
        )
    print(f"wrote {paths['csv']} and {paths['manifest']}")
    return 0


def _cmd_gain_profile(args: argparse.Namespace) -> int:
    spec = _build_spec(args)
    cfg = spec.config()
    grid = subcarrier_grid(cfg)
    theta_target = float(np.sin(np.radians(args.target_deg)))
    directions = np.linspace(-1.0, 1.0, cfg.grid_size)
    gains = array_gain_profile(theta_target, cfg, grid, directions)

    outdir = Path(spec.output)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "gain_profile.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["theta", "theta_deg"] + [f"gain_m{m + 1}" for m in range(len(grid))]
        )
        deg = np.degrees(np.arcsin(directions))
        for i in range(directions.size):
            writer.writerow(
                [repr(float(directions[i])), repr(float(deg[i]))]
                + [repr(float(g)) for g in gains[:, i]]
            )
    peaks_deg = np.degrees(np.arcsin(directions[np.argmax(gains, axis=1)]))
    print(
        f"target at {args.target_deg:g} deg: per-subcarrier peaks span "
        f"[{peaks_deg.min():.3f}, {peaks_deg.max():.3f}] deg "
        f"(spread {peaks_deg.max() - peaks_deg.min():.3f} deg)"
    )
    print(f"wrote {path}")
    return 0


def _cmd_single_trial(args: argparse.Namespace) -> int:
    spec = _build_spec(args, sweep_axis="snr", sweep_values=(args.snr,), trials=1)
    record = run_trial(spec, args.snr, args.mode, args.trial_index)
    true_deg = np.degrees(np.arcsin(record.theta_true))
    hat_deg = np.degrees(np.arcsin(record.theta_hat))
    print(f"mode={args.mode}  snr={args.snr:g} dB  trial={args.trial_index}")
    print(f"true directions [deg]:      {np.array2string(true_deg, precision=4)}")
    print(f"estimated directions [deg]: {np.array2string(hat_deg, precision=4)}")
    print(
        f"per-target abs error [deg]: "
        f"{np.array2string(np.sqrt(record.sq_err_deg), precision=4)}"
    )
    print(
        f"iterations={record.iterations}  converged={record.converged}  "
        f"gpm rms error={np.sqrt(record.gpm_sq_err):.4g}"
    )
    if record.crb_deg2 is not None:
        print(
            f"direction CRB [deg]:        "
            f"{np.array2string(np.sqrt(record.crb_deg2), precision=4)}"
        )
    for line in record.diagnostics:
        print(f"diagnostic: {line}")

    if args.spectrum_out:
        _dump_spectrum(spec, args, Path(args.spectrum_out))
    return 0


def _dump_spectrum(spec: ExperimentSpec, args: argparse.Namespace, path: Path) -> None:
    """Recompute the trial's first-pass spectrum and write it as CSV."""
    from .bench import _trial_seed  # same substream as the trial itself
    from .simulate import generate_probing, sample_scenario, simulate_echo

    cfg = spec.config(args.snr)
    grid = subcarrier_grid(cfg)
    rng = np.random.Generator(
        np.random.PCG64(_trial_seed(spec.seed, "snr", args.snr, args.trial_index))
    )
    scen = sample_scenario(cfg, args.snr, spec.snr_g_db, rng, spec.combiner_kind)
    probing = generate_probing(cfg, rng)
    obs = simulate_echo(cfg, scen, probing, grid, rng)
    subspaces = [noise_subspace(sample_covariance(obs.Y[m]), cfg.n_targets)[0]
                 for m in range(cfg.n_subcarriers)]
    squint = args.mode in ("full", "known-squint")
    etas = grid.eta if squint else np.ones(cfg.n_subcarriers)
    gpm = scen.gpm if args.mode == "known-gpm" else None
    spectrum = corrected_spectrum(
        subspaces,
        scen.combiner,
        np.linspace(-1.0, 1.0, cfg.grid_size),
        etas,
        gpm=gpm,
        keep_per_subcarrier=True,
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["theta", "combined"] + [f"p_m{m + 1}" for m in range(cfg.n_subcarriers)]
        )
        for i in range(spectrum.grid.size):
            writer.writerow(
                [repr(float(spectrum.grid[i])), repr(float(spectrum.values[i]))]
                + [repr(float(v)) for v in spectrum.per_subcarrier[:, i]]
            )
    print(f"wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squintmusic",
        description="Wideband DOA estimation benchmarks with beam-squint and "
        "gain-phase auto-calibration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-snr", help="RMSE vs SNR sweep")
    _add_common(p)
    p.add_argument("--snr", type=_csv_floats, help="comma-separated SNR values [dB]")
    p.set_defaults(func=lambda a: _cmd_sweep(a, "snr"))

    p = sub.add_parser("sweep-bandwidth", help="RMSE vs bandwidth sweep")
    _add_common(p)
    p.add_argument(
        "--bandwidths", type=_csv_floats, help="comma-separated bandwidths [Hz]"
    )
    p.add_argument("--snr", type=float, help="fixed SNR [dB] for the sweep")
    p.set_defaults(func=lambda a: _cmd_sweep(a, "bandwidth"))

    p = sub.add_parser("gain-profile", help="array-gain dump for one target")
    _add_common(p)
    p.add_argument("--target-deg", type=float, default=60.0)
    p.set_defaults(func=_cmd_gain_profile)

    p = sub.add_parser("single-trial", help="one verbose trial")
    _add_common(p)
    p.add_argument("--snr", type=float, default=0.0)
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--trial-index", type=int, default=0)
    p.add_argument("--spectrum-out", help="CSV path for the spectrum dump")
    p.set_defaults(func=_cmd_single_trial)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
