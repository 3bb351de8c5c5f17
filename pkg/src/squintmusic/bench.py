"""Monte-Carlo RMSE experiment runner.

One trial draws a scenario and probing from a substream derived from the
master seed, synthesizes observations once, and runs every requested
estimator mode on the same data (paired comparison). The substream depends
on (master seed, sweep axis, sweep value, trial index) and deliberately not
on the mode, so single-mode replays reproduce sweep records bit for bit.

Aggregation follows the root-mean-square error over trials and targets,
reported in physical degrees.
"""

from __future__ import annotations

import csv
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .arrays import COMBINER_KINDS, SystemConfig, subcarrier_grid
from .crb import crb_closed_form, spatial_var_to_deg2
from .estimator import MODES, autocal_music
from .simulate import generate_probing, sample_scenario, simulate_echo

__all__ = [
    "ExperimentSpec",
    "TrialRecord",
    "RmseRecord",
    "run_trial",
    "run_sweep",
    "emit_outputs",
    "parse_records",
    "load_spec",
    "run_from_manifest",
]

SCHEMA_VERSION = 1
SWEEP_AXES = ("snr", "bandwidth")

CSV_COLUMNS = (
    "sweep_axis",
    "sweep_value",
    "mode",
    "rmse_theta_deg",
    "rmse_gpm",
    "mean_iterations",
    "convergence_rate",
    "crb_theta_deg",
    "trials",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved description of one sweep experiment."""

    f_c: float = 300e9
    bandwidth: float = 30e9
    n_subcarriers: int = 8
    n_antennas: int = 32
    n_rf: int = 8
    n_snapshots: int = 256
    n_targets: int = 2
    tx_power: float | None = None  # None resolves to M^2 N^2 (reference power 1)
    grid_size: int = 4096
    max_iters: int = 20
    conv_tol: float = 1e-4
    combiner_kind: str = "random-phase"
    sweep_axis: str = "snr"
    sweep_values: tuple[float, ...] = (0.0,)
    snr_db: float = 0.0  # fixed SNR for bandwidth sweeps
    snr_g_db: float | None = 10.0
    trials: int = 100
    modes: tuple[str, ...] = MODES
    crb: bool = True
    seed: int = 20260808
    output: str = "out"
    # None: max(two grid steps, half the Rayleigh width 2/N), so drawn
    # pairs stay resolvable and RMSE reflects calibration quality rather
    # than unresolvable-geometry outliers
    min_separation: float | None = None
    # diagnostics only: drop trials whose worst per-target error exceeds
    # this many degrees; catastrophic trials are included by default
    trim_deg: float | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be nonempty")
        if list(self.sweep_values) != sorted(self.sweep_values):
            raise ValueError("sweep_values must be sorted ascending")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}; expected subset of {MODES}")
        if not self.modes:
            raise ValueError("modes must be nonempty")
        if self.combiner_kind not in COMBINER_KINDS:
            raise ValueError(f"combiner_kind must be one of {COMBINER_KINDS}")
        if self.sweep_axis == "bandwidth" and any(v < 0 for v in self.sweep_values):
            raise ValueError("bandwidth sweep values must be >= 0")
        if self.trim_deg is not None and self.trim_deg <= 0:
            raise ValueError("trim_deg must be positive when set")

    def resolved_power(self) -> float:
        if self.tx_power is not None:
            return self.tx_power
        return float(self.n_subcarriers**2 * self.n_antennas**2)

    def config(self, sweep_value: float | None = None) -> SystemConfig:
        """SystemConfig at one sweep point (bandwidth sweeps swap B in)."""
        bandwidth = self.bandwidth
        if self.sweep_axis == "bandwidth" and sweep_value is not None:
            bandwidth = float(sweep_value)
        return SystemConfig(
            f_c=self.f_c,
            bandwidth=bandwidth,
            n_subcarriers=self.n_subcarriers,
            n_antennas=self.n_antennas,
            n_rf=self.n_rf,
            n_snapshots=self.n_snapshots,
            n_targets=self.n_targets,
            tx_power=self.resolved_power(),
            grid_size=self.grid_size,
            max_iters=self.max_iters,
            conv_tol=self.conv_tol,
        )

    def snr_at(self, sweep_value: float) -> float:
        return float(sweep_value) if self.sweep_axis == "snr" else self.snr_db

    def separation_floor(self) -> float:
        if self.min_separation is not None:
            return self.min_separation
        return max(2.0 * (2.0 / self.grid_size), 1.0 / self.n_antennas)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep_values"] = list(self.sweep_values)
        d["modes"] = list(self.modes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        d = dict(d)
        if "sweep_values" in d:
            d["sweep_values"] = tuple(float(v) for v in d["sweep_values"])
        if "modes" in d:
            d["modes"] = tuple(d["modes"])
        return cls(**d)


@dataclass
class TrialRecord:
    """Per-trial outcome for one estimator mode."""

    sweep_value: float
    mode: str
    trial_index: int
    theta_true: np.ndarray
    theta_hat: np.ndarray
    sq_err_deg: np.ndarray  # per-target squared error, degrees^2
    gpm_sq_err: float  # gauge-aligned mean squared gain error
    iterations: int
    converged: bool
    crb_deg2: np.ndarray | None
    diagnostics: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class RmseRecord:
    """One aggregated sweep point for one mode."""

    sweep_axis: str
    sweep_value: float
    mode: str
    rmse_theta_deg: float
    rmse_gpm: float
    mean_iterations: float
    convergence_rate: float
    crb_theta_deg: float | None
    trials: int


_AXIS_ID = {"snr": 1, "bandwidth": 2}


def _trial_seed(seed: int, axis: str, value: float, index: int) -> np.random.SeedSequence:
    """Documented substream derivation: entropy is (master seed, axis id,
    the IEEE-754 bit pattern of the sweep value split into 32-bit words,
    trial index). The estimator mode is deliberately not included."""
    bits = struct.unpack("<Q", struct.pack("<d", float(value)))[0]
    return np.random.SeedSequence(
        [int(seed), _AXIS_ID[axis], bits >> 32, bits & 0xFFFFFFFF, int(index)]
    )


def _deg(x: np.ndarray) -> np.ndarray:
    return np.degrees(np.arcsin(np.clip(x, -1.0, 1.0)))


def _gpm_error(gpm_hat: np.ndarray, gpm_true: np.ndarray) -> float:
    """Mean squared gain error after per-subcarrier least-squares complex
    scalar alignment (the global scale is unobservable)."""
    err = 0.0
    for g_hat, g in zip(gpm_hat, gpm_true):
        c = np.vdot(g_hat, g) / np.vdot(g_hat, g_hat)
        err += float(np.mean(np.abs(c * g_hat - g) ** 2))
    return err / gpm_hat.shape[0]


def _run_trial_modes(
    spec: ExperimentSpec,
    sweep_value: float,
    trial_index: int,
    modes: tuple[str, ...],
) -> dict[str, TrialRecord]:
    cfg = spec.config(sweep_value)
    grid = subcarrier_grid(cfg)
    rng = np.random.Generator(
        np.random.PCG64(_trial_seed(spec.seed, spec.sweep_axis, sweep_value, trial_index))
    )
    scen = sample_scenario(
        cfg,
        spec.snr_at(sweep_value),
        spec.snr_g_db,
        rng,
        spec.combiner_kind,
        min_separation=spec.separation_floor(),
    )
    probing = generate_probing(cfg, rng)
    obs = simulate_echo(cfg, scen, probing, grid, rng)

    crb_deg2 = None
    if spec.crb:
        crb = crb_closed_form(scen, cfg, grid)
        crb_deg2 = spatial_var_to_deg2(crb.crb_theta, scen.theta)

    out: dict[str, TrialRecord] = {}
    for mode in modes:
        est = autocal_music(
            obs,
            cfg,
            grid,
            scen.combiner,
            mode=mode,
            gpm=scen.gpm if mode == "known-gpm" else None,
        )
        err_deg = _deg(np.sort(est.theta_hat)) - _deg(np.sort(scen.theta))
        out[mode] = TrialRecord(
            sweep_value=float(sweep_value),
            mode=mode,
            trial_index=trial_index,
            theta_true=scen.theta,
            theta_hat=est.theta_hat,
            sq_err_deg=err_deg**2,
            gpm_sq_err=_gpm_error(est.gpm_hat, scen.gpm),
            iterations=est.iterations,
            converged=est.converged,
            crb_deg2=crb_deg2,
            diagnostics=est.diagnostics,
        )
    return out


def run_trial(
    spec: ExperimentSpec, sweep_value: float, mode: str, trial_index: int
) -> TrialRecord:
    """Run a single trial of one mode; deterministic given
    (spec.seed, sweep_value, mode, trial_index) and identical to the
    corresponding record of :func:`run_sweep`."""
    return _run_trial_modes(spec, sweep_value, trial_index, (mode,))[mode]


def _aggregate(
    spec: ExperimentSpec, sweep_value: float, mode: str, recs: list[TrialRecord]
) -> RmseRecord:
    k = spec.n_targets
    if spec.trim_deg is not None:
        recs = [r for r in recs if np.sqrt(np.max(r.sq_err_deg)) <= spec.trim_deg]
        if not recs:
            raise ValueError(
                f"trim_deg={spec.trim_deg} removed every trial at "
                f"{spec.sweep_axis}={sweep_value}, mode={mode}"
            )
    n_tr = len(recs)
    sq = np.concatenate([r.sq_err_deg for r in recs])
    rmse = float(np.sqrt(np.sum(sq) / (n_tr * k)))
    rmse_gpm = float(np.sqrt(np.mean([r.gpm_sq_err for r in recs])))
    crb = None
    if spec.crb:
        crb = float(np.sqrt(np.mean(np.concatenate([r.crb_deg2 for r in recs]))))
    return RmseRecord(
        sweep_axis=spec.sweep_axis,
        sweep_value=float(sweep_value),
        mode=mode,
        rmse_theta_deg=rmse,
        rmse_gpm=rmse_gpm,
        mean_iterations=float(np.mean([r.iterations for r in recs])),
        convergence_rate=float(np.mean([r.converged for r in recs])),
        crb_theta_deg=crb,
        trials=n_tr,
    )


def _sweep_task(args):
    spec_dict, value, index = args
    spec = ExperimentSpec.from_dict(spec_dict)
    return value, index, _run_trial_modes(spec, value, index, spec.modes)


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> list[RmseRecord]:
    """Run the full sweep and aggregate one record per (value, mode).

    Trials are independent and may run in a process pool; aggregation order
    is fixed by (value, mode, trial) so results do not depend on worker
    count.
    """
    per_point: dict[tuple[float, str], list[TrialRecord]] = {
        (v, m): [] for v in spec.sweep_values for m in spec.modes
    }
    tasks = [(v, i) for v in spec.sweep_values for i in range(spec.trials)]
    if workers > 1:
        spec_dict = spec.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(_sweep_task, [(spec_dict, v, i) for v, i in tasks])
            )
        results.sort(key=lambda r: (r[0], r[1]))
        for value, _, by_mode in results:
            for mode in spec.modes:
                per_point[(value, mode)].append(by_mode[mode])
    else:
        for value, index in tasks:
            by_mode = _run_trial_modes(spec, value, index, spec.modes)
            for mode in spec.modes:
                per_point[(value, mode)].append(by_mode[mode])
    return [
        _aggregate(spec, value, mode, per_point[(value, mode)])
        for value in spec.sweep_values
        for mode in spec.modes
    ]


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def emit_outputs(
    records: list[RmseRecord], spec: ExperimentSpec, outdir: str | Path
) -> dict[str, Path]:
    """Write the sweep CSV plus a manifest capturing the resolved spec.

    The CSV column schema is fixed (see ``CSV_COLUMNS``); floats are written
    with full round-trip precision so a re-run from the manifest reproduces
    the file byte for byte. The manifest doubles as a config: feed it back
    through ``--config`` or :func:`run_from_manifest`.
    """
    if not records:
        raise ValueError("no records to emit")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"rmse_vs_{spec.sweep_axis}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.sweep_axis,
                    _fmt(r.sweep_value),
                    r.mode,
                    _fmt(r.rmse_theta_deg),
                    _fmt(r.rmse_gpm),
                    _fmt(r.mean_iterations),
                    _fmt(r.convergence_rate),
                    _fmt(r.crb_theta_deg),
                    str(r.trials),
                ]
            )
    manifest_path = outdir / "manifest.json"
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package": "squintmusic",
        "version": __version__,
        "spec": spec.to_dict(),
        "outputs": {"csv": csv_path.name},
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "manifest": manifest_path}


def parse_records(csv_path: str | Path) -> list[RmseRecord]:
    """Read a sweep CSV back into records (exact float round trip)."""
    out = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        for row in reader:
            out.append(
                RmseRecord(
                    sweep_axis=row["sweep_axis"],
                    sweep_value=float(row["sweep_value"]),
                    mode=row["mode"],
                    rmse_theta_deg=float(row["rmse_theta_deg"]),
                    rmse_gpm=float(row["rmse_gpm"]),
                    mean_iterations=float(row["mean_iterations"]),
                    convergence_rate=float(row["convergence_rate"]),
                    crb_theta_deg=(
                        float(row["crb_theta_deg"]) if row["crb_theta_deg"] else None
                    ),
                    trials=int(row["trials"]),
                )
            )
    return out


def load_spec(path: str | Path) -> ExperimentSpec:
    """Load an ExperimentSpec from a config file or an emitted manifest."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "spec" in doc:  # manifest
        doc = doc["spec"]
    return ExperimentSpec.from_dict(doc)


def run_from_manifest(
    path: str | Path, outdir: str | Path | None = None, workers: int = 1
) -> dict[str, Path]:
    """Re-run a sweep exactly as captured by its manifest."""
    spec = load_spec(path)
    records = run_sweep(spec, workers=workers)
    return emit_outputs(records, spec, outdir if outdir is not None else spec.output)
