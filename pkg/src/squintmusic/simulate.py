"""Ground-truth scenario generation and wideband echo synthesis.

The monostatic base station probes with all antennas, and the target echo is
read back through ``n_rf`` RF chains over ``n_antennas / n_rf`` time slots
with a block combiner. Targets, reflection coefficients, and gain-phase
mismatch are held constant over the slots of one acquisition; only the
receiver noise is redrawn per slot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .arrays import (
    Combiner,
    SubcarrierGrid,
    SystemConfig,
    build_combiner,
    sample_gpm,
    steering_matrix,
    steering_vector,
)

__all__ = [
    "Scenario",
    "ObservationSet",
    "sample_scenario",
    "generate_probing",
    "simulate_echo",
    "array_gain_profile",
    "save_scenario",
    "load_scenario",
]


@dataclass(frozen=True)
class Scenario:
    """Ground truth for one Monte-Carlo trial.

    Attributes
    ----------
    theta : (K,) float array
        Spatial target directions in ``[-1, 1]``.
    beta : (M, K) complex array
        Per-subcarrier reflection coefficients.
    gpm : (M, N) complex array
        Per-subcarrier gain-phase mismatch vectors (diagonal of G_m).
    combiner : Combiner
        Acquisition combiner used for every subcarrier.
    sigma2 : float
        Receiver noise variance (linear power); 0 gives noiseless data.
    snr_db : float
        Nominal SNR this scenario was generated for (bookkeeping only).
    """

    theta: np.ndarray
    beta: np.ndarray
    gpm: np.ndarray
    combiner: Combiner
    sigma2: float
    snr_db: float


@dataclass(frozen=True)
class ObservationSet:
    """Stacked observations ``Y`` and the probing ``X`` that produced them,
    both shaped (M, N, T)."""

    Y: np.ndarray
    X: np.ndarray


def noise_variance(cfg: SystemConfig, snr_db: float) -> float:
    """Noise variance realizing ``snr_db`` under the reference power
    ``tx_power / (M^2 N^2)``."""
    return cfg.snr_ref_power * 10.0 ** (-snr_db / 10.0)


def sample_scenario(
    cfg: SystemConfig,
    snr_db: float,
    snr_g_db: float | None,
    rng: np.random.Generator,
    combiner_kind: str = "random-phase",
    max_attempts: int = 200,
    min_separation: float | None = None,
) -> Scenario:
    """Draw one random scenario.

    Physical angles are uniform on ``[-pi/2, pi/2]`` (stored as sines),
    rejected until all pairs are at least ``min_separation`` apart
    (default: two grid steps, the bare floor for distinct spectrum peaks;
    benchmark sweeps raise this to the resolvability scale of the array).
    Reflection coefficients have unit magnitude and uniform random phase,
    so the SNR is controlled by the noise variance alone.

    Raises
    ------
    RuntimeError
        If the separation constraint cannot be met in ``max_attempts``
        redraws.
    """
    k = cfg.n_targets
    min_sep = (
        2.0 * (2.0 / cfg.grid_size) if min_separation is None else min_separation
    )
    theta = None
    for _ in range(max_attempts):
        cand = np.sort(np.sin(rng.uniform(-np.pi / 2, np.pi / 2, size=k)))
        if k == 1 or np.min(np.diff(cand)) >= min_sep:
            theta = cand
            break
    if theta is None:
        raise RuntimeError(
            f"could not place {k} targets at least {min_sep:.3g} apart "
            f"in {max_attempts} attempts"
        )

    m = cfg.n_subcarriers
    beta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(m, k)))
    gpm = np.stack([sample_gpm(cfg.n_antennas, snr_g_db, rng) for _ in range(m)])
    combiner = build_combiner(cfg.n_antennas, cfg.n_rf, combiner_kind, rng)
    return Scenario(
        theta=theta,
        beta=beta,
        gpm=gpm,
        combiner=combiner,
        sigma2=noise_variance(cfg, snr_db),
        snr_db=snr_db,
    )


def generate_probing(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-subcarrier probing matrices, shaped (M, N, T).

    Entries are i.i.d. circular complex Gaussian with per-entry variance
    ``tx_power / (M N)``; subcarriers are independent (drawn sequentially
    from the one generator).
    """
    shape = (cfg.n_subcarriers, cfg.n_antennas, cfg.n_snapshots)
    scale = math.sqrt(cfg.tx_power / (cfg.n_subcarriers * cfg.n_antennas) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_echo(
    cfg: SystemConfig,
    scen: Scenario,
    probing: np.ndarray,
    grid: SubcarrierGrid,
    rng: np.random.Generator,
) -> ObservationSet:
    """Synthesize the stacked observation matrices for every subcarrier.

    For subcarrier ``m`` the effective target responses are
    ``h_k = g_m * a(theta_k; eta_m)``; the echo is
    ``H diag(beta) H^T X`` and each slot's row block of the output is the
    slot combiner applied to signal plus fresh complex Gaussian noise of
    variance ``sigma2`` per receive antenna. Noise is drawn m-major,
    slot-inner, one (n_rf, T) block per slot.
    """
    n, t = cfg.n_antennas, cfg.n_snapshots
    n_rf, n_slots = cfg.n_rf, cfg.n_slots
    if probing.shape != (cfg.n_subcarriers, n, t):
        raise ValueError(
            f"probing shape {probing.shape} inconsistent with config "
            f"{(cfg.n_subcarriers, n, t)}"
        )
    if scen.gpm.shape != (cfg.n_subcarriers, n):
        raise ValueError(
            f"scenario gpm shape {scen.gpm.shape} inconsistent with config "
            f"{(cfg.n_subcarriers, n)}"
        )
    if scen.combiner.W.shape != (n, n):
        raise ValueError("combiner size inconsistent with config")

    W = scen.combiner.W
    noise_scale = math.sqrt(scen.sigma2 / 2.0)
    Y = np.empty((cfg.n_subcarriers, n, t), dtype=complex)
    for m in range(cfg.n_subcarriers):
        A = steering_matrix(scen.theta, grid.eta[m], n)
        H = scen.gpm[m][:, None] * A
        signal = H @ (scen.beta[m][:, None] * (H.T @ probing[m]))
        Ym = W.conj().T @ signal
        for j in range(n_slots):
            rows = slice(j * n_rf, (j + 1) * n_rf)
            block = W[rows, rows]
            noise = noise_scale * (
                rng.standard_normal((n_rf, t)) + 1j * rng.standard_normal((n_rf, t))
            )
            Ym[rows] += block.conj().T @ noise
        Y[m] = Ym
    return ObservationSet(Y=Y, X=probing.copy())


def array_gain_profile(
    theta_target: float,
    cfg: SystemConfig,
    grid: SubcarrierGrid,
    directions: np.ndarray,
) -> np.ndarray:
    """Per-subcarrier array gain of a single target, scanned with nominal
    steering vectors.

    Row ``m`` holds ``|a(theta; 1)^H a(theta_target; eta_m)|^2`` over the
    scan directions: the target response at subcarrier ``m`` is squinted, so
    its main lobe sits at ``eta_m * theta_target`` instead of the true
    direction. With zero bandwidth every row peaks at the target.
    """
    if abs(theta_target) > 1.0:
        raise ValueError("theta_target outside [-1, 1]")
    n = cfg.n_antennas
    scan = steering_matrix(np.asarray(directions, dtype=float), 1.0, n)
    out = np.empty((len(grid), len(directions)))
    for m in range(len(grid)):
        target = steering_vector(theta_target, grid.eta[m], n)
        out[m] = np.abs(scan.conj().T @ target) ** 2
    return out


# -- scenario fixtures --------------------------------------------------------
#
# Self-describing JSON with complex numbers as [re, im] pairs, for pinning
# regression fixtures. Schema (version 1):
#   {"schema": "scenario-v1", "snr_db": float, "sigma2": float,
#    "theta": [float], "beta": [[[re, im]]], "gpm": [[[re, im]]],
#    "combiner": {"kind": str, "n_slots": int, "W": [[[re, im]]]}}


def _c2pairs(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _pairs2c(pairs: list) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def save_scenario(scen: Scenario, path: str) -> None:
    """Write a scenario as self-describing JSON (complex as [re, im])."""
    doc = {
        "schema": "scenario-v1",
        "snr_db": scen.snr_db,
        "sigma2": scen.sigma2,
        "theta": scen.theta.tolist(),
        "beta": _c2pairs(scen.beta),
        "gpm": _c2pairs(scen.gpm),
        "combiner": {
            "kind": scen.combiner.kind,
            "n_slots": scen.combiner.n_slots,
            "W": _c2pairs(scen.combiner.W),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_scenario(path: str) -> Scenario:
    """Load a scenario written by :func:`save_scenario`."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != "scenario-v1":
        raise ValueError(f"unrecognized scenario schema {doc.get('schema')!r}")
    comb = doc["combiner"]
    return Scenario(
        theta=np.asarray(doc["theta"], dtype=float),
        beta=_pairs2c(doc["beta"]),
        gpm=_pairs2c(doc["gpm"]),
        combiner=Combiner(
            W=_pairs2c(comb["W"]), n_slots=int(comb["n_slots"]), kind=comb["kind"]
        ),
        sigma2=float(doc["sigma2"]),
        snr_db=float(doc["snr_db"]),
    )
