"""Array geometry and front-end models for wideband DOA estimation.

Everything here is deterministic given its inputs (randomness always comes
in through an explicit ``numpy.random.Generator``), so values can be shared
freely across threads.

Directions are handled as spatial directions ``theta = sin(angle)`` in
``[-1, 1]`` throughout; conversion to physical degrees happens only at
reporting boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemConfig",
    "SubcarrierGrid",
    "Combiner",
    "subcarrier_grid",
    "steering_vector",
    "steering_matrix",
    "beam_squint_offset",
    "squint_transform",
    "sample_gpm",
    "build_combiner",
]

COMBINER_KINDS = ("random-phase", "scaled-unitary")


@dataclass(frozen=True)
class SystemConfig:
    """Static system geometry and waveform parameters.

    Parameters
    ----------
    f_c : float
        Carrier frequency in Hz.
    bandwidth : float
        Total bandwidth in Hz (0 gives the narrowband, squint-free system).
    n_subcarriers : int
        Number of subcarriers sharing the bandwidth.
    n_antennas : int
        Uniform linear array size (half-wavelength spacing at ``f_c``).
    n_rf : int
        Number of RF chains; must divide ``n_antennas`` so the full array
        can be read out in ``n_antennas / n_rf`` sub-array time slots.
    n_snapshots : int
        Fast-time snapshots per subcarrier.
    n_targets : int
        Number of far-field point targets.
    tx_power : float
        Transmit power (linear scale).
    grid_size : int
        Number of uniform spectrum grid points over ``[-1, 1]``.
    max_iters : int
        Iteration cap for the alternating estimator.
    conv_tol : float
        Convergence threshold on the summed DOA change between iterations
        (spatial units).
    """

    f_c: float
    bandwidth: float
    n_subcarriers: int
    n_antennas: int
    n_rf: int
    n_snapshots: int
    n_targets: int
    tx_power: float = 1.0
    grid_size: int = 4096
    max_iters: int = 20
    conv_tol: float = 1e-4

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")
        if self.f_c <= self.bandwidth / 2:
            raise ValueError(
                "f_c must exceed bandwidth/2 so all subcarrier frequencies "
                "are positive"
            )
        if self.n_rf < 1 or self.n_antennas % self.n_rf != 0:
            raise ValueError(
                f"n_antennas ({self.n_antennas}) must be a positive multiple "
                f"of n_rf ({self.n_rf}); sub-array acquisition needs an "
                "integer number of time slots"
            )
        if self.n_antennas - self.n_targets < 1:
            raise ValueError(
                f"need n_antennas - n_targets >= 1 for a nonempty noise "
                f"subspace, got N={self.n_antennas}, K={self.n_targets}"
            )
        if self.n_snapshots < self.n_targets:
            raise ValueError(
                f"need n_snapshots >= n_targets, got T={self.n_snapshots}, "
                f"K={self.n_targets}"
            )
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.tx_power <= 0:
            raise ValueError("tx_power must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.conv_tol <= 0:
            raise ValueError("conv_tol must be > 0")

    @property
    def n_slots(self) -> int:
        """Sub-array acquisition slots needed for one full-array readout."""
        return self.n_antennas // self.n_rf

    @property
    def snr_ref_power(self) -> float:
        """Reference power for the SNR definition, tx_power / (M^2 N^2)."""
        return self.tx_power / (self.n_subcarriers**2 * self.n_antennas**2)


@dataclass(frozen=True)
class SubcarrierGrid:
    """Subcarrier frequencies and their squint distortion coefficients.

    ``eta[m] = f[m] / f_c`` converts a nominal spatial direction into its
    squinted counterpart at subcarrier ``m``.
    """

    f: np.ndarray
    eta: np.ndarray
    f_c: float

    def __len__(self) -> int:
        return self.f.size


@dataclass(frozen=True)
class Combiner:
    """Block-diagonal analog combiner for sub-array acquisition.

    ``W`` is the full N x N matrix whose column block ``j`` is the slot-``j``
    combiner; nonzero entries live only in the j-th diagonal block and all
    have magnitude ``1/sqrt(N)``.
    """

    W: np.ndarray
    n_slots: int
    kind: str

    @property
    def n_rf(self) -> int:
        return self.W.shape[0] // self.n_slots

    def block(self, j: int) -> np.ndarray:
        """The dense n_rf x n_rf combiner of slot ``j``."""
        i = j * self.n_rf
        return self.W[i : i + self.n_rf, i : i + self.n_rf]


def subcarrier_grid(cfg: SystemConfig) -> SubcarrierGrid:
    """Build the uniform subcarrier grid centered on the carrier.

    Subcarrier ``m`` (1-based) sits at ``f_c + (B/M) * (m - 1 - (M-1)/2)``,
    which centers the grid so the frequency offsets sum to zero.
    """
    m = np.arange(cfg.n_subcarriers, dtype=float)
    f = cfg.f_c + (cfg.bandwidth / cfg.n_subcarriers) * (
        m - (cfg.n_subcarriers - 1) / 2.0
    )
    return SubcarrierGrid(f=f, eta=f / cfg.f_c, f_c=cfg.f_c)


def _check_direction(theta: float) -> None:
    if abs(theta) > 1.0:
        raise ValueError(
            f"spatial direction {theta!r} outside [-1, 1]; not the sine of "
            "a physical angle"
        )


def steering_vector(theta: float, eta: float = 1.0, n: int = 1) -> np.ndarray:
    """Unit-norm ULA steering vector for spatial direction ``theta``.

    Element ``i`` (0-based) has phase ``pi * i * eta * theta``; ``eta`` is
    the squint distortion coefficient of the subcarrier being modeled
    (``eta = 1`` at the carrier).

    Raises
    ------
    ValueError
        If ``|theta| > 1`` or ``eta <= 0``.
    """
    _check_direction(theta)
    if eta <= 0:
        raise ValueError(f"distortion coefficient must be positive, got {eta!r}")
    idx = np.arange(n)
    return np.exp(1j * np.pi * idx * (eta * theta)) / math.sqrt(n)


def steering_matrix(thetas: np.ndarray, eta: float, n: int) -> np.ndarray:
    """Stack steering vectors for many directions into an n x len(thetas)
    matrix. No input validation; this is the hot path for spectrum scans."""
    thetas = np.asarray(thetas, dtype=float)
    idx = np.arange(n)
    return np.exp(1j * np.pi * np.outer(idx, eta * thetas)) / math.sqrt(n)


def beam_squint_offset(theta: float, eta: float) -> float:
    """Spatial offset ``(1 - eta) * theta`` between the nominal direction and
    where subcarrier ``eta`` actually steers."""
    _check_direction(theta)
    return (1.0 - eta) * theta


def squint_transform(theta: float, eta: float, n: int) -> np.ndarray:
    """Diagonal (returned as a length-``n`` vector) mapping the nominal
    steering vector onto its squinted counterpart.

    Defined so that ``squint_transform(theta, eta, n) *
    steering_vector(theta, 1, n) == steering_vector(theta, eta, n)`` holds to
    machine precision; equivalently each element carries phase
    ``-pi * i * (1 - eta) * theta``.
    """
    _check_direction(theta)
    idx = np.arange(n)
    return np.exp(-1j * np.pi * idx * ((1.0 - eta) * theta))


def sample_gpm(
    n: int, mismatch_db: float | None, rng: np.random.Generator
) -> np.ndarray:
    """Draw one per-antenna complex gain-phase mismatch vector.

    Gains are ``1 + e`` with ``e`` i.i.d. circular complex Gaussian of
    variance ``10**(-mismatch_db / 10)``, so a larger ``mismatch_db`` means a
    better-calibrated array. ``None`` (or ``inf``) returns the mismatch-free
    all-ones vector.
    """
    if mismatch_db is None or math.isinf(mismatch_db):
        return np.ones(n, dtype=complex)
    var = 10.0 ** (-mismatch_db / 10.0)
    scale = math.sqrt(var / 2.0)
    e = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return 1.0 + scale * e


def build_combiner(
    n: int,
    n_rf: int,
    kind: str = "random-phase",
    rng: np.random.Generator | None = None,
) -> Combiner:
    """Build the block-diagonal acquisition combiner.

    ``random-phase`` draws each nonzero entry as ``exp(1j*phi)/sqrt(n)``
    with ``phi ~ unif[-pi/2, pi/2]``. ``scaled-unitary`` uses per-block
    unit-modulus DFT bases (randomly column-phased when ``rng`` is given),
    which makes ``W^H W = (n_rf/n) I`` exact rather than approximate.
    """
    if n_rf < 1 or n % n_rf != 0:
        raise ValueError(f"n ({n}) must be a positive multiple of n_rf ({n_rf})")
    if kind not in COMBINER_KINDS:
        raise ValueError(f"unknown combiner kind {kind!r}; expected {COMBINER_KINDS}")
    if kind == "random-phase" and rng is None:
        raise ValueError("random-phase combiner needs an rng")

    n_slots = n // n_rf
    scale = 1.0 / math.sqrt(n)
    W = np.zeros((n, n), dtype=complex)
    for j in range(n_slots):
        if kind == "random-phase":
            phi = rng.uniform(-np.pi / 2, np.pi / 2, size=(n_rf, n_rf))
            block = scale * np.exp(1j * phi)
        else:
            ab = np.arange(n_rf)
            block = scale * np.exp(-2j * np.pi * np.outer(ab, ab) / n_rf)
            if rng is not None:
                # unit-modulus column phases keep the block orthogonal
                block = block * np.exp(
                    1j * rng.uniform(-np.pi / 2, np.pi / 2, size=n_rf)
                )
        i = j * n_rf
        W[i : i + n_rf, i : i + n_rf] = block
    return Combiner(W=W, n_slots=n_slots, kind=kind)
