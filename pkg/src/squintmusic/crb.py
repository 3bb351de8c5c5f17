"""Cramér-Rao bounds for joint direction / squint-offset / mismatch unknowns.

Two routes are provided and deliberately kept distinct:

* ``crb_closed_form`` evaluates the projector-based stochastic closed form:
  per-subcarrier direction information from the projected derivative
  energies and the covariance-whitened reflected powers, combined across
  subcarriers by either the standard information sum or a per-subcarrier
  reciprocal sum (see the function docstring).
* ``crb_fim_inverse`` assembles the full Slepian-Bangs Fisher information of
  the stochastic Gaussian model (complex mismatch entries split into real
  and imaginary parts) and pseudo-inverts it.

The two agree on narrowband single-target scenarios and differ wherever the
squint-offset redundancy forces the pseudo-inverse to project; both are
reported, neither is silently "corrected".

Derivative conventions: directions are differentiated in spatial units
(``theta = sin(angle)``); each squint offset is treated as a standalone
parameter that determines its subcarrier's steering phase through the
squint relation, which makes its sensitivity carry an ``eta / (1 - eta)``
factor and leaves it undefined at ``eta = 1`` (those rows are excluded).
Degree-squared bounds divide out ``cos^2`` of the physical angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arrays import SubcarrierGrid, SystemConfig, steering_matrix
from .simulate import Scenario

__all__ = [
    "SteeringDerivatives",
    "ParameterLayout",
    "CrbResult",
    "steering_derivatives",
    "true_covariance",
    "parameter_layout",
    "fisher_information",
    "crb_closed_form",
    "crb_fim_inverse",
    "spatial_var_to_deg2",
]

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class SteeringDerivatives:
    """Sensitivities of one target's effective response at one subcarrier.

    ``d_theta`` is with respect to the spatial direction, ``d_delta`` with
    respect to the squint offset (``None`` when ``eta == 1``; the offset is
    then identically zero and carries no information), and ``d_gain`` is the
    squinted steering vector, the per-entry sensitivity to the corresponding
    mismatch gain.
    """

    d_theta: np.ndarray
    d_delta: np.ndarray | None
    d_gain: np.ndarray
    delta_excluded: bool


def steering_derivatives(
    k: int,
    m: int,
    scen: Scenario,
    grid: SubcarrierGrid,
    literal: bool = False,
) -> SteeringDerivatives:
    """Analytic derivatives of the effective response ``h = g * a(theta; eta)``.

    With ``literal=True`` the printed textbook-style forms are returned
    instead: they carry an extra mismatch factor on the direction
    derivative and an extra steering-phase factor on the offset derivative,
    and do not match finite differences of any single response function.
    The default forms are validated by central finite differences.
    """
    eta = float(grid.eta[m])
    theta = float(scen.theta[k])
    g = scen.gpm[m]
    n = g.size
    idx = np.arange(n)
    a_sq = np.exp(1j * np.pi * idx * (eta * theta)) / math.sqrt(n)
    h = g * a_sq
    base = 1j * np.pi * idx
    d_theta = base * eta * h
    excluded = eta == 1.0
    d_delta = None if excluded else base * (eta / (1.0 - eta)) * h
    if literal:
        d_theta = g * d_theta
        if d_delta is not None:
            d_delta = g * (math.sqrt(n) * a_sq) * d_delta
    return SteeringDerivatives(
        d_theta=d_theta, d_delta=d_delta, d_gain=a_sq, delta_excluded=excluded
    )


def _model_parts(scen: Scenario, cfg: SystemConfig, grid: SubcarrierGrid, m: int):
    """H, D, Pi, Pi_tilde and the true covariance for one subcarrier."""
    n = cfg.n_antennas
    A = steering_matrix(scen.theta, float(grid.eta[m]), n)
    H = scen.gpm[m][:, None] * A
    W = scen.combiner.W
    D = W.conj().T @ H
    Pi = np.diag(scen.beta[m])
    Pi_tilde = Pi @ (H.T @ H.conj()) @ Pi.conj().T
    c = cfg.tx_power / (cfg.n_subcarriers * n)
    R = c * (D @ Pi_tilde @ D.conj().T) + (scen.sigma2 / n) * np.eye(n)
    return H, D, Pi, Pi_tilde, R, c


def true_covariance(
    scen: Scenario, cfg: SystemConfig, grid: SubcarrierGrid
) -> np.ndarray:
    """Model covariance of the stacked observations, shaped (M, N, N).

    Uses the expected probing second moment; requires ``sigma2 > 0`` so the
    covariance is invertible.
    """
    if scen.sigma2 <= 0:
        raise ValueError("sigma2 must be positive for an invertible covariance")
    out = np.empty(
        (cfg.n_subcarriers, cfg.n_antennas, cfg.n_antennas), dtype=complex
    )
    for m in range(cfg.n_subcarriers):
        out[m] = _model_parts(scen, cfg, grid, m)[4]
    return out


@dataclass(frozen=True)
class ParameterLayout:
    """Index bookkeeping for the real unknown vector.

    Order: directions, then squint offsets (subcarrier-major, only for
    subcarriers with ``eta != 1``), then all real parts of the mismatch
    gains (subcarrier-major), then all imaginary parts.
    """

    n_targets: int
    n_subcarriers: int
    n_antennas: int
    delta_terms: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return (
            self.n_targets
            + len(self.delta_terms)
            + 2 * self.n_subcarriers * self.n_antennas
        )

    def i_theta(self, k: int) -> int:
        return k

    def i_delta(self, m: int, k: int) -> int:
        return self.n_targets + self.delta_terms.index((m, k))

    def i_g_re(self, m: int, n: int) -> int:
        return (
            self.n_targets
            + len(self.delta_terms)
            + m * self.n_antennas
            + n
        )

    def i_g_im(self, m: int, n: int) -> int:
        return self.i_g_re(m, n) + self.n_subcarriers * self.n_antennas


def parameter_layout(cfg: SystemConfig, grid: SubcarrierGrid) -> ParameterLayout:
    delta_terms = tuple(
        (m, k)
        for m in range(cfg.n_subcarriers)
        if grid.eta[m] != 1.0
        for k in range(cfg.n_targets)
    )
    return ParameterLayout(
        n_targets=cfg.n_targets,
        n_subcarriers=cfg.n_subcarriers,
        n_antennas=cfg.n_antennas,
        delta_terms=delta_terms,
    )


def _active_derivative_columns(
    scen: Scenario,
    cfg: SystemConfig,
    grid: SubcarrierGrid,
    layout: ParameterLayout,
    m: int,
):
    """(global index, dH) pairs for every unknown touching subcarrier m."""
    n, k_t = cfg.n_antennas, cfg.n_targets
    pairs = []
    ders = [steering_derivatives(k, m, scen, grid) for k in range(k_t)]
    for k in range(k_t):
        dH = np.zeros((n, k_t), dtype=complex)
        dH[:, k] = ders[k].d_theta
        pairs.append((layout.i_theta(k), dH))
    if grid.eta[m] != 1.0:
        for k in range(k_t):
            dH = np.zeros((n, k_t), dtype=complex)
            dH[:, k] = ders[k].d_delta
            pairs.append((layout.i_delta(m, k), dH))
    a_sq = np.stack([d.d_gain for d in ders], axis=1)  # (n, K)
    for i in range(n):
        dH = np.zeros((n, k_t), dtype=complex)
        dH[i] = a_sq[i]
        pairs.append((layout.i_g_re(m, i), dH))
        pairs.append((layout.i_g_im(m, i), 1j * dH))
    return pairs


def fisher_information(
    scen: Scenario,
    cfg: SystemConfig,
    grid: SubcarrierGrid,
    probing: np.ndarray | None = None,
) -> np.ndarray:
    """Slepian-Bangs Fisher information of the stochastic Gaussian model.

    Per subcarrier, each entry is ``T * Tr(R^-1 dR_i R^-1 dR_j)`` with the
    model covariance built from the expected probing second moment;
    contributions over subcarriers add. ``probing`` is accepted for
    interface symmetry with the simulator (the model covariance does not
    depend on the realized probing) and is only shape-checked.

    Returns the real-symmetric matrix over the layout of
    :func:`parameter_layout`. The matrix is singular by construction: each
    squint offset is informationally redundant with its direction, and each
    subcarrier's mismatch vector has an unobservable global phase. Use
    :func:`crb_fim_inverse` for bounds.
    """
    if probing is not None and probing.shape != (
        cfg.n_subcarriers,
        cfg.n_antennas,
        cfg.n_snapshots,
    ):
        raise ValueError("probing shape inconsistent with config")
    if scen.sigma2 <= 0:
        raise ValueError("sigma2 must be positive for an invertible covariance")
    layout = parameter_layout(cfg, grid)
    fim = np.zeros((layout.size, layout.size))
    t = cfg.n_snapshots
    for m in range(cfg.n_subcarriers):
        H, D, Pi, Pi_tilde, R, c = _model_parts(scen, cfg, grid, m)
        W = scen.combiner.W
        pairs = _active_derivative_columns(scen, cfg, grid, layout, m)
        idx = [p[0] for p in pairs]
        Ms = np.empty((len(pairs), R.shape[0], R.shape[0]), dtype=complex)
        for i, (_, dH) in enumerate(pairs):
            dD = W.conj().T @ dH
            dPi_t = Pi @ (dH.T @ H.conj() + H.T @ dH.conj()) @ Pi.conj().T
            t1 = dD @ Pi_tilde @ D.conj().T
            dR = c * (t1 + t1.conj().T + D @ dPi_t @ D.conj().T)
            Ms[i] = np.linalg.solve(R, dR)
        block = t * np.einsum("ipq,jqp->ij", Ms, Ms).real
        fim[np.ix_(idx, idx)] += block
    return fim


@dataclass
class CrbResult:
    """Direction-marginal lower bounds plus optional full matrix.

    ``crb_theta`` is in squared spatial units, aligned with the scenario's
    sorted directions; ``crb_theta_deg2`` converts through the sine mapping
    to squared physical degrees.
    """

    crb_theta: np.ndarray
    crb_theta_deg2: np.ndarray
    method: str
    combine: str | None = None
    full: np.ndarray | None = None
    diagnostics: list[str] = field(default_factory=list)


def spatial_var_to_deg2(var: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Convert a variance in spatial units at direction(s) ``theta`` into
    squared physical degrees (divides by ``cos^2`` of the physical angle)."""
    theta = np.asarray(theta, dtype=float)
    return np.asarray(var) / (1.0 - theta**2) * (180.0 / np.pi) ** 2


def _range_projector(D: np.ndarray, diagnostics: list[str], m: int) -> np.ndarray:
    """I - D D^+ via a rank-revealing SVD with tolerance 1e-10 * sigma_max."""
    u, s, _ = np.linalg.svd(D, full_matrices=False)
    rank = int(np.sum(s > _RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < D.shape[1]:
        diagnostics.append(
            f"subcarrier {m}: effective steering matrix rank {rank} < "
            f"{D.shape[1]}; projector truncated"
        )
    ur = u[:, :rank]
    return np.eye(D.shape[0]) - ur @ ur.conj().T


def crb_closed_form(
    scen: Scenario,
    cfg: SystemConfig,
    grid: SubcarrierGrid,
    probing: np.ndarray | None = None,
    combine: str = "information-sum",
    literal_derivatives: bool = False,
) -> CrbResult:
    """Projector-based closed-form direction bounds.

    Per subcarrier, the direction information couples the reflected-power
    kernel ``K_m = S_m D^H R^-1 D S_m`` (``S_m`` the signal covariance of
    the reflected snapshots, power factor included) with the derivative
    energies ``Xi_m`` left after projecting out the range of the effective
    steering matrix, under a ``sigma2 / (2 N T)`` noise prefactor. On a
    narrowband single-target scenario this reproduces the full
    Fisher-inverse bound to rounding error.

    ``combine`` selects how subcarriers merge:

    * ``"information-sum"`` (default): sum the per-subcarrier direction
      information matrices ``Re(Xi_m ∘ K_m^T)`` and invert, the standard
      rule for independent observations. Used for figure reproduction.
    * ``"sum-reciprocal"``: sum per-subcarrier reciprocal traces
      ``1 / (K_m[kk] Xi_m[kk])`` instead, as the formula for this model is
      sometimes stated. Larger by roughly the subcarrier count squared and
      kept for comparison, not as a defensible bound.
    """
    if scen.sigma2 <= 0:
        raise ValueError("sigma2 must be positive for an invertible covariance")
    if probing is not None and probing.shape[1] != cfg.n_antennas:
        raise ValueError("probing shape inconsistent with config")
    if combine not in ("information-sum", "sum-reciprocal"):
        raise ValueError("combine must be 'information-sum' or 'sum-reciprocal'")
    k_t = cfg.n_targets
    t = cfg.n_snapshots
    diagnostics: list[str] = []
    info_total = np.zeros((k_t, k_t))
    recip = np.zeros(k_t)
    for m in range(cfg.n_subcarriers):
        H, D, Pi, Pi_tilde, R, c = _model_parts(scen, cfg, grid, m)
        W = scen.combiner.W
        S_m = c * Pi_tilde
        K_m = S_m.conj().T @ D.conj().T @ np.linalg.solve(R, D) @ S_m
        proj = _range_projector(D, diagnostics, m)
        WP = W @ proj @ W.conj().T
        ders = [
            steering_derivatives(k, m, scen, grid, literal=literal_derivatives)
            for k in range(k_t)
        ]
        dh = np.stack([d.d_theta for d in ders], axis=1)
        xi = dh.conj().T @ WP @ dh
        info = np.real(xi * K_m.T)
        if np.any(np.diag(info) <= 0):
            raise ValueError(
                f"nonpositive direction information at subcarrier {m}; "
                "scenario degenerate"
            )
        info_total += info
        recip += 1.0 / np.diag(info)
    noise = scen.sigma2 / cfg.n_antennas
    if combine == "information-sum":
        crb_theta = (noise / (2.0 * t)) * np.diag(np.linalg.inv(info_total)).copy()
    else:
        crb_theta = (noise / (2.0 * t)) * recip
    return CrbResult(
        crb_theta=crb_theta,
        crb_theta_deg2=spatial_var_to_deg2(crb_theta, scen.theta),
        method="closed-form",
        combine=combine,
        diagnostics=diagnostics,
    )


def crb_fim_inverse(
    scen: Scenario,
    cfg: SystemConfig,
    grid: SubcarrierGrid,
    probing: np.ndarray | None = None,
    rcond: float = 1e-12,
) -> CrbResult:
    """Direction bounds from the pseudo-inverse of the assembled Fisher
    information.

    The pseudo-inverse (cutoff ``rcond`` relative to the largest singular
    value) handles the structural null directions noted in
    :func:`fisher_information`; the reported direction entries bound the
    identifiable parameter combinations.
    """
    fim = fisher_information(scen, cfg, grid, probing)
    inv = np.linalg.pinv(fim, rcond=rcond, hermitian=True)
    k_t = cfg.n_targets
    crb_theta = np.diag(inv)[:k_t].copy()
    return CrbResult(
        crb_theta=crb_theta,
        crb_theta_deg2=spatial_var_to_deg2(crb_theta, scen.theta),
        method="fim-inverse",
        full=inv,
    )
