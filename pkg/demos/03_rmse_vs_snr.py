"""RMSE vs SNR at desk scale, with the Cramér-Rao bound overlay.

A shrunken version of the headline experiment: all four estimator modes over
an SNR sweep, 40 Monte-Carlo trials per point, on a 32-element array with 8
subcarriers. Uncorrected MUSIC is stuck at tens of degrees regardless of
SNR; squint-only correction saturates well below a degree; the full
auto-calibrated estimator does best, limited by the spectrum grid at this
desk scale (the bound itself sits lower still).

Run:  python demos/03_rmse_vs_snr.py          (about a minute)
Writes demo_rmse_vs_snr/rmse_vs_snr.csv and a manifest for byte-identical
re-runs; plots a PNG if matplotlib is available.
"""

import pathlib

from squintmusic import ExperimentSpec, emit_outputs, run_sweep

HERE = pathlib.Path(__file__).parent
OUT = HERE / "demo_rmse_vs_snr"


def main() -> None:
    spec = ExperimentSpec(
        f_c=300e9,
        bandwidth=30e9,
        n_subcarriers=8,
        n_antennas=32,
        n_rf=8,
        n_snapshots=256,
        n_targets=2,
        grid_size=2**12,
        sweep_axis="snr",
        sweep_values=(-10.0, -5.0, 0.0, 5.0, 10.0),
        snr_g_db=10.0,
        trials=40,
        modes=("plain-music", "known-gpm", "known-squint", "full"),
        crb=True,
        seed=3,
        output=str(OUT),
    )
    records = run_sweep(spec)
    paths = emit_outputs(records, spec, OUT)

    print(f"{'snr [dB]':>9s} {'mode':>13s} {'rmse [deg]':>12s} {'crb [deg]':>11s}")
    for r in records:
        print(
            f"{r.sweep_value:9.1f} {r.mode:>13s} {r.rmse_theta_deg:12.5f} "
            f"{r.crb_theta_deg:11.6f}"
        )
    print(f"\nwrote {paths['csv']} and {paths['manifest']}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipped the plot")
        return

    fig, ax = plt.subplots(figsize=(6, 4.2))
    for mode in spec.modes:
        pts = [r for r in records if r.mode == mode]
        ax.semilogy(
            [r.sweep_value for r in pts],
            [r.rmse_theta_deg for r in pts],
            marker="o",
            label=mode,
        )
    crb_pts = [r for r in records if r.mode == "full"]
    ax.semilogy(
        [r.sweep_value for r in crb_pts],
        [r.crb_theta_deg for r in crb_pts],
        "k--",
        label="CRB",
    )
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("DOA RMSE [deg]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = OUT / "rmse_vs_snr.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
