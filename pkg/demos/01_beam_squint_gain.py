"""Beam squint in one picture: per-subcarrier array gain of a 60-degree
target, narrowband vs wideband.

With subcarrier-independent analog steering, each subcarrier sees the target
at a slightly different spatial direction. At 300 GHz carrier and 30 GHz
bandwidth the main lobes of the edge subcarriers sit several degrees apart,
while at 0.1 GHz bandwidth they all coincide.

Run:  python demos/01_beam_squint_gain.py
Writes gain_narrowband.csv / gain_wideband.csv next to this script and, if
matplotlib is available, a PNG with both panels.
"""

import csv
import pathlib

import numpy as np

from squintmusic import SystemConfig, array_gain_profile, subcarrier_grid

HERE = pathlib.Path(__file__).parent
TARGET_DEG = 60.0


def gain_table(bandwidth: float) -> tuple[np.ndarray, np.ndarray]:
    cfg = SystemConfig(
        f_c=300e9,
        bandwidth=bandwidth,
        n_subcarriers=32,
        n_antennas=128,
        n_rf=8,
        n_snapshots=8,
        n_targets=1,
        grid_size=2**13,
    )
    grid = subcarrier_grid(cfg)
    directions = np.linspace(-1, 1, cfg.grid_size)
    gains = array_gain_profile(np.sin(np.radians(TARGET_DEG)), cfg, grid, directions)
    return directions, gains


def dump(path: pathlib.Path, directions: np.ndarray, gains: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_deg"] + [f"gain_m{m + 1}" for m in range(len(gains))])
        deg = np.degrees(np.arcsin(directions))
        for i in range(directions.size):
            writer.writerow([f"{deg[i]:.6f}"] + [f"{g:.8e}" for g in gains[:, i]])


def main() -> None:
    for label, bandwidth in [("narrowband", 0.1e9), ("wideband", 30e9)]:
        directions, gains = gain_table(bandwidth)
        peaks_deg = np.degrees(np.arcsin(directions[np.argmax(gains, axis=1)]))
        spread = peaks_deg.max() - peaks_deg.min()
        print(
            f"{label:10s} (B = {bandwidth / 1e9:5.1f} GHz): "
            f"main lobes span [{peaks_deg.min():7.3f}, {peaks_deg.max():7.3f}] deg, "
            f"spread {spread:.3f} deg"
        )
        dump(HERE / f"gain_{label}.csv", directions, gains)

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipped the plot")
        return

    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, (label, bandwidth) in zip(
        axes, [("narrowband", 0.1e9), ("wideband", 30e9)]
    ):
        directions, gains = gain_table(bandwidth)
        deg = np.degrees(np.arcsin(directions))
        for m in range(0, gains.shape[0], 4):
            ax.plot(deg, gains[m], lw=0.8)
        ax.set_xlim(50, 70)
        ax.set_title(f"{label}: B = {bandwidth / 1e9:g} GHz")
        ax.set_xlabel("direction [deg]")
        ax.axvline(TARGET_DEG, color="k", ls=":", lw=1)
    axes[0].set_ylabel("array gain")
    fig.tight_layout()
    out = HERE / "beam_squint_gain.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
