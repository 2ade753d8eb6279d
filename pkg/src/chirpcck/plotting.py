"""Figure rendering for the report paths. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_spectrogram(times, freqs, db, path, title=None, floor_db=60.0):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    top = float(np.max(db))
    extent = [times[0] * 1e3, times[-1] * 1e3, freqs[0] / 1e6, freqs[-1] / 1e6]
    im = ax.imshow(db.T, origin="lower", aspect="auto", extent=extent, vmin=top - floor_db, vmax=top,
                   cmap="viridis", interpolation="nearest")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("frequency (MHz)")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="power (dB)")
    fig.tight_layout()
    _save(fig, path)


def plot_drop_sweep(rows, path, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    for sf in sorted({r["sf"] for r in rows}):
        sel = sorted((r for r in rows if r["sf"] == sf), key=lambda r: r["bw_hz"])
        bw = [r["bw_hz"] / 1e3 for r in sel]
        ax.errorbar(bw, [r["drop_db_mean"] for r in sel], yerr=[r["drop_db_std"] for r in sel],
                    marker="o", capsize=3, label=f"SF{sf}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("LoRa bandwidth (kHz)")
    ax.set_ylabel("SNR drop (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
