"""Monte-Carlo harnesses: symbol error rate sweeps and emulation SNR-drop trends."""

from __future__ import annotations

import numpy as np

from .emulator import emulate_waveform
from .iq import WIFI_CHIP_RATE, IqBuffer
from .lora import LoraFrame, LoraParams, build_frame_waveform, modulate_symbol
from .rx import awgn, dechirp_bins, snr_drop_db

MAX_BATCH_SAMPLES = 1 << 23


def symbol_error_rate(params: LoraParams, snr_db: float, trials: int = 200, seed: int = 0,
                      fs: float = WIFI_CHIP_RATE, filter_channel: bool = True) -> float:
    """SER of back-to-back random symbols over AWGN with known timing.

    ``snr_db`` is measured over the full sample-rate bandwidth, as in :func:`awgn`.
    """
    N = params.samples_per_symbol(fs)
    rng = np.random.default_rng(seed)
    values = rng.integers(0, params.n_bins, trials)
    per_batch = max(1, MAX_BATCH_SAMPLES // N)
    errors = 0
    for b, lo in enumerate(range(0, trials, per_batch)):
        batch = values[lo:lo + per_batch]
        tx = IqBuffer(np.concatenate([modulate_symbol(int(v), params, fs).samples for v in batch]), fs)
        rx = awgn(tx, snr_db, seed=int(rng.integers(2 ** 32)) + b)
        if filter_channel:
            rx = _filter_rows(rx, params.bw, N)
        power = np.abs(dechirp_bins(rx, params, np.arange(len(batch)) * N)) ** 2
        errors += int(np.sum(np.argmax(power, axis=1) != batch))
    return errors / trials


def _filter_rows(buf, bw, N):
    # channel filter applied per symbol window; each window is a whole symbol
    rows = np.fft.fft(np.asarray(buf.samples).reshape(-1, N), axis=1)
    rows[:, np.abs(np.fft.fftfreq(N, 1 / buf.sample_rate)) > bw / 2] = 0
    return buf.with_samples(np.fft.ifft(rows, axis=1).ravel())


def sensitivity_threshold(params: LoraParams, snr_grid, trials: int = 200, seed: int = 0,
                          target_ser: float = 0.01, fs: float = WIFI_CHIP_RATE, stride: int = 1):
    """Lowest grid SNR from which the SER stays at or below ``target_ser``.

    The grid is scanned from the top down and the scan stops at the first
    failing point. With ``stride > 1`` every ``stride``-th point is scanned
    first and the points between the last pass and the first failure are
    filled in afterwards. Every grid point keeps its own seed, so both scans
    evaluate identical trials. Returns ``(threshold_db, {snr_db: ser})``;
    the threshold is None if even the highest point fails.
    """
    grid = sorted((float(v) for v in snr_grid), reverse=True)
    curve = {}

    def ser_at(i):
        if grid[i] not in curve:
            curve[grid[i]] = symbol_error_rate(params, grid[i], trials, seed=seed * 1000 + i, fs=fs)
        return curve[grid[i]]

    last_pass = None
    fail = len(grid)
    for i in range(0, len(grid), max(1, stride)):
        if ser_at(i) > target_ser:
            fail = i
            break
        last_pass = i
    lo = 0 if last_pass is None else last_pass + 1
    for i in range(lo, min(fail, len(grid))):
        if ser_at(i) > target_ser:
            break
        last_pass = i
    threshold = None if last_pass is None else grid[last_pass]
    return threshold, dict(sorted(curve.items()))


def random_frame(params: LoraParams, rng) -> LoraFrame:
    return LoraFrame(params, bytes(rng.integers(0, 256, params.payload_len).tolist()))


def emulated_frame_drop(frame: LoraFrame, reference_snr_db: float = 10.0) -> float:
    target = build_frame_waveform(frame, WIFI_CHIP_RATE)
    emulated = emulate_waveform(target).emulated
    return snr_drop_db(emulated.with_samples(emulated.samples[:len(target)]), frame.params,
                       reference_snr_db=reference_snr_db)


def drop_trend(sfs, bws, n_frames: int = 10, payload_len: int = 4, cr: int = 5, seed: int = 0,
               reference_snr_db: float = 10.0):
    """Mean emulation SNR drop over random-payload frames for every (sf, bw)."""
    rows = []
    for sf in sfs:
        for bw in bws:
            params = LoraParams(sf, bw, cr, payload_len=payload_len)
            rng = np.random.default_rng([seed, sf, int(bw)])
            drops = [emulated_frame_drop(random_frame(params, rng), reference_snr_db)
                     for _ in range(n_frames)]
            rows.append({"sf": sf, "bw_hz": float(bw), "frames": n_frames,
                         "drop_db_mean": float(np.mean(drops)), "drop_db_std": float(np.std(drops))})
    return rows
