"""Software LoRa receiver and fidelity metrics.

Demodulation runs at the oversampled rate: each symbol window is multiplied
by the conjugate base up-chirp, transformed with a full-length FFT, and the
two bin groups a dechirped symbol occupies (positive frequencies and their
alias one bandwidth below) are summed coherently into ``2**sf`` bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import coding
from .errors import ConsistencyError, DecodeError, DetectionError, DomainError
from .iq import IqBuffer
from .lora import LoraParams, base_chirp, frame_layout

EVM_CAP_DB = 80.0
LOW_CONFIDENCE_RATIO = 2.0


def awgn(buf: IqBuffer, snr_db: float, seed: int = 0) -> IqBuffer:
    """Add complex white Gaussian noise at ``snr_db`` relative to the non-silent signal power."""
    if len(buf) == 0:
        raise DomainError("cannot add noise to an empty buffer")
    if np.isposinf(snr_db):
        return buf
    p = buf.power()
    sigma2 = p / 10 ** (snr_db / 10)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(buf)) + 1j * rng.standard_normal(len(buf))
    return buf.with_samples(buf.samples + np.sqrt(sigma2 / 2) * noise)


def evm_snr(ideal: IqBuffer, actual: IqBuffer, cap_db: float = EVM_CAP_DB) -> float:
    """Signal-to-error power of ``actual`` against ``ideal`` scaled by its least-squares complex gain.

    The reference is fitted onto the measurement, so a complex gain on
    ``actual`` cancels exactly and additive noise reads back at its own SNR.
    """
    if len(ideal) != len(actual):
        raise ConsistencyError(f"length mismatch: {len(ideal)} vs {len(actual)}")
    if ideal.sample_rate != actual.sample_rate:
        raise ConsistencyError("sample rates differ")
    a = np.asarray(ideal.samples)
    b = np.asarray(actual.samples)
    aa = np.vdot(a, a).real
    if aa == 0:
        return cap_db if not np.any(b) else -cap_db
    beta = np.vdot(a, b) / aa
    sig = abs(beta) ** 2 * aa
    err = np.vdot(b - beta * a, b - beta * a).real
    if err <= sig * 10 ** (-cap_db / 10):
        return cap_db
    if sig <= err * 10 ** (-cap_db / 10):
        return -cap_db
    return float(10 * np.log10(sig / err))


def _is_smooth(n):
    for p in (2, 3, 5, 7, 11):
        while n % p == 0:
            n //= p
    return n == 1


def _fast_len(n):
    """Smallest length at or above ``n`` without prime factors above 11; FFTs of such lengths are fast."""
    while not _is_smooth(n):
        n += 1
    return n


def channel_filter(buf: IqBuffer, bw: float) -> IqBuffer:
    """Ideal (brick-wall) low-pass keeping |f| <= bw/2."""
    n = len(buf)
    if n == 0:
        return buf
    m = _fast_len(n)
    x = np.fft.fft(buf.samples, m)
    f = np.fft.fftfreq(m, 1 / buf.sample_rate)
    x[np.abs(f) > bw / 2] = 0
    return buf.with_samples(np.fft.ifft(x)[:n])


def _fold_index(M, N):
    k = np.arange(M)
    alias = (k - M) % N
    return k, alias, alias >= M


def _folded(spectra, M, N):
    k, alias, use = _fold_index(M, N)
    return spectra[..., k] + np.where(use, spectra[..., alias], 0)


def _symbol_starts(params, fs, start, n):
    T = params.symbol_time
    return start + np.round(np.arange(n) * T * fs).astype(np.int64)


def _windows(x, starts, N):
    return np.stack([x[s:s + N] for s in starts]) if len(starts) else np.zeros((0, N), complex)


def dechirp_bins(buf: IqBuffer, params: LoraParams, starts, reference: str = "up") -> np.ndarray:
    """Folded complex dechirp spectra, one row of ``2**sf`` bins per window start."""
    fs = buf.sample_rate
    N = params.samples_per_symbol(fs)
    ref = base_chirp(params, fs, reference).samples.conj()
    x = np.asarray(buf.samples)
    starts = np.asarray(starts, dtype=np.int64)
    if len(starts) and (starts.min() < 0 or starts.max() + N > len(x)):
        raise DomainError("symbol window runs past the buffer")
    out = np.empty((len(starts), params.n_bins), dtype=np.complex128)
    step = max(1, (1 << 22) // N)
    for i in range(0, len(starts), step):
        spec = np.fft.fft(_windows(x, starts[i:i + step], N) * ref, axis=1)
        out[i:i + step] = _folded(spec, params.n_bins, N)
    return out


def _peak_ratio(power):
    top2 = np.sort(power, axis=1)[:, -2:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = top2[:, 1] / top2[:, 0]
    return np.where(np.isfinite(ratio), ratio, np.inf)


def demodulate(buf: IqBuffer, params: LoraParams, start: int, n_symbols: Optional[int] = None):
    """Return ``(symbols, peak_ratio)``; peak_ratio is the top bin over the runner-up."""
    fs = buf.sample_rate
    N = params.samples_per_symbol(fs)
    if n_symbols is None:
        n_symbols = max(0, int((len(buf) - start - N) // (params.symbol_time * fs)) + 1)
    starts = _symbol_starts(params, fs, start, n_symbols)
    if n_symbols and starts[-1] + N > len(buf):
        raise DomainError(f"buffer holds fewer than {n_symbols} symbols after sample {start}")
    power = np.abs(dechirp_bins(buf, params, starts)) ** 2
    return np.argmax(power, axis=1), _peak_ratio(power)


def dechirp_demodulate(buf: IqBuffer, params: LoraParams, start: int = 0,
                       n_symbols: Optional[int] = None) -> np.ndarray:
    return demodulate(buf, params, start, n_symbols)[0]


def decode_payload(symbols, params: LoraParams) -> bytes:
    return coding.decode_words(symbols, params.payload_len, params.sf, params.cr)


def _detection_threshold(M):
    # well above the largest of M exponential noise bins (about ln M)
    return 2 * np.log(M) + 4


def _bin0_energy(x, start, ref_conj, twiddle):
    z = x[start:start + len(ref_conj)] * ref_conj
    return abs(z.sum() + (z * twiddle).sum()) ** 2


def detect_and_sync(buf: IqBuffer, params: LoraParams, min_run: int = 4) -> int:
    """Sample index of the first payload symbol of the (single) frame in ``buf``.

    The preamble is accepted once ``min_run`` consecutive symbol-length windows
    peak on the same dechirp bin (within one bin). Timing is then refined on
    the up-chirps and the frame end of preamble is located by the two
    down-chirps.
    """
    fs = buf.sample_rate
    M = params.n_bins
    N = params.samples_per_symbol(fs)
    x = np.asarray(buf.samples)
    n_win = len(x) // N
    if n_win < min_run:
        raise DetectionError("buffer too short to hold a preamble")
    spec = dechirp_bins(buf, params, np.arange(n_win) * N)
    power = np.abs(spec) ** 2
    mean = power.mean(axis=1)
    peak_bin = np.argmax(power, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mean > 0, power.max(axis=1) / mean, 0.0)
    valid = ratio >= _detection_threshold(M)

    run_start = None
    for w in range(n_win - min_run + 1):
        if not valid[w:w + min_run].all():
            continue
        d = np.diff(peak_bin[w:w + min_run])
        d = np.minimum(np.mod(d, M), np.mod(-d, M))
        if np.all(d <= 1):
            run_start = w
            break
    if run_start is None:
        raise DetectionError("no preamble found")

    # window start p sits k*N/M samples after a symbol boundary for peak bin k
    p = (run_start + 1) * N
    coarse = p - int(round(peak_bin[run_start + 1] * N / M))
    ref_conj = base_chirp(params, fs, "up").samples.conj()
    twiddle = np.exp(2j * np.pi * M * np.arange(N) / N)
    reach = int(np.ceil(N / M)) + 1
    best = None
    for delta in range(-reach, reach + 1):
        s = coarse + delta
        energy = 0.0
        for j in range(1, min_run - 1):
            q = s + j * N
            if 0 <= q and q + N <= len(x):
                energy += _bin0_energy(x, q, ref_conj, twiddle)
        if best is None or energy > best[0]:
            best = (energy, s)
    boundary = best[1]

    T = params.symbol_time
    max_steps = params.preamble_len + 8 + n_win
    for i in range(1, max_steps):
        q = boundary + int(round(i * T * fs))
        if q < 0:
            continue
        if q + N > len(x):
            break
        up = np.abs(dechirp_bins(buf, params, [q], "up")[0]) ** 2
        down = np.abs(dechirp_bins(buf, params, [q], "down")[0]) ** 2
        if down.max() > up.max() and down.max() >= _detection_threshold(M) * max(down.mean(), 1e-300):
            return q + int(round(2.25 * T * fs))
    raise DetectionError("preamble found but no down-chirps followed it")


@dataclass
class RxResult:
    symbols: np.ndarray
    payload: Optional[bytes]
    sync_offset: int
    per_symbol_peak_ratio: np.ndarray
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.payload is not None

    @property
    def low_confidence(self) -> np.ndarray:
        return self.per_symbol_peak_ratio < LOW_CONFIDENCE_RATIO


def receive(buf: IqBuffer, params: LoraParams, filter_channel: bool = True,
            sync_offset: Optional[int] = None) -> RxResult:
    """Detect, demodulate and decode one frame; decoding failures are reported, not raised."""
    if filter_channel:
        buf = channel_filter(buf, params.bw)
    if sync_offset is None:
        sync_offset = detect_and_sync(buf, params)
    symbols, ratio = demodulate(buf, params, sync_offset, params.n_payload_symbols)
    try:
        payload = decode_payload(symbols, params)
        error = None
    except DecodeError as exc:
        payload, error = None, str(exc)
    return RxResult(symbols, payload, int(sync_offset), ratio, error)


def estimate_snr(buf: IqBuffer, params: LoraParams, starts) -> float:
    """Receiver-style SNR (linear) from dechirped peak and off-peak bin energies.

    For an up-chirp in white noise behind an ideal channel filter this
    estimates signal power over the noise power inside the channel bandwidth.
    """
    power = np.abs(dechirp_bins(buf, params, starts)) ** 2
    M = params.n_bins
    peak = power.max(axis=1)
    noise = (power.sum(axis=1) - peak) / (M - 1)
    total_noise = noise.sum() * M
    if total_noise <= 0:
        return np.inf
    return max(float((peak - noise).sum() / total_noise), 0.0)


def up_symbol_starts(params: LoraParams, fs: float, start: int = 0):
    return [start + seg.start for seg in frame_layout(params, fs) if seg.kind == "up"]


def distortion_snr_db(buf: IqBuffer, params: LoraParams, start: int = 0,
                      cap_db: float = EVM_CAP_DB) -> float:
    """In-channel SNR a LoRa receiver would estimate on a noiseless frame starting at ``start``."""
    filtered = channel_filter(buf, params.bw)
    snr = estimate_snr(filtered, params, up_symbol_starts(params, buf.sample_rate, start))
    if snr <= 0:
        return -cap_db
    return float(min(10 * np.log10(snr), cap_db))


def snr_drop_from_distortion(distortion_db: float, reference_snr_db: float) -> float:
    """Receiver SNR lost at equal in-channel power (RSSI).

    The distorted signal's in-channel power splits into a coherent part and a
    noise-like part in the ratio given by ``distortion_db``; thermal noise sits
    ``reference_snr_db`` below the in-channel power.
    """
    d = 10 ** (distortion_db / 10)
    s0 = 10 ** (reference_snr_db / 10)
    return float(10 * np.log10(1 + (1 + s0) / d))


def snr_drop_db(buf: IqBuffer, params: LoraParams, start: int = 0,
                reference_snr_db: float = 10.0) -> float:
    return snr_drop_from_distortion(distortion_snr_db(buf, params, start), reference_snr_db)
