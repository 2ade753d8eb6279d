"""2.4 GHz LoRa baseband synthesis (implicit header mode).

A frame is laid out as ``preamble_len`` base up-chirps, two sync-word
symbols, two base down-chirps, a quarter symbol of silence and the coded
payload symbols. Data symbols are cyclic time shifts of the base up-chirp.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import coding
from .errors import DomainError, InvalidSampleRate
from .iq import IqBuffer

MAX_BW = 1.6e6
SILENCE_SYMBOLS = 0.25


@dataclass(frozen=True)
class LoraParams:
    sf: int
    bw: float
    cr: int = 5
    preamble_len: int = 8
    sync_word: tuple = (0, 0)
    payload_len: int = 0

    def __post_init__(self):
        if not 5 <= self.sf <= 12:
            raise DomainError(f"spreading factor must be in 5..12, got {self.sf}")
        if not 0 < self.bw <= MAX_BW:
            raise DomainError(f"bandwidth must be in (0, {MAX_BW:g}] Hz, got {self.bw}")
        if self.cr not in (5, 6, 7, 8):
            raise DomainError(f"coding rate index must be in 5..8, got {self.cr}")
        if self.preamble_len < 2:
            raise DomainError("preamble needs at least two up-chirps")
        sync = tuple(int(v) for v in self.sync_word)
        if len(sync) != 2 or not all(0 <= v < 2 ** self.sf for v in sync):
            raise DomainError(f"sync word must be two symbol values below {2 ** self.sf}")
        if self.payload_len < 0:
            raise DomainError("payload length cannot be negative")
        object.__setattr__(self, "sync_word", sync)
        object.__setattr__(self, "bw", float(self.bw))

    @property
    def n_bins(self) -> int:
        return 2 ** self.sf

    @property
    def symbol_time(self) -> float:
        return 2 ** self.sf / self.bw

    @property
    def n_payload_symbols(self) -> int:
        return coding.n_payload_symbols(self.payload_len, self.sf, self.cr)

    @property
    def payload_offset_symbols(self) -> float:
        """Start of the payload, in symbol periods from the frame start."""
        return self.preamble_len + 4 + SILENCE_SYMBOLS

    @property
    def airtime(self) -> float:
        return (self.payload_offset_symbols + self.n_payload_symbols) * self.symbol_time

    def samples_per_symbol(self, fs: float) -> int:
        return int(round(self.symbol_time * fs))

    def replace(self, **changes) -> "LoraParams":
        fields = dict(sf=self.sf, bw=self.bw, cr=self.cr, preamble_len=self.preamble_len,
                      sync_word=self.sync_word, payload_len=self.payload_len)
        fields.update(changes)
        return LoraParams(**fields)


@dataclass(frozen=True)
class LoraFrame:
    params: LoraParams
    payload: bytes

    def __post_init__(self):
        payload = bytes(self.payload)
        if len(payload) != self.params.payload_len:
            raise DomainError(
                f"payload has {len(payload)} bytes, params expect {self.params.payload_len}")
        object.__setattr__(self, "payload", payload)


class Segment(NamedTuple):
    """One symbol slot of a frame: kind is 'up', 'down' or 'silence'."""
    kind: str
    value: int
    start: int
    stop: int
    at: float  # exact start time in symbol periods


def _check_rate(params, fs):
    if fs < params.bw:
        raise InvalidSampleRate(f"sample rate {fs:g} Hz is below the bandwidth {params.bw:g} Hz")


def _phase(u, n_bins):
    # u is time in chips within one symbol; frequency runs -bw/2 .. +bw/2
    return np.pi * u * u / n_bins - np.pi * u


def _chips_axis(params, fs, n, offset=0.0):
    return (np.arange(n) + offset) * (params.bw / fs)


def base_chirp(params: LoraParams, fs: float, direction: str = "up") -> IqBuffer:
    _check_rate(params, fs)
    if direction not in ("up", "down"):
        raise DomainError(f"direction must be 'up' or 'down', got {direction!r}")
    u = _chips_axis(params, fs, params.samples_per_symbol(fs))
    sign = 1.0 if direction == "up" else -1.0
    return IqBuffer(np.exp(1j * sign * _phase(u, params.n_bins)), fs)


def _symbol_samples(value, params, fs, n, offset=0.0):
    M = params.n_bins
    u = np.mod(_chips_axis(params, fs, n, offset) + value, M)
    return np.exp(1j * _phase(u, M))


def modulate_symbol(value: int, params: LoraParams, fs: float) -> IqBuffer:
    _check_rate(params, fs)
    if not 0 <= value < params.n_bins:
        raise DomainError(f"symbol value must be in [0, {params.n_bins}), got {value}")
    return IqBuffer(_symbol_samples(value, params, fs, params.samples_per_symbol(fs)), fs)


def encode_payload(payload: bytes, params: LoraParams) -> np.ndarray:
    if len(payload) != params.payload_len:
        raise DomainError(f"payload has {len(payload)} bytes, params expect {params.payload_len}")
    return coding.encode_words(bytes(payload), params.sf, params.cr)


def frame_layout(params: LoraParams, fs: float, symbols=None):
    """Sample-exact symbol slots of a frame.

    Slot boundaries are the nearest samples to the exact symbol start times, so
    long frames do not accumulate rounding drift.
    """
    T = params.symbol_time
    slots = [("up", 0, i) for i in range(params.preamble_len)]
    p = params.preamble_len
    slots += [("up", params.sync_word[0], p), ("up", params.sync_word[1], p + 1)]
    slots += [("down", 0, p + 2), ("down", 0, p + 3), ("silence", 0, p + 4)]
    if symbols is None:
        symbols = [0] * params.n_payload_symbols
    t0 = params.payload_offset_symbols
    bounds = []
    for kind, value, k in slots:
        stop = k + (SILENCE_SYMBOLS if kind == "silence" else 1)
        bounds.append((kind, value, k, stop))
    bounds += [("up", int(s), t0 + j, t0 + j + 1) for j, s in enumerate(symbols)]
    return [Segment(kind, value, int(round(a * T * fs)), int(round(b * T * fs)), float(a))
            for kind, value, a, b in bounds]


def build_frame_waveform(frame: LoraFrame, fs: float) -> IqBuffer:
    params = frame.params
    _check_rate(params, fs)
    symbols = encode_payload(frame.payload, params)
    layout = frame_layout(params, fs, symbols)
    M = params.n_bins
    T = params.symbol_time
    out = np.zeros(layout[-1].stop if layout else 0, dtype=np.complex128)
    theta = 0.0
    prev_phase = 0.0
    for seg in layout:
        if seg.kind == "silence":
            continue
        n = seg.stop - seg.start
        # first sample sits this many samples after the exact slot start
        offset = seg.start - seg.at * T * fs
        if seg.kind == "up":
            start_phase = _phase(float(seg.value), M)
            x = _symbol_samples(seg.value, params, fs, n, offset)
        else:
            start_phase = 0.0
            u = _chips_axis(params, fs, n, offset)
            x = np.exp(-1j * _phase(np.mod(u, M), M))
        theta += prev_phase - start_phase
        out[seg.start:seg.stop] = x * np.exp(1j * theta)
        prev_phase = start_phase
    return IqBuffer(out, fs)


def payload_len_for_airtime(sf, bw, cr, airtime, preamble_len=8, max_len=255) -> int:
    """Payload size whose implicit-header frame airtime is closest to ``airtime``.

    Among sizes with equal airtime the largest is returned, so the last
    interleaver block is filled.
    """
    best = None
    for n in range(max_len + 1):
        p = LoraParams(sf, bw, cr, preamble_len=preamble_len, payload_len=n)
        key = (abs(p.airtime - airtime), -n)
        if best is None or key < best[0]:
            best = (key, n)
    return best[1]
