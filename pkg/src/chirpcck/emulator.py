"""Approximate a LoRa waveform with a stream of CCK codewords.

The target is cut into 8-sample chunks at the 11 MHz chip rate; each chunk
is replaced by the codeword with the largest real inner product. The chosen
codewords are inverted back to the payload bytes a WiFi card would need to
be handed so that it radiates exactly that chip stream.

Long targets are carried by a train of WiFi frames. Frames are placed on the
target's own time axis: the preamble and inter-frame gap of each frame occupy
target time that cannot be emulated, so the LoRa timing is preserved.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from . import cck
from .cck import CHIPS_PER_SYMBOL, MAX_PAYLOAD_BYTES, WifiFramePlan
from .errors import ConsistencyError, DomainError, InvalidSampleRate
from .iq import WIFI_CHIP_RATE, IqBuffer
from .rx import evm_snr

MATCH_BATCH = 1 << 15


def match_chunk(s, codebook=None):
    """Index and score of the codeword closest to the 8-sample chunk ``s``.

    The score is Re(s) . Re(c) + Im(s) . Im(c); ties go to the lowest index.
    """
    s = np.asarray(s, dtype=np.complex128)
    if s.shape != (CHIPS_PER_SYMBOL,):
        raise DomainError(f"a chunk holds exactly {CHIPS_PER_SYMBOL} samples, got shape {s.shape}")
    chips = cck.codebook_chips() if codebook is None else _chip_table(codebook)
    scores = s.real @ chips.real.T + s.imag @ chips.imag.T
    k = int(np.argmax(scores))
    return k, float(scores[k])


def _chip_table(codebook):
    if isinstance(codebook, np.ndarray):
        table = codebook
    else:
        table = np.array([c.chips for c in codebook])
    if table.shape != (256, CHIPS_PER_SYMBOL):
        raise DomainError("codebook must hold 256 eight-chip codewords")
    return table


def match_chunks(chunks: np.ndarray, workers: int = 1):
    """Vectorized :func:`match_chunk` over an (n, 8) array.

    Batches are independent, so with ``workers > 1`` they are scored on a
    thread pool; the result is identical to a sequential pass.
    """
    chunks = np.asarray(chunks, dtype=np.complex128).reshape(-1, CHIPS_PER_SYMBOL)
    chips_h = cck.codebook_chips().conj().T
    n = len(chunks)
    idx = np.empty(n, dtype=np.int64)
    score = np.empty(n, dtype=np.float64)

    def run(start):
        stop = min(start + MATCH_BATCH, n)
        sc = (chunks[start:stop] @ chips_h).real
        k = np.argmax(sc, axis=1)
        idx[start:stop] = k
        score[start:stop] = sc[np.arange(stop - start), k]

    starts = range(0, n, MATCH_BATCH)
    if workers > 1 and n > MATCH_BATCH:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for start in starts:
            run(start)
    return idx, score


@dataclass
class EmulationReport:
    chunk_count: int
    per_chunk_score: np.ndarray = field(repr=False)
    codeword_indices: np.ndarray = field(repr=False)
    evm_snr_db: float
    distortion_fraction: float = 0.0
    overhead_to_payload: float = 0.0
    padded_chunks: int = 0
    snr_drop_db: Optional[float] = None

    def summary(self) -> dict:
        scores = self.per_chunk_score
        return {
            "chunk_count": int(self.chunk_count),
            "padded_chunks": int(self.padded_chunks),
            "evm_snr_db": float(self.evm_snr_db),
            "snr_drop_db": None if self.snr_drop_db is None else float(self.snr_drop_db),
            "distortion_fraction": float(self.distortion_fraction),
            "overhead_to_payload": float(self.overhead_to_payload),
            "score_mean": float(scores.mean()) if len(scores) else 0.0,
            "score_min": float(scores.min()) if len(scores) else 0.0,
            "exact_chunks": int(np.sum(np.isclose(scores, CHIPS_PER_SYMBOL))),
        }


@dataclass
class Emulation:
    report: EmulationReport
    emulated: IqBuffer
    payload_bits: np.ndarray = field(repr=False)
    scrambler_enabled: bool = True
    scrambler_seed: int = cck.DEFAULT_SCRAMBLER_SEED
    ref_phase: int = 0

    @property
    def payload(self) -> bytes:
        return cck.bits_to_bytes(self.payload_bits)


def _check_target(target):
    if target.sample_rate != WIFI_CHIP_RATE:
        raise InvalidSampleRate(
            f"emulation runs at the {WIFI_CHIP_RATE:g} Hz chip rate, target is at {target.sample_rate:g} Hz")
    if len(target) == 0:
        raise DomainError("target waveform is empty")


def _pad_to_chunks(x):
    pad = -len(x) % CHIPS_PER_SYMBOL
    if pad:
        x = np.concatenate([x, np.zeros(pad, dtype=np.complex128)])
    return x, pad


def _payload_bits(indices, ref_phase, scrambler_enabled, scrambler_seed):
    quads = cck.codebook_quadrants()[indices]
    bits = cck.bits_from_quadrants(quads, ref_phase)
    if scrambler_enabled:
        bits = cck.descramble(bits, scrambler_seed)
    return bits, (int(quads[-1, 0]) if len(quads) else ref_phase)


def emulate_waveform(target: IqBuffer, scrambler_enabled: bool = True,
                     scrambler_seed: int = cck.DEFAULT_SCRAMBLER_SEED, ref_phase: int = 0,
                     workers: int = 1) -> Emulation:
    _check_target(target)
    x, pad = _pad_to_chunks(np.asarray(target.samples))
    idx, score = match_chunks(x.reshape(-1, CHIPS_PER_SYMBOL), workers=workers)
    emulated = cck.codebook_chips()[idx].ravel()
    bits, _ = _payload_bits(idx, ref_phase, scrambler_enabled, scrambler_seed)
    report = EmulationReport(
        chunk_count=len(idx),
        per_chunk_score=score,
        codeword_indices=idx,
        evm_snr_db=evm_snr(IqBuffer(x, WIFI_CHIP_RATE), IqBuffer(emulated, WIFI_CHIP_RATE)),
        padded_chunks=1 if pad else 0,
    )
    return Emulation(report, IqBuffer(emulated, WIFI_CHIP_RATE), bits,
                     scrambler_enabled, scrambler_seed, ref_phase % 4)


class TimelineSegment(NamedTuple):
    """A span of the rendered transmission, in samples at 11 MHz."""
    kind: str
    start: int
    stop: int

    @property
    def duration_us(self) -> float:
        return (self.stop - self.start) / WIFI_CHIP_RATE * 1e6

    @property
    def start_us(self) -> float:
        return self.start / WIFI_CHIP_RATE * 1e6


@dataclass
class TransmissionPlan:
    frames: List[WifiFramePlan]
    timeline: List[TimelineSegment]
    ifs_us: float
    preamble_kind: str
    target_len: int
    report: EmulationReport = field(repr=False)

    @property
    def target_offset(self) -> int:
        """Rendered sample index that lines up with target sample 0."""
        return self.timeline[0].stop

    @property
    def total_samples(self) -> int:
        return self.timeline[-1].stop

    @property
    def total_us(self) -> float:
        return self.total_samples / WIFI_CHIP_RATE * 1e6

    def _samples_of(self, *kinds):
        return sum(seg.stop - seg.start for seg in self.timeline if seg.kind in kinds)

    @property
    def overhead_us(self) -> float:
        return self._samples_of("preamble", "ifs") / WIFI_CHIP_RATE * 1e6

    @property
    def payload_us(self) -> float:
        return self._samples_of("payload") / WIFI_CHIP_RATE * 1e6

    @property
    def distortion_fraction(self) -> float:
        return self.overhead_us / self.total_us

    @property
    def overhead_to_payload(self) -> float:
        return self.overhead_us / self.payload_us

    def payload_segments(self):
        return [seg for seg in self.timeline if seg.kind == "payload"]

    def frame_starts_us(self):
        return [seg.start_us for seg in self.timeline if seg.kind == "preamble"]


def preamble_samples(kind: str) -> int:
    if kind not in cck.PREAMBLE_US:
        raise DomainError(f"preamble kind must be 'long' or 'short', got {kind!r}")
    return int(round(cck.PREAMBLE_US[kind] * WIFI_CHIP_RATE / 1e6))


def segment_transmission(target: IqBuffer, max_payload_bytes: int = MAX_PAYLOAD_BYTES,
                         frame_payload_us: Optional[float] = None, ifs_us: float = 12.0,
                         preamble_kind: str = "short", scrambler_enabled: bool = True,
                         scrambler_seed: int = cck.DEFAULT_SCRAMBLER_SEED, ref_phase: int = 0,
                         workers: int = 1) -> TransmissionPlan:
    """Split a target into a train of WiFi frames laid out on the target's time axis.

    Frame ``i`` carries target samples ``[i*P, i*P + L)`` where ``L`` is the
    frame payload length and ``P = L + ifs + preamble``. The differential phi1
    state carries over from frame to frame; the scrambler restarts per frame.
    """
    _check_target(target)
    if not 1 <= max_payload_bytes <= MAX_PAYLOAD_BYTES:
        raise DomainError(f"max_payload_bytes must be in 1..{MAX_PAYLOAD_BYTES}, got {max_payload_bytes}")
    if ifs_us < 0:
        raise DomainError("inter-frame space cannot be negative")
    n_bytes = max_payload_bytes
    if frame_payload_us is not None:
        n_bytes = int(round(frame_payload_us * 1e-6 * WIFI_CHIP_RATE / CHIPS_PER_SYMBOL))
        if not 1 <= n_bytes <= max_payload_bytes:
            raise DomainError(f"{frame_payload_us} us of payload needs {n_bytes} bytes, "
                              f"outside 1..{max_payload_bytes}")
    L = n_bytes * CHIPS_PER_SYMBOL
    pre = preamble_samples(preamble_kind)
    ifs = int(round(ifs_us * 1e-6 * WIFI_CHIP_RATE))
    period = pre + L + ifs

    x = np.asarray(target.samples)
    spans = []
    for start in range(0, len(x), period):
        spans.append((start, min(start + L, len(x))))

    padded = []
    pad_count = 0
    for a, b in spans:
        seg, pad = _pad_to_chunks(x[a:b])
        pad_count += bool(pad)
        padded.append(seg)
    chunks = np.concatenate(padded).reshape(-1, CHIPS_PER_SYMBOL)
    idx, score = match_chunks(chunks, workers=workers)

    frames, timeline = [], []
    ref = ref_phase % 4
    cursor = 0
    offset = 0
    for seg in padded:
        n = len(seg) // CHIPS_PER_SYMBOL
        frame_idx = idx[cursor:cursor + n]
        cursor += n
        bits, last_q1 = _payload_bits(frame_idx, ref, scrambler_enabled, scrambler_seed)
        frames.append(WifiFramePlan(cck.bits_to_bytes(bits), preamble_kind, scrambler_enabled,
                                    scrambler_seed, ref))
        ref = last_q1
        timeline.append(TimelineSegment("preamble", offset, offset + pre))
        timeline.append(TimelineSegment("payload", offset + pre, offset + pre + len(seg)))
        timeline.append(TimelineSegment("ifs", offset + pre + len(seg), offset + pre + len(seg) + ifs))
        offset += period

    chips = cck.codebook_chips()[idx].ravel()
    emulated_target = np.concatenate(padded)
    report = EmulationReport(
        chunk_count=len(idx),
        per_chunk_score=score,
        codeword_indices=idx,
        evm_snr_db=evm_snr(IqBuffer(emulated_target, WIFI_CHIP_RATE), IqBuffer(chips, WIFI_CHIP_RATE)),
        padded_chunks=pad_count,
    )
    plan = TransmissionPlan(frames, timeline, float(ifs_us), preamble_kind, len(x), report)
    report.distortion_fraction = plan.distortion_fraction
    report.overhead_to_payload = plan.overhead_to_payload
    return plan


def plan_chips(plan: TransmissionPlan) -> IqBuffer:
    """Chip stream the plan's frames radiate, regenerated from their payload bytes."""
    parts = [cck.modulate_payload(f).samples for f in plan.frames]
    return IqBuffer(np.concatenate(parts), WIFI_CHIP_RATE)


def render_transmission(plan: TransmissionPlan, emulated_chips: Optional[IqBuffer] = None,
                        preamble: str = "waveform") -> IqBuffer:
    """As-transmitted waveform: preamble, payload chips and a silent gap per frame.

    ``preamble='zeros'`` renders preambles as silence instead of the PLCP
    waveform.
    """
    if preamble not in ("waveform", "zeros"):
        raise DomainError(f"preamble rendering must be 'waveform' or 'zeros', got {preamble!r}")
    if emulated_chips is None:
        emulated_chips = plan_chips(plan)
    chips = np.asarray(emulated_chips.samples)
    payloads = plan.payload_segments()
    expected = sum(seg.stop - seg.start for seg in payloads)
    if len(chips) != expected:
        raise ConsistencyError(f"plan carries {expected} payload chips, got {len(chips)}")
    out = np.zeros(plan.total_samples, dtype=np.complex128)
    cursor = 0
    frame_iter = iter(plan.frames)
    for seg in plan.timeline:
        if seg.kind == "preamble":
            frame = next(frame_iter)
            if preamble == "waveform":
                out[seg.start:seg.stop] = cck.preamble_waveform(plan.preamble_kind, len(frame.payload)).samples
        elif seg.kind == "payload":
            n = seg.stop - seg.start
            out[seg.start:seg.stop] = chips[cursor:cursor + n]
            cursor += n
    return IqBuffer(out, WIFI_CHIP_RATE)


def target_aligned(plan: TransmissionPlan, rendered: IqBuffer) -> IqBuffer:
    """The slice of a rendered transmission that overlays the original target."""
    start = plan.target_offset
    return rendered.with_samples(rendered.samples[start:start + plan.target_len])
