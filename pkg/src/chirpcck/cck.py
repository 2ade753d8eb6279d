"""802.11b 11 Mbit/s CCK physical layer at one sample per chip.

Phases are quantized to quarter turns. Internally a phase is carried as its
quadrant ``q`` (phase = q * pi/2) so chip values stay exact.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .iq import WIFI_CHIP_RATE, IqBuffer

MAX_PAYLOAD_BYTES = 4095
CHIPS_PER_SYMBOL = 8

LONG_PREAMBLE_SEED = 0b1101100
SHORT_PREAMBLE_SEED = 0b0011011
DEFAULT_SCRAMBLER_SEED = LONG_PREAMBLE_SEED

BARKER = np.array([1, -1, 1, 1, -1, 1, 1, 1, -1, -1, -1], dtype=np.float64)
PREAMBLE_US = {"long": 192, "short": 96}

_UNIT = np.array([1, 1j, -1, -1j], dtype=np.complex128)

# (d0, d1) -> phase change in quadrants, even-numbered symbols
_DQPSK = {(0, 0): 0, (0, 1): 1, (1, 1): 2, (1, 0): 3}
_DQPSK_INV = {q: bits for bits, q in _DQPSK.items()}
_DQPSK_LUT = np.array([_DQPSK[(b & 1, b >> 1)] for b in range(4)])
_DQPSK_INV_LUT = np.array([_DQPSK_INV[q][0] | (_DQPSK_INV[q][1] << 1) for q in range(4)])


def _quadrant(phase):
    q = phase / (np.pi / 2)
    r = np.round(q)
    if abs(q - r) > 1e-9:
        raise DomainError(f"phase {phase!r} is not a multiple of pi/2")
    return int(r) % 4


def _spread_quadrants(q1, q2, q3, q4):
    q = np.stack(np.broadcast_arrays(
        q1 + q2 + q3 + q4, q1 + q3 + q4, q1 + q2 + q4, q1 + q4 + 2,
        q1 + q2 + q3, q1 + q3, q1 + q2 + 2, q1), axis=-1)
    return _UNIT[np.mod(q, 4)]


def cck_spread(phases) -> np.ndarray:
    """Eight CCK chips for the phase tuple (phi1, phi2, phi3, phi4) in radians."""
    if len(phases) != 4:
        raise DomainError("CCK spreading takes exactly four phases")
    q = [_quadrant(p) for p in phases]
    return _spread_quadrants(*q)


@dataclass(frozen=True)
class CckCodeword:
    quadrants: tuple
    chips: np.ndarray = field(repr=False, compare=False)

    @property
    def phases(self):
        return tuple(q * np.pi / 2 for q in self.quadrants)

    @property
    def index(self) -> int:
        q1, q2, q3, q4 = self.quadrants
        return q1 * 64 + q2 * 16 + q3 * 4 + q4


@lru_cache(maxsize=None)
def _codebook_arrays():
    quads = np.array(list(itertools.product(range(4), repeat=4)), dtype=np.int64)
    chips = _spread_quadrants(quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3])
    quads.setflags(write=False)
    chips.setflags(write=False)
    return quads, chips


def codebook_quadrants() -> np.ndarray:
    """(256, 4) quadrant table, lexicographic in (phi1, phi2, phi3, phi4)."""
    return _codebook_arrays()[0]


def codebook_chips() -> np.ndarray:
    """(256, 8) chip table matching :func:`codebook_quadrants`."""
    return _codebook_arrays()[1]


def build_codebook():
    quads, chips = _codebook_arrays()
    return tuple(CckCodeword(tuple(int(v) for v in q), c) for q, c in zip(quads, chips))


def codebook_digest() -> str:
    quads, chips = _codebook_arrays()
    h = hashlib.sha256()
    h.update(quads.astype("<i1").tobytes())
    h.update(np.ascontiguousarray(chips).view(np.float64).astype("<i1").tobytes())
    return h.hexdigest()


def _parity_flag(symbol_parity):
    if symbol_parity in ("even", 0, False):
        return 0
    if symbol_parity in ("odd", 1, True):
        return 1
    raise DomainError(f"symbol parity must be 'even' or 'odd', got {symbol_parity!r}")


def quadrants_from_byte(byte: int, odd: int, prev_q1: int):
    d = [(byte >> i) & 1 for i in range(8)]
    q1 = (prev_q1 + _DQPSK[(d[0], d[1])] + 2 * odd) % 4
    return q1, 2 * d[2] + d[3], 2 * d[4] + d[5], 2 * d[6] + d[7]


def byte_from_quadrants(quads, odd: int, prev_q1: int) -> int:
    q1, q2, q3, q4 = quads
    d0, d1 = _DQPSK_INV[(q1 - prev_q1 - 2 * odd) % 4]
    byte = d0 | d1 << 1
    for i, q in enumerate((q2, q3, q4)):
        byte |= ((q >> 1) & 1) << (2 + 2 * i)
        byte |= (q & 1) << (3 + 2 * i)
    return byte


def phases_from_bits(byte: int, symbol_parity, prev_phi1: float):
    """Phase tuple for one byte; d0 is the least significant bit."""
    if not 0 <= byte < 256:
        raise DomainError(f"byte must be in 0..255, got {byte}")
    quads = quadrants_from_byte(byte, _parity_flag(symbol_parity), _quadrant(prev_phi1))
    return tuple(q * np.pi / 2 for q in quads)


def bits_from_phases(phases, symbol_parity, prev_phi1: float) -> int:
    quads = tuple(_quadrant(p) for p in phases)
    return byte_from_quadrants(quads, _parity_flag(symbol_parity), _quadrant(prev_phi1))


def _check_seed(seed):
    if not 0 <= seed < 128:
        raise DomainError(f"scrambler seed must be 7 bits, got {seed}")


def scramble(bits, seed: int = DEFAULT_SCRAMBLER_SEED) -> np.ndarray:
    """Self-synchronizing scrambler with feedback z^-4 + z^-7.

    Bit ``k-1`` of ``seed`` is the register output delayed by ``k`` bits.
    """
    _check_seed(seed)
    bits = np.asarray(bits, dtype=np.uint8)
    out = np.empty_like(bits)
    state = seed
    for i, x in enumerate(bits.tolist()):
        y = x ^ ((state >> 3) & 1) ^ ((state >> 6) & 1)
        out[i] = y
        state = ((state << 1) | y) & 0x7F
    return out


def descramble(bits, seed: int = DEFAULT_SCRAMBLER_SEED) -> np.ndarray:
    _check_seed(seed)
    bits = np.asarray(bits, dtype=np.uint8)
    history = np.array([(seed >> (k - 1)) & 1 for k in range(7, 0, -1)], dtype=np.uint8)
    ext = np.concatenate([history, bits])
    n = len(bits)
    return bits ^ ext[3:3 + n] ^ ext[0:n]


def bytes_to_bits(data) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="little")


def bits_to_bytes(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def quadrants_from_bits(bits, ref_q1: int = 0) -> np.ndarray:
    """(n, 4) quadrants for on-air bits, threading the differential phi1 state."""
    b = np.asarray(bits, dtype=np.int64).reshape(-1, 8)
    n = len(b)
    odd = np.arange(n) % 2
    delta = _DQPSK_LUT[b[:, 0] | (b[:, 1] << 1)] + 2 * odd
    q1 = np.mod(ref_q1 + np.cumsum(delta), 4)
    return np.stack([q1, 2 * b[:, 2] + b[:, 3], 2 * b[:, 4] + b[:, 5], 2 * b[:, 6] + b[:, 7]], axis=1)


def bits_from_quadrants(quads, ref_q1: int = 0) -> np.ndarray:
    """Inverse of :func:`quadrants_from_bits`; returns on-air bits."""
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    n = len(quads)
    prev = np.concatenate([[ref_q1], quads[:-1, 0]]) if n else np.zeros(0, dtype=np.int64)
    pair = _DQPSK_INV_LUT[np.mod(quads[:, 0] - prev - 2 * (np.arange(n) % 2), 4)]
    bits = np.empty((n, 8), dtype=np.uint8)
    bits[:, 0] = pair & 1
    bits[:, 1] = pair >> 1
    for i in range(3):
        q = quads[:, 1 + i]
        bits[:, 2 + 2 * i] = q >> 1
        bits[:, 3 + 2 * i] = q & 1
    return bits.ravel()


def codeword_indices(quads) -> np.ndarray:
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    return quads @ np.array([64, 16, 4, 1])


@dataclass(frozen=True)
class WifiFramePlan:
    """One 11 Mbit/s PSDU to inject.

    ``ref_phase`` is the phi1 quadrant the first payload symbol is
    differentially encoded against.
    """

    payload: bytes
    preamble_kind: str = "short"
    scrambler_enabled: bool = True
    scrambler_seed: int = DEFAULT_SCRAMBLER_SEED
    ref_phase: int = 0

    rate_mbps = 11

    def __post_init__(self):
        payload = bytes(self.payload)
        if not 1 <= len(payload) <= MAX_PAYLOAD_BYTES:
            raise DomainError(f"payload must hold 1..{MAX_PAYLOAD_BYTES} bytes, got {len(payload)}")
        if self.preamble_kind not in PREAMBLE_US:
            raise DomainError(f"preamble kind must be 'long' or 'short', got {self.preamble_kind!r}")
        _check_seed(self.scrambler_seed)
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "ref_phase", int(self.ref_phase) % 4)

    @property
    def duration_us(self) -> float:
        return len(self.payload) * CHIPS_PER_SYMBOL / WIFI_CHIP_RATE * 1e6


def on_air_bits(plan: WifiFramePlan) -> np.ndarray:
    bits = bytes_to_bits(plan.payload)
    if plan.scrambler_enabled:
        bits = scramble(bits, plan.scrambler_seed)
    return bits


def payload_quadrants(plan: WifiFramePlan) -> np.ndarray:
    return quadrants_from_bits(on_air_bits(plan), plan.ref_phase)


def modulate_payload(plan: WifiFramePlan) -> IqBuffer:
    if len(plan.payload) > MAX_PAYLOAD_BYTES:
        raise DomainError("payload exceeds the 802.11b PSDU limit")
    quads = payload_quadrants(plan)
    chips = codebook_chips()[codeword_indices(quads)]
    return IqBuffer(chips.ravel(), WIFI_CHIP_RATE)


def demodulate_payload(buf: IqBuffer, scrambler_enabled=True, scrambler_seed=DEFAULT_SCRAMBLER_SEED,
                       ref_phase=0) -> bytes:
    """Codebook-search demodulator for chip-aligned CCK payload samples."""
    x = np.asarray(buf.samples)
    if len(x) % CHIPS_PER_SYMBOL:
        raise DomainError("payload samples must be a whole number of CCK symbols")
    scores = (x.reshape(-1, CHIPS_PER_SYMBOL) @ codebook_chips().conj().T).real
    quads = codebook_quadrants()[np.argmax(scores, axis=1)]
    bits = bits_from_quadrants(quads, ref_phase)
    if scrambler_enabled:
        bits = descramble(bits, scrambler_seed)
    return bits_to_bytes(bits)


def _crc16(bits):
    reg = 0xFFFF
    for b in bits:
        fb = int(b) ^ (reg >> 15)
        reg = (reg << 1) & 0xFFFF
        if fb:
            reg ^= 0x1021
    reg ^= 0xFFFF
    return [(reg >> (15 - i)) & 1 for i in range(16)]


def _field_bits(value, width):
    return [(value >> i) & 1 for i in range(width)]


def plcp_header_bits(psdu_len: int) -> np.ndarray:
    """SIGNAL, SERVICE, LENGTH and CRC fields for an 11 Mbit/s PSDU."""
    length_us = -(-8 * psdu_len // 11)
    ext = 1 if length_us * 11 - 8 * psdu_len >= 8 else 0
    service = 0x04 | (ext << 7)
    bits = _field_bits(0x6E, 8) + _field_bits(service, 8) + _field_bits(length_us, 16)
    return np.array(bits + _crc16(bits), dtype=np.uint8)


def _barker_spread(quads):
    return np.repeat(_UNIT[np.mod(quads, 4)], len(BARKER)) * np.tile(BARKER, len(quads))


def preamble_waveform(kind: str = "short", psdu_len: int = 0) -> IqBuffer:
    """PLCP preamble and header at 11 MHz: 192 us (long) or 96 us (short)."""
    if kind == "long":
        sync = np.ones(128, dtype=np.uint8)
        sfd, seed = 0xF3A0, LONG_PREAMBLE_SEED
    elif kind == "short":
        sync = np.zeros(56, dtype=np.uint8)
        sfd, seed = 0x05CF, SHORT_PREAMBLE_SEED
    else:
        raise DomainError(f"preamble kind must be 'long' or 'short', got {kind!r}")
    bits = np.concatenate([sync, np.array(_field_bits(sfd, 16), dtype=np.uint8),
                           plcp_header_bits(psdu_len)])
    bits = scramble(bits, seed)
    if kind == "long":
        quads = np.cumsum(2 * bits.astype(np.int64))
    else:
        n_dbpsk = len(sync) + 16
        q_dbpsk = np.cumsum(2 * bits[:n_dbpsk].astype(np.int64))
        pairs = bits[n_dbpsk:].reshape(-1, 2).astype(np.int64)
        q_dqpsk = q_dbpsk[-1] + np.cumsum(_DQPSK_LUT[pairs[:, 0] | (pairs[:, 1] << 1)])
        quads = np.concatenate([q_dbpsk, q_dqpsk])
    return IqBuffer(_barker_spread(quads), WIFI_CHIP_RATE)
