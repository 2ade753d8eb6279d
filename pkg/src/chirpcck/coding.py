"""LoRa payload coding: Hamming FEC, diagonal interleaving and Gray mapping.

Nibbles are taken low half first. A codeword for coding rate 4/cr holds the
four data bits in bits 0..3 followed by ``cr - 4`` parity bits. Each block of
``sf`` codewords is interleaved into ``cr`` symbols of ``sf`` bits.
"""

from __future__ import annotations

import numpy as np

from .errors import DecodeError, DomainError

# parity equations as data-bit masks, in codeword order
_PARITY_MASKS = {
    5: (0b1111,),
    6: (0b0111, 0b1110),
    7: (0b0111, 0b1110, 0b1011),
    8: (0b0111, 0b1110, 0b1011, 0b1101),
}


def _check_cr(cr):
    if cr not in _PARITY_MASKS:
        raise DomainError(f"coding rate index must be in 5..8, got {cr}")


def _parity(x):
    return bin(x).count("1") & 1


def hamming_encode(nibble: int, cr: int) -> int:
    _check_cr(cr)
    word = nibble & 0xF
    for i, mask in enumerate(_PARITY_MASKS[cr]):
        word |= _parity(nibble & mask) << (4 + i)
    return word


def _syndrome(word, cr):
    syn = 0
    for i, mask in enumerate(_PARITY_MASKS[cr]):
        syn |= (_parity(word & mask) ^ ((word >> (4 + i)) & 1)) << i
    return syn


def _build_correction_tables():
    tables = {}
    for cr in (7, 8):
        table = {}
        for bit in range(cr):
            table[_syndrome(1 << bit, cr)] = bit
        tables[cr] = table
    return tables


_CORRECTABLE = _build_correction_tables()


def hamming_decode(word: int, cr: int):
    """Return ``(nibble, ok)``; ``ok`` is False for a detected, uncorrectable error."""
    _check_cr(cr)
    syn = _syndrome(word, cr)
    if syn == 0:
        return word & 0xF, True
    table = _CORRECTABLE.get(cr)
    if table is None or syn not in table:
        return word & 0xF, False
    return (word ^ (1 << table[syn])) & 0xF, True


def interleave(codewords, sf: int, cr: int):
    """Diagonal interleaver: ``sf`` codewords of ``cr`` bits -> ``cr`` words of ``sf`` bits."""
    if len(codewords) != sf:
        raise DomainError(f"interleaver block needs {sf} codewords, got {len(codewords)}")
    words = []
    for j in range(cr):
        w = 0
        for i in range(sf):
            w |= ((codewords[(i + j) % sf] >> j) & 1) << i
        words.append(w)
    return words


def deinterleave(words, sf: int, cr: int):
    if len(words) != cr:
        raise DomainError(f"deinterleaver block needs {cr} words, got {len(words)}")
    codewords = [0] * sf
    for j, w in enumerate(words):
        for i in range(sf):
            codewords[(i + j) % sf] |= ((w >> i) & 1) << j
    return codewords


def gray_encode(value: int) -> int:
    return value ^ (value >> 1)


def gray_decode(word: int) -> int:
    value = word
    shift = word >> 1
    while shift:
        value ^= shift
        shift >>= 1
    return value


def n_payload_symbols(payload_len: int, sf: int, cr: int) -> int:
    blocks = -(-2 * payload_len // sf)
    return blocks * cr


def _nibbles(payload):
    out = []
    for b in payload:
        out += [b & 0xF, b >> 4]
    return out


def interleaved_words(payload: bytes, sf: int, cr: int):
    """Encoder output before Gray mapping, one ``sf``-bit word per symbol."""
    _check_cr(cr)
    nibbles = _nibbles(payload)
    nibbles += [0] * (-len(nibbles) % sf)
    words = []
    for start in range(0, len(nibbles), sf):
        block = [hamming_encode(n, cr) for n in nibbles[start:start + sf]]
        words += interleave(block, sf, cr)
    return words


def encode_words(payload: bytes, sf: int, cr: int) -> np.ndarray:
    return np.array([gray_decode(w) for w in interleaved_words(payload, sf, cr)], dtype=np.int64)


def decode_words(symbols, payload_len: int, sf: int, cr: int) -> bytes:
    _check_cr(cr)
    symbols = [int(s) for s in symbols]
    expected = n_payload_symbols(payload_len, sf, cr)
    if len(symbols) != expected:
        raise DomainError(f"expected {expected} symbols for {payload_len} bytes, got {len(symbols)}")
    mask = (1 << sf) - 1
    nibbles = []
    for block, start in enumerate(range(0, len(symbols), cr)):
        words = [gray_encode(s) & mask for s in symbols[start:start + cr]]
        for k, cw in enumerate(deinterleave(words, sf, cr)):
            nibble, ok = hamming_decode(cw, cr)
            if not ok:
                raise DecodeError(block, k)
            nibbles.append(nibble)
    nibbles = nibbles[:2 * payload_len]
    return bytes(lo | (hi << 4) for lo, hi in zip(nibbles[0::2], nibbles[1::2]))
