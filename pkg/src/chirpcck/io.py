"""On-disk formats: cf32 IQ with a JSON sidecar, radiotap pcap, CSV and JSON reports."""

from __future__ import annotations

import csv
import json
import struct
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import cck
from .cck import WifiFramePlan
from .emulator import EmulationReport, TimelineSegment, TransmissionPlan
from .errors import DomainError, FormatError
from .iq import IqBuffer

SCHEMA_VERSION = "1.0"

LINKTYPE_IEEE802_11_RADIOTAP = 127
RADIOTAP_FLAGS = 1 << 1
RADIOTAP_RATE = 1 << 2
RADIOTAP_CHANNEL = 1 << 3
RADIOTAP_FLAG_SHORTPRE = 0x02
CHANNEL_CCK = 0x0020
CHANNEL_2GHZ = 0x0080
DEFAULT_BSSID = "02:00:00:00:00:01"


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_iq(buf: IqBuffer, path, metadata=None):
    """Interleaved little-endian float32 I/Q plus ``<path>.json`` holding the sample rate."""
    path = Path(path)
    data = np.empty(2 * len(buf), dtype="<f4")
    data[0::2] = buf.samples.real
    data[1::2] = buf.samples.imag
    path.write_bytes(data.tobytes())
    meta = dict(metadata or {})
    meta["sample_rate_hz"] = buf.sample_rate
    write_json(meta, sidecar_path(path))


def read_metadata(path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        return {}
    return json.loads(side.read_text())


def read_iq(path, sample_rate=None) -> IqBuffer:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % 8:
        raise FormatError(f"{path}: {len(raw) // 4} floats is not a whole number of I/Q pairs")
    meta = read_metadata(path)
    rate = meta.get("sample_rate_hz", sample_rate)
    if rate is None:
        raise FormatError(f"{path}: no sidecar {sidecar_path(path).name}; pass the sample rate explicitly")
    data = np.frombuffer(raw, dtype="<f4")
    return IqBuffer(data[0::2].astype(np.float64) + 1j * data[1::2].astype(np.float64), rate)


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@lru_cache(maxsize=None)
def report_schema() -> dict:
    text = resources.files("chirpcck").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def validate_report(doc: dict):
    jsonschema.validate(doc, report_schema())


def make_report(kind: str, **fields) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(fields)
    validate_report(doc)
    return doc


def emulation_report(report: EmulationReport, payload: bytes, full: bool = False) -> dict:
    fields = report.summary()
    fields["codebook"] = {"size": 256, "sha256": cck.codebook_digest()}
    fields["payload_bytes"] = len(payload)
    if full:
        fields["codeword_indices"] = [int(v) for v in report.codeword_indices]
        fields["per_chunk_score"] = [float(v) for v in report.per_chunk_score]
    return make_report("emulation", **fields)


def plan_to_dict(plan: TransmissionPlan) -> dict:
    frames = [{
        "payload_hex": f.payload.hex(),
        "preamble_kind": f.preamble_kind,
        "scrambler_enabled": f.scrambler_enabled,
        "scrambler_seed": f.scrambler_seed,
        "ref_phase": f.ref_phase,
    } for f in plan.frames]
    timeline = [{"kind": s.kind, "start": s.start, "stop": s.stop} for s in plan.timeline]
    return make_report(
        "plan",
        frames=frames,
        timeline=timeline,
        ifs_us=plan.ifs_us,
        preamble_kind=plan.preamble_kind,
        target_len=plan.target_len,
        frame_count=len(plan.frames),
        total_us=plan.total_us,
        distortion_fraction=plan.distortion_fraction,
        overhead_to_payload=plan.overhead_to_payload,
        emulation=plan.report.summary(),
    )


def plan_from_dict(doc: dict) -> TransmissionPlan:
    validate_report(doc)
    if doc["kind"] != "plan":
        raise FormatError(f"expected a plan document, got kind {doc['kind']!r}")
    frames = [WifiFramePlan(bytes.fromhex(f["payload_hex"]), f["preamble_kind"], f["scrambler_enabled"],
                            f["scrambler_seed"], f["ref_phase"]) for f in doc["frames"]]
    timeline = [TimelineSegment(s["kind"], s["start"], s["stop"]) for s in doc["timeline"]]
    em = doc["emulation"]
    report = EmulationReport(
        chunk_count=em["chunk_count"],
        per_chunk_score=np.zeros(0),
        codeword_indices=np.zeros(0, dtype=np.int64),
        evm_snr_db=em["evm_snr_db"],
        distortion_fraction=em["distortion_fraction"],
        overhead_to_payload=em["overhead_to_payload"],
        padded_chunks=em["padded_chunks"],
    )
    return TransmissionPlan(frames, timeline, doc["ifs_us"], doc["preamble_kind"], doc["target_len"], report)


def save_plan(plan: TransmissionPlan, path):
    write_json(plan_to_dict(plan), path)


def load_plan(path) -> TransmissionPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))


def channel_frequency_mhz(channel: int) -> int:
    if channel == 14:
        return 2484
    if not 1 <= channel <= 13:
        raise DomainError(f"2.4 GHz channel must be 1..14, got {channel}")
    return 2407 + 5 * channel


def _mac(text):
    parts = bytes(int(p, 16) for p in text.split(":"))
    if len(parts) != 6:
        raise DomainError(f"bad MAC address {text!r}")
    return parts


def radiotap_header(channel: int = 6, short_preamble: bool = True) -> bytes:
    present = RADIOTAP_FLAGS | RADIOTAP_RATE | RADIOTAP_CHANNEL
    flags = RADIOTAP_FLAG_SHORTPRE if short_preamble else 0
    rate = 22  # 500 kb/s units
    body = struct.pack("<BBHH", flags, rate, channel_frequency_mhz(channel), CHANNEL_CCK | CHANNEL_2GHZ)
    return struct.pack("<BBHI", 0, 0, 8 + len(body), present) + body


def data_frame_header(seq: int, bssid: str = DEFAULT_BSSID, dest: str = "ff:ff:ff:ff:ff:ff") -> bytes:
    """802.11 data frame header, from-DS, as sent by an access point."""
    fc = struct.pack("<BB", 0x08, 0x02)
    return fc + struct.pack("<H", 0) + _mac(dest) + _mac(bssid) + _mac(bssid) + struct.pack("<H", (seq & 0xFFF) << 4)


def export_pcap(plan: TransmissionPlan, path, channel: int = 6, bssid: str = DEFAULT_BSSID):
    """One radiotap record per frame, timestamped at each frame's preamble start."""
    if not plan.frames:
        raise DomainError("plan has no frames")
    out = [struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, LINKTYPE_IEEE802_11_RADIOTAP)]
    rt = radiotap_header(channel, plan.preamble_kind == "short")
    for i, (frame, start_us) in enumerate(zip(plan.frames, plan.frame_starts_us())):
        packet = rt + data_frame_header(i, bssid) + frame.payload
        ts = int(round(start_us))
        out.append(struct.pack("<IIII", ts // 1_000_000, ts % 1_000_000, len(packet), len(packet)))
        out.append(packet)
    Path(path).write_bytes(b"".join(out))


def read_pcap(path):
    """Minimal reader for files written by :func:`export_pcap`: list of (ts_us, packet bytes)."""
    raw = Path(path).read_bytes()
    magic, _, _, _, _, _, linktype = struct.unpack_from("<IHHiIII", raw, 0)
    if magic != 0xA1B2C3D4:
        raise FormatError("not a little-endian microsecond pcap file")
    pos = 24
    records = []
    while pos < len(raw):
        sec, usec, incl, _ = struct.unpack_from("<IIII", raw, pos)
        pos += 16
        records.append((sec * 1_000_000 + usec, raw[pos:pos + incl]))
        pos += incl
    return linktype, records


def spectrogram(buf: IqBuffer, nfft: int = 256, hop: int = None):
    """Hann-windowed STFT power in dB: (frame times s, DC-centred bin frequencies Hz, matrix)."""
    if nfft < 1 or nfft & (nfft - 1):
        raise DomainError(f"nfft must be a power of two, got {nfft}")
    hop = nfft if hop is None else hop
    if hop < 1:
        raise DomainError("hop must be at least one sample")
    x = np.asarray(buf.samples)
    if len(x) < nfft:
        raise DomainError(f"buffer of {len(x)} samples is shorter than nfft={nfft}")
    starts = np.arange(0, len(x) - nfft + 1, hop)
    frames = np.stack([x[s:s + nfft] for s in starts]) * np.hanning(nfft)
    spec = np.fft.fftshift(np.fft.fft(frames, axis=1), axes=1)
    db = 10 * np.log10(np.abs(spec) ** 2 + 1e-20)
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, 1 / buf.sample_rate))
    times = (starts + nfft / 2) / buf.sample_rate
    return times, freqs, db


def write_spectrogram_csv(times, freqs, db, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s"] + [f"{f:.1f}" for f in freqs])
        for t, row in zip(times, db):
            w.writerow([f"{t:.9f}"] + [f"{v:.3f}" for v in row])


def read_spectrogram_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    freqs = np.array([float(v) for v in rows[0][1:]])
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return data[:, 0], freqs, data[:, 1:]


def write_rows_csv(rows, path):
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
