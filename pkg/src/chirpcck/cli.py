"""Command-line entry point: ``chirpcck <command> ...``.

Every command writes deterministic files. Failures print a JSON object on
stderr and exit with 1; bad flags or flag combinations exit with 2.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import cck
from . import io as cio
from .emulator import emulate_waveform, render_transmission, segment_transmission
from .errors import DomainError
from .experiments import drop_trend
from .iq import WIFI_CHIP_RATE, IqBuffer
from .lora import LoraFrame, LoraParams, build_frame_waveform
from .rx import awgn, evm_snr, receive, snr_drop_db

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required option(s) {flags}")


def _params_to_dict(p: LoraParams) -> dict:
    return {"sf": p.sf, "bw": p.bw, "cr": p.cr, "preamble_len": p.preamble_len,
            "sync_word": list(p.sync_word), "payload_len": p.payload_len}


def _lora_params(args, meta=None) -> LoraParams:
    """LoRa parameters from flags, falling back on the IQ sidecar."""
    base = dict((meta or {}).get("lora") or {})
    for key in ("sf", "bw", "cr", "preamble_len", "payload_len"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if "sf" not in base or "bw" not in base:
        raise UsageError(f"{args.command}: LoRa parameters needed; pass --sf and --bw or use a file "
                         "whose sidecar records them")
    if "sync_word" in base:
        base["sync_word"] = tuple(base["sync_word"])
    return LoraParams(**base)


def _add_lora_flags(p, defaults=False):
    p.add_argument("--sf", type=int, default=7 if defaults else None)
    p.add_argument("--bw", type=float, default=1.6e6 if defaults else None)
    p.add_argument("--cr", type=int, default=5 if defaults else None)
    p.add_argument("--preamble-len", type=int, default=8 if defaults else None)
    p.add_argument("--payload-len", type=int, default=None,
                   help="payload bytes (random with --seed when --payload-hex is absent)")


def _add_scrambler_flags(p):
    p.add_argument("--no-scrambler", dest="scrambler", action="store_false", default=True)
    p.add_argument("--scrambler-seed", type=lambda s: int(s, 0), default=cck.DEFAULT_SCRAMBLER_SEED)
    p.add_argument("--ref-phase", type=int, default=0, choices=range(4))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chirpcck", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON file of option defaults; flags override it")
    parser.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    # the global options are accepted after the command name as well
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    p = command("lora-synth", "synthesize a LoRa frame")
    _add_lora_flags(p, defaults=True)
    p.add_argument("--payload-hex")
    p.add_argument("--fs", type=float, default=WIFI_CHIP_RATE)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--report", type=Path)

    p = command("emulate", "replace every 8-sample chunk with its nearest CCK codeword")
    p.add_argument("-i", "--input", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--report", type=Path)
    p.add_argument("--full-report", action="store_true", help="include per-chunk indices and scores")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--reference-snr-db", type=float, default=10.0)
    _add_scrambler_flags(p)

    p = command("segment", "split a target into a train of WiFi frames")
    p.add_argument("-i", "--input", type=Path)
    p.add_argument("--plan", type=Path)
    p.add_argument("--max-payload-bytes", type=int, default=cck.MAX_PAYLOAD_BYTES)
    p.add_argument("--frame-payload-us", type=float)
    p.add_argument("--ifs-us", type=float, default=12.0)
    p.add_argument("--preamble", choices=["short", "long"], default="short")
    p.add_argument("--workers", type=int, default=1)
    _add_scrambler_flags(p)

    p = command("render", "render a plan as the transmitted waveform")
    p.add_argument("--plan", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--preamble-mode", choices=["waveform", "zeros"], default="waveform")
    p.add_argument("--report", type=Path)

    p = command("demod", "detect, demodulate and decode a LoRa frame")
    p.add_argument("-i", "--input", type=Path)
    _add_lora_flags(p)
    p.add_argument("--snr-db", type=float, help="add white noise at this SNR first")
    p.add_argument("--sync-offset", type=int, help="payload start sample; skips detection")
    p.add_argument("--no-filter", dest="filter_channel", action="store_false", default=True)
    p.add_argument("--report", type=Path)

    p = command("evm", "EVM-SNR of a waveform against a reference")
    p.add_argument("-i", "--input", type=Path)
    p.add_argument("--ref", type=Path)
    p.add_argument("--reference-snr-db", type=float, default=10.0)
    p.add_argument("--report", type=Path)

    p = command("spectrogram", "STFT power matrix as CSV, optionally plotted")
    p.add_argument("-i", "--input", type=Path)
    p.add_argument("-o", "--output", type=Path, help="CSV path")
    p.add_argument("--nfft", type=int, default=256)
    p.add_argument("--hop", type=int)
    p.add_argument("--plot", type=Path, help="PNG path")
    p.add_argument("--report", type=Path)

    p = command("pcap-export", "write a plan's frames as a radiotap pcap")
    p.add_argument("--plan", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--channel", type=int, default=6)
    p.add_argument("--report", type=Path)

    p = command("drop-sweep", "emulation SNR drop over SF and bandwidth")
    p.add_argument("--sfs", type=int, nargs="+", default=[5, 12])
    p.add_argument("--bws", type=float, nargs="+", default=[200e3, 400e3, 800e3, 1.6e6])
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--payload-len", type=int, default=4)
    p.add_argument("--cr", type=int, default=5)
    p.add_argument("--reference-snr-db", type=float, default=10.0)
    p.add_argument("-o", "--output", type=Path, help="CSV path")
    p.add_argument("--plot", type=Path, help="PNG path")
    p.add_argument("--report", type=Path)
    return parser


def _load_config(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return {}
    try:
        cfg = json.loads(known.config.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {known.config}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {known.config} is not valid JSON: {exc.msg}")
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def parse_args(argv):
    parser = build_parser()
    cfg = _load_config(argv)
    if cfg:
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        known = {a.dest for a in parser._actions}
        for name, p in sub.choices.items():
            known |= {a.dest for a in p._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for p in sub.choices.values():
            p.set_defaults(**{k: v for k, v in cfg.items() if k in {a.dest for a in p._actions}})
        parser.set_defaults(**{k: v for k, v in cfg.items() if k in ("seed",)})
    args = parser.parse_args(argv)
    for key in ("input", "output", "report", "plan", "ref", "plot"):
        if isinstance(getattr(args, key, None), str):
            setattr(args, key, Path(getattr(args, key)))
    return args


def _write_report(path, doc):
    if path is not None:
        cio.write_json(doc, path)


def cmd_lora_synth(args):
    _need(args, "output")
    if args.payload_hex is not None:
        try:
            payload = bytes.fromhex(args.payload_hex)
        except ValueError:
            raise UsageError("--payload-hex is not valid hex")
        if args.payload_len is not None and args.payload_len != len(payload):
            raise UsageError("--payload-len disagrees with --payload-hex")
    else:
        n = 1 if args.payload_len is None else args.payload_len
        payload = bytes(np.random.default_rng(args.seed).integers(0, 256, n).tolist())
    params = LoraParams(args.sf, args.bw, args.cr, args.preamble_len, payload_len=len(payload))
    buf = build_frame_waveform(LoraFrame(params, payload), args.fs)
    cio.write_iq(buf, args.output, {"lora": _params_to_dict(params), "frame_start": 0})
    _write_report(args.report, cio.make_report(
        "lora_synth", sf=params.sf, bw_hz=params.bw, cr=params.cr, sample_rate_hz=args.fs,
        payload_hex=payload.hex(), samples=len(buf), frame_start=0, airtime_s=params.airtime))
    return {"output": str(args.output), "samples": len(buf)}


def cmd_emulate(args):
    _need(args, "input")
    meta = cio.read_metadata(args.input)
    target = cio.read_iq(args.input)
    em = emulate_waveform(target, args.scrambler, args.scrambler_seed, args.ref_phase, args.workers)
    if meta.get("lora"):
        params = _lora_params(args, meta)
        em.report.snr_drop_db = snr_drop_db(em.emulated, params, meta.get("frame_start", 0),
                                            args.reference_snr_db)
    if args.output is not None:
        out_meta = {k: v for k, v in meta.items() if k != "sample_rate_hz"}
        cio.write_iq(em.emulated, args.output, out_meta)
    doc = cio.emulation_report(em.report, em.payload, full=args.full_report)
    _write_report(args.report, doc)
    return {k: doc[k] for k in ("chunk_count", "evm_snr_db", "snr_drop_db")}


def cmd_segment(args):
    _need(args, "input", "plan")
    meta = cio.read_metadata(args.input)
    plan = segment_transmission(cio.read_iq(args.input), args.max_payload_bytes, args.frame_payload_us,
                                args.ifs_us, args.preamble, args.scrambler, args.scrambler_seed,
                                args.ref_phase, args.workers)
    doc = cio.plan_to_dict(plan)
    source = {k: v for k, v in meta.items() if k != "sample_rate_hz"}
    if source:
        doc["source"] = source
    cio.write_json(doc, args.plan)
    return {"plan": str(args.plan), "frames": len(plan.frames),
            "overhead_to_payload": plan.overhead_to_payload}


def cmd_render(args):
    _need(args, "plan", "output")
    doc = json.loads(args.plan.read_text())
    plan = cio.plan_from_dict(doc)
    buf = render_transmission(plan, preamble=args.preamble_mode)
    meta = dict(doc.get("source") or {})
    meta["frame_start"] = plan.target_offset + int(meta.get("frame_start", 0))
    cio.write_iq(buf, args.output, meta)
    _write_report(args.report, cio.make_report(
        "render", samples=len(buf), frames=len(plan.frames), preamble=args.preamble_mode,
        target_offset=plan.target_offset))
    return {"output": str(args.output), "samples": len(buf)}


def cmd_demod(args):
    _need(args, "input")
    meta = cio.read_metadata(args.input)
    buf = cio.read_iq(args.input)
    params = _lora_params(args, meta)
    if args.snr_db is not None:
        buf = awgn(buf, args.snr_db, seed=args.seed)
    res = receive(buf, params, filter_channel=args.filter_channel, sync_offset=args.sync_offset)
    doc = cio.make_report(
        "demod", ok=res.ok, symbols=[int(s) for s in res.symbols],
        payload_hex=None if res.payload is None else res.payload.hex(),
        sync_offset=res.sync_offset, low_confidence=bool(np.any(res.low_confidence)), error=res.error)
    _write_report(args.report, doc)
    if not res.ok:
        raise DomainError(f"payload failed to decode: {res.error}")
    return {"payload_hex": doc["payload_hex"], "sync_offset": res.sync_offset}


def cmd_evm(args):
    _need(args, "input", "ref")
    actual = cio.read_iq(args.input)
    ideal = cio.read_iq(args.ref)
    n = min(len(actual), len(ideal))
    value = evm_snr(ideal.with_samples(ideal.samples[:n]), actual.with_samples(actual.samples[:n]))
    meta = cio.read_metadata(args.input)
    drop = None
    if meta.get("lora"):
        drop = snr_drop_db(actual, _lora_params(args, meta), meta.get("frame_start", 0),
                           args.reference_snr_db)
    doc = cio.make_report("evm", evm_snr_db=value, samples=n, snr_drop_db=drop)
    _write_report(args.report, doc)
    return {"evm_snr_db": value, "snr_drop_db": drop}


def cmd_spectrogram(args):
    _need(args, "input", "output")
    buf = cio.read_iq(args.input)
    hop = args.nfft if args.hop is None else args.hop
    times, freqs, db = cio.spectrogram(buf, args.nfft, hop)
    cio.write_spectrogram_csv(times, freqs, db, args.output)
    if args.plot is not None:
        from .plotting import plot_spectrogram
        plot_spectrogram(times, freqs, db, args.plot, title=args.input.name)
    _write_report(args.report, cio.make_report(
        "spectrogram", nfft=args.nfft, hop=hop, frames=len(times), csv=str(args.output),
        png=None if args.plot is None else str(args.plot)))
    return {"output": str(args.output), "frames": len(times)}


def cmd_pcap_export(args):
    _need(args, "plan", "output")
    plan = cio.load_plan(args.plan)
    cio.export_pcap(plan, args.output, channel=args.channel)
    _write_report(args.report, cio.make_report(
        "pcap", records=len(plan.frames), channel=args.channel, path=str(args.output)))
    return {"output": str(args.output), "records": len(plan.frames)}


def cmd_drop_sweep(args):
    if args.output is None and args.plot is None and args.report is None:
        raise UsageError("drop-sweep: give at least one of --output, --plot, --report")
    rows = drop_trend(args.sfs, args.bws, n_frames=args.frames, payload_len=args.payload_len,
                      cr=args.cr, seed=args.seed, reference_snr_db=args.reference_snr_db)
    if args.output is not None:
        cio.write_rows_csv(rows, args.output)
    if args.plot is not None:
        from .plotting import plot_drop_sweep
        plot_drop_sweep(rows, args.plot)
    _write_report(args.report, cio.make_report("drop_sweep", reference_snr_db=args.reference_snr_db,
                                               rows=rows))
    return {"rows": len(rows)}


COMMANDS = {
    "lora-synth": cmd_lora_synth,
    "emulate": cmd_emulate,
    "segment": cmd_segment,
    "render": cmd_render,
    "demod": cmd_demod,
    "evm": cmd_evm,
    "spectrogram": cmd_spectrogram,
    "pcap-export": cmd_pcap_export,
    "drop-sweep": cmd_drop_sweep,
}


def _fail(kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)},
                                sort_keys=True) + "\n")


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        _fail("usage", exc)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError) as exc:
        _fail("failure", exc)
        return EXIT_FAILURE
    print(json.dumps({k: _finite(v) for k, v in summary.items()}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
