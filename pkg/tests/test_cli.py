from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from chirpcck import cck
from chirpcck import io as cio
from chirpcck.cli import EXIT_FAILURE, EXIT_USAGE, main

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(DATA))
import regenerate  # noqa: E402


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def ok(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 0, err
    return json.loads(out)


class TestPipeline:
    def test_synth_then_demod(self, tmp_path, capsys):
        f = tmp_path / "f.iq"
        ok(["lora-synth", "--sf", 7, "--bw", 1.6e6, "--cr", 5, "--payload-hex", "00", "--fs", 11e6, "-o", f],
           capsys)
        assert ok(["demod", "-i", f], capsys)["payload_hex"] == "00"

    def test_emulate_report(self, tmp_path, capsys):
        f, r = tmp_path / "f.iq", tmp_path / "r.json"
        ok(["lora-synth", "--sf", 6, "--payload-hex", "3c", "-o", f], capsys)
        ok(["emulate", "-i", f, "-o", tmp_path / "e.iq", "--report", r], capsys)
        doc = json.loads(r.read_text())
        cio.validate_report(doc)
        n = len(cio.read_iq(f))
        assert doc["chunk_count"] == math.ceil(n / 8)
        assert doc["codebook"] == {"size": 256, "sha256": cck.codebook_digest()}
        assert "evm_snr_db" in doc
        assert ok(["demod", "-i", tmp_path / "e.iq"], capsys)["payload_hex"] == "3c"

    def test_segment_render_pcap(self, tmp_path, capsys):
        f, plan = tmp_path / "f.iq", tmp_path / "plan.json"
        ok(["lora-synth", "--sf", 7, "--bw", 800e3, "--payload-len", 6, "--seed", 3, "-o", f], capsys)
        ok(["segment", "-i", f, "--plan", plan, "--frame-payload-us", 2800], capsys)
        ok(["render", "--plan", plan, "-o", tmp_path / "r.iq", "--report", tmp_path / "rr.json"], capsys)
        meta = cio.read_metadata(tmp_path / "r.iq")
        assert meta["frame_start"] == 1056
        res = ok(["demod", "-i", tmp_path / "r.iq"], capsys)
        synth = cio.read_metadata(f)
        assert synth["lora"]["payload_len"] == 6
        ok(["pcap-export", "--plan", plan, "-o", tmp_path / "x.pcap", "--report", tmp_path / "p.json"], capsys)
        _, records = cio.read_pcap(tmp_path / "x.pcap")
        doc = json.loads(plan.read_text())
        assert len(records) == len(doc["frames"])
        assert res["payload_hex"] is not None

    def test_demod_with_noise_and_report(self, tmp_path, capsys):
        f = tmp_path / "f.iq"
        ok(["lora-synth", "--sf", 9, "--bw", 400e3, "--cr", 7, "--payload-hex", "c0ffee", "-o", f], capsys)
        ok(["--seed", 5, "demod", "-i", f, "--snr-db", 0, "--report", tmp_path / "d.json"], capsys)
        doc = json.loads((tmp_path / "d.json").read_text())
        assert doc["ok"] and doc["payload_hex"] == "c0ffee"

    def test_demod_failure_exit(self, tmp_path, capsys):
        f = tmp_path / "f.iq"
        ok(["lora-synth", "--sf", 7, "--payload-hex", "a7", "-o", f], capsys)
        # sample 8800 is the first down-chirp, which dechirps to garbage symbols
        code, _, err = run(["demod", "-i", f, "--sync-offset", 8800, "--report", tmp_path / "d.json"], capsys)
        assert code == EXIT_FAILURE
        assert json.loads(err)["error"] == "failure"
        assert json.loads((tmp_path / "d.json").read_text())["ok"] is False

    def test_evm_and_spectrogram(self, tmp_path, capsys):
        f = tmp_path / "f.iq"
        ok(["lora-synth", "--sf", 7, "--payload-hex", "11", "-o", f], capsys)
        assert ok(["evm", "-i", f, "--ref", f], capsys)["evm_snr_db"] == 80.0
        ok(["spectrogram", "-i", f, "-o", tmp_path / "s.csv", "--nfft", 128, "--plot", tmp_path / "s.png",
            "--report", tmp_path / "s.json"], capsys)
        assert (tmp_path / "s.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        _, freqs, db = cio.read_spectrogram_csv(tmp_path / "s.csv")
        assert db.shape[1] == 128 == len(freqs)

    def test_drop_sweep(self, tmp_path, capsys):
        ok(["drop-sweep", "--sfs", 5, 7, "--bws", 400e3, 1.6e6, "--frames", 1, "-o", tmp_path / "d.csv",
            "--plot", tmp_path / "d.png", "--report", tmp_path / "d.json"], capsys)
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "sf,bw_hz,frames,drop_db_mean,drop_db_std"
        assert len(lines) == 5
        cio.validate_report(json.loads((tmp_path / "d.json").read_text()))
        assert (tmp_path / "d.png").stat().st_size > 0

    def test_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"sf": 8, "bw": 400e3, "payload_hex": "beef", "seed": 1}))
        f = tmp_path / "f.iq"
        ok(["--config", cfg, "lora-synth", "-o", f], capsys)
        assert cio.read_metadata(f)["lora"]["sf"] == 8
        # flags override the config
        ok(["--config", cfg, "lora-synth", "--sf", 9, "-o", f], capsys)
        assert cio.read_metadata(f)["lora"]["sf"] == 9


class TestErrors:
    @pytest.mark.parametrize("argv", [
        [],
        ["frobnicate"],
        ["demod"],
        ["lora-synth", "--sf", "x", "-o", "f.iq"],
        ["lora-synth", "--payload-hex", "zz", "-o", "f.iq"],
        ["lora-synth", "--payload-hex", "00", "--payload-len", "3", "-o", "f.iq"],
        ["drop-sweep"],
        ["render", "--plan", "p.json"],
    ])
    def test_usage_errors(self, argv, capsys, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, out, err = run(argv, capsys)
        assert code == EXIT_USAGE
        assert json.loads(err)["error"] == "usage"
        assert out == ""

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"nonsense": 1}))
        assert run(["--config", cfg, "lora-synth", "-o", tmp_path / "f.iq"], capsys)[0] == EXIT_USAGE
        cfg.write_text("{")
        assert run(["--config", cfg, "lora-synth", "-o", tmp_path / "f.iq"], capsys)[0] == EXIT_USAGE

    def test_domain_error_is_failure(self, tmp_path, capsys):
        code, _, err = run(["lora-synth", "--sf", 13, "-o", tmp_path / "f.iq"], capsys)
        assert code == EXIT_FAILURE
        msg = json.loads(err)
        assert msg["type"] == "DomainError" and "spreading factor" in msg["message"]

    def test_missing_input(self, tmp_path, capsys):
        code, _, err = run(["emulate", "-i", tmp_path / "none.iq"], capsys)
        assert code == EXIT_FAILURE
        assert json.loads(err)["type"] == "FormatError" or "No such file" in json.loads(err)["message"]

    def test_console_script(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "chirpcck.cli", "demod"], capture_output=True, text=True)
        assert proc.returncode == EXIT_USAGE
        assert json.loads(proc.stderr)["error"] == "usage"


def pipeline(workdir: Path, seed: int):
    """A full synth, emulate, segment, render, demod, pcap and figure run with relative paths."""
    steps = [
        ["--seed", seed, "lora-synth", "--sf", 7, "--bw", 1.6e6, "--payload-len", 4, "-o", "f.iq"],
        ["emulate", "-i", "f.iq", "-o", "e.iq", "--report", "e.json", "--full-report"],
        ["segment", "-i", "f.iq", "--plan", "plan.json", "--frame-payload-us", 2800],
        ["render", "--plan", "plan.json", "-o", "r.iq", "--report", "r.json"],
        ["--seed", seed, "demod", "-i", "r.iq", "--snr-db", 3, "--report", "d.json"],
        ["pcap-export", "--plan", "plan.json", "-o", "x.pcap", "--report", "x.json"],
        ["spectrogram", "-i", "r.iq", "-o", "s.csv", "--plot", "s.png", "--report", "s.json"],
        ["evm", "-i", "e.iq", "--ref", "e.iq", "--report", "v.json"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0
    return {p.name: p.read_bytes() for p in sorted(workdir.iterdir())}


class TestDeterminism:
    def test_two_runs_identical(self, tmp_path, monkeypatch, capsys):
        outputs = []
        for name in ("a", "b"):
            d = tmp_path / name
            d.mkdir()
            monkeypatch.chdir(d)
            outputs.append(pipeline(d, seed=11))
        capsys.readouterr()
        assert outputs[0].keys() == outputs[1].keys()
        assert len(outputs[0]) >= 15
        for k in outputs[0]:
            assert outputs[0][k] == outputs[1][k], k

    def test_seed_changes_random_outputs(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        ok(["--seed", 1, "lora-synth", "--payload-len", 4, "-o", "a.iq"], capsys)
        ok(["--seed", 2, "lora-synth", "--payload-len", 4, "-o", "b.iq"], capsys)
        assert Path("a.iq").read_bytes() != Path("b.iq").read_bytes()


class TestReferenceFixture:
    def test_regenerates_byte_identical(self, tmp_path, capsys):
        built = regenerate.build(tmp_path)
        capsys.readouterr()
        for path in built:
            assert path.read_bytes() == (DATA / path.name).read_bytes(), path.name

    def test_fixture_decodes(self):
        from chirpcck.lora import LoraParams
        from chirpcck.rx import receive

        meta = cio.read_metadata(DATA / "emulated_frame.iq")
        params = LoraParams(**{**meta["lora"], "sync_word": tuple(meta["lora"]["sync_word"])})
        res = receive(cio.read_iq(DATA / "emulated_frame.iq"), params)
        assert res.payload == b"\xa5"

    def test_fixture_pcap_carries_emulation_payload(self):
        _, records = cio.read_pcap(DATA / "emulated_frame.pcap")
        assert len(records) == 1
        payload = records[0][1][38:]
        chips = cck.modulate_payload(cck.WifiFramePlan(payload)).samples
        emulated = cio.read_iq(DATA / "emulated_frame.iq").samples
        np.testing.assert_allclose(chips, emulated, atol=1e-6)
