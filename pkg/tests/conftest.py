from __future__ import annotations

import numpy as np
import pytest

from chirpcck.iq import WIFI_CHIP_RATE
from chirpcck.lora import LoraFrame, LoraParams, build_frame_waveform


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_payload(rng, n):
    return bytes(rng.integers(0, 256, n).tolist())


def make_frame(sf=7, bw=1.6e6, cr=5, payload=b"\x00", fs=WIFI_CHIP_RATE, **kw):
    params = LoraParams(sf, bw, cr, payload_len=len(payload), **kw)
    frame = LoraFrame(params, payload)
    return frame, build_frame_waveform(frame, fs)


# criterion number -> (passed, line); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {line}")
