"""LoRa chirp synthesis, emulation with 802.11b CCK codewords, and LoRa reception."""

from __future__ import annotations

from .cck import WifiFramePlan, build_codebook, demodulate_payload, modulate_payload
from .emulator import (EmulationReport, TransmissionPlan, emulate_waveform, render_transmission,
                       segment_transmission, target_aligned)
from .errors import (ConsistencyError, DecodeError, DetectionError, DomainError, FormatError,
                     InvalidSampleRate)
from .iq import WIFI_CHIP_RATE, IqBuffer
from .lora import LoraFrame, LoraParams, build_frame_waveform
from .rx import awgn, evm_snr, receive, snr_drop_db

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError", "DecodeError", "DetectionError", "DomainError", "EmulationReport",
    "FormatError", "InvalidSampleRate", "IqBuffer", "LoraFrame", "LoraParams", "TransmissionPlan",
    "WIFI_CHIP_RATE", "WifiFramePlan", "awgn", "build_codebook", "build_frame_waveform",
    "demodulate_payload", "emulate_waveform", "evm_snr", "modulate_payload", "receive",
    "render_transmission", "segment_transmission", "snr_drop_db", "target_aligned",
]
