from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chirpcck.emulator import emulate_waveform
from chirpcck.errors import ConsistencyError, DecodeError, DetectionError, DomainError
from chirpcck.iq import WIFI_CHIP_RATE, IqBuffer
from chirpcck.lora import LoraParams, base_chirp, frame_layout, modulate_symbol
from chirpcck.rx import (EVM_CAP_DB, awgn, channel_filter, decode_payload, dechirp_demodulate,
                         demodulate, detect_and_sync, estimate_snr, evm_snr, receive,
                         snr_drop_from_distortion)

from conftest import make_frame, random_payload


def pad(buf, lead, tail=0):
    return buf.with_samples(np.concatenate([np.zeros(lead), buf.samples, np.zeros(tail)]))


def payload_start(frame, fs=WIFI_CHIP_RATE):
    return [s for s in frame_layout(frame.params, fs) if s.kind == "silence"][0].stop


class TestAwgn:
    def test_empirical_snr(self, rng):
        x = IqBuffer(np.exp(2j * np.pi * rng.random(100_000)), 1e6)
        y = awgn(x, 10.0, seed=3)
        n = y.samples - x.samples
        snr = 10 * np.log10(1 / np.mean(np.abs(n) ** 2))
        assert snr == pytest.approx(10.0, abs=0.2)
        # circular: equal power in I and Q
        assert np.var(n.real) == pytest.approx(np.var(n.imag), rel=0.05)

    def test_silence_excluded_from_power(self, rng):
        x = IqBuffer(np.concatenate([2 * np.ones(50_000), np.zeros(50_000)]), 1e6)
        n = awgn(x, 0.0, seed=1).samples - x.samples
        assert np.mean(np.abs(n) ** 2) == pytest.approx(4.0, rel=0.03)

    def test_deterministic(self):
        x = IqBuffer(np.ones(100), 1e6)
        np.testing.assert_array_equal(awgn(x, 3, seed=9).samples, awgn(x, 3, seed=9).samples)
        assert not np.array_equal(awgn(x, 3, seed=9).samples, awgn(x, 3, seed=10).samples)

    def test_infinite_snr(self):
        x = IqBuffer(np.ones(10), 1e6)
        assert awgn(x, np.inf) is x

    def test_empty(self):
        with pytest.raises(DomainError):
            awgn(IqBuffer(np.zeros(0), 1e6), 10)


class TestEvm:
    def test_identity_and_scale(self, rng):
        x = IqBuffer(rng.standard_normal(1000) + 1j * rng.standard_normal(1000), 1e6)
        assert evm_snr(x, x) == EVM_CAP_DB
        assert evm_snr(x, x.with_samples(2 * x.samples)) == EVM_CAP_DB

    def test_noise_at_10db(self, rng):
        x = IqBuffer(np.exp(2j * np.pi * rng.random(100_000)), 1e6)
        assert evm_snr(x, awgn(x, 10, seed=5)) == pytest.approx(10, abs=0.3)

    @settings(deadline=None)
    @given(st.floats(0.1, 10), st.floats(-np.pi, np.pi))
    def test_invariant_to_complex_gain(self, gain, phase):
        r = np.random.default_rng(0)
        x = IqBuffer(np.exp(2j * np.pi * r.random(2000)), 1e6)
        y = awgn(x, 7, seed=2)
        g = gain * np.exp(1j * phase)
        assert evm_snr(x, y.with_samples(g * y.samples)) == pytest.approx(evm_snr(x, y), abs=1e-9)

    def test_mismatch(self):
        with pytest.raises(ConsistencyError):
            evm_snr(IqBuffer(np.ones(3), 1e6), IqBuffer(np.ones(4), 1e6))
        with pytest.raises(ConsistencyError):
            evm_snr(IqBuffer(np.ones(3), 1e6), IqBuffer(np.ones(3), 2e6))


class TestChannelFilter:
    def test_removes_out_of_band_tone(self):
        fs, n = WIFI_CHIP_RATE, 11_000
        t = np.arange(n) / fs
        x = IqBuffer(np.exp(2j * np.pi * 100e3 * t) + np.exp(2j * np.pi * 2e6 * t), fs)
        y = channel_filter(x, 400e3).samples
        np.testing.assert_allclose(y, np.exp(2j * np.pi * 100e3 * t), atol=1e-9)


    def test_awkward_lengths_padded(self):
        from chirpcck.rx import _fast_len, _is_smooth
        for n in (1, 7, 11000, 4_505_601, 9_068_712):
            m = _fast_len(n)
            assert m >= n and _is_smooth(m)
            assert all(not _is_smooth(k) for k in range(n, m))
        fs = WIFI_CHIP_RATE
        t = np.arange(10_007) / fs
        y = channel_filter(IqBuffer(np.exp(2j * np.pi * 3e6 * t), fs), 1e6)
        assert len(y) == 10_007
        assert np.mean(np.abs(y.samples) ** 2) < 1e-3


class TestDemodulate:
    @pytest.mark.parametrize("sf", range(5, 13))
    def test_exhaustive_symbols(self, sf):
        p = LoraParams(sf, 1.6e6)
        values = range(2 ** sf) if sf <= 9 else range(0, 2 ** sf, 7)
        x = np.concatenate([modulate_symbol(v, p, WIFI_CHIP_RATE).samples for v in values])
        got = dechirp_demodulate(IqBuffer(x, WIFI_CHIP_RATE), p, 0, len(values))
        np.testing.assert_array_equal(got, list(values))

    def test_down_chirp_is_low_confidence(self):
        p = LoraParams(8, 800e3)
        _, ratio = demodulate(base_chirp(p, WIFI_CHIP_RATE, "down"), p, 0, 1)
        assert ratio[0] < 2
        _, ratio = demodulate(base_chirp(p, WIFI_CHIP_RATE), p, 0, 1)
        assert ratio[0] > 100

    def test_window_past_end(self):
        p = LoraParams(7, 1.6e6)
        with pytest.raises(DomainError):
            demodulate(base_chirp(p, WIFI_CHIP_RATE), p, 10, 1)

    def test_emulated_symbols_match_ideal(self, rng):
        p = LoraParams(7, 1.6e6)
        values = rng.integers(0, 128, 64)
        x = IqBuffer(np.concatenate([modulate_symbol(int(v), p, WIFI_CHIP_RATE).samples for v in values]),
                     WIFI_CHIP_RATE)
        em = emulate_waveform(x).emulated
        for seed in range(3):
            noisy = awgn(em.with_samples(em.samples[:len(x)]), 10, seed=seed)
            got = dechirp_demodulate(channel_filter(noisy, p.bw), p, 0, len(values))
            np.testing.assert_array_equal(got, values)


class TestDecode:
    def test_round_trip_1000(self, rng):
        for _ in range(1000):
            sf = int(rng.integers(5, 13))
            cr = int(rng.integers(5, 9))
            payload = random_payload(rng, int(rng.integers(0, 16)))
            p = LoraParams(sf, 1.6e6, cr, payload_len=len(payload))
            from chirpcck.lora import encode_payload
            assert decode_payload(encode_payload(payload, p), p) == payload

    def test_cr5_symbol_error_reported(self, rng):
        frame, x = make_frame(7, 1.6e6, 5, random_payload(rng, 7))
        start = payload_start(frame)
        res = receive(x, frame.params, sync_offset=start)
        assert res.ok
        syms = res.symbols.copy()
        syms[6] ^= 1
        with pytest.raises(DecodeError) as info:
            decode_payload(syms, frame.params)
        assert info.value.block == 1

    def test_zero_length(self):
        assert decode_payload([], LoraParams(7, 1.6e6, payload_len=0)) == b""


class TestSync:
    def test_known_lead_in(self, rng):
        frame, x = make_frame(7, 1.6e6, 5, random_payload(rng, 4))
        buf = pad(x, 1000, 500)
        off = detect_and_sync(buf, frame.params)
        assert abs(off - (1000 + payload_start(frame))) <= 2

    @pytest.mark.parametrize("lead", [0, 1, 437, 5003])
    def test_various_offsets_decode(self, rng, lead):
        payload = random_payload(rng, 6)
        frame, x = make_frame(8, 800e3, 6, payload)
        res = receive(pad(x, lead, 300), frame.params)
        assert res.payload == payload
        assert abs(res.sync_offset - lead - payload_start(frame)) <= 2

    def test_pure_noise(self, rng):
        p = LoraParams(7, 1.6e6, payload_len=1)
        noise = IqBuffer(rng.standard_normal(200_000) + 1j * rng.standard_normal(200_000), WIFI_CHIP_RATE)
        with pytest.raises(DetectionError):
            detect_and_sync(noise, p)

    def test_silence(self):
        with pytest.raises(DetectionError):
            detect_and_sync(IqBuffer(np.zeros(50_000), WIFI_CHIP_RATE), LoraParams(7, 1.6e6))

    @pytest.mark.slow
    def test_emulated_sf6_at_5db(self, rng):
        payload = random_payload(rng, 1)
        frame, x = make_frame(6, 1.6e6, 5, payload)
        em = emulate_waveform(x).emulated
        buf = pad(em, 777, 400)
        want = 777 + payload_start(frame)
        hits = 0
        for seed in range(200):
            noisy = awgn(buf, 5.0, seed=seed)
            try:
                off = detect_and_sync(channel_filter(noisy, frame.params.bw), frame.params)
            except DetectionError:
                continue
            hits += abs(off - want) <= 2
        assert hits >= 190

    def test_result_fields(self, rng):
        payload = random_payload(rng, 2)
        frame, x = make_frame(9, 400e3, 7, payload)
        res = receive(x, frame.params)
        assert res.ok and res.error is None
        assert res.sync_offset >= 0
        assert np.all((res.symbols >= 0) & (res.symbols < 512))
        assert not np.any(res.low_confidence)


class TestSnrEstimate:
    def test_awgn_in_channel_snr(self, rng):
        # critically sampled so the whole band is the channel
        p = LoraParams(8, 125e3)
        x = np.tile(base_chirp(p, p.bw).samples, 400)
        y = awgn(IqBuffer(x, p.bw), 0.0, seed=4)
        starts = np.arange(400) * 256
        assert 10 * np.log10(estimate_snr(y, p, starts)) == pytest.approx(0.0, abs=0.2)

    @pytest.mark.parametrize("d_db,s0_db", [(5.0, 10.0), (10.0, 10.0), (8.0, 0.0)])
    def test_drop_formula_monte_carlo(self, rng, d_db, s0_db):
        """Distorted and clean signals at equal power through the same thermal noise."""
        p = LoraParams(8, 125e3)
        n_sym, M = 400, 256
        chirp = np.tile(base_chirp(p, p.bw).samples, n_sym)
        D, S0 = 10 ** (d_db / 10), 10 ** (s0_db / 10)

        def cn(var, n):
            return np.sqrt(var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))

        distorted = np.sqrt(D / (1 + D)) * chirp + cn(1 / (1 + D), len(chirp))
        starts = np.arange(n_sym) * M
        snr_clean = estimate_snr(IqBuffer(chirp + cn(1 / S0, len(chirp)), p.bw), p, starts)
        snr_dist = estimate_snr(IqBuffer(distorted + cn(1 / S0, len(chirp)), p.bw), p, starts)
        measured = 10 * np.log10(snr_clean / snr_dist)
        assert measured == pytest.approx(snr_drop_from_distortion(d_db, s0_db), abs=0.3)

    def test_drop_limits(self):
        assert snr_drop_from_distortion(80.0, 10.0) == pytest.approx(0.0, abs=1e-5)
        assert snr_drop_from_distortion(0.0, 10.0) > 10
