from __future__ import annotations

from math import comb, exp, sqrt

import numpy as np
import pytest

from chirpcck.experiments import drop_trend, sensitivity_threshold, symbol_error_rate
from chirpcck.lora import LoraParams


def orthogonal_ser(M, es_n0):
    """Noncoherent M-ary orthogonal signalling in AWGN."""
    return sum((-1) ** (k + 1) * comb(M - 1, k) / (k + 1) * exp(-k / (k + 1) * es_n0) for k in range(1, M))


class TestSymbolErrorRate:
    @pytest.mark.parametrize("snr_db", [-10.0, -8.0, -6.0])
    def test_matches_theory_at_critical_rate(self, snr_db):
        p = LoraParams(5, 125e3)
        trials = 4000
        ser = symbol_error_rate(p, snr_db, trials, seed=1, fs=p.bw, filter_channel=False)
        want = orthogonal_ser(32, 32 * 10 ** (snr_db / 10))
        assert abs(ser - want) <= 4 * sqrt(want * (1 - want) / trials)

    def test_filtered_oversampled_matches_in_channel_theory(self):
        # full-band SNR at 11 MHz; the channel filter keeps bw/fs of the noise
        p = LoraParams(6, 1.6e6)
        fs, trials, snr_db = 11e6, 3000, -14.0
        ser = symbol_error_rate(p, snr_db, trials, seed=2, fs=fs)
        in_channel = 10 ** (snr_db / 10) * fs / p.bw
        want = orthogonal_ser(64, 64 * in_channel)
        assert abs(ser - want) <= 4 * sqrt(want * (1 - want) / trials) + 0.01

    def test_deterministic_and_monotone(self):
        p = LoraParams(7, 1.6e6)
        a = symbol_error_rate(p, -20, 300, seed=4)
        assert a == symbol_error_rate(p, -20, 300, seed=4)
        assert symbol_error_rate(p, -24, 300, seed=4) >= a >= symbol_error_rate(p, -16, 300, seed=4)

    def test_noiseless(self):
        assert symbol_error_rate(LoraParams(8, 800e3), 60, 100) == 0.0


class TestSensitivity:
    def test_stride_agrees_with_full_scan(self):
        p = LoraParams(5, 1.6e6)
        grid = np.arange(-16, 1, 1.0)
        t1, c1 = sensitivity_threshold(p, grid, trials=200, seed=3)
        t4, c4 = sensitivity_threshold(p, grid, trials=200, seed=3, stride=4)
        assert t1 == t4
        for snr in set(c1) & set(c4):
            assert c1[snr] == c4[snr]
        assert c1[t1] <= 0.01

    def test_none_when_top_fails(self):
        t, curve = sensitivity_threshold(LoraParams(5, 1.6e6), [-40, -35], trials=50)
        assert t is None
        assert set(curve) == {-35.0}


class TestDropTrend:
    def test_rows(self):
        rows = drop_trend([5], [200e3, 1.6e6], n_frames=2)
        assert [(r["sf"], r["bw_hz"]) for r in rows] == [(5, 200e3), (5, 1.6e6)]
        for r in rows:
            assert r["frames"] == 2
            assert r["drop_db_mean"] > 0
            assert r["drop_db_std"] >= 0
        assert rows == drop_trend([5], [200e3, 1.6e6], n_frames=2)
