"""Silence detection and F0 tracking on constructed signals."""
import numpy as np
import pytest

from multivoice.dsp import (
    AudioClip,
    SilenceDetectorConfig,
    detect_silence,
    estimate_f0,
    trim_silence,
)

SR = 16000
CFG = SilenceDetectorConfig(gaussian_width=0.005, threshold=0.1)


def _tone(freq, n, amp=1.0):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / SR)


class TestSilenceDetection:
    def test_all_zero_clip_is_silent(self):
        mask = detect_silence(AudioClip(np.zeros(3000), SR), CFG)
        assert mask.all()

    def test_full_scale_tone_is_loud(self):
        mask = detect_silence(AudioClip(_tone(220, SR), SR), CFG)
        assert not mask.any()

    def test_transition_located_within_three_widths(self):
        x = np.concatenate([np.zeros(8000), _tone(220, 8000)])
        mask = detect_silence(AudioClip(x, SR), CFG)
        first_loud = int(np.flatnonzero(~mask)[0])
        slack = 3 * CFG.gaussian_width * SR
        assert abs(first_loud - 8000) <= slack

    def test_amplitude_scale_invariance(self):
        x = np.concatenate([np.zeros(4000), _tone(300, 4000)])
        big = detect_silence(AudioClip(x, SR), CFG)
        small = detect_silence(AudioClip(0.003 * x, SR), CFG)
        np.testing.assert_array_equal(big, small)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SilenceDetectorConfig(gaussian_width=0.0)
        with pytest.raises(ValueError):
            SilenceDetectorConfig(threshold=1.0)
        with pytest.raises(ValueError):
            SilenceDetectorConfig(threshold=0.0)


class TestTrim:
    def test_leading_silence_removed(self):
        lead = int(0.3 * SR)
        x = np.concatenate([np.zeros(lead), _tone(220, 8000)])
        out = trim_silence(AudioClip(x, SR), CFG)
        slack = 3 * CFG.gaussian_width * SR
        assert abs((len(x) - len(out)) - lead) <= slack

    def test_no_silence_is_identity(self):
        clip = AudioClip(_tone(220, 8000), SR)
        out = trim_silence(clip, CFG)
        np.testing.assert_array_equal(out.samples, clip.samples)

    def test_fully_silent_clip_rejected(self):
        with pytest.raises(ValueError):
            trim_silence(AudioClip(np.zeros(2000), SR), CFG)

    def test_interior_silence_kept(self):
        x = np.concatenate([_tone(220, 4000), np.zeros(2000), _tone(220, 4000)])
        out = trim_silence(AudioClip(x, SR), CFG)
        assert len(out) == len(x)


class TestF0:
    def test_steady_tone_frequencies(self):
        for freq in (100.0, 220.0, 340.0):
            track = estimate_f0(AudioClip(_tone(freq, SR, 0.5), SR))
            assert track.voiced_fraction >= 0.95
            med = float(np.median(track.f0[track.voiced]))
            assert abs(med - freq) <= 3.0, (freq, med)

    def test_noise_mostly_unvoiced(self):
        rng = np.random.default_rng(2)
        clip = AudioClip(np.clip(0.05 * rng.standard_normal(SR), -1, 1), SR)
        track = estimate_f0(clip)
        assert np.mean(~track.voiced) >= 0.8

    def test_silence_unvoiced(self):
        track = estimate_f0(AudioClip(np.zeros(SR), SR))
        assert not track.voiced.any()
        assert not track.f0.any()

    def test_unvoiced_frames_carry_zero(self):
        x = np.concatenate([np.zeros(6000), _tone(220, 10000, 0.5)])
        track = estimate_f0(AudioClip(x, SR))
        np.testing.assert_array_equal(track.f0[~track.voiced], 0.0)
        assert np.all(track.f0[track.voiced] >= 60.0)
        assert np.all(track.f0[track.voiced] <= 400.0)

    def test_frequency_scaling_equivariance(self):
        base = 130.0
        for k in (1.5, 2.5):
            a = estimate_f0(AudioClip(_tone(base, SR, 0.5), SR))
            b = estimate_f0(AudioClip(_tone(base * k, SR, 0.5), SR))
            ma = np.median(a.f0[a.voiced])
            mb = np.median(b.f0[b.voiced])
            assert abs(mb / ma - k) < 0.02

    def test_bounds_validation(self):
        clip = AudioClip(_tone(220, SR), SR)
        with pytest.raises(ValueError):
            estimate_f0(clip, f_min=400, f_max=60)
        with pytest.raises(ValueError):
            estimate_f0(clip, f_min=60, f_max=9000)
