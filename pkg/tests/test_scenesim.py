import numpy as np
import pytest
from scipy import signal as sps

from litebf.dsp import MultichannelSignal, StftConfig, stft
from litebf.geometry import ArrayGeometry, make_circular, make_dual, phase_difference
from litebf.scenesim import (
    INTERFERENCE_KINDS,
    DegenerateSceneError,
    Scene,
    SourceSpec,
    gen_interference,
    gen_speech_like,
    mix_at_sinr,
    propagation_delays,
    render_far_field,
    render_scene,
    simulate,
)
from litebf.ssl import bin_phase

SR = 16000


def _db(x):
    return 10 * np.log10(x)


class TestRenderFarField:
    def test_broadside_channels_identical(self, rng):
        out = render_far_field(rng.standard_normal(4000), 90.0, make_dual())
        np.testing.assert_allclose(out.channels[0], out.channels[1], atol=1e-12)

    def test_endfire_delay(self):
        tau = propagation_delays(make_dual(0.085), 0.0)
        assert tau[0] - tau[1] == pytest.approx(0.085 / 343.0)
        assert (tau[0] - tau[1]) * 1e6 == pytest.approx(247.8, abs=0.05)

    def test_cross_correlation_peak_matches_delay(self, rng):
        # a 1 m pair gives an endfire lag of about 46.6 samples
        g = ArrayGeometry(np.array([[-0.5, 0.0], [0.5, 0.0]]))
        src = rng.standard_normal(8000)
        out = render_far_field(src, 0.0, g).channels
        corr = sps.correlate(out[0], out[1], mode="full")
        lag = np.argmax(corr) - (len(src) - 1)
        expected = (propagation_delays(g, 0.0)[0] - propagation_delays(g, 0.0)[1]) * SR
        assert abs(lag - expected) <= 0.5

    def test_inter_channel_phase_matches_steering(self):
        cfg = StftConfig(512, 512, "rect")
        bins = np.arange(4, 60)
        t = np.arange(512 * 8) / SR
        src = sum(np.cos(2 * np.pi * k * SR / 512 * t + k) for k in bins)
        out = render_far_field(src, 120.0, make_dual())
        spec = stft(out, cfg)
        phase, _ = bin_phase(spec[3])
        expected = phase_difference(spec.bin_hz[bins], 0.085, 30.0)
        np.testing.assert_allclose(phase[bins], expected, atol=1e-6)

    def test_power_preserved(self, rng):
        src = rng.standard_normal(4096)
        out = render_far_field(src, 17.0, make_circular())
        np.testing.assert_allclose(np.mean(out.channels ** 2, axis=1), np.mean(src ** 2), rtol=1e-2)


class TestMixAtSinr:
    @pytest.mark.parametrize("sinr", [0.0, 6.0, -5.0, 20.0])
    def test_channel0_sinr(self, sinr):
        scene = simulate(make_dual(), 90.0, [30.0], sinr, "white", 1.0, seed=3)
        ps = np.mean(scene.target_only.channels[0] ** 2)
        pv = np.mean(scene.interference_plus_noise_only.channels[0] ** 2)
        assert _db(ps / pv) == pytest.approx(sinr, abs=0.01)

    def test_additivity_bit_exact(self):
        scene = simulate(make_circular(), 40.0, [100.0, 250.0], 3.0, "babble", 0.5, seed=1)
        np.testing.assert_array_equal(scene.mixture.channels,
                                      scene.target_only.channels + scene.interference_plus_noise_only.channels)
        np.testing.assert_array_equal(scene.mixture.channels - scene.target_only.channels,
                                      scene.interference_plus_noise_only.channels)

    def test_zero_target(self):
        z = MultichannelSignal(np.zeros((2, 100)))
        n = MultichannelSignal(np.ones((2, 100)))
        with pytest.raises(DegenerateSceneError, match="degenerate scene"):
            mix_at_sinr(z, n, 0.0)

    def test_zero_interference(self):
        t = MultichannelSignal(np.ones((2, 100)))
        with pytest.raises(DegenerateSceneError, match="degenerate scene"):
            mix_at_sinr(t, MultichannelSignal(np.zeros((2, 100))), 0.0)

    def test_noise_only_scene(self):
        scene = simulate(make_dual(), 90.0, [], 10.0, duration_s=0.5)
        ps = np.mean(scene.target_only.channels[0] ** 2)
        pv = np.mean(scene.interference_plus_noise_only.channels[0] ** 2)
        assert _db(ps / pv) == pytest.approx(10.0, abs=0.01)

    def test_determinism(self):
        a = simulate(make_dual(), 60.0, [120.0], 6.0, duration_s=0.5, seed=9)
        b = simulate(make_dual(), 60.0, [120.0], 6.0, duration_s=0.5, seed=9)
        np.testing.assert_array_equal(a.mixture.channels, b.mixture.channels)


class TestScene:
    def test_render_scene_matches_components(self, rng):
        g = make_dual()
        t = SourceSpec(gen_speech_like(0.5, seed=2), 70.0)
        i = SourceSpec(gen_interference("white", 0.5, seed=2), 10.0)
        out = render_scene(Scene(t, g, (i,), input_sinr_db=0.0))
        assert out.mixture.n_channels == 2
        assert out.geometry is g

    def test_bad_azimuth(self):
        with pytest.raises(ValueError):
            SourceSpec(np.zeros(10), 360.0)


class TestGenerators:
    def test_white_reproducible(self):
        np.testing.assert_array_equal(gen_interference("white", 0.1, seed=5),
                                      gen_interference("white", 0.1, seed=5))
        assert not np.array_equal(gen_interference("white", 0.1, seed=5),
                                  gen_interference("white", 0.1, seed=6))

    def test_tonal_concentrated_at_five_bins(self):
        from litebf.scenesim import TONAL_FREQS_HZ
        x = gen_interference("tonal", 1.0)
        spec = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(len(x), 1 / SR)
        peaks = sorted(f[np.argsort(spec)[-5:]])
        np.testing.assert_allclose(peaks, sorted(TONAL_FREQS_HZ), atol=1.0)
        near = sum(spec[np.abs(f - tf) <= 2].sum() for tf in TONAL_FREQS_HZ)
        assert near / spec.sum() > 0.99

    def test_babble_band_energy(self):
        x = gen_interference("babble", 2.0, seed=4)
        spec = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(len(x), 1 / SR)
        inband = spec[(f >= 300) & (f <= 3400)].sum()
        assert inband / spec.sum() >= 0.9

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown interference kind"):
            gen_interference("pink", 1.0)

    def test_kinds_listed(self):
        assert set(INTERFERENCE_KINDS) == {"white", "tonal", "babble"}

    def test_speech_like_is_intermittent(self):
        x = gen_speech_like(3.0, seed=0)
        frames = x[: len(x) // 256 * 256].reshape(-1, 256)
        energy = np.mean(frames ** 2, axis=1)
        # pauses: a sizeable share of frames sit far below the loud ones
        assert np.mean(energy < 0.01 * np.percentile(energy, 90)) > 0.1
