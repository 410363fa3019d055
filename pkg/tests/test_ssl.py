import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from litebf.dsp import MultichannelSignal, StftConfig, stft
from litebf.geometry import angle_diff_deg, make_circular, make_dual, pair_axis_angle, phase_difference, wrap_deg
from litebf.scenesim import gen_speech_like, render_far_field, simulate
from litebf.ssl import (
    NoVotesError,
    activity_mask,
    bin_angles,
    bin_phase,
    circular_doa,
    circular_votes,
    dual_doa,
    dual_votes,
    estimate_from_histogram,
    dual_grid,
    vote_band,
)

D = 0.085


def _dual_frames(az, sinr=20.0, seed=1, duration=2.0):
    return stft(simulate(make_dual(D), az, [], sinr, duration_s=duration, seed=seed).mixture)


class TestBinPhase:
    def test_identical_channels(self, rng):
        x = rng.standard_normal(257) + 1j * rng.standard_normal(257)
        phase, valid = bin_phase(np.stack([x, x]))
        np.testing.assert_allclose(phase[valid], 0.0, atol=1e-12)

    def test_quarter_pi_sign(self, rng):
        x = rng.standard_normal(257) + 1j * rng.standard_normal(257)
        phase, _ = bin_phase(np.stack([x, x * np.exp(-1j * np.pi / 4)]))
        np.testing.assert_allclose(phase, np.pi / 4, atol=1e-12)

    def test_zero_bins_invalid(self):
        _, valid = bin_phase(np.zeros((2, 10), dtype=complex))
        assert not valid.any()

    def test_rendered_source_matches_steering(self):
        cfg = StftConfig(512, 512, "rect")
        bins = np.arange(3, 64)
        t = np.arange(512 * 6) / 16000
        src = sum(np.cos(2 * np.pi * k * 16000 / 512 * t + 0.7 * k) for k in bins)
        spec = stft(render_far_field(src, 120.0, make_dual(D)), cfg)
        phase, _ = bin_phase(spec[2])
        np.testing.assert_allclose(phase[bins], phase_difference(spec.bin_hz[bins], D, 30.0), atol=1e-6)


class TestVoteBand:
    def test_aliasing_limit(self):
        f = np.linspace(0, 8000, 257)
        usable = vote_band(f, 0.085, 343.0, (100.0, 8000.0))
        assert f[usable].max() <= 343.0 / (2 * 0.085)
        assert f[usable].min() >= 100.0


class TestDualDoa:
    def test_broadside(self):
        est = dual_doa(_dual_frames(90.0), D)
        assert abs(est.azimuth_deg) <= 5.0

    @pytest.mark.parametrize("theta", [-60, -30, 30, 60])
    def test_off_broadside(self, theta):
        est = dual_doa(_dual_frames(90.0 + theta), D)
        assert abs(est.azimuth_deg - theta) <= 5.0

    def test_two_sources_shrink_gap(self):
        g = make_dual(D)
        a = render_far_field(gen_speech_like(2.0, seed=1), 130.0, g)
        b = render_far_field(gen_speech_like(2.0, seed=2), 50.0, g)
        b = b.scaled(np.sqrt(np.mean(a.channels ** 2) / np.mean(b.channels ** 2)))
        two = dual_doa(stft(a + b), D, gate=False)
        one = dual_doa(stft(a), D, gate=False)
        assert two.gap / two.n_votes < one.gap / one.n_votes
        peaks = sorted(two.grid_deg[np.argsort(two.histogram)[-2:]])
        assert peaks[0] < 0 < peaks[1]

    def test_zero_input_no_votes(self):
        spec = stft(MultichannelSignal(np.zeros((2, 4096))))
        with pytest.raises(NoVotesError, match="no votes"):
            dual_doa(spec, D)

    def test_gain_invariance(self):
        frames = _dual_frames(70.0)
        a = dual_doa(frames, D)
        b = dual_doa(frames.with_data(frames.data * 37.5), D)
        np.testing.assert_array_equal(a.histogram, b.histogram)

    def test_vote_conservation_without_gate(self):
        frames = _dual_frames(60.0)
        _, usable = bin_angles(frames, D)
        counts = dual_votes(frames, D, gate=False)
        assert counts.sum() == usable.sum()
        # one vote per usable bin in every frame
        np.testing.assert_array_equal(counts.sum(axis=1), usable.sum(axis=-1))

    def test_votes_within_range(self):
        theta, usable = bin_angles(_dual_frames(10.0), D)
        assert np.all(np.abs(theta[usable]) <= 90.0)


class TestActivityMask:
    def test_subset_of_usable(self, rng):
        x = rng.standard_normal((2, 20, 33)) + 0j
        usable = rng.random((20, 33)) > 0.3
        assert not np.any(activity_mask(x, usable) & ~usable)

    def test_quiet_frames_dropped(self, rng):
        x = rng.standard_normal((2, 10, 33)) + 0j
        x[:, :5] *= 1e-3
        m = activity_mask(x, np.ones((10, 33), dtype=bool))
        assert not m[:5].any() and m[5:].any()


class TestHistogram:
    def test_empty_histogram(self):
        with pytest.raises(NoVotesError):
            estimate_from_histogram(np.zeros(37), dual_grid(), circular=False)

    def test_gap_definition(self):
        hist = np.zeros(37)
        hist[[5, 20]] = [10, 4]
        est = estimate_from_histogram(hist, dual_grid(), circular=False)
        assert (est.peak_count, est.second_count, est.gap, est.n_votes) == (10, 4, 6, 14)
        assert est.azimuth_deg == dual_grid()[5]


class TestCircularDoa:
    def test_source_at_85(self):
        g = make_circular(6, D)
        frames = stft(simulate(g, 85.0, [], 40.0, duration_s=1.0, seed=0).mixture)
        est = circular_doa(frames, g)
        assert abs(angle_diff_deg(est.azimuth_deg, 85.0)) <= 2.0
        # every mirror candidate gets strictly fewer votes than the true cell
        assert est.second_count < est.peak_count

    def test_source_on_pair_axis(self):
        g = make_circular(6, D)
        frames = stft(simulate(g, 60.0, [], 40.0, duration_s=1.0, seed=2).mixture)
        est = circular_doa(frames, g)
        assert abs(angle_diff_deg(est.azimuth_deg, 60.0)) <= 2.0

    def test_vote_conservation_without_gate(self):
        g = make_circular(6, D)
        frames = stft(simulate(g, 200.0, [], 20.0, duration_s=1.0, seed=3).mixture)
        expected = 0
        for p, (a, b) in enumerate(g.pairs):
            theta, usable = bin_angles(frames, g.spacing(p), ch_a=a, ch_b=b)
            phi = pair_axis_angle(g, p)
            th = theta[usable]
            front = np.rint(wrap_deg(phi + 90 + th) / 2).astype(int) % 180
            back = np.rint(wrap_deg(phi - 90 - th) / 2).astype(int) % 180
            expected += 2 * usable.sum() - np.sum(front == back)
        assert circular_votes(frames, g, gate=False).sum() == expected

    @settings(max_examples=8, deadline=None)
    @given(az=st.integers(0, 179).map(lambda k: 2.0 * k), rot=st.integers(0, 179).map(lambda k: 2.0 * k))
    def test_rotation_equivariance(self, az, rot):
        g = make_circular(6, D)
        base = circular_doa(stft(simulate(g, az, [], 30.0, duration_s=0.5, seed=4).mixture), g)
        r = g.rotated(rot)
        moved = circular_doa(stft(simulate(r, wrap_deg(az + rot), [], 30.0, duration_s=0.5, seed=4).mixture), r)
        assert abs(angle_diff_deg(moved.azimuth_deg, base.azimuth_deg + rot)) <= 2.0

    def test_needs_circular(self):
        with pytest.raises(ValueError):
            circular_doa(_dual_frames(90.0), make_dual())
