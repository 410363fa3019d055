import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from litebf.dsp import StftConfig, stft
from litebf.geometry import angle_diff_deg, azimuth_to_local, make_circular, make_dual, pair_axis_angle
from litebf.maxsnr import MaxSnrConfig
from litebf.pairsel import align_pair, alignment_weights, circular_beamform, select_pair
from litebf.scenesim import render_far_field, simulate
from litebf.ssl import bin_phase

from conftest import on_bin_tones

D = 0.085
RECT = StftConfig(512, 512, "rect")
BINS = np.arange(4, 60)  # below the 2017 Hz aliasing limit


def _tone_frames(geometry, az):
    return stft(render_far_field(on_bin_tones(BINS), az, geometry), RECT)


class TestSelectPair:
    def test_85_degrees_paired_numbering(self):
        g = make_circular(6, D, numbering="paired")
        p, theta = select_pair(85.0, g)
        assert g.pair_labels(p) == ("3", "4")
        assert abs(theta) == pytest.approx(5.0)

    def test_30_degrees_sequential_numbering(self):
        g = make_circular(6, D, numbering="sequential")
        p, theta = select_pair(30.0, g)
        assert g.pair_labels(p) == ("3", "6")
        assert theta == pytest.approx(0.0, abs=1e-9)

    def test_exact_broadside(self):
        g = make_circular(6, D)
        for p in range(3):
            phi = pair_axis_angle(g, p)
            idx, theta = select_pair(phi + 90.0, g)
            assert idx == p and theta == pytest.approx(0.0, abs=1e-9)

    def test_tie_goes_to_lowest_index(self):
        g = make_circular(6, D)
        # broadsides sit at 90, 150, 210 (and mirrors); 120 is equidistant from pairs 0 and 1
        assert select_pair(120.0, g)[0] == 0
        assert select_pair(180.0, g)[0] == 1

    @settings(max_examples=100, deadline=None)
    @given(az=st.floats(0, 360, exclude_max=True))
    def test_local_angle_bounded(self, az):
        p, theta = select_pair(az, make_circular(6, D))
        assert abs(theta) <= 30.0 + 1e-9

    @settings(max_examples=50, deadline=None)
    @given(az=st.floats(0, 360, exclude_max=True), k=st.integers(1, 5))
    def test_rotation_by_pair_spacing(self, az, k):
        g = make_circular(6, D)
        p, theta = select_pair(az, g)
        # rotating by a multiple of 60 deg permutes the pairs but keeps the local angle magnitude
        _, theta_r = select_pair(az + 60.0 * k, g.rotated(60.0 * k))
        assert abs(abs(theta_r) - abs(theta)) < 1e-6

    def test_needs_circular(self):
        with pytest.raises(ValueError):
            select_pair(0.0, make_dual())


class TestAlignment:
    @pytest.mark.parametrize("az", [85.0, 200.0, 313.0])
    def test_post_alignment_phase_zero(self, az):
        g = make_circular(6, D, numbering="paired")
        frames = _tone_frames(g, az)
        p, theta = select_pair(az, g)
        aligned = align_pair(frames, p, theta, g)
        phase, _ = bin_phase(aligned.data[:, 3])
        assert np.max(np.abs(phase[BINS])) < 1e-6

    def test_broadside_halves(self):
        g = make_circular(6, D)
        f = np.linspace(0, 8000, 257)
        np.testing.assert_allclose(alignment_weights(f, 1, 0.0, g), 0.5)

    def test_cross_pair_agreement(self):
        g = make_circular(6, D, numbering="paired")
        az = 100.0
        frames = _tone_frames(g, az)
        sums = []
        for p in range(g.n_pairs):
            # every pair, including the mirror-side ones, refers its phase to the array centre
            theta, _ = azimuth_to_local(az, pair_axis_angle(g, p))
            aligned = align_pair(frames, p, theta, g)
            sums.append(aligned.data[:, 3].sum(axis=0))
        ref = np.angle(sums[0][BINS])
        for other in sums[1:]:
            assert np.max(np.abs(np.angle(other[BINS] * np.exp(-1j * ref)))) < 1e-3


class TestCircularBeamform:
    def test_selected_pair_and_diagnostics(self):
        g = make_circular(6, D, numbering="paired")
        scene = simulate(g, 85.0, [200.0], 6.0, duration_s=2.0, seed=0)
        res = circular_beamform(stft(scene.mixture), g)
        assert abs(angle_diff_deg(res.doa.azimuth_deg, 85.0)) <= 2.0
        assert res.pair_labels == ("3", "4")
        assert res.pipeline.diagnostics[0]["selected_pair"] == "3/4"
        assert res.output is res.pipeline.output

    def test_oracle_doa_override(self):
        g = make_circular(6, D, numbering="paired")
        scene = simulate(g, 150.0, [30.0], 6.0, duration_s=1.0, seed=1)
        res = circular_beamform(stft(scene.mixture), g, MaxSnrConfig(), doa_az_deg=150.0)
        assert res.pair_index == select_pair(150.0, g)[0]
        assert res.theta_b_local == pytest.approx(select_pair(150.0, g)[1])
