import numpy as np
import pytest

from greedvmaf.video import VideoSequence
from greedvmaf.vmaf_spatial import dlm, extract_vmaf_spatial, vif_per_scale

from synth import blurred, moving_texture, noisy


@pytest.fixture(scope="module")
def content():
    return moving_texture(n_frames=6, size=256, seed=70)


class TestVif:
    def test_identity(self, content):
        values = vif_per_scale(content, content)
        np.testing.assert_allclose(values, 1.0, atol=1e-6)

    def test_monotone_under_blur(self, content):
        ladder = [vif_per_scale(content, blurred(content, s)) for s in (0.5, 1.0, 2.0)]
        finest = [v[0] for v in ladder]
        assert finest[0] > finest[1] > finest[2]

    def test_constant_gray_distortion(self, content):
        gray = VideoSequence(
            np.full_like(content.frames, 128.0), content.fps, "gray"
        )
        values = vif_per_scale(content, gray)
        assert np.all(values < 0.1)

    def test_luma_offset_invariance(self, content):
        dist = blurred(content, 1.0)
        base = vif_per_scale(content, dist)
        shifted = vif_per_scale(
            VideoSequence(content.frames + 9.0, content.fps),
            VideoSequence(dist.frames + 9.0, dist.fps),
        )
        np.testing.assert_allclose(shifted, base, atol=1e-6)

    def test_range_under_degradations(self, content):
        for dist in (blurred(content, 1.0), noisy(content, 8.0, seed=1)):
            values = vif_per_scale(content, dist)
            assert np.all(values >= 0.0) and np.all(values <= 1.01)

    def test_geometry_mismatch(self, content):
        small = moving_texture(n_frames=6, size=128, seed=70)
        with pytest.raises(ValueError, match="mismatch"):
            vif_per_scale(content, small)


class TestDlm:
    def test_identity(self, content):
        assert dlm(content, content) == pytest.approx(1.0, abs=1e-6)

    def test_contrast_halving_detected(self, content):
        halved = VideoSequence(content.frames * 0.5, content.fps)
        assert dlm(content, halved) < 0.99

    def test_additive_noise_mostly_discarded(self, content):
        value = dlm(content, noisy(content, 10.0, seed=2))
        assert value > 0.9

    def test_luma_offset_invariance(self, content):
        dist = blurred(content, 1.2)
        base = dlm(content, dist)
        shifted = dlm(
            VideoSequence(content.frames + 11.0, content.fps),
            VideoSequence(dist.frames + 11.0, dist.fps),
        )
        assert shifted == pytest.approx(base, abs=1e-6)

    def test_blur_reduces_dlm(self, content):
        values = [dlm(content, blurred(content, s)) for s in (0.5, 1.0, 2.0)]
        assert values[0] > values[1] > values[2]


class TestExtractVmafSpatial:
    def test_identity_feature_block(self, content):
        feats = extract_vmaf_spatial(content, content)
        np.testing.assert_allclose(feats.vif, 1.0, atol=1e-6)
        assert feats.dlm == pytest.approx(1.0, abs=1e-6)
        arr = feats.as_array()
        assert arr.shape == (5,)
        np.testing.assert_array_equal(arr[:4], feats.vif)
        assert arr[4] == feats.dlm

    def test_blur_ladder_finest_scale_decreasing(self, content):
        finest = [
            extract_vmaf_spatial(content, blurred(content, s)).vif[0]
            for s in (0.5, 1.0, 2.0)
        ]
        assert finest[0] > finest[1] > finest[2]
