import numpy as np
import pytest
import torch

from src.backbones import BackboneSpec, build_encoder, encode
from src.ensemble import EnsembleMember, MemberSpec, build_member
from src.frames import AnnotatedFrame, ClassLabel, ImageFrame, MaskKind, SegmentationMask
from src.segmentation import DecoderSpec, UNetDecoder, decode, dice, explain, overlay, seg_target


def _decoder_for(encoder, spec=DecoderSpec()):
    return UNetDecoder(encoder.stage_channels, spec, encoder.spec.activation)


class TestDecode:
    @pytest.mark.parametrize("seed", range(5))
    def test_shape_and_range(self, seed):
        spec = MemberSpec(backbone=BackboneSpec(arch="tiny_test"))
        member = build_member(spec, f"init/member{seed}", seed=seed)
        x = torch.randn(2, 3, 64, 64, generator=torch.Generator().manual_seed(seed)) * 4
        with torch.no_grad():
            mask = decode(encode(x, member.encoder), member.decoder)
        assert mask.shape == (2, 64, 64)
        assert float(mask.min()) >= 0.0 and float(mask.max()) <= 1.0

    @pytest.mark.parametrize("arch", ["residual18_style", "plainconv16_style"])
    def test_deeper_backbones(self, arch):
        encoder = build_encoder(BackboneSpec(arch=arch, width_mult=0.0625)).eval()
        size = 2 ** encoder.spec.stage_count
        with torch.no_grad():
            mask = decode(encode(torch.rand(1, 3, size, size * 2), encoder), _decoder_for(encoder))
        assert mask.shape == (1, size, size * 2)

    def test_deterministic(self):
        encoder = build_encoder(BackboneSpec(arch="tiny_test"))
        decoder = _decoder_for(encoder)
        x = torch.rand(1, 3, 32, 32)
        torch.testing.assert_close(decode(encode(x, encoder), decoder), decode(encode(x, encoder), decoder))

    def test_stage_count_mismatch(self):
        encoder = build_encoder(BackboneSpec(arch="tiny_test"))
        stack = encode(torch.rand(1, 3, 32, 32), encoder)
        with pytest.raises(ValueError, match="stage-count mismatch"):
            decode(stack[:2], _decoder_for(encoder))

    def test_without_skips(self):
        encoder = build_encoder(BackboneSpec(arch="tiny_test"))
        decoder = _decoder_for(encoder, DecoderSpec(skip_stages=()))
        assert decode(encode(torch.rand(1, 3, 32, 32), encoder), decoder).shape == (1, 32, 32)

    def test_bad_skip_stage(self):
        with pytest.raises(ValueError, match="skip_stages"):
            DecoderSpec(skip_stages=(3,)).resolve([8, 16, 32])


def _bleeding_frame():
    values = np.zeros((16, 16), dtype=np.float32)
    values[4:8, 4:8] = 1
    image = ImageFrame(np.full((16, 16, 3), 0.5, dtype=np.float32), "b")
    return AnnotatedFrame(image, ClassLabel.BLEEDING, SegmentationMask(values))


class TestSegTarget:
    def test_non_bleeding_is_zero_filled(self):
        image = ImageFrame(np.zeros((16, 16, 3), dtype=np.float32), "n")
        target = seg_target(AnnotatedFrame(image, ClassLabel.NON_BLEEDING))
        assert target.shape == (16, 16) and target.is_empty()

    def test_bleeding_is_ground_truth(self):
        frame = _bleeding_frame()
        np.testing.assert_array_equal(seg_target(frame).values, frame.mask.values)


class TestOverlay:
    def setup_method(self):
        self.image = ImageFrame(np.random.default_rng(0).random((16, 16, 3)).astype(np.float32), "x")

    def test_alpha_zero_is_identity(self):
        out = overlay(self.image, np.ones((16, 16)), alpha=0.0)
        np.testing.assert_array_equal(out.pixels, self.image.pixels)

    def test_zero_mask_is_identity(self):
        out = overlay(self.image, np.zeros((16, 16)), alpha=0.7)
        np.testing.assert_array_equal(out.pixels, self.image.pixels)

    def test_saturation(self):
        out = overlay(self.image, np.ones((16, 16)), alpha=1.0, highlight=(1.0, 0.0, 0.0))
        np.testing.assert_allclose(out.pixels, np.broadcast_to([1.0, 0.0, 0.0], (16, 16, 3)))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            overlay(self.image, np.ones((8, 8)))


class TestDice:
    def test_both_empty(self):
        assert dice(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0

    def test_half_overlap(self):
        a = np.zeros((4, 4))
        b = np.zeros((4, 4))
        a[:2] = 1
        b[1:3] = 1
        assert dice(a, b) == pytest.approx(0.5)

    def test_thresholds_prediction(self):
        frame = _bleeding_frame()
        pred = SegmentationMask(frame.mask.values * 0.9, MaskKind.PREDICTED)
        assert dice(pred, frame.mask) == 1.0


class TestExplain:
    def test_mean_of_member_masks(self, tiny_members):
        x = torch.rand(2, 3, 32, 32)
        with torch.no_grad():
            singles = [decode(m.encoder(x), m.decoder) for m in tiny_members]
        torch.testing.assert_close(explain(x, tiny_members), (singles[0] + singles[1]) / 2)

    def test_needs_decoder(self, tiny_spec):
        member = EnsembleMember(tiny_spec)
        member.decoder = None
        with pytest.raises(ValueError, match="no segmentation decoder"):
            explain(torch.rand(1, 3, 32, 32), [member])

    def test_member_spec_carries_decoder(self):
        spec = MemberSpec(backbone=BackboneSpec(arch="tiny_test"), decoder=DecoderSpec(skip_stages=(2,)))
        assert EnsembleMember(spec).decoder.spec.skip_stages == (2,)
