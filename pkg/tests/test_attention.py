import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.attention import apply_attention, attention_classify, downsample_mask
from src.ensemble import ClassificationHead, classify_head
from src.frames import ClassLabel, SegmentationMask


class TestDownsample:
    def test_all_ones(self):
        torch.testing.assert_close(downsample_mask(np.ones((4, 4)), 2, 2), torch.ones(2, 2, dtype=torch.float64))

    def test_single_quadrant(self):
        mask = np.zeros((4, 4), dtype=np.float32)
        mask[2:, :2] = 1
        out = downsample_mask(SegmentationMask(mask), 2, 2)
        torch.testing.assert_close(out, torch.tensor([[0.0, 0.0], [1.0, 0.0]]))

    def test_non_integer_ratio(self):
        with pytest.raises(ValueError, match="integer multiple"):
            downsample_mask(np.ones((10, 10)), 4, 4)

    def test_batched(self):
        masks = torch.zeros(3, 8, 8)
        masks[1] = 1
        out = downsample_mask(masks, 2, 2)
        assert out.shape == (3, 2, 2)
        assert float(out[1].min()) == 1.0 and float(out[0].max()) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, (16, 16), elements=st.sampled_from([0.0, 1.0])), st.sampled_from([1, 2, 4, 8]))
    def test_block_mean_oracle(self, mask, h):
        out = downsample_mask(mask, h, h).numpy()
        block = 16 // h
        for i in range(h):
            for j in range(h):
                total = 0.0
                for y in range(i * block, (i + 1) * block):
                    for x in range(j * block, (j + 1) * block):
                        total += mask[y, x]
                assert out[i, j] == total / (block * block)
        assert out.sum() * block * block == mask.sum()


class TestApplyAttention:
    def test_zero_mask_annihilates(self):
        feats = torch.rand(4, 3, 3)
        out = apply_attention(feats, torch.zeros(3, 3), ClassLabel.BLEEDING)
        assert float(out.abs().max()) == 0.0

    def test_ones_mask_is_identity(self):
        feats = torch.rand(4, 3, 3)
        torch.testing.assert_close(apply_attention(feats, torch.ones(3, 3), ClassLabel.BLEEDING), feats)

    def test_non_bleeding_ignores_mask(self):
        feats = torch.rand(4, 3, 3)
        out = apply_attention(feats, torch.rand(3, 3), ClassLabel.NON_BLEEDING)
        torch.testing.assert_close(out, feats, rtol=0, atol=0)

    def test_batch_mixes_paths(self):
        feats = torch.rand(2, 4, 3, 3)
        mask = torch.zeros(2, 3, 3)
        out = apply_attention(feats, mask, torch.tensor([1, 0]))
        assert float(out[0].abs().max()) == 0.0
        torch.testing.assert_close(out[1], feats[1], rtol=0, atol=0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="Shape mismatch"):
            apply_attention(torch.rand(4, 3, 3), torch.rand(2, 2), ClassLabel.BLEEDING)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, (3, 4, 4), elements=st.floats(0, 10)), arrays(np.float64, (4, 4), elements=st.floats(0, 1)))
    def test_weighted_is_dominated(self, feats, mask):
        f = torch.as_tensor(feats)
        out = apply_attention(f, torch.as_tensor(mask), ClassLabel.BLEEDING)
        assert bool((out >= 0).all()) and bool((out <= f).all())


class TestAttentionClassify:
    def test_zero_features_zero_bias(self):
        head = ClassificationHead(4)
        with torch.no_grad():
            head.fc.bias.zero_()
        torch.testing.assert_close(attention_classify(torch.zeros(4, 2, 2), head), torch.tensor([0.5, 0.5]))

    def test_non_bleeding_matches_standard_path(self):
        head = ClassificationHead(4)
        feats = torch.rand(4, 3, 3)
        weighted = apply_attention(feats, torch.rand(3, 3), ClassLabel.NON_BLEEDING)
        torch.testing.assert_close(attention_classify(weighted, head), classify_head(feats, head), rtol=0, atol=0)

    def test_mask_covering_support_matches_standard_path(self):
        head = ClassificationHead(4)
        feats = torch.zeros(4, 4, 4)
        feats[:, 1:3, 1:3] = torch.rand(4, 2, 2)
        mask = torch.zeros(4, 4)
        mask[1:3, 1:3] = 1
        weighted = apply_attention(feats, mask, ClassLabel.BLEEDING)
        torch.testing.assert_close(attention_classify(weighted, head), classify_head(feats, head), atol=1e-6, rtol=0)
