"""Tests for gradcheck.py - end-to-end finite-difference verification"""
import pytest

from aghmn.gradcheck import TOLERANCE, all_variants, check_variant, tiny_config, tiny_conversation


def _variant_id(cfg):
    return f"{cfg.reader}-{cfg.fusion}-{cfg.summarizer}"


def _corrupt(grads):
    return {**grads, "classifier.b_o": grads["classifier.b_o"] + 0.5}


class TestVariants:
    """Tests for the variant enumeration"""

    def test_twelve_distinct_combinations(self):
        """Test every reader x fusion x summarizer appears once"""
        combos = {(c.reader, c.fusion, c.summarizer) for c in all_variants()}
        assert len(all_variants()) == len(combos) == 12

    def test_tiny_conversation_shape(self):
        """Test the gradient-check conversation is short and seeded"""
        conv = tiny_conversation(0)
        assert len(conv) == 3 and all(1 <= len(u.tokens) <= 4 for u in conv.utterances)
        assert tiny_conversation(0) == conv


class TestCheckVariant:
    """Tests for check_variant"""

    @pytest.mark.parametrize("cfg", all_variants(), ids=_variant_id)
    def test_backward_matches_finite_differences(self, cfg):
        """Test every variant's analytic gradient is within tolerance"""
        result = check_variant(cfg, seed=0)
        assert result.passed, result.failures
        assert result.worst < TOLERANCE

    @pytest.mark.parametrize("seed", [1, 2])
    def test_other_seeds(self, seed):
        """Test the flagship variant across further seeds"""
        assert check_variant(tiny_config("bigru", "bif", "biagru"), seed=seed).passed

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [1, 2, 3, 4])
    @pytest.mark.parametrize("cfg", all_variants(), ids=_variant_id)
    def test_every_variant_on_five_seeds(self, cfg, seed):
        """Test seeds 1-4 for every variant, seed 0 being covered above"""
        result = check_variant(cfg, seed=seed)
        assert result.passed, (seed, result.failures)
        assert result.worst < TOLERANCE

    def test_corrupted_gradient_reported(self):
        """Test a planted gradient fault is caught and named"""
        result = check_variant(tiny_config(summarizer="soft"), seed=0, hook=_corrupt)
        assert not result.passed
        assert result.failures == ["classifier.b_o"]
        assert result.worst_param == "classifier.b_o"
