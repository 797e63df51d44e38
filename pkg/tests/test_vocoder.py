"""Waveform model tests: stack structure, causality, sampling."""
import math

import numpy as np
import pytest
import torch

from multivoice.training import finite_difference_check, set_seed
from multivoice.vocoder import (
    Vocoder,
    VocoderConditioner,
    WaveNetStack,
    dilation_schedule,
    expected_parameter_count,
    incremental_logits,
    load_vocoder,
    phoneme_f0_features,
    receptive_field,
    removed_projection_parameter_count,
    save_vocoder,
    spectrogram_features,
    teacher_forced_nll,
    wavenet_sample,
)


def _small_stack(n_layers=6, residual=8, skip=12, cond=5, max_dilation=8):
    return WaveNetStack(n_layers, residual, skip, cond,
                        max_dilation=max_dilation)


class TestDilations:
    def test_doubling_cycle_restarts(self):
        assert dilation_schedule(12) == [1, 2, 4, 8, 16, 32, 64, 128, 256,
                                         512, 1, 2]
        assert dilation_schedule(3, max_dilation=4) == [1, 2, 4]
        with pytest.raises(ValueError):
            dilation_schedule(0)

    def test_receptive_field(self):
        assert receptive_field([1, 2, 4, 8]) == 16
        assert receptive_field(dilation_schedule(10)) == 1024


class TestStackStructure:
    def test_parameter_count_matches_formula(self):
        for layers, r, s, c in [(6, 8, 12, 5), (20, 16, 24, 10)]:
            stack = WaveNetStack(layers, r, s, c, max_dilation=8)
            actual = sum(p.numel() for p in stack.parameters())
            assert actual == expected_parameter_count(layers, r, s, c)

    def test_no_post_gate_projection(self):
        # a per-layer projection would add exactly L * (R^2 + R) weights
        layers, r, s, c = (6, 8, 12, 5)
        stack = _small_stack(layers, r, s, c)
        actual = sum(p.numel() for p in stack.parameters())
        with_projection = expected_parameter_count(layers, r, s, c) \
            + removed_projection_parameter_count(layers, r)
        assert actual != with_projection
        assert with_projection - actual == layers * (r * r + r)

    def test_untrained_nll_is_log_classes(self):
        torch.manual_seed(0)
        stack = _small_stack()
        codes = torch.randint(0, 256, (40,))
        cond = torch.randn(40, 5)
        nll = teacher_forced_nll(stack, cond, codes).detach()
        assert abs(float(nll) - math.log(256)) < 0.1

    def test_output_shape_and_input_validation(self):
        stack = _small_stack()
        codes = torch.randint(0, 256, (30,))
        out = stack(codes, torch.randn(30, 5))
        assert out.shape == (30, 256)
        with pytest.raises(ValueError):
            stack(codes, torch.randn(29, 5))
        with pytest.raises(ValueError):
            stack(codes.float(), torch.randn(30, 5))
        with pytest.raises(ValueError):
            stack(torch.empty(0, dtype=torch.long), torch.randn(0, 5))


class TestCausality:
    @pytest.mark.parametrize("n_layers", [20, 40])
    def test_probe_full_depth(self, n_layers):
        torch.manual_seed(1)
        stack = WaveNetStack(n_layers, residual_channels=4, skip_channels=6,
                             conditioner_dim=3)
        # break the uniform head so late positions can actually change
        torch.nn.init.normal_(stack.head2.weight, std=0.5)
        codes = torch.randint(0, 256, (50,))
        cond = torch.randn(50, 3)
        base = stack(codes, cond)
        for t in [0, 13, 30, 49]:
            bumped = codes.clone()
            bumped[t] = (int(bumped[t]) + 101) % 256
            out = stack(bumped, cond)
            assert torch.equal(out[:t + 1], base[:t + 1])
            if t + 1 < 50:
                assert not torch.allclose(out[t + 1:], base[t + 1:])

    def test_first_logit_ignores_all_codes(self):
        torch.manual_seed(2)
        stack = _small_stack()
        torch.nn.init.normal_(stack.head2.weight, std=0.5)
        cond = torch.randn(20, 5)
        a = stack(torch.randint(0, 256, (20,)), cond)
        b = stack(torch.randint(0, 256, (20,)), cond)
        assert torch.equal(a[0], b[0])


class TestSharedConditionerProjection:
    def test_gradient_accumulates_across_layers(self):
        torch.manual_seed(3)
        stack = WaveNetStack(2, residual_channels=4, skip_channels=6,
                             conditioner_dim=3, max_dilation=2).double()
        torch.nn.init.normal_(stack.head2.weight, std=0.3)
        codes = torch.randint(0, 256, (12,))
        cond = torch.randn(12, 3, dtype=torch.float64)

        def loss_fn():
            return teacher_forced_nll(stack, cond, codes)

        report = finite_difference_check(
            loss_fn, {"cond.weight": stack.cond.weight,
                      "cond.bias": stack.cond.bias}, tolerance=1e-4)
        assert report.passed, str(report)

    def test_single_projection_feeds_every_layer(self):
        # zeroing the shared projection's input weight must still leave
        # its bias visible in all layers: outputs differ when only the
        # shared bias changes
        torch.manual_seed(4)
        stack = _small_stack(n_layers=2, max_dilation=2)
        torch.nn.init.normal_(stack.head2.weight, std=0.3)
        codes = torch.randint(0, 256, (10,))
        cond = torch.zeros(10, 5)
        base = stack(codes, cond)
        with torch.no_grad():
            stack.cond.bias.add_(0.5)
        assert not torch.allclose(stack(codes, cond), base)


class TestIncrementalAgreement:
    def test_matches_batched_forward(self):
        torch.manual_seed(5)
        stack = _small_stack()
        torch.nn.init.normal_(stack.head2.weight, std=0.3)
        codes = torch.randint(0, 256, (30,))
        cond_features = torch.randn(30, 5)
        batched = stack(codes, cond_features)
        stepped = incremental_logits(stack, cond_features, codes)
        assert torch.allclose(batched, stepped, atol=1e-5)


class TestSampling:
    def test_same_seed_same_waveform(self):
        torch.manual_seed(6)
        stack = _small_stack()
        cond = torch.randn(25, 5)
        a = wavenet_sample(stack, cond, seed=11)
        b = wavenet_sample(stack, cond, seed=11)
        c = wavenet_sample(stack, cond, seed=12)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_output_length_and_range(self):
        torch.manual_seed(7)
        stack = _small_stack()
        clip = wavenet_sample(stack, torch.randn(30, 5), seed=0)
        assert len(clip) == 30
        assert clip.sample_rate == 16000
        assert np.max(np.abs(clip.samples)) <= 1.0


class TestConditioner:
    def test_upsamples_by_hop(self):
        torch.manual_seed(8)
        cond = VocoderConditioner(feature_dim=7, hidden=4, hop=160)
        out = cond(torch.randn(5, 7))
        assert out.shape == (800, 8)
        # each frame's rows are identical copies
        assert torch.equal(out[0], out[159])
        assert torch.equal(out[160], out[319])

    def test_zero_input_fresh_net_is_constant(self):
        cond = VocoderConditioner(feature_dim=7, hidden=4, hop=2)
        out = cond(torch.zeros(6, 7))
        assert torch.allclose(out, out[0].expand_as(out))

    def test_validation(self):
        cond = VocoderConditioner(feature_dim=7, hidden=4)
        with pytest.raises(ValueError):
            cond(torch.zeros(0, 7))
        with pytest.raises(ValueError):
            cond(torch.zeros(5, 6))

    def test_speakers_change_output(self):
        torch.manual_seed(9)
        cond = VocoderConditioner(feature_dim=7, hidden=4, hop=2,
                                  speaker_ids=["s0", "s1"], embedding_size=3)
        x = torch.randn(5, 7)
        a = cond(x, speaker="s0")
        b = cond(x, speaker="s1")
        assert not torch.allclose(a, b)
        with pytest.raises(ValueError):
            cond(x)


class TestFrontEnds:
    def test_phoneme_f0_feature_layout(self):
        frames = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        voiced = torch.tensor([1.0, 0.0])
        f0 = torch.tensor([200.0, 0.0])
        feats = phoneme_f0_features(frames, voiced, f0)
        assert feats.shape == (2, 4)
        assert feats[0, 2] == 1.0
        assert feats[0, 3] == pytest.approx(0.5)
        with pytest.raises(ValueError):
            phoneme_f0_features(frames, voiced, torch.zeros(3))

    def test_spectrogram_features_shape(self):
        feats = spectrogram_features(np.zeros((4, 9)))
        assert feats.shape == (4, 9)
        assert feats.dtype == torch.float32
        with pytest.raises(ValueError):
            spectrogram_features(np.zeros(4))

    def test_unknown_front_end_rejected(self):
        with pytest.raises(ValueError):
            Vocoder("mel", feature_dim=4)


class TestVocoderEndToEnd:
    def test_nll_requires_matching_lengths(self):
        torch.manual_seed(10)
        voc = Vocoder("spectrogram", feature_dim=4, n_layers=4,
                      residual_channels=8, skip_channels=8,
                      conditioner_hidden=4, hop=10)
        frames = torch.randn(3, 4)
        codes = torch.randint(0, 256, (30,))
        assert torch.isfinite(voc.nll(frames, codes))
        with pytest.raises(ValueError):
            voc.nll(frames, torch.randint(0, 256, (29,)))

    def test_overfit_loss_drops(self):
        set_seed(13)
        voc = Vocoder("spectrogram", feature_dim=4, n_layers=6,
                      residual_channels=12, skip_channels=16,
                      conditioner_hidden=6, hop=10)
        frames = torch.randn(8, 4)
        codes = torch.randint(100, 140, (80,))
        opt = torch.optim.Adam(voc.parameters(), lr=2e-3)
        first = None
        for _ in range(120):
            opt.zero_grad()
            loss = voc.nll(frames, codes)
            loss.backward()
            opt.step()
            if first is None:
                first = float(loss.detach())
        assert float(loss.detach()) < first / 2.0

    def test_checkpoint_roundtrip(self, tmp_path):
        torch.manual_seed(11)
        voc = Vocoder("phoneme_f0", feature_dim=6, n_layers=4,
                      residual_channels=8, skip_channels=8,
                      conditioner_hidden=4, hop=10,
                      speaker_ids=["s0", "s1"], embedding_size=3)
        path = tmp_path / "voc.ckpt"
        save_vocoder(path, voc, iteration=7, seed=3)
        loaded = load_vocoder(path)
        assert loaded.front_end == "phoneme_f0"
        frames = torch.randn(4, 6)
        codes = torch.randint(0, 256, (40,))
        a = voc.nll(frames, codes, speaker="s1")
        b = loaded.nll(frames, codes, speaker="s1")
        assert torch.equal(a, b)

    def test_wrong_tag_rejected(self, tmp_path):
        from multivoice.training import save_checkpoint
        path = tmp_path / "other.ckpt"
        save_checkpoint(path, "duration", {}, {}, 0, 0)
        with pytest.raises(ValueError):
            load_vocoder(path)
