"""Speaker discriminator tests."""
import numpy as np
import pytest
import torch

from multivoice.data.lexicon import text_to_phonemes
from multivoice.data.synthetic import (
    _WORDS,
    build_lexicon,
    default_speakers,
    render_utterance,
)
from multivoice.discriminator import (
    PRESETS,
    DiscriminatorNet,
    accuracy_report_row,
    classification_accuracy,
    clip_features,
    clipped_relu,
    discriminator_forward,
    load_discriminator,
    predicted_speaker,
    save_discriminator,
    train_discriminator,
)
from multivoice.dsp.clip import AudioClip
from multivoice.training import save_checkpoint


def _corpus(n_speakers=4, per_speaker=30, seed=7):
    lexicon = build_lexicon()
    words = sorted(_WORDS)
    rng = np.random.default_rng(seed)
    out = []
    for speaker in default_speakers(n_speakers):
        for _ in range(per_speaker):
            text = " ".join(rng.choice(words, size=int(rng.integers(1, 3))))
            clip, _ = render_utterance(text_to_phonemes(text, lexicon),
                                       speaker, rng)
            out.append((clip, speaker.speaker_id))
    return out


@pytest.fixture(scope="module")
def corpus():
    return _corpus()


@pytest.fixture(scope="module")
def trained(corpus):
    net, accuracy = train_discriminator(corpus, "D2", iterations=600,
                                        batch_size=16, seed=3)
    return net, accuracy


class TestPresets:
    def test_grid_complete(self):
        assert sorted(PRESETS) == [f"D{i}" for i in range(1, 9)]

    @pytest.mark.parametrize("name,n_mfcc,layers,kc,kt,fc,decay,interval", [
        ("D1", 20, 5, 2, 10, 16, 0.95, 1000),
        ("D2", 20, 5, 9, 5, 16, 0.95, 1000),
        ("D3", 80, 5, 2, 20, 32, 0.95, 1000),
        ("D4", 80, 5, 9, 5, 32, 0.95, 1000),
        ("D5", 20, 3, 9, 5, 32, 0.95, 1000),
        ("D6", 20, 5, 2, 10, 32, 0.99, 2000),
        ("D7", 80, 7, 9, 5, 32, 0.95, 1000),
        ("D8", 80, 5, 2, 10, 32, 0.99, 2000),
    ])
    def test_grid_values(self, name, n_mfcc, layers, kc, kt, fc, decay,
                         interval):
        p = PRESETS[name]
        assert p.n_mfcc == n_mfcc
        assert p.conv_layers == layers
        assert (p.kernel_ceps, p.kernel_time) == (kc, kt)
        assert p.fc_size == fc
        assert p.conv_channels == 32
        assert p.hop == 160
        assert p.maxpool_width == 2
        assert p.dropout == 0.75
        assert p.schedule.initial_rate == 1e-3
        assert p.schedule.decay_factor == decay
        assert p.schedule.decay_interval == interval


class TestForward:
    def test_probabilities_sum_to_one(self, corpus):
        torch.manual_seed(0)
        net = DiscriminatorNet(PRESETS["D1"], ["a", "b", "c"])
        net.eval()
        probs = discriminator_forward(corpus[0][0], net).detach()
        assert probs.shape == (3,)
        assert bool((probs >= 0).all())
        assert abs(float(probs.sum()) - 1.0) < 1e-6

    def test_variable_lengths_same_output_dim(self, corpus):
        torch.manual_seed(1)
        net = DiscriminatorNet(PRESETS["D1"], ["a", "b"])
        net.eval()
        short = corpus[0][0]
        long = AudioClip(np.tile(short.samples, 3), 16000)
        assert net(short).shape == net(long).shape == (2,)

    def test_clipped_relu(self):
        x = torch.tensor([-2.0, 0.0, 3.0, 10.0])
        y = clipped_relu(x)
        assert y.tolist() == [0.0, 0.0, 3.0, 6.0]
        sweep = clipped_relu(torch.linspace(-20, 20, 101))
        assert bool((sweep >= 0).all()) and bool((sweep <= 6).all())

    def test_too_short_clip_rejected(self):
        net = DiscriminatorNet(PRESETS["D1"], ["a", "b"])   # 10-wide kernels
        clip = AudioClip(np.zeros(4 * 160), 16000)          # a few frames
        with pytest.raises(ValueError, match="too short"):
            net(clip)

    def test_wrong_sample_rate_rejected(self):
        net = DiscriminatorNet(PRESETS["D1"], ["a", "b"])
        with pytest.raises(ValueError, match="16000"):
            net(AudioClip(np.zeros(22050), 22050))

    def test_feature_width_checked(self):
        net = DiscriminatorNet(PRESETS["D1"], ["a", "b"])
        with pytest.raises(ValueError):
            net.logits_from_features(torch.randn(50, 19))

    def test_speaker_list_validated(self):
        with pytest.raises(ValueError):
            DiscriminatorNet(PRESETS["D1"], ["only"])
        with pytest.raises(ValueError):
            DiscriminatorNet(PRESETS["D1"], ["a", "a"])

    def test_cepstral_axis_consumption(self):
        # valid cepstral convolutions, kernel clamped once the axis is spent
        assert DiscriminatorNet(PRESETS["D1"], "ab").final_height == 15
        assert DiscriminatorNet(PRESETS["D2"], "ab").final_height == 1
        assert DiscriminatorNet(PRESETS["D7"], "ab").final_height == 24

    def test_tiled_features_preserve_logits(self):
        torch.manual_seed(2)
        net = DiscriminatorNet(PRESETS["D2"], ["a", "b", "c"])
        net.eval()
        feats = torch.randn(24, 20)     # even length: pool windows align
        once = net.logits_from_features(feats)
        twice = net.logits_from_features(torch.cat([feats, feats]))
        assert torch.allclose(once, twice, atol=1e-6)


class TestAccuracy:
    def _rigged_net(self, bias):
        net = DiscriminatorNet(PRESETS["D1"], ["a", "b"])
        with torch.no_grad():
            for p in net.parameters():
                p.zero_()
            net.out.bias.copy_(torch.tensor(bias))
        net.eval()
        return net

    def test_counting(self, corpus):
        net = self._rigged_net([1.0, 0.0])      # always predicts "a"
        clips = [c for c, _ in corpus[:4]]
        assert classification_accuracy(
            [(c, "a") for c in clips], net) == 1.0
        labels = ["a", "a", "a", "b"]
        assert classification_accuracy(
            list(zip(clips, labels)), net) == 0.75

    def test_tie_breaks_toward_lower_index(self, corpus):
        net = self._rigged_net([0.0, 0.0])      # exact tie everywhere
        probs = net(corpus[0][0])
        assert float(probs[0]) == float(probs[1])
        assert predicted_speaker(probs, net) == "a"
        assert classification_accuracy([(corpus[0][0], "a")], net) == 1.0
        assert classification_accuracy([(corpus[0][0], "b")], net) == 0.0

    def test_unknown_speaker_rejected(self, corpus):
        net = self._rigged_net([0.0, 0.0])
        with pytest.raises(KeyError):
            classification_accuracy([(corpus[0][0], "zz")], net)
        with pytest.raises(ValueError):
            classification_accuracy([], net)

    def test_report_row(self):
        row = accuracy_report_row("ground_truth", "synthetic4", "D2", 0.975)
        assert row == "ground_truth\tsynthetic4\tD2\t0.9750"


class TestTraining:
    def test_single_speaker_rejected(self, corpus):
        solo = [(c, s) for c, s in corpus if s == "spk0"]
        with pytest.raises(ValueError):
            train_discriminator(solo, "D2", iterations=1)

    def test_held_out_accuracy(self, trained):
        _, accuracy = trained
        assert accuracy >= 0.95

    def test_amplitude_near_invariance(self, trained, corpus):
        net, _ = trained
        evaluation = corpus[::3]
        changed = 0
        for clip, _ in evaluation:
            half = AudioClip(clip.samples * 0.5, clip.sample_rate)
            a = predicted_speaker(net(clip), net)
            b = predicted_speaker(net(half), net)
            changed += a != b
        assert changed / len(evaluation) < 0.10

    def test_permuted_labels_read_chance(self, corpus):
        rng = np.random.default_rng(5)
        shuffled = [corpus[i][1] for i in rng.permutation(len(corpus))]
        permuted = [(clip, s) for (clip, _), s in zip(corpus, shuffled)]
        net, _ = train_discriminator(permuted, "D2", iterations=150,
                                     batch_size=16, seed=3)
        accuracy = classification_accuracy(permuted, net)
        assert abs(accuracy - 0.25) <= 0.10

    def test_deterministic_given_seed(self, corpus):
        small = corpus[::4]
        net1, acc1 = train_discriminator(small, "D5", iterations=40,
                                         batch_size=8, seed=11)
        net2, acc2 = train_discriminator(small, "D5", iterations=40,
                                         batch_size=8, seed=11)
        assert acc1 == acc2
        probe = corpus[1][0]
        assert torch.equal(net1(probe), net2(probe))

    def test_log_lines(self, corpus):
        lines: list = []
        train_discriminator(corpus[::6], "D5", iterations=51, batch_size=4,
                            seed=0, log_lines=lines)
        assert len(lines) == 2
        iteration, loss, rate = lines[0].split("\t")
        assert iteration == "0"
        assert float(loss) > 0
        assert float(rate) == 1e-3


class TestCheckpoint:
    def test_roundtrip(self, trained, corpus, tmp_path):
        net, _ = trained
        path = tmp_path / "disc.ckpt"
        save_discriminator(path, net, iteration=600, seed=3)
        loaded = load_discriminator(path)
        assert loaded.speaker_ids == net.speaker_ids
        probe = corpus[0][0]
        assert torch.equal(net(probe), loaded(probe))

    def test_wrong_tag_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, "duration", {}, {}, 0, 0)
        with pytest.raises(ValueError):
            load_discriminator(path)
