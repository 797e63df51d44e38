"""Speaker classification network used as the distinguishability metric.

A small 2-D convolutional classifier over MFCC features: it answers
"which speaker said this?" and its held-out accuracy on ground-truth
versus synthesized audio measures how well a synthesis engine keeps
voices apart.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data.split import split_corpus
from .dsp.clip import AudioClip
from .dsp.spectral import default_spec, mfcc
from .training import (
    OptimizerSchedule,
    format_log_line,
    learning_rate_at,
    load_checkpoint,
    load_model_state,
    make_optimizer,
    model_state_arrays,
    save_checkpoint,
    set_learning_rate,
    set_seed,
)

SAMPLE_RATE = 16000
HOP = 160


@dataclass(frozen=True)
class DiscriminatorPreset:
    """One column of the published hyperparameter grid."""
    name: str
    n_mfcc: int
    hop: int
    conv_layers: int
    conv_channels: int
    kernel_ceps: int
    kernel_time: int
    maxpool_width: int
    fc_size: int
    dropout: float
    schedule: OptimizerSchedule


_FAST = OptimizerSchedule(1e-3, 0.95, 1000)
_SLOW = OptimizerSchedule(1e-3, 0.99, 2000)

PRESETS = {
    "D1": DiscriminatorPreset("D1", 20, HOP, 5, 32, 2, 10, 2, 16, 0.75, _FAST),
    "D2": DiscriminatorPreset("D2", 20, HOP, 5, 32, 9, 5, 2, 16, 0.75, _FAST),
    "D3": DiscriminatorPreset("D3", 80, HOP, 5, 32, 2, 20, 2, 32, 0.75, _FAST),
    "D4": DiscriminatorPreset("D4", 80, HOP, 5, 32, 9, 5, 2, 32, 0.75, _FAST),
    "D5": DiscriminatorPreset("D5", 20, HOP, 3, 32, 9, 5, 2, 32, 0.75, _FAST),
    "D6": DiscriminatorPreset("D6", 20, HOP, 5, 32, 2, 10, 2, 32, 0.75, _SLOW),
    "D7": DiscriminatorPreset("D7", 80, HOP, 7, 32, 9, 5, 2, 32, 0.75, _FAST),
    "D8": DiscriminatorPreset("D8", 80, HOP, 5, 32, 2, 10, 2, 32, 0.75, _SLOW),
}


def clipped_relu(x: torch.Tensor) -> torch.Tensor:
    """relu capped at six."""
    return F.relu6(x)


class DiscriminatorNet(nn.Module):
    """2-D convolutions over (cepstral, time), clipped relu and dropout
    after every layer, one time max-pool, then a temporal mean-pool so
    any clip length maps to a fixed-size vector.

    Time padding is circular, which keeps the mean-pooled logits exactly
    unchanged when a feature sequence is tiled. The cepstral axis is
    unpadded; a layer's cepstral kernel shrinks to the incoming height
    when the stack has consumed the axis (deep presets on 20
    coefficients would otherwise be unrealizable).
    """

    def __init__(self, preset: DiscriminatorPreset, speaker_ids):
        super().__init__()
        ids = tuple(str(s) for s in speaker_ids)
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate speaker ids")
        if len(ids) < 2:
            raise ValueError("need at least 2 speakers")
        self.preset = preset
        self.speaker_ids = ids
        self.convs = nn.ModuleList()
        height = preset.n_mfcc
        in_ch = 1
        for _ in range(preset.conv_layers):
            kh = min(preset.kernel_ceps, height)
            self.convs.append(nn.Conv2d(in_ch, preset.conv_channels,
                                        (kh, preset.kernel_time)))
            height = height - kh + 1
            in_ch = preset.conv_channels
        self.final_height = height
        self.drop = nn.Dropout(preset.dropout)
        self.fc = nn.Linear(preset.conv_channels * height, preset.fc_size)
        self.out = nn.Linear(preset.fc_size, len(ids))

    def index_of(self, speaker) -> int:
        if isinstance(speaker, int):
            if not 0 <= speaker < len(self.speaker_ids):
                raise KeyError(f"speaker index {speaker} out of range")
            return speaker
        try:
            return self.speaker_ids.index(str(speaker))
        except ValueError:
            raise KeyError(f"unknown speaker {speaker!r}") from None

    def logits_from_features(self, features: torch.Tensor) -> torch.Tensor:
        """features: (frames, n_mfcc) -> logits (n_speakers,)."""
        if features.ndim != 2 or features.shape[1] != self.preset.n_mfcc:
            raise ValueError(
                f"expected (frames, {self.preset.n_mfcc}) features, got "
                f"{tuple(features.shape)}")
        kw = self.preset.kernel_time
        if features.shape[0] < kw:
            raise ValueError(
                f"clip too short: {features.shape[0]} frames < one "
                f"{kw}-frame convolution window")
        x = features.t().unsqueeze(0).unsqueeze(0)   # (1, 1, ceps, time)
        for conv in self.convs:
            x = F.pad(x, ((kw - 1) // 2, kw // 2, 0, 0), mode="circular")
            x = self.drop(clipped_relu(conv(x)))
        w = self.preset.maxpool_width
        x = F.max_pool2d(x, (1, w), stride=(1, w), ceil_mode=True)
        x = x.mean(dim=3).flatten()
        x = self.drop(clipped_relu(self.fc(x)))
        return self.out(x)

    def forward(self, clip: AudioClip) -> torch.Tensor:
        """Probability vector over the known speakers."""
        return torch.softmax(self.logits_from_features(
            clip_features(clip, self.preset)), dim=0)


def clip_features(clip: AudioClip, preset: DiscriminatorPreset) -> torch.Tensor:
    """Per-utterance mean/variance normalized MFCCs, (frames, n_mfcc).

    The normalization keeps the coefficients inside the clipped relu's
    useful range and cancels global gain, so predictions barely move
    when a clip is rescaled.
    """
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got "
                         f"{clip.sample_rate}; resample first")
    spec = default_spec(SAMPLE_RATE, window_ms=25.0)
    assert spec.hop_length == preset.hop
    feats = mfcc(clip, preset.n_mfcc, spec=spec)
    feats = feats - feats.mean(axis=0)
    feats = feats / (feats.std(axis=0) + 1e-3)
    return torch.from_numpy(feats).float()


def discriminator_forward(clip: AudioClip, net: DiscriminatorNet) -> torch.Tensor:
    return net(clip)


def predicted_speaker(probs: torch.Tensor, net: DiscriminatorNet) -> str:
    """Ties go to the lower index."""
    return net.speaker_ids[int(np.argmax(probs.detach().numpy()))]


def classification_accuracy(samples, net: DiscriminatorNet) -> float:
    """Fraction of clips whose argmax prediction matches the label."""
    if not samples:
        raise ValueError("no samples")
    was_training = net.training
    net.eval()
    correct = 0
    with torch.no_grad():
        for clip, speaker in samples:
            truth = net.index_of(speaker)
            probs = net(clip)
            if int(np.argmax(probs.numpy())) == truth:
                correct += 1
    if was_training:
        net.train()
    return correct / len(samples)


@dataclass(frozen=True)
class _Record:
    speaker_id: str


def train_discriminator(corpus, preset: DiscriminatorPreset | str,
                        iterations: int = 600, batch_size: int = 16,
                        seed: int = 0, log_lines: list | None = None):
    """Cross-entropy training on (clip, speaker_id) pairs.

    Returns (net, held_out_accuracy). The train/validation split is the
    corpus-wide deterministic fold assignment, so retraining with the
    same seed reproduces both the net and the reported number.
    """
    if isinstance(preset, str):
        preset = PRESETS[preset]
    corpus = list(corpus)
    speakers = sorted({speaker for _, speaker in corpus})
    if len(speakers) < 2:
        raise ValueError("need a corpus with at least 2 speakers")
    rng = set_seed(seed)
    net = DiscriminatorNet(preset, speakers)
    features = [clip_features(clip, preset) for clip, _ in corpus]
    labels = [net.index_of(speaker) for _, speaker in corpus]
    train_idx, val_idx = split_corpus([_Record(s) for _, s in corpus])
    if not train_idx or not val_idx:
        raise ValueError("corpus too small to hold out a validation set")
    optimizer = make_optimizer(net.parameters(), preset.schedule)
    net.train()
    for k in range(iterations):
        rate = learning_rate_at(preset.schedule, k)
        set_learning_rate(optimizer, rate)
        batch = rng.choice(len(train_idx), size=batch_size, replace=True)
        optimizer.zero_grad()
        loss = torch.stack([
            F.cross_entropy(
                net.logits_from_features(features[train_idx[j]]).unsqueeze(0),
                torch.tensor([labels[train_idx[j]]]))
            for j in batch
        ]).mean()
        loss.backward()
        optimizer.step()
        if log_lines is not None and k % 50 == 0:
            log_lines.append(format_log_line(k, float(loss.detach()), rate))
    net.eval()
    accuracy = classification_accuracy([corpus[i] for i in val_idx], net)
    return net, accuracy


def accuracy_report_row(model_tag: str, dataset_tag: str, preset_name: str,
                        accuracy: float) -> str:
    """One TSV row of the accuracy report."""
    return f"{model_tag}\t{dataset_tag}\t{preset_name}\t{accuracy:.4f}"


# ---------------------------------------------------------------------------
# persistence

def save_discriminator(path: str | Path, net: DiscriminatorNet,
                       iteration: int, seed: int) -> None:
    config = {"preset": net.preset.name,
              "speaker_ids": list(net.speaker_ids)}
    save_checkpoint(path, "discriminator", model_state_arrays(net), config,
                    iteration, seed)


def load_discriminator(path: str | Path) -> DiscriminatorNet:
    ckpt = load_checkpoint(path)
    if ckpt.tag != "discriminator":
        raise ValueError(f"not a discriminator checkpoint: {ckpt.tag!r}")
    net = DiscriminatorNet(PRESETS[ckpt.config["preset"]],
                           ckpt.config["speaker_ids"])
    load_model_state(net, ckpt.arrays)
    net.eval()
    return net
