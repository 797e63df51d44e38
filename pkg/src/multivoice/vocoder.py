"""Sample-level autoregressive waveform model.

A stack of dilated causal convolutions with gated units predicts each
mu-law code from the previous samples and an upsampled conditioning
signal. Two departures from the usual stack: the gated output feeds the
residual connection directly (no projection in between), and a single
conditioner projection, bias included, is shared by every layer.
Conditioning comes from a two-layer bidirectional quasi-recurrent net
over 10 ms frames, repeated up to sample rate.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .dsp.clip import AudioClip
from .dsp.mulaw import DEFAULT_CHANNELS, mu_law_decode
from .nnet.qrnn import BiQRNN
from .speaker import SiteProjection, SpeakerEmbeddingTable, augment_input
from .training import (
    load_checkpoint,
    load_model_state,
    model_state_arrays,
    save_checkpoint,
)

HOP = 160                    # samples per conditioning frame at 16 kHz
MAX_DILATION = 512
FRONT_ENDS = ("phoneme_f0", "spectrogram")
F0_SCALE = 400.0             # puts pitch features in roughly unit range


def dilation_schedule(n_layers: int, max_dilation: int = MAX_DILATION) -> list:
    """Doubling dilations, restarting from 1 past the maximum."""
    if n_layers < 1:
        raise ValueError("need at least one layer")
    cycle = []
    d = 1
    while d <= max_dilation:
        cycle.append(d)
        d *= 2
    return [cycle[i % len(cycle)] for i in range(n_layers)]


def receptive_field(dilations) -> int:
    """Samples of left context seen by the last frame, input included."""
    return 1 + sum(dilations)


def expected_parameter_count(n_layers: int, residual: int, skip: int,
                             conditioner_dim: int,
                             classes: int = DEFAULT_CHANNELS) -> int:
    """Closed-form parameter count of WaveNetStack.

    Counts embedding, per-layer width-2 convolutions and skip taps, one
    shared conditioner projection, and the two-layer output head. There
    is deliberately no per-layer term in residual**2: the stack has no
    projection between the gated unit and the residual add.
    """
    embed = classes * residual
    per_layer = (2 * residual) * residual * 2 + 2 * residual   # width-2 conv
    per_layer += skip * residual + skip                        # skip tap
    cond = 2 * residual * conditioner_dim + 2 * residual       # shared once
    head = skip * skip + skip + classes * skip + classes
    return embed + n_layers * per_layer + cond + head


def removed_projection_parameter_count(n_layers: int, residual: int) -> int:
    """Parameters a per-layer post-gate projection would have added."""
    return n_layers * (residual * residual + residual)


class WaveNetStack(nn.Module):
    """Dilated gated convolution stack over mu-law codes.

    forward(codes, cond) returns logits where row t is the prediction
    for codes[t] given codes[:t]; the input is shifted right one step
    internally, with a zero vector in place of a start symbol.
    """

    def __init__(self, n_layers: int = 20, residual_channels: int = 64,
                 skip_channels: int = 256, conditioner_dim: int = 128,
                 classes: int = DEFAULT_CHANNELS,
                 max_dilation: int = MAX_DILATION):
        super().__init__()
        self.residual_channels = residual_channels
        self.skip_channels = skip_channels
        self.conditioner_dim = conditioner_dim
        self.classes = classes
        self.dilations = dilation_schedule(n_layers, max_dilation)
        self.embed = nn.Embedding(classes, residual_channels)
        self.convs = nn.ModuleList([
            nn.Conv1d(residual_channels, 2 * residual_channels, 2, dilation=d)
            for d in self.dilations
        ])
        self.skips = nn.ModuleList([
            nn.Conv1d(residual_channels, skip_channels, 1)
            for _ in self.dilations
        ])
        # one projection for the whole stack; every layer adds its output
        self.cond = nn.Linear(conditioner_dim, 2 * residual_channels)
        self.head1 = nn.Conv1d(skip_channels, skip_channels, 1)
        self.head2 = nn.Conv1d(skip_channels, classes, 1)
        # a fresh stack should predict close to a uniform distribution
        nn.init.zeros_(self.head2.weight)
        nn.init.zeros_(self.head2.bias)

    def forward(self, codes: torch.Tensor,
                cond_features: torch.Tensor) -> torch.Tensor:
        if codes.ndim != 1 or codes.dtype != torch.long:
            raise ValueError("codes must be a 1-D integer tensor")
        if codes.numel() == 0:
            raise ValueError("empty code sequence")
        if cond_features.shape != (codes.shape[0], self.conditioner_dim):
            raise ValueError(
                f"conditioning shape {tuple(cond_features.shape)} does not "
                f"match {codes.shape[0]} samples x {self.conditioner_dim}")
        r = self.residual_channels
        e = self.embed(codes)
        x = torch.cat([e.new_zeros(1, r), e[:-1]])     # shift right
        x = x.T.unsqueeze(0)                           # (1, R, T)
        cond = self.cond(cond_features).T.unsqueeze(0)  # (1, 2R, T)
        skip_sum = torch.zeros(1, self.skip_channels, codes.shape[0],
                               dtype=x.dtype, device=x.device)
        for conv, skip in zip(self.convs, self.skips):
            d = conv.dilation[0]
            pre = conv(F.pad(x, (d, 0))) + cond
            z = torch.tanh(pre[:, :r]) * torch.sigmoid(pre[:, r:])
            skip_sum = skip_sum + skip(z)
            x = x + z                                  # direct residual add
        h = torch.relu(skip_sum)
        h = torch.relu(self.head1(h))
        return self.head2(h).squeeze(0).T              # (T, classes)


def teacher_forced_nll(stack: WaveNetStack, cond_features: torch.Tensor,
                       codes: torch.Tensor) -> torch.Tensor:
    """Mean negative log likelihood of the codes, nats per sample."""
    logits = stack(codes, cond_features)
    return F.cross_entropy(logits, codes)


class _IncrementalStack:
    """One-sample-at-a-time evaluation of a WaveNetStack.

    Keeps a ring buffer of past layer inputs per layer, sized by the
    dilation, so each step costs one matvec per layer instead of a full
    forward pass.
    """

    def __init__(self, stack: WaveNetStack):
        self.stack = stack
        self.r = stack.residual_channels
        self.dilations = stack.dilations
        self.w_prev = [c.weight[:, :, 0] for c in stack.convs]
        self.w_cur = [c.weight[:, :, 1] for c in stack.convs]
        self.conv_b = [c.bias for c in stack.convs]
        self.skip_w = [s.weight.squeeze(2) for s in stack.skips]
        self.skip_b = [s.bias for s in stack.skips]
        self.h1_w = stack.head1.weight.squeeze(2)
        self.h1_b = stack.head1.bias
        self.h2_w = stack.head2.weight.squeeze(2)
        self.h2_b = stack.head2.bias
        self.buffers = [torch.zeros(d, self.r) for d in self.dilations]
        self.t = 0

    def step(self, x: torch.Tensor, cond_row: torch.Tensor) -> torch.Tensor:
        """Logits for the sample at the current position; x is the
        embedding of the previous sample (zeros at position 0)."""
        r = self.r
        skip_sum = torch.zeros(self.stack.skip_channels)
        for i, d in enumerate(self.dilations):
            slot = self.t % d
            past = self.buffers[i][slot]
            pre = self.w_prev[i] @ past + self.w_cur[i] @ x \
                + self.conv_b[i] + cond_row
            z = torch.tanh(pre[:r]) * torch.sigmoid(pre[r:])
            skip_sum = skip_sum + self.skip_w[i] @ z + self.skip_b[i]
            self.buffers[i][slot] = x
            x = x + z
        h = torch.relu(skip_sum)
        h = torch.relu(self.h1_w @ h + self.h1_b)
        self.t += 1
        return self.h2_w @ h + self.h2_b


@torch.no_grad()
def incremental_logits(stack: WaveNetStack, cond_features: torch.Tensor,
                       codes: torch.Tensor) -> torch.Tensor:
    """Teacher-forced logits via the incremental path; must agree with
    the batched forward. Exists so tests can pin the two together."""
    state = _IncrementalStack(stack)
    cond = stack.cond(cond_features)
    out = []
    x = torch.zeros(stack.residual_channels)
    for t in range(codes.shape[0]):
        out.append(state.step(x, cond[t]))
        x = stack.embed.weight[codes[t]]
    return torch.stack(out)


@torch.no_grad()
def wavenet_sample(stack: WaveNetStack, cond_features: torch.Tensor,
                   seed: int, sample_rate: int = 16000) -> AudioClip:
    """Autoregressive draw from the categorical output at each step,
    mu-law decoded to audio. Deterministic for a given seed."""
    state = _IncrementalStack(stack)
    cond = stack.cond(cond_features)
    n = cond_features.shape[0]
    gen = torch.Generator().manual_seed(seed)
    codes = torch.empty(n, dtype=torch.long)
    x = torch.zeros(stack.residual_channels)
    for t in range(n):
        logits = state.step(x, cond[t])
        probs = torch.softmax(logits, dim=0)
        c = torch.multinomial(probs, 1, generator=gen)[0]
        codes[t] = c
        x = stack.embed.weight[c]
    samples = mu_law_decode(codes.numpy(), channels=stack.classes)
    return AudioClip(samples, sample_rate)


class VocoderConditioner(nn.Module):
    """Two-layer bidirectional quasi-recurrent net over 10 ms frames,
    output repeated HOP times per frame up to sample rate. An optional
    speaker vector is concatenated onto every input frame."""

    def __init__(self, feature_dim: int, hidden: int = 64, hop: int = HOP,
                 speaker_ids=None, embedding_size: int | None = None):
        super().__init__()
        self.feature_dim = feature_dim
        self.hop = hop
        in_dim = feature_dim
        self.speakers = None
        if speaker_ids is not None:
            if embedding_size is None:
                raise ValueError("embedding_size required with speakers")
            self.speakers = SpeakerEmbeddingTable(speaker_ids, embedding_size)
            self.site = SiteProjection(embedding_size, embedding_size)
            in_dim += embedding_size
        self.qrnn = BiQRNN(in_dim, hidden, layers=2)
        self.out_dim = self.qrnn.out_dim

    def forward(self, frames: torch.Tensor, speaker=None) -> torch.Tensor:
        if frames.ndim != 2 or frames.shape[1] != self.feature_dim:
            raise ValueError(f"expected (T, {self.feature_dim}) frames")
        if frames.shape[0] == 0:
            raise ValueError("empty conditioning input")
        if self.speakers is not None:
            if speaker is None:
                raise ValueError("speaker required for multi-speaker model")
            frames = augment_input(frames,
                                   self.site(self.speakers.row(speaker)))
        h = self.qrnn(frames)
        return torch.repeat_interleave(h, self.hop, dim=0)


def phoneme_f0_features(phoneme_frames: torch.Tensor, voiced: torch.Tensor,
                        f0_hz: torch.Tensor) -> torch.Tensor:
    """Per-frame conditioner input: phoneme one-hots, voicedness flag,
    and pitch scaled to roughly unit range."""
    if phoneme_frames.ndim != 2:
        raise ValueError("expected (T, P) phoneme frames")
    n = phoneme_frames.shape[0]
    if voiced.shape != (n,) or f0_hz.shape != (n,):
        raise ValueError("voiced and f0 tracks must match frame count")
    return torch.cat([phoneme_frames, voiced.unsqueeze(1),
                      (f0_hz / F0_SCALE).unsqueeze(1)], dim=1)


def spectrogram_features(log_mag: np.ndarray) -> torch.Tensor:
    """Linear-frequency log-magnitude frames as conditioner input."""
    arr = np.asarray(log_mag, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("expected (T, bins) spectrogram")
    return torch.from_numpy(arr.copy())


class Vocoder(nn.Module):
    """Conditioner plus stack, tagged with the front end it expects:
    "phoneme_f0" frames or "spectrogram" frames."""

    def __init__(self, front_end: str, feature_dim: int, n_layers: int = 20,
                 residual_channels: int = 64, skip_channels: int = 256,
                 conditioner_hidden: int = 64, hop: int = HOP,
                 speaker_ids=None, embedding_size: int | None = None):
        super().__init__()
        if front_end not in FRONT_ENDS:
            raise ValueError(f"unknown front end {front_end!r}")
        self.front_end = front_end
        self.conditioner = VocoderConditioner(
            feature_dim, conditioner_hidden, hop,
            speaker_ids=speaker_ids, embedding_size=embedding_size)
        self.stack = WaveNetStack(n_layers, residual_channels, skip_channels,
                                  conditioner_dim=self.conditioner.out_dim)

    def nll(self, frames: torch.Tensor, codes: torch.Tensor,
            speaker=None) -> torch.Tensor:
        cond = self.conditioner(frames, speaker=speaker)
        if cond.shape[0] != codes.shape[0]:
            raise ValueError(
                f"{codes.shape[0]} samples vs {cond.shape[0]} conditioned "
                f"samples; clip length must be frames x hop")
        return teacher_forced_nll(self.stack, cond, codes)

    @torch.no_grad()
    def sample(self, frames: torch.Tensor, seed: int, speaker=None,
               sample_rate: int = 16000) -> AudioClip:
        cond = self.conditioner(frames, speaker=speaker)
        return wavenet_sample(self.stack, cond, seed, sample_rate)


def _vocoder_config(v: Vocoder) -> dict:
    return {
        "front_end": v.front_end,
        "feature_dim": v.conditioner.feature_dim,
        "n_layers": len(v.stack.dilations),
        "residual_channels": v.stack.residual_channels,
        "skip_channels": v.stack.skip_channels,
        "conditioner_hidden": v.conditioner.qrnn.fwd[0].hidden,
        "hop": v.conditioner.hop,
        "speaker_ids": (None if v.conditioner.speakers is None
                        else list(v.conditioner.speakers.speaker_ids)),
        "embedding_size": (None if v.conditioner.speakers is None
                           else v.conditioner.speakers.dim),
    }


def save_vocoder(path, vocoder: Vocoder, iteration: int = 0,
                 seed: int = 0) -> None:
    save_checkpoint(path, "vocoder", model_state_arrays(vocoder),
                    _vocoder_config(vocoder), iteration, seed)


def load_vocoder(path) -> Vocoder:
    ckpt = load_checkpoint(path)
    if ckpt.tag != "vocoder":
        raise ValueError(f"checkpoint tag {ckpt.tag!r} is not a vocoder")
    cfg = dict(ckpt.config)
    vocoder = Vocoder(
        cfg["front_end"], cfg["feature_dim"], cfg["n_layers"],
        cfg["residual_channels"], cfg["skip_channels"],
        cfg["conditioner_hidden"], cfg["hop"],
        speaker_ids=cfg["speaker_ids"], embedding_size=cfg["embedding_size"])
    load_model_state(vocoder, ckpt.arrays)
    vocoder.eval()
    return vocoder
