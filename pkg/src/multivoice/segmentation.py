"""Phoneme boundary estimation.

A convolutional-recurrent net classifies adjacent phoneme pairs frame
by frame; marginalizing over alignments trains it without boundary
labels, and constrained best-path decoding against the known pair
sequence recovers the boundaries. Silence-adjacent boundaries get
snapped to edges of the detected-silence mask afterwards.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .data.lexicon import SILENCE
from .data.pairs import PhonemePairAlphabet
from .nnet.ctc import ctc_best_path, ctc_loss, ctc_posteriors
from .training import (
    load_checkpoint,
    load_model_state,
    model_state_arrays,
    save_checkpoint,
)
from .speaker import (
    SiteProjection,
    SpeakerEmbeddingTable,
    apply_feature_gate,
    init_recurrent_state,
)

FRAME_MS = 10.0


class ConvBlock(nn.Module):
    """Conv2d + batch norm, residual when channels allow it.

    Forward is relu(x + BN(W * x) * gate); with no residual path it is
    relu(BN(W * x) * gate). The gate vector (one entry per output
    channel) is optional; omitted means plain single-speaker behavior.
    Running batch-norm stats decay with factor 0.99.
    """

    def __init__(self, in_channels: int, out_channels: int, height: int,
                 width: int, residual: bool = True):
        super().__init__()
        if residual and in_channels != out_channels:
            raise ValueError("residual path needs matching channel counts")
        self.residual = residual
        self.conv = nn.Conv2d(in_channels, out_channels, (height, width),
                              padding="same", bias=not residual)
        self.bn = nn.BatchNorm2d(out_channels, momentum=0.01)

    def forward(self, x: torch.Tensor,
                gate: torch.Tensor | None = None) -> torch.Tensor:
        y = self.bn(self.conv(x))
        if gate is not None:
            y = apply_feature_gate(y, gate, channel_dim=1)
        if self.residual:
            y = y + x
        return torch.relu(y)


class SegmentationNet(nn.Module):
    """MFCC frames in, per-frame log probabilities over the pair
    alphabet (blank included) out. One utterance per call."""

    def __init__(self, alphabet: PhonemePairAlphabet, n_mfcc: int = 40,
                 conv_layers: int = 2, conv_channels: int = 16,
                 conv_height: int = 9, conv_width: int = 5,
                 rec_layers: int = 1, rec_width: int = 64,
                 dropout_keep: float = 1.0,
                 speaker_ids=None, embedding_size: int | None = None):
        super().__init__()
        self.alphabet = alphabet
        self.n_mfcc = n_mfcc
        blocks = [ConvBlock(1, conv_channels, conv_height, conv_width,
                            residual=False)]
        for _ in range(conv_layers - 1):
            blocks.append(ConvBlock(conv_channels, conv_channels,
                                    conv_height, conv_width))
        self.blocks = nn.ModuleList(blocks)
        self.gru = nn.GRU(conv_channels * n_mfcc, rec_width,
                          num_layers=rec_layers, bidirectional=True)
        self.dropout = nn.Dropout(p=1.0 - dropout_keep)
        self.head = nn.Linear(2 * rec_width, alphabet.size)

        self.speakers = None
        if speaker_ids is not None:
            if embedding_size is None:
                raise ValueError("embedding_size required with speakers")
            self.speakers = SpeakerEmbeddingTable(speaker_ids, embedding_size)
            # one gate shared by every conv layer, one recurrent-init
            # vector shared by every layer and direction
            self.gate_site = SiteProjection(embedding_size, conv_channels,
                                            "sigmoid")
            self.rnn_site = SiteProjection(embedding_size, rec_width)

    def forward(self, mfcc: torch.Tensor, speaker=None) -> torch.Tensor:
        if mfcc.ndim != 2 or mfcc.shape[1] != self.n_mfcc:
            raise ValueError(f"expected (T, {self.n_mfcc}) MFCC frames")
        gate = None
        h0 = None
        if self.speakers is not None:
            if speaker is None:
                raise ValueError("speaker required for multi-speaker model")
            g = self.speakers.row(speaker)
            gate = self.gate_site(g)
            h0 = init_recurrent_state(self.rnn_site(g),
                                      n_layers=self.gru.num_layers,
                                      bidirectional=True)
        x = mfcc.T.unsqueeze(0).unsqueeze(0)          # (1, 1, F, T)
        for block in self.blocks:
            x = block(x, gate=gate)
        feats = x.squeeze(0).flatten(0, 1).T          # (T, C*F)
        out, _ = self.gru(feats.unsqueeze(1), h0)
        out = self.dropout(out.squeeze(1))
        return torch.log_softmax(self.head(out), dim=1)


def segmentation_loss(net: SegmentationNet, mfcc: torch.Tensor,
                      phonemes, speaker=None) -> torch.Tensor:
    target = net.alphabet.encode_sequence(phonemes)
    return ctc_loss(net(mfcc, speaker=speaker), target)


def decode_boundaries(log_probs: torch.Tensor, phonemes,
                      alphabet: PhonemePairAlphabet) -> list:
    """Forced alignment: (phoneme, start_frame, end_frame) spans
    covering [0, T). The boundary between two phonemes sits at the
    frame where their pair peaks in posterior along the best path,
    earlier frame on ties."""
    phonemes = list(phonemes)
    n_frames = log_probs.shape[0]
    if not phonemes:
        raise ValueError("empty phoneme sequence")
    if len(phonemes) == 1:
        return [(phonemes[0], 0, n_frames)]
    target = alphabet.encode_sequence(phonemes)
    path = ctc_best_path(log_probs, target)
    gamma, _ = ctc_posteriors(log_probs, target)
    gamma = gamma.detach().numpy()

    boundaries = []
    for k in range(len(target)):
        state = 2 * k + 1
        frames = [t for t, s in enumerate(path) if s == state]
        if not frames:
            raise RuntimeError(f"alignment failed: pair {k} never emitted")
        post = gamma[frames, state]
        if post.max() < 1e-8:
            raise RuntimeError(f"alignment failed: degenerate posterior "
                               f"for pair {k}")
        boundaries.append(frames[int(np.argmax(post))])

    spans = []
    start = 0
    for i, phoneme in enumerate(phonemes):
        end = boundaries[i] if i < len(boundaries) else n_frames
        spans.append((phoneme, start, end))
        start = end
    return spans


def fix_silence_boundaries(boundaries: list, silence_mask,
                           window_ms: float = 50.0,
                           frame_ms: float = FRAME_MS) -> list:
    """Snap boundaries that touch a silence phoneme to the nearest
    edge of the detected-silence mask within the search window.
    Boundaries between two non-silence phonemes never move."""
    mask = np.asarray(silence_mask, dtype=bool)
    changes = np.flatnonzero(np.diff(mask.astype(np.int8))) + 1
    if changes.size == 0:
        return list(boundaries)
    window = int(round(window_ms / frame_ms))

    phonemes = [b[0] for b in boundaries]
    cuts = [b[2] for b in boundaries[:-1]]
    for i in range(len(cuts)):
        if SILENCE not in (phonemes[i], phonemes[i + 1]):
            continue
        dist = np.abs(changes - cuts[i])
        j = int(np.argmin(dist))
        if dist[j] > window:
            continue
        lo = (cuts[i - 1] if i > 0 else 0) + 1
        hi = (cuts[i + 1] if i + 1 < len(cuts) else boundaries[-1][2]) - 1
        if lo <= hi:
            cuts[i] = int(np.clip(changes[j], lo, hi))

    out = []
    start = 0
    for i, (phoneme, _, end) in enumerate(boundaries):
        new_end = cuts[i] if i < len(cuts) else end
        out.append((phoneme, start, new_end))
        start = new_end
    return out


def phoneme_pair_error_rate(predicted: list, reference: list,
                            tolerance_ms: float = 20.0,
                            frame_ms: float = FRAME_MS) -> float:
    """Fraction of boundaries deviating from reference by more than
    the tolerance."""
    if [p for p, _, _ in predicted] != [p for p, _, _ in reference]:
        raise ValueError("phoneme sequences differ")
    if len(predicted) < 2:
        raise ValueError("no interior boundaries to score")
    errors = 0
    pairs = len(predicted) - 1
    for (_, _, pred_end), (_, _, ref_end) in zip(predicted[:-1],
                                                 reference[:-1]):
        if abs(pred_end - ref_end) * frame_ms > tolerance_ms:
            errors += 1
    return errors / pairs


def spans_to_ms(spans: list, frame_ms: float = FRAME_MS) -> list:
    return [(p, s * frame_ms, e * frame_ms) for p, s, e in spans]


def ms_to_spans(alignment: list, frame_ms: float = FRAME_MS) -> list:
    return [(p, int(round(s / frame_ms)), int(round(e / frame_ms)))
            for p, s, e in alignment]


# ---------------------------------------------------------------------------
# persistence

def _segmentation_config(net: SegmentationNet) -> dict:
    first = net.blocks[0].conv
    return {
        "pairs": [list(p) for p in net.alphabet.pairs],
        "n_mfcc": net.n_mfcc,
        "conv_layers": len(net.blocks),
        "conv_channels": first.out_channels,
        "conv_height": first.kernel_size[0],
        "conv_width": first.kernel_size[1],
        "rec_layers": net.gru.num_layers,
        "rec_width": net.gru.hidden_size,
        "dropout_keep": 1.0 - net.dropout.p,
        "speaker_ids": (None if net.speakers is None
                        else list(net.speakers.speaker_ids)),
        "embedding_size": (None if net.speakers is None
                           else net.speakers.dim),
    }


def save_segmentation(path, net: SegmentationNet, iteration: int = 0,
                      seed: int = 0) -> None:
    save_checkpoint(path, "segmentation", model_state_arrays(net),
                    _segmentation_config(net), iteration, seed)


def load_segmentation(path) -> SegmentationNet:
    ckpt = load_checkpoint(path)
    if ckpt.tag != "segmentation":
        raise ValueError(f"checkpoint tag {ckpt.tag!r} is not a "
                         f"segmentation net")
    cfg = dict(ckpt.config)
    alphabet = PhonemePairAlphabet(tuple(tuple(p) for p in cfg["pairs"]))
    net = SegmentationNet(
        alphabet, cfg["n_mfcc"], cfg["conv_layers"], cfg["conv_channels"],
        cfg["conv_height"], cfg["conv_width"], cfg["rec_layers"],
        cfg["rec_width"], cfg["dropout_keep"],
        speaker_ids=cfg["speaker_ids"],
        embedding_size=cfg["embedding_size"])
    load_model_state(net, ckpt.arrays)
    net.eval()
    return net
