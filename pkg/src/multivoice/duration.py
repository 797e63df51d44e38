"""Phoneme duration prediction as sequence labeling.

Durations are discretized into log-spaced buckets; a feedforward +
bidirectional recurrent net produces unary scores and a single shared
pairwise matrix couples adjacent labels. Decoding is Viterbi.
"""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .nnet.crf import crf_log_likelihood, crf_viterbi_decode
from .speaker import (
    SiteProjection,
    SpeakerEmbeddingTable,
    augment_input,
    init_recurrent_state,
)
from .training import (
    load_checkpoint,
    load_model_state,
    model_state_arrays,
    save_checkpoint,
)


class DurationBuckets:
    """B log-spaced buckets covering [d_min, d_max] milliseconds."""

    def __init__(self, count: int = 40, d_min: float = 10.0,
                 d_max: float = 400.0):
        if count < 1:
            raise ValueError("need at least one bucket")
        if not 0 < d_min < d_max:
            raise ValueError("need 0 < d_min < d_max")
        self.count = count
        self.d_min = d_min
        self.d_max = d_max
        self.edges = np.geomspace(d_min, d_max, count + 1)

    def bucketize(self, duration_ms: float) -> int:
        """Label i such that edge[i] <= clipped duration < edge[i+1];
        durations outside the range clip to the end buckets."""
        if duration_ms <= 0:
            raise ValueError(f"non-positive duration {duration_ms}")
        d = min(max(duration_ms, self.d_min), self.d_max)
        label = int(np.searchsorted(self.edges, d, side="right")) - 1
        return min(label, self.count - 1)

    def bucket_to_duration(self, label: int) -> float:
        """Representative duration: geometric mean of the bucket edges."""
        if not 0 <= label < self.count:
            raise ValueError(f"label {label} outside [0, {self.count})")
        return math.sqrt(self.edges[label] * self.edges[label + 1])


class DurationNet(nn.Module):
    """Per-phoneme unary scores over buckets plus the trainable
    pairwise matrix. Input is a one-hot phoneme sequence."""

    def __init__(self, n_phonemes: int, buckets: DurationBuckets,
                 fc_layers: int = 1, fc_units: int = 64,
                 rec_layers: int = 1, rec_width: int = 32,
                 dropout_keep: float = 1.0,
                 speaker_ids=None, embedding_size: int | None = None):
        super().__init__()
        self.n_phonemes = n_phonemes
        self.buckets = buckets

        self.speakers = None
        in_dim = n_phonemes
        if speaker_ids is not None:
            if embedding_size is None:
                raise ValueError("embedding_size required with speakers")
            self.speakers = SpeakerEmbeddingTable(speaker_ids, embedding_size)
            self.input_site = SiteProjection(embedding_size, embedding_size)
            self.rnn_site = SiteProjection(embedding_size, rec_width)
            in_dim += embedding_size

        fc = []
        width = in_dim
        for _ in range(fc_layers):
            fc += [nn.Linear(width, fc_units), nn.ReLU()]
            width = fc_units
        self.fc = nn.Sequential(*fc)
        self.gru = nn.GRU(width, rec_width, num_layers=rec_layers,
                          bidirectional=True)
        self.dropout = nn.Dropout(p=1.0 - dropout_keep)
        self.unary_head = nn.Linear(2 * rec_width, buckets.count)
        self.pairwise = nn.Parameter(torch.zeros(buckets.count,
                                                 buckets.count))

    def unaries(self, phoneme_onehots: torch.Tensor,
                speaker=None) -> torch.Tensor:
        if phoneme_onehots.ndim != 2 or \
                phoneme_onehots.shape[1] != self.n_phonemes:
            raise ValueError(f"expected (L, {self.n_phonemes}) one-hots")
        x = phoneme_onehots
        h0 = None
        if self.speakers is not None:
            if speaker is None:
                raise ValueError("speaker required for multi-speaker model")
            g = self.speakers.row(speaker)
            x = augment_input(x, self.input_site(g))
            h0 = init_recurrent_state(self.rnn_site(g),
                                      n_layers=self.gru.num_layers,
                                      bidirectional=True)
        x = self.fc(x)
        out, _ = self.gru(x.unsqueeze(1), h0)
        out = self.dropout(out.squeeze(1))
        return self.unary_head(out)

    def log_likelihood(self, phoneme_onehots: torch.Tensor, labels,
                       speaker=None) -> torch.Tensor:
        u = self.unaries(phoneme_onehots, speaker=speaker)
        return crf_log_likelihood(u, self.pairwise, labels)

    def decode(self, phoneme_onehots: torch.Tensor, speaker=None) -> list:
        with torch.no_grad():
            u = self.unaries(phoneme_onehots, speaker=speaker)
            return crf_viterbi_decode(u, self.pairwise)

    def predict_durations_ms(self, phoneme_onehots: torch.Tensor,
                             speaker=None) -> list:
        labels = self.decode(phoneme_onehots, speaker=speaker)
        return [self.buckets.bucket_to_duration(y) for y in labels]


def phoneme_onehots(phonemes, phoneme_set) -> torch.Tensor:
    index = {p: i for i, p in enumerate(phoneme_set)}
    out = torch.zeros(len(phonemes), len(phoneme_set))
    for i, p in enumerate(phonemes):
        if p not in index:
            raise KeyError(f"phoneme {p!r} not in inventory")
        out[i, index[p]] = 1.0
    return out


def duration_mae(predicted_ms, reference_ms) -> float:
    pred = np.asarray(predicted_ms, dtype=np.float64)
    ref = np.asarray(reference_ms, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError("length mismatch")
    return float(np.mean(np.abs(pred - ref)))


# ---------------------------------------------------------------------------
# persistence

def _duration_config(net: DurationNet) -> dict:
    linears = [m for m in net.fc if isinstance(m, nn.Linear)]
    return {
        "n_phonemes": net.n_phonemes,
        "buckets": net.buckets.count,
        "d_min": net.buckets.d_min,
        "d_max": net.buckets.d_max,
        "fc_layers": len(linears),
        "fc_units": linears[0].out_features if linears else 0,
        "rec_layers": net.gru.num_layers,
        "rec_width": net.gru.hidden_size,
        "dropout_keep": 1.0 - net.dropout.p,
        "speaker_ids": (None if net.speakers is None
                        else list(net.speakers.speaker_ids)),
        "embedding_size": (None if net.speakers is None
                           else net.speakers.dim),
    }


def save_duration(path, net: DurationNet, iteration: int = 0,
                  seed: int = 0) -> None:
    save_checkpoint(path, "duration", model_state_arrays(net),
                    _duration_config(net), iteration, seed)


def load_duration(path) -> DurationNet:
    ckpt = load_checkpoint(path)
    if ckpt.tag != "duration":
        raise ValueError(f"checkpoint tag {ckpt.tag!r} is not a duration net")
    cfg = dict(ckpt.config)
    buckets = DurationBuckets(cfg["buckets"], cfg["d_min"], cfg["d_max"])
    net = DurationNet(
        cfg["n_phonemes"], buckets, cfg["fc_layers"], cfg["fc_units"],
        cfg["rec_layers"], cfg["rec_width"], cfg["dropout_keep"],
        speaker_ids=cfg["speaker_ids"],
        embedding_size=cfg["embedding_size"])
    load_model_state(net, ckpt.arrays)
    net.eval()
    return net
