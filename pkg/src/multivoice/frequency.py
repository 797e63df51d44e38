"""Frame-level voicedness and fundamental-frequency prediction.

Phoneme features are upsampled to 10 ms frames, a recurrent stack
produces hidden states, and two normalized-frequency predictions (one
recurrent, one from summed multi-width convolutions) are blended by a
learned per-frame ratio. The normalized value is mapped to Hz either
with fixed dataset statistics or, in multi-speaker mode, through
trainable statistics scaled by speaker-dependent softsign terms.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .dsp.pitch import F0Track
from .speaker import SiteProjection, SpeakerEmbeddingTable, init_recurrent_state
from .training import (
    load_checkpoint,
    load_model_state,
    model_state_arrays,
    save_checkpoint,
)

FRAME_MS = 10.0


def frames_per_phoneme(durations_ms) -> list:
    """Frame count per phoneme: round half up, at least one frame."""
    counts = []
    for d in durations_ms:
        if d <= 0:
            raise ValueError(f"non-positive duration {d}")
        counts.append(max(1, int(np.floor(d / FRAME_MS + 0.5))))
    return counts


def upsample_to_frames(phoneme_features: torch.Tensor,
                       durations_ms) -> torch.Tensor:
    """Repeat each phoneme's feature row for its frame count."""
    if phoneme_features.ndim != 2:
        raise ValueError("expected (L, D) phoneme features")
    if phoneme_features.shape[0] != len(list(durations_ms)):
        raise ValueError("one duration per phoneme required")
    counts = frames_per_phoneme(durations_ms)
    reps = torch.tensor(counts, dtype=torch.long,
                        device=phoneme_features.device)
    return torch.repeat_interleave(phoneme_features, reps, dim=0)


def mix_predictions(f_gru: torch.Tensor, f_conv: torch.Tensor,
                    omega: torch.Tensor) -> torch.Tensor:
    if not (f_gru.shape == f_conv.shape == omega.shape):
        raise ValueError("mixture inputs must share a shape")
    return omega * f_gru + (1.0 - omega) * f_conv


def denormalize_f0(f: torch.Tensor, mu, sigma) -> torch.Tensor:
    return mu + sigma * f


def denormalize_f0_speaker(f: torch.Tensor, mu, sigma, v_mu: torch.Tensor,
                           v_sigma: torch.Tensor,
                           g_f: torch.Tensor) -> torch.Tensor:
    """Trainable statistics scaled by speaker-dependent softsign terms;
    both scale factors stay inside (0, 2)."""
    scale_mu = 1.0 + F.softsign(v_mu @ g_f)
    scale_sigma = 1.0 + F.softsign(v_sigma @ g_f)
    return mu * scale_mu + sigma * scale_sigma * f


class FrequencyModel(nn.Module):
    def __init__(self, n_phonemes: int, f0_mean: float, f0_std: float,
                 rec_layers: int = 1, rec_width: int = 32,
                 output_dim: int = 16, conv_widths=(5, 10),
                 speaker_ids=None, embedding_size: int | None = None):
        super().__init__()
        if f0_std <= 0:
            raise ValueError("f0_std must be positive")
        self.n_phonemes = n_phonemes
        self.gru = nn.GRU(n_phonemes, rec_width, num_layers=rec_layers,
                          bidirectional=True)
        hidden = 2 * rec_width
        self.voiced_head = nn.Linear(hidden, 1)
        # normalized-frequency prediction 1: one extra recurrent layer
        self.f_gru = nn.GRU(hidden, output_dim, bidirectional=True)
        self.f_gru_head = nn.Linear(2 * output_dim, 1)
        # prediction 2: summed single-channel convolutions
        self.f_convs = nn.ModuleList([
            nn.Conv1d(hidden, 1, w) for w in conv_widths
        ])
        self.omega_head = nn.Linear(hidden, 1)

        multi = speaker_ids is not None
        self.mu = nn.Parameter(torch.tensor(float(f0_mean)),
                               requires_grad=multi)
        self.sigma = nn.Parameter(torch.tensor(float(f0_std)),
                                  requires_grad=multi)
        self.speakers = None
        if multi:
            if embedding_size is None:
                raise ValueError("embedding_size required with speakers")
            self.speakers = SpeakerEmbeddingTable(speaker_ids, embedding_size)
            # hidden stack is speaker-initialized; the extra recurrent
            # output layer is not
            self.rnn_site = SiteProjection(embedding_size, rec_width)
            self.f0_site = SiteProjection(embedding_size, embedding_size)
            self.v_mu = nn.Parameter(torch.zeros(embedding_size))
            self.v_sigma = nn.Parameter(torch.zeros(embedding_size))

    def forward(self, frames: torch.Tensor, speaker=None):
        """(voiced probability, F0 in Hz), one value per 10 ms frame."""
        if frames.ndim != 2 or frames.shape[1] != self.n_phonemes:
            raise ValueError(f"expected (T, {self.n_phonemes}) frames")
        h0 = None
        g_f = None
        if self.speakers is not None:
            if speaker is None:
                raise ValueError("speaker required for multi-speaker model")
            g = self.speakers.row(speaker)
            h0 = init_recurrent_state(self.rnn_site(g),
                                      n_layers=self.gru.num_layers,
                                      bidirectional=True)
            g_f = self.f0_site(g)
        hidden, _ = self.gru(frames.unsqueeze(1), h0)
        hidden = hidden.squeeze(1)                      # (T, 2W)

        voiced = torch.sigmoid(self.voiced_head(hidden)).squeeze(1)
        g_out, _ = self.f_gru(hidden.unsqueeze(1))
        f_gru = self.f_gru_head(g_out.squeeze(1)).squeeze(1)
        c_in = hidden.T.unsqueeze(0)                    # (1, 2W, T)
        f_conv = 0.0
        for conv in self.f_convs:
            w = conv.kernel_size[0]
            # length-preserving padding, even widths pad one extra right
            padded = F.pad(c_in, ((w - 1) // 2, w // 2))
            f_conv = f_conv + conv(padded).squeeze(0).squeeze(0)
        omega = torch.sigmoid(self.omega_head(hidden)).squeeze(1)
        f = mix_predictions(f_gru, f_conv, omega)

        if self.speakers is None:
            f0 = denormalize_f0(f, self.mu, self.sigma)
        else:
            f0 = denormalize_f0_speaker(f, self.mu, self.sigma, self.v_mu,
                                        self.v_sigma, g_f)
        return voiced, f0


def frequency_loss(model: FrequencyModel, frames: torch.Tensor,
                   voiced_ref: torch.Tensor, f0_ref: torch.Tensor,
                   speaker_mean: float, speaker_std: float,
                   speaker=None) -> torch.Tensor:
    """Voicedness cross-entropy plus L1 on normalized frequency over
    the reference-voiced frames. Both the prediction and the target
    are normalized with the speaker's dataset statistics so the scale
    of the two terms matches."""
    voiced, f0 = model(frames, speaker=speaker)
    bce = F.binary_cross_entropy(voiced, voiced_ref)
    mask = voiced_ref > 0.5
    if not bool(mask.any()):
        return bce
    pred_norm = (f0 - speaker_mean) / speaker_std
    ref_norm = (f0_ref - speaker_mean) / speaker_std
    l1 = torch.abs(pred_norm[mask] - ref_norm[mask]).mean()
    return bce + l1


def predicted_track(model: FrequencyModel, frames: torch.Tensor,
                    speaker=None, threshold: float = 0.5) -> F0Track:
    with torch.no_grad():
        voiced, f0 = model(frames, speaker=speaker)
    voiced_mask = voiced.numpy() >= threshold
    values = f0.numpy().astype(np.float64).copy()
    values[~voiced_mask] = 0.0
    return F0Track(values, voiced_mask)


def f0_mae(pred: F0Track, ref: F0Track) -> float:
    """Mean absolute error in Hz over frames voiced in both tracks."""
    if len(pred) != len(ref):
        raise ValueError("track lengths differ")
    both = pred.voiced & ref.voiced
    if not both.any():
        raise ValueError("no commonly voiced frames")
    return float(np.mean(np.abs(pred.f0[both] - ref.f0[both])))


# ---------------------------------------------------------------------------
# persistence

def _frequency_config(model: FrequencyModel) -> dict:
    return {
        "n_phonemes": model.n_phonemes,
        "f0_mean": float(model.mu.detach()),
        "f0_std": float(model.sigma.detach()),
        "rec_layers": model.gru.num_layers,
        "rec_width": model.gru.hidden_size,
        "output_dim": model.f_gru.hidden_size,
        "conv_widths": [c.kernel_size[0] for c in model.f_convs],
        "speaker_ids": (None if model.speakers is None
                        else list(model.speakers.speaker_ids)),
        "embedding_size": (None if model.speakers is None
                           else model.speakers.dim),
    }


def save_frequency(path, model: FrequencyModel, iteration: int = 0,
                   seed: int = 0) -> None:
    save_checkpoint(path, "frequency", model_state_arrays(model),
                    _frequency_config(model), iteration, seed)


def load_frequency(path) -> FrequencyModel:
    ckpt = load_checkpoint(path)
    if ckpt.tag != "frequency":
        raise ValueError(f"checkpoint tag {ckpt.tag!r} is not a frequency "
                         f"model")
    cfg = dict(ckpt.config)
    model = FrequencyModel(
        cfg["n_phonemes"], cfg["f0_mean"], cfg["f0_std"], cfg["rec_layers"],
        cfg["rec_width"], cfg["output_dim"], tuple(cfg["conv_widths"]),
        speaker_ids=cfg["speaker_ids"],
        embedding_size=cfg["embedding_size"])
    load_model_state(model, ckpt.arrays)
    model.eval()
    return model
