"""Trainable speaker identity: one shared embedding table per model,
consumed through small per-site projections in one of four patterns
(recurrent initialization, input augmentation, feature gating, bias).
"""
from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

_NONLINEARITIES = {
    "softsign": F.softsign,
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
}


class SpeakerEmbeddingTable(nn.Module):
    """N_speakers x dim matrix, entries drawn uniform from [-0.1, 0.1]
    and trained jointly with the owning model. Each model owns its own
    table; nothing is shared across models."""

    def __init__(self, speaker_ids, dim: int):
        super().__init__()
        ids = tuple(str(s) for s in speaker_ids)
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate speaker ids")
        if not ids:
            raise ValueError("need at least one speaker")
        if dim < 1:
            raise ValueError("embedding dim must be positive")
        self.speaker_ids = ids
        self._index = {sid: i for i, sid in enumerate(ids)}
        self.weight = nn.Parameter(torch.empty(len(ids), dim).uniform_(-0.1, 0.1))

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def index_of(self, speaker) -> int:
        if isinstance(speaker, str):
            if speaker not in self._index:
                raise KeyError(f"unknown speaker {speaker!r}")
            return self._index[speaker]
        i = int(speaker)
        if not 0 <= i < len(self.speaker_ids):
            raise KeyError(f"speaker index {i} out of range")
        return i

    def row(self, speaker) -> torch.Tensor:
        return self.weight[self.index_of(speaker)]


class SiteProjection(nn.Module):
    """Affine map + nonlinearity turning the shared embedding into the
    shape a particular consumption site needs. One instance per site."""

    def __init__(self, in_dim: int, out_dim: int,
                 nonlinearity: str = "softsign"):
        super().__init__()
        if nonlinearity not in _NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {nonlinearity!r}; "
                             f"choose from {sorted(_NONLINEARITIES)}")
        self.linear = nn.Linear(in_dim, out_dim)
        self.nonlinearity = nonlinearity

    def forward(self, g: torch.Tensor) -> torch.Tensor:
        return _NONLINEARITIES[self.nonlinearity](self.linear(g))


def site_embed(table: SpeakerEmbeddingTable, speaker,
               site: SiteProjection) -> torch.Tensor:
    return site(table.row(speaker))


def apply_feature_gate(activations: torch.Tensor, gate: torch.Tensor,
                       channel_dim: int = -1) -> torch.Tensor:
    """Elementwise per-channel gating, broadcast over every other axis."""
    if gate.ndim != 1:
        raise ValueError("gate must be a vector")
    dim = channel_dim % activations.ndim
    if activations.shape[dim] != gate.shape[0]:
        raise ValueError(f"channel mismatch: activations have "
                         f"{activations.shape[dim]}, gate has {gate.shape[0]}")
    shape = [1] * activations.ndim
    shape[dim] = gate.shape[0]
    return activations * gate.reshape(shape)


def augment_input(frames: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Concatenate the same site vector onto every timestep of (T, f)."""
    if frames.ndim != 2 or g.ndim != 1:
        raise ValueError("expected (T, f) frames and a vector")
    if g.shape[0] == 0:
        return frames
    return torch.cat([frames, g.unsqueeze(0).expand(frames.shape[0], -1)],
                     dim=1)


def init_recurrent_state(g: torch.Tensor, n_layers: int = 1,
                         bidirectional: bool = False,
                         batch: int = 1) -> torch.Tensor:
    """Initial hidden state for a GRU stack: the same site vector for
    every layer and both directions."""
    if g.ndim != 1:
        raise ValueError("expected a vector")
    directions = 2 if bidirectional else 1
    return g.reshape(1, 1, -1).expand(n_layers * directions, batch,
                                      g.shape[0]).contiguous()
