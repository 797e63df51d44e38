"""Quasi-recurrent layers: gates from width-2 convolutions along time,
then a cheap elementwise recurrence h_t = f_t * h_{t-1} + (1 - f_t) * z_t.

Sequences are (T, dim) tensors. The backward direction runs the same
machinery on the time-reversed sequence.
"""
from __future__ import annotations

import torch
from torch import nn


class QRNNLayer(nn.Module):
    """Single direction. The width-2 convolution is causal: gates at
    step t see inputs t-1 and t (t+1 and t in reverse mode)."""

    def __init__(self, in_dim: int, hidden: int, reverse: bool = False):
        super().__init__()
        self.in_dim = in_dim
        self.hidden = hidden
        self.reverse = reverse
        self.w_prev = nn.Parameter(torch.empty(2 * hidden, in_dim))
        self.w_cur = nn.Parameter(torch.empty(2 * hidden, in_dim))
        self.bias = nn.Parameter(torch.zeros(2 * hidden))
        scale = (6.0 / (in_dim + hidden)) ** 0.5
        for w in (self.w_prev, self.w_cur):
            nn.init.uniform_(w, -scale, scale)

    def forward(self, x: torch.Tensor,
                h0: torch.Tensor | None = None) -> torch.Tensor:
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("expected a non-empty (T, dim) sequence")
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected width {self.in_dim}, got {x.shape[1]}")
        if self.reverse:
            x = torch.flip(x, dims=(0,))
        padded = torch.cat([x.new_zeros(1, x.shape[1]), x])
        gates = padded[:-1] @ self.w_prev.T + padded[1:] @ self.w_cur.T
        gates = gates + self.bias
        z = torch.tanh(gates[:, : self.hidden])
        f = torch.sigmoid(gates[:, self.hidden:])
        h = x.new_zeros(self.hidden) if h0 is None else h0
        outs = []
        for t in range(x.shape[0]):
            h = f[t] * h + (1.0 - f[t]) * z[t]
            outs.append(h)
        out = torch.stack(outs)
        if self.reverse:
            out = torch.flip(out, dims=(0,))
        return out


class BiQRNN(nn.Module):
    """Stack of bidirectional quasi-recurrent layers; each layer
    concatenates its two directions, so output width is 2 * hidden."""

    def __init__(self, in_dim: int, hidden: int, layers: int = 2):
        super().__init__()
        if layers < 1:
            raise ValueError("need at least one layer")
        self.fwd = nn.ModuleList()
        self.bwd = nn.ModuleList()
        width = in_dim
        for _ in range(layers):
            self.fwd.append(QRNNLayer(width, hidden, reverse=False))
            self.bwd.append(QRNNLayer(width, hidden, reverse=True))
            width = 2 * hidden
        self.out_dim = width

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for fwd, bwd in zip(self.fwd, self.bwd):
            x = torch.cat([fwd(x), bwd(x)], dim=1)
        return x
