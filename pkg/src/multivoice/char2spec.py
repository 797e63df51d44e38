"""Character-to-spectrogram sequence model.

A convolution-bank + highway + bidirectional-GRU encoder reads the
character sequence, an attentional decoder emits mel frames in groups
of `reduction` per step, and a second convolution-bank net maps the mel
output to a linear-frequency log-magnitude spectrogram. Speaker
conditioning enters the encoder (highway inputs, recurrent init) and
the decoder (prenet input, attention bias, initial attention context,
recurrent init); the post-processing net is deliberately unconditioned.
An auxiliary alignment penalty scores affine projections of the
attention cell's hidden states against the phoneme sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .nnet.ctc import ctc_feasible, ctc_loss
from .speaker import SiteProjection, SpeakerEmbeddingTable, init_recurrent_state
from .training import (
    load_checkpoint,
    load_model_state,
    model_state_arrays,
    save_checkpoint,
)

_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_DIGITS = "0123456789"
_PUNCT = " '.,!?;:-"
PAD = "<pad>"
UNK = "<unk>"


class CharVocabulary:
    """Lowercase characters, digits, space, apostrophe, and basic
    punctuation, with two reserved slots for padding and unknowns."""

    def __init__(self):
        self.tokens = (PAD, UNK) + tuple(_LETTERS + _DIGITS + _PUNCT)
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> torch.Tensor:
        if not text:
            raise ValueError("empty text")
        ids = []
        for ch in text.lower():
            if ch not in self._index:
                raise ValueError(f"character {ch!r} not in vocabulary")
            ids.append(self._index[ch])
        return torch.tensor(ids, dtype=torch.long)


def _same_pad_conv(x: torch.Tensor, conv: nn.Conv1d) -> torch.Tensor:
    """Length-preserving convolution; even widths pad one extra right."""
    w = conv.kernel_size[0]
    return conv(F.pad(x, ((w - 1) // 2, w // 2)))


class Highway(nn.Module):
    """Gated skip layer; an optional per-model vector rides along as
    extra input to both transforms while the carry path stays clean."""

    def __init__(self, dim: int, extra: int = 0):
        super().__init__()
        self.transform = nn.Linear(dim + extra, dim)
        self.gate = nn.Linear(dim + extra, dim)
        nn.init.constant_(self.gate.bias, -1.0)

    def forward(self, x: torch.Tensor,
                extra_vec: torch.Tensor | None = None) -> torch.Tensor:
        inp = x
        if extra_vec is not None:
            inp = torch.cat([x, extra_vec.expand(x.shape[0], -1)], dim=1)
        t = torch.sigmoid(self.gate(inp))
        h = torch.relu(self.transform(inp))
        return t * h + (1.0 - t) * x


class CBHG(nn.Module):
    """Convolution bank, max-pool, projections with a residual add,
    highway stack, bidirectional recurrent layer."""

    def __init__(self, in_dim: int, bank_size: int, channels: int,
                 proj_width: int, proj_size: int, highway_layers: int,
                 rec_size: int, maxpool_width: int = 2,
                 highway_extra: int = 0):
        super().__init__()
        self.in_dim = in_dim
        self.maxpool_width = maxpool_width
        self.bank = nn.ModuleList([
            nn.Conv1d(in_dim, channels, k) for k in range(1, bank_size + 1)
        ])
        self.bank_bn = nn.BatchNorm1d(bank_size * channels, momentum=0.01)
        self.proj1 = nn.Conv1d(bank_size * channels, proj_size, proj_width)
        self.proj1_bn = nn.BatchNorm1d(proj_size, momentum=0.01)
        self.proj2 = nn.Conv1d(proj_size, in_dim, proj_width)
        self.proj2_bn = nn.BatchNorm1d(in_dim, momentum=0.01)
        self.pre_highway = (nn.Linear(in_dim, channels)
                            if in_dim != channels else None)
        self.highways = nn.ModuleList([
            Highway(channels, extra=highway_extra)
            for _ in range(highway_layers)
        ])
        self.gru = nn.GRU(channels, rec_size, bidirectional=True)
        self.out_dim = 2 * rec_size

    def forward(self, x: torch.Tensor,
                highway_extra_vec: torch.Tensor | None = None,
                h0: torch.Tensor | None = None) -> torch.Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected (T, {self.in_dim}) input")
        if x.shape[0] == 0:
            raise ValueError("empty sequence")
        c = x.T.unsqueeze(0)                                # (1, D, T)
        stacked = torch.cat([torch.relu(_same_pad_conv(c, conv))
                             for conv in self.bank], dim=1)
        stacked = self.bank_bn(stacked)
        pooled = F.max_pool1d(F.pad(stacked, (0, self.maxpool_width - 1)),
                              self.maxpool_width, stride=1)
        p = torch.relu(self.proj1_bn(_same_pad_conv(pooled, self.proj1)))
        p = self.proj2_bn(_same_pad_conv(p, self.proj2))
        y = p.squeeze(0).T + x                              # residual
        if self.pre_highway is not None:
            y = self.pre_highway(y)
        for hw in self.highways:
            y = hw(y, highway_extra_vec)
        out, _ = self.gru(y.unsqueeze(1), h0)
        return out.squeeze(1)


def pad_for_reduction(frames: torch.Tensor, reduction: int,
                      fill: float | None = None) -> torch.Tensor:
    """Pad a frame sequence to a multiple of the reduction factor; the
    fill defaults to the sequence minimum (spectral floor)."""
    t = frames.shape[0]
    remainder = t % reduction
    if remainder == 0:
        return frames
    if fill is None:
        fill = float(frames.min())
    pad = frames.new_full((reduction - remainder, frames.shape[1]), fill)
    return torch.cat([frames, pad])


@dataclass
class TeacherForcedResult:
    mel: torch.Tensor              # (T, mel_bins)
    linear: torch.Tensor           # (T, linear_bins)
    attention: torch.Tensor        # (steps, chars)
    attention_hidden: torch.Tensor  # (steps, attention_state)


@dataclass
class SynthesisResult:
    mel: torch.Tensor
    linear: torch.Tensor
    attention: torch.Tensor
    stopped_by: str                # "silence" | "max_steps"
    attention_flagged: bool        # True when attention never focused


class Char2Spec(nn.Module):
    def __init__(self, phonemes, mel_bins: int = 80, linear_bins: int = 513,
                 bank_size: int = 4, channels: int = 32, enc_rec: int = 32,
                 highway_layers: int = 2, proj_size: int = 32,
                 proj_width: int = 3, attention_size: int = 32,
                 attention_state: int = 64, decoder_layers: int = 2,
                 prenet_sizes=(64, 32), reduction: int = 4,
                 dropout_keep: float = 1.0, post_bank: int = 4,
                 post_channels: int = 32, post_width: int = 3,
                 post_rec: int = 32, post_highways: int = 2,
                 maxpool_width: int = 2,
                 speaker_ids=None, embedding_size: int | None = None):
        super().__init__()
        self.phonemes = tuple(phonemes)
        if len(set(self.phonemes)) != len(self.phonemes):
            raise ValueError("duplicate phonemes")
        self.mel_bins = mel_bins
        self.linear_bins = linear_bins
        self.reduction = reduction
        self.dropout_keep = dropout_keep
        self.vocab = CharVocabulary()

        multi = speaker_ids is not None
        self.speakers = None
        emb = 0
        if multi:
            if embedding_size is None:
                raise ValueError("embedding_size required with speakers")
            self.speakers = SpeakerEmbeddingTable(speaker_ids, embedding_size)
            emb = embedding_size
            self.highway_site = SiteProjection(emb, emb)
            self.enc_rnn_site = SiteProjection(emb, enc_rec)
            self.prenet_site = SiteProjection(emb, emb)
            self.attn_context_site = SiteProjection(emb, 2 * enc_rec)
            self.attn_bias_site = SiteProjection(emb, attention_size)
            self.dec_rnn_site = SiteProjection(emb, attention_state)

        self.embed = nn.Embedding(self.vocab.size, channels)
        self.encoder = CBHG(channels, bank_size, channels, proj_width,
                            proj_size, highway_layers, enc_rec,
                            maxpool_width, highway_extra=emb)
        enc_out = self.encoder.out_dim

        prenet = []
        width = mel_bins + emb
        for size in prenet_sizes:
            prenet += [nn.Linear(width, size), nn.ReLU(),
                       nn.Dropout(p=1.0 - dropout_keep)]
            width = size
        self.prenet = nn.Sequential(*prenet)

        self.attn_cell = nn.GRUCell(width + enc_out, attention_state)
        self.attn_enc = nn.Linear(enc_out, attention_size, bias=False)
        self.attn_dec = nn.Linear(attention_state, attention_size)
        self.attn_score = nn.Linear(attention_size, 1, bias=False)
        self.dec_cells = nn.ModuleList(
            [nn.GRUCell(attention_state + enc_out, attention_state)] +
            [nn.GRUCell(attention_state, attention_state)
             for _ in range(decoder_layers - 1)])
        self.frame_out = nn.Linear(attention_state, reduction * mel_bins)
        self.ctc_head = nn.Linear(attention_state, len(self.phonemes) + 1)

        # the post-processing net takes no speaker input on purpose
        self.postnet = CBHG(mel_bins, post_bank, post_channels, post_width,
                            post_channels, post_highways, post_rec,
                            maxpool_width)
        self.linear_out = nn.Linear(self.postnet.out_dim, linear_bins)

    def encode_phonemes(self, phonemes) -> list:
        """Alignment-target indices; 0 is reserved for blank."""
        index = {p: i + 1 for i, p in enumerate(self.phonemes)}
        out = []
        for p in phonemes:
            if p not in index:
                raise KeyError(f"phoneme {p!r} not in inventory")
            out.append(index[p])
        return out

    def _speaker_row(self, speaker):
        if self.speakers is None:
            if speaker is not None:
                raise ValueError("model was built without speakers")
            return None
        if speaker is None:
            raise ValueError("speaker required for multi-speaker model")
        return self.speakers.row(speaker)

    def encode(self, char_ids: torch.Tensor, speaker=None) -> torch.Tensor:
        """One encoder state per character."""
        if char_ids.ndim != 1 or char_ids.dtype != torch.long:
            raise ValueError("char_ids must be a 1-D integer tensor")
        if char_ids.numel() == 0:
            raise ValueError("empty character sequence")
        if int(char_ids.max()) >= self.vocab.size or int(char_ids.min()) < 0:
            raise ValueError("character id outside vocabulary")
        g = self._speaker_row(speaker)
        extra = h0 = None
        if g is not None:
            extra = self.highway_site(g)
            h0 = init_recurrent_state(self.enc_rnn_site(g), n_layers=1,
                                      bidirectional=True)
        return self.encoder(self.embed(char_ids), extra, h0)

    def _initial_state(self, enc: torch.Tensor, g):
        att_state = self.attn_cell.hidden_size
        h_att = enc.new_zeros(att_state)
        if g is not None:
            context = self.attn_context_site(g)
            h_dec = [self.dec_rnn_site(g)] * len(self.dec_cells)
        else:
            context = enc.new_zeros(enc.shape[1])
            h_dec = [enc.new_zeros(att_state)] * len(self.dec_cells)
        return h_att, h_dec, context

    def _step(self, enc, prev_frame, h_att, h_dec, context, g):
        x = prev_frame
        if g is not None:
            x = torch.cat([x, self.prenet_site(g)])
        x = self.prenet(x)
        h_att = self.attn_cell(torch.cat([x, context]).unsqueeze(0),
                               h_att.unsqueeze(0)).squeeze(0)
        scores = self.attn_enc(enc) + self.attn_dec(h_att)
        if g is not None:
            scores = scores + self.attn_bias_site(g)
        scores = self.attn_score(torch.tanh(scores)).squeeze(1)
        alpha = torch.softmax(scores, dim=0)
        context = alpha @ enc
        inp = torch.cat([h_att, context])
        new_dec = []
        for i, cell in enumerate(self.dec_cells):
            h = cell(inp.unsqueeze(0), h_dec[i].unsqueeze(0)).squeeze(0)
            inp = h if i == 0 else inp + h
            new_dec.append(h)
        frames = self.frame_out(inp).view(self.reduction, self.mel_bins)
        return frames, alpha, h_att, new_dec, context

    def postnet_forward(self, mel: torch.Tensor) -> torch.Tensor:
        """Mel frames to linear-frequency log magnitude; speaker-free."""
        return self.linear_out(self.postnet(mel))

    def teacher_forced(self, char_ids: torch.Tensor, mel_ref: torch.Tensor,
                       speaker=None) -> TeacherForcedResult:
        if mel_ref.ndim != 2 or mel_ref.shape[1] != self.mel_bins:
            raise ValueError(f"expected (T, {self.mel_bins}) mel frames")
        if mel_ref.shape[0] % self.reduction != 0:
            raise ValueError(
                f"{mel_ref.shape[0]} frames not divisible by reduction "
                f"{self.reduction}; pad_for_reduction first")
        g = self._speaker_row(speaker)
        enc = self.encode(char_ids, speaker)
        h_att, h_dec, context = self._initial_state(enc, g)
        steps = mel_ref.shape[0] // self.reduction
        frames, alphas, hiddens = [], [], []
        prev = mel_ref.new_zeros(self.mel_bins)
        for k in range(steps):
            out, alpha, h_att, h_dec, context = self._step(
                enc, prev, h_att, h_dec, context, g)
            frames.append(out)
            alphas.append(alpha)
            hiddens.append(h_att)
            prev = mel_ref[(k + 1) * self.reduction - 1]
        mel = torch.cat(frames)
        return TeacherForcedResult(mel, self.postnet_forward(mel),
                                   torch.stack(alphas),
                                   torch.stack(hiddens))

    @torch.no_grad()
    def synthesize(self, text: str, speaker=None, max_steps: int = 200,
                   stop_threshold: float = -15.0,
                   stop_patience: int = 2) -> SynthesisResult:
        """Greedy decoding until the emitted frames go quiet or the step
        cap is reached. Attention is flagged when its entropy never
        drops below 0.75 * log(chars), meaning it never focused."""
        char_ids = self.vocab.encode(text)
        g = self._speaker_row(speaker)
        enc = self.encode(char_ids, speaker)
        h_att, h_dec, context = self._initial_state(enc, g)
        frames, alphas = [], []
        prev = enc.new_zeros(self.mel_bins)
        quiet = 0
        stopped_by = "max_steps"
        for _ in range(max_steps):
            out, alpha, h_att, h_dec, context = self._step(
                enc, prev, h_att, h_dec, context, g)
            frames.append(out)
            alphas.append(alpha)
            prev = out[-1]
            quiet = quiet + 1 if float(out.mean()) < stop_threshold else 0
            if quiet >= stop_patience:
                stopped_by = "silence"
                break
        mel = torch.cat(frames)
        attention = torch.stack(alphas)
        entropy = -(attention * torch.log(attention + 1e-12)).sum(dim=1)
        flagged = bool(entropy.min() > 0.75 * math.log(enc.shape[0]))
        return SynthesisResult(mel, self.postnet_forward(mel), attention,
                               stopped_by, flagged)


def spectrogram_loss(model: Char2Spec, result: TeacherForcedResult,
                     ref_mel: torch.Tensor, ref_linear: torch.Tensor,
                     phonemes, ctc_coeff: float = 0.01) -> torch.Tensor:
    """L1 on mel, L1 on linear, plus the weighted alignment penalty on
    projections of the attention hidden states."""
    if result.mel.shape != ref_mel.shape:
        raise ValueError(f"mel shape {tuple(result.mel.shape)} vs reference "
                         f"{tuple(ref_mel.shape)}")
    if result.linear.shape != ref_linear.shape:
        raise ValueError(f"linear shape {tuple(result.linear.shape)} vs "
                         f"reference {tuple(ref_linear.shape)}")
    loss = (result.mel - ref_mel).abs().mean() \
        + (result.linear - ref_linear).abs().mean()
    if ctc_coeff:
        target = model.encode_phonemes(phonemes)
        # decoder steps can undercut the label count on very short clips;
        # the penalty is undefined there, so it is skipped rather than inf
        if ctc_feasible(result.attention_hidden.shape[0], target):
            log_probs = torch.log_softmax(
                model.ctc_head(result.attention_hidden), dim=1)
            loss = loss + ctc_coeff * ctc_loss(log_probs, target)
    return loss


def _char2spec_config(m: Char2Spec) -> dict:
    enc = m.encoder
    post = m.postnet
    return {
        "phonemes": list(m.phonemes),
        "mel_bins": m.mel_bins,
        "linear_bins": m.linear_bins,
        "bank_size": len(enc.bank),
        "channels": enc.bank[0].out_channels,
        "enc_rec": enc.gru.hidden_size,
        "highway_layers": len(enc.highways),
        "proj_size": enc.proj1.out_channels,
        "proj_width": enc.proj1.kernel_size[0],
        "attention_size": m.attn_enc.out_features,
        "attention_state": m.attn_cell.hidden_size,
        "decoder_layers": len(m.dec_cells),
        "prenet_sizes": [mod.out_features for mod in m.prenet
                         if isinstance(mod, nn.Linear)],
        "reduction": m.reduction,
        "dropout_keep": m.dropout_keep,
        "post_bank": len(post.bank),
        "post_channels": post.bank[0].out_channels,
        "post_width": post.proj1.kernel_size[0],
        "post_rec": post.gru.hidden_size,
        "post_highways": len(post.highways),
        "maxpool_width": enc.maxpool_width,
        "speaker_ids": (None if m.speakers is None
                        else list(m.speakers.speaker_ids)),
        "embedding_size": None if m.speakers is None else m.speakers.dim,
    }


def save_char2spec(path, model: Char2Spec, iteration: int = 0,
                   seed: int = 0) -> None:
    save_checkpoint(path, "char2spec", model_state_arrays(model),
                    _char2spec_config(model), iteration, seed)


def load_char2spec(path) -> Char2Spec:
    ckpt = load_checkpoint(path)
    if ckpt.tag != "char2spec":
        raise ValueError(f"checkpoint tag {ckpt.tag!r} is not char2spec")
    cfg = dict(ckpt.config)
    model = Char2Spec(
        cfg["phonemes"], cfg["mel_bins"], cfg["linear_bins"],
        cfg["bank_size"], cfg["channels"], cfg["enc_rec"],
        cfg["highway_layers"], cfg["proj_size"], cfg["proj_width"],
        cfg["attention_size"], cfg["attention_state"], cfg["decoder_layers"],
        tuple(cfg["prenet_sizes"]), cfg["reduction"], cfg["dropout_keep"],
        cfg["post_bank"], cfg["post_channels"], cfg["post_width"],
        cfg["post_rec"], cfg["post_highways"], cfg["maxpool_width"],
        speaker_ids=cfg["speaker_ids"], embedding_size=cfg["embedding_size"])
    load_model_state(model, ckpt.arrays)
    model.eval()
    return model
