"""End-to-end orchestration.

Feature preparation, per-model training in dependency order, the
phonemes -> durations -> F0 -> waveform inference chain (plus the
text -> spectrogram -> waveform alternatives), evaluation, and
embedding analysis. Everything is file-based under a single working
directory so each stage can be rerun or inspected in isolation.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .analysis import pca_embeddings, pca_report_rows, save_pca_scatter
from .char2spec import (
    Char2Spec,
    load_char2spec,
    pad_for_reduction,
    save_char2spec,
    spectrogram_loss,
)
from .config import TrainConfig
from .data.lexicon import SILENCE, parse_lexicon, text_to_phonemes, write_lexicon
from .data.manifest import parse_manifest, resolve_audio_path
from .data.pairs import build_pair_alphabet
from .data.split import split_corpus
from .data.stats import compute_speaker_stats, load_stats, save_stats
from .discriminator import (
    PRESETS,
    accuracy_report_row,
    classification_accuracy,
    load_discriminator,
    save_discriminator,
    train_discriminator,
)
from .dsp.audiofile import read_wav, write_wav
from .dsp.cache import load_array, save_array
from .dsp.clip import AudioClip
from .dsp.pitch import F0Track, estimate_f0
from .dsp.silence import SilenceDetectorConfig, detect_silence
from .dsp.spectral import (
    LOG_FLOOR,
    default_spec,
    griffin_lim,
    mel_log_spectrogram,
    mfcc,
    stft_log_magnitude,
)
from .duration import (
    DurationBuckets,
    DurationNet,
    duration_mae,
    load_duration,
    phoneme_onehots,
    save_duration,
)
from .frequency import (
    FrequencyModel,
    f0_mae,
    frequency_loss,
    load_frequency,
    predicted_track,
    save_frequency,
    upsample_to_frames,
)
from .segmentation import (
    SegmentationNet,
    decode_boundaries,
    fix_silence_boundaries,
    load_segmentation,
    ms_to_spans,
    phoneme_pair_error_rate,
    save_segmentation,
    segmentation_loss,
    spans_to_ms,
)
from .training import make_optimizer, set_seed, train_steps
from .vocoder import (
    Vocoder,
    load_vocoder,
    phoneme_f0_features,
    save_vocoder,
    spectrogram_features,
)

WORKDIR_ENV = "DV2_WORKDIR"
SAMPLE_RATE = 16000
HOP = 160
FRAME_MS = 10.0
MEL_BINS = 80

# fixed log-magnitude range mapped to [0, 1] for spectrogram targets
LOG_LO = math.log(LOG_FLOOR)
LOG_HI = 7.0

ENGINES = ("deep_voice_2", "char2spec_griffin_lim", "char2spec_vocoder")
TRAINABLE = ("segmentation", "duration", "frequency", "vocoder",
             "char2spec", "discriminator")
EVALUABLE = ("segmentation", "duration", "frequency", "discriminator")

GRIFFIN_LIM_ITERATIONS = 60


def normalize_log_spectrogram(log_mag: np.ndarray) -> np.ndarray:
    return np.clip((log_mag - LOG_LO) / (LOG_HI - LOG_LO), 0.0, 1.0)


def denormalize_log_spectrogram(x: np.ndarray) -> np.ndarray:
    return np.asarray(x) * (LOG_HI - LOG_LO) + LOG_LO


def default_workdir() -> Path:
    root = os.environ.get(WORKDIR_ENV)
    if not root:
        raise ValueError(f"no --workdir given and {WORKDIR_ENV} is unset")
    return Path(root)


class Workdir:
    """Directory layout for one pipeline run."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def features(self) -> Path:
        return self.root / "features"

    @property
    def alignments(self) -> Path:
        return self.root / "alignments"

    @property
    def reference_alignments(self) -> Path:
        return self.root / "reference_alignments"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def logs(self) -> Path:
        return self.root / "logs"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics"

    @property
    def plots(self) -> Path:
        return self.root / "plots"

    @property
    def synth(self) -> Path:
        return self.root / "synth"

    @property
    def manifest_copy(self) -> Path:
        return self.root / "manifest.tsv"

    @property
    def lexicon_copy(self) -> Path:
        return self.root / "lexicon.txt"

    @property
    def phonemes_tsv(self) -> Path:
        return self.root / "phonemes.tsv"

    @property
    def inventory_txt(self) -> Path:
        return self.root / "inventory.txt"

    @property
    def stats_tsv(self) -> Path:
        return self.root / "stats.tsv"

    @property
    def splits_tsv(self) -> Path:
        return self.root / "splits.tsv"

    @property
    def prepare_hash(self) -> Path:
        return self.root / "prepare.hash"

    def checkpoint(self, model: str) -> Path:
        return self.checkpoints / f"{model}.ckpt"

    def feature(self, stem: str, kind: str) -> Path:
        return self.features / f"{stem}.{kind}"

    def ensure(self) -> "Workdir":
        for d in (self.root, self.features, self.alignments,
                  self.reference_alignments, self.checkpoints, self.logs,
                  self.metrics, self.plots, self.synth):
            d.mkdir(parents=True, exist_ok=True)
        return self


def entry_stem(audio_path: str) -> str:
    return Path(audio_path).stem


# ---------------------------------------------------------------------------
# prepare

@dataclass(frozen=True)
class PrepareReport:
    utterances: int
    speakers: int
    skipped: bool
    oov_words: tuple
    unreadable: tuple

    @property
    def ok(self) -> bool:
        return not self.oov_words and not self.unreadable


def _corpus_fingerprint(manifest_path: Path, lexicon_path: Path,
                        entries) -> str:
    h = hashlib.sha256()
    h.update(Path(manifest_path).read_bytes())
    h.update(Path(lexicon_path).read_bytes())
    for entry in entries:
        h.update(Path(resolve_audio_path(manifest_path, entry)).read_bytes())
    return h.hexdigest()


def cmd_prepare(manifest_path: str | Path, lexicon_path: str | Path,
                workdir_root: str | Path) -> PrepareReport:
    """Extract every training input (features, F0, phonemes, stats,
    splits) once; reruns on an unchanged corpus are hash-skipped."""
    manifest_path = Path(manifest_path)
    lexicon_path = Path(lexicon_path)
    work = Workdir(workdir_root).ensure()

    entries = parse_manifest(manifest_path, check_audio=False)
    lexicon = parse_lexicon(lexicon_path)
    speakers = sorted({e.speaker_id for e in entries})

    oov: set = set()
    unreadable: list = []
    phoneme_seqs: dict = {}
    clips: dict = {}
    for entry in entries:
        try:
            phoneme_seqs[entry_stem(entry.audio_path)] = \
                text_to_phonemes(entry.transcript, lexicon)
        except ValueError as err:
            text = str(err)
            if "not in lexicon" in text:
                oov.update(text.split(": ", 1)[1].split(", "))
            else:
                raise
        try:
            clips[entry_stem(entry.audio_path)] = \
                read_wav(resolve_audio_path(manifest_path, entry))
        except (OSError, ValueError, EOFError):
            unreadable.append(entry.audio_path)
    if oov or unreadable:
        return PrepareReport(len(entries), len(speakers), False,
                             tuple(sorted(oov)), tuple(unreadable))

    fingerprint = _corpus_fingerprint(manifest_path, lexicon_path, entries)
    if work.prepare_hash.exists() and \
            work.prepare_hash.read_text().strip() == fingerprint and \
            work.stats_tsv.exists():
        return PrepareReport(len(entries), len(speakers), True, (), ())

    spec = default_spec(SAMPLE_RATE)
    tracks_by_speaker: dict = {s: [] for s in speakers}
    for entry in entries:
        stem = entry_stem(entry.audio_path)
        clip = clips[stem]
        if clip.sample_rate != SAMPLE_RATE:
            raise ValueError(f"{entry.audio_path}: expected {SAMPLE_RATE} Hz")
        save_array(work.feature(stem, "mfcc"), mfcc(clip, 40), stem=stem)
        save_array(work.feature(stem, "mel"),
                   mel_log_spectrogram(clip, spec, n_mels=MEL_BINS),
                   stem=stem)
        save_array(work.feature(stem, "linear"),
                   stft_log_magnitude(clip, spec), stem=stem)
        track = estimate_f0(clip)
        save_array(work.feature(stem, "f0"),
                   np.stack([track.f0, track.voiced.astype(np.float64)]),
                   stem=stem)
        tracks_by_speaker[entry.speaker_id].append(track)

    with open(work.phonemes_tsv, "w", encoding="utf-8") as f:
        for entry in entries:
            stem = entry_stem(entry.audio_path)
            f.write(f"{stem}\t{' '.join(phoneme_seqs[stem])}\n")
    inventory = sorted({p for seq in phoneme_seqs.values() for p in seq})
    work.inventory_txt.write_text("\n".join(inventory) + "\n",
                                  encoding="utf-8")

    save_stats(work.stats_tsv, compute_speaker_stats(tracks_by_speaker))

    train_idx, val_idx = split_corpus(entries)
    with open(work.splits_tsv, "w", encoding="utf-8") as f:
        for i, entry in enumerate(entries):
            part = "val" if i in set(val_idx) else "train"
            f.write(f"{entry_stem(entry.audio_path)}\t{part}\n")

    # audio paths resolve relative to the manifest they sit in, so the
    # workdir copy must carry absolute paths
    from .data.manifest import ManifestEntry, write_manifest
    write_manifest(work.manifest_copy, [
        ManifestEntry(str(Path(resolve_audio_path(manifest_path, e)
                               ).resolve()), e.speaker_id, e.transcript)
        for e in entries])
    write_lexicon(work.lexicon_copy, lexicon)

    reference_dir = manifest_path.parent / "alignments"
    if reference_dir.is_dir():
        for path in sorted(reference_dir.glob("*.align")):
            shutil.copyfile(path, work.reference_alignments / path.name)

    work.prepare_hash.write_text(fingerprint + "\n", encoding="utf-8")
    return PrepareReport(len(entries), len(speakers), False, (), ())


# ---------------------------------------------------------------------------
# prepared-corpus access

class Prepared:
    """Read-side view of a prepared working directory."""

    def __init__(self, workdir_root: str | Path):
        self.work = Workdir(workdir_root)
        if not self.work.prepare_hash.exists():
            raise ValueError("workdir has no prepared features; run "
                             "prepare first")
        self.entries = parse_manifest(self.work.manifest_copy,
                                      check_audio=False)
        self.lexicon = parse_lexicon(self.work.lexicon_copy)
        self.stems = [entry_stem(e.audio_path) for e in self.entries]
        self.speaker_of = {entry_stem(e.audio_path): e.speaker_id
                           for e in self.entries}
        self.text_of = {entry_stem(e.audio_path): e.transcript
                        for e in self.entries}
        self.speakers = sorted({e.speaker_id for e in self.entries})
        self.inventory = \
            self.work.inventory_txt.read_text(encoding="utf-8").split()
        self.phonemes = {}
        with open(self.work.phonemes_tsv, encoding="utf-8") as f:
            for line in f:
                stem, seq = line.rstrip("\n").split("\t")
                self.phonemes[stem] = seq.split(" ")
        self.split = {}
        with open(self.work.splits_tsv, encoding="utf-8") as f:
            for line in f:
                stem, part = line.rstrip("\n").split("\t")
                self.split[stem] = part

    def train_stems(self) -> list:
        return [s for s in self.stems if self.split[s] == "train"]

    def val_stems(self) -> list:
        return [s for s in self.stems if self.split[s] == "val"]

    def feature(self, stem: str, kind: str) -> np.ndarray:
        array, _ = load_array(self.work.feature(stem, kind))
        return array

    def f0_track(self, stem: str) -> F0Track:
        packed = self.feature(stem, "f0")
        return F0Track(packed[0], packed[1] > 0.5)

    def clip(self, stem: str) -> AudioClip:
        entry = self.entries[self.stems.index(stem)]
        return read_wav(resolve_audio_path(self.work.manifest_copy, entry))

    def stats(self) -> dict:
        return load_stats(self.work.stats_tsv)

    def alignment(self, stem: str, reference: bool = False) -> list:
        from .data.synthetic import read_alignment
        base = self.work.reference_alignments if reference \
            else self.work.alignments
        path = base / f"{stem}.align"
        if not path.exists():
            raise ValueError(
                f"alignments missing for {stem!r}; train segmentation first"
                if not reference else f"no reference alignment for {stem!r}")
        return read_alignment(path)

    def has_alignments(self) -> bool:
        return any(self.work.alignments.glob("*.align"))

    def durations_from_alignment(self, stem: str,
                                 reference: bool = False) -> list:
        spans = self.alignment(stem, reference=reference)
        return [end - start for _, start, end in spans]


def frame_silence_mask(clip: AudioClip, threshold: float,
                       gaussian_width: float, n_frames: int) -> np.ndarray:
    """Per-frame silence flags: a frame is silent when most of its hop
    window is below the smoothed-power threshold."""
    config = SilenceDetectorConfig(gaussian_width=gaussian_width,
                                   threshold=threshold)
    sample_mask = detect_silence(clip, config)
    out = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        window = sample_mask[t * HOP:(t + 1) * HOP]
        out[t] = window.size == 0 or float(window.mean()) > 0.5
    return out


def frames_from_spans(spans: list, inventory: list) -> torch.Tensor:
    """Per-frame phoneme one-hots from (phoneme, start, end) frame spans."""
    index = {p: i for i, p in enumerate(inventory)}
    total = spans[-1][2]
    out = torch.zeros(total, len(inventory))
    for phoneme, start, end in spans:
        out[start:end, index[phoneme]] = 1.0
    return out


def enforce_min_frames(spans: list) -> list:
    """Give every span at least one frame, keeping order and total
    coverage. Posterior-peak boundaries can coincide on undertrained
    nets; duration targets need strictly positive spans."""
    n = len(spans)
    total = spans[-1][2]
    if total < n:
        raise ValueError(f"{n} phonemes cannot fit in {total} frames")
    cuts = [end for _, _, end in spans[:-1]]
    for i in range(n - 1):
        previous = cuts[i - 1] if i > 0 else 0
        cuts[i] = max(cuts[i], previous + 1)
    for i in range(n - 2, -1, -1):
        following = cuts[i + 1] if i + 1 < n - 1 else total
        cuts[i] = min(cuts[i], following - 1)
    out = []
    start = 0
    for i, (phoneme, _, end) in enumerate(spans):
        new_end = cuts[i] if i < n - 1 else end
        out.append((phoneme, start, new_end))
        start = new_end
    return out


def allocate_frames(durations_ms) -> list:
    """Cumulative rounding: total frames track total duration within
    half a frame no matter how many phonemes contribute."""
    counts = []
    previous = 0
    running = 0.0
    for d in durations_ms:
        if d <= 0:
            raise ValueError("durations must be positive")
        running += d
        boundary = int(math.floor(running / FRAME_MS + 0.5))
        counts.append(max(1, boundary - previous))
        previous = previous + counts[-1]
    return counts


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainReport:
    model: str
    checkpoint: Path
    iterations: int
    first_loss: float
    last_loss: float
    log_path: Path


def _write_log(work: Workdir, model: str, lines: list) -> Path:
    path = work.logs / f"{model}.log"
    path.write_text("".join(line + "\n" for line in lines),
                    encoding="utf-8")
    return path


def cmd_train(model: str, config: TrainConfig, workdir_root: str | Path,
              seed: int = 0) -> TrainReport:
    if model not in TRAINABLE:
        raise ValueError(f"unknown model {model!r}; choose from "
                         f"{', '.join(TRAINABLE)}")
    prepared = Prepared(workdir_root)
    trainer = {
        "segmentation": _train_segmentation,
        "duration": _train_duration,
        "frequency": _train_frequency,
        "vocoder": _train_vocoder,
        "char2spec": _train_char2spec,
        "discriminator": _train_discriminator,
    }[model]
    return trainer(prepared, config, seed)


def _train_segmentation(prepared: Prepared, config: TrainConfig,
                        seed: int) -> TrainReport:
    work = prepared.work.ensure()
    rng = set_seed(seed)
    conv = config.conv_spec("segmentation", "Convolutional layers")
    rec = config.stack_spec("segmentation", "Recurrent layers (Bi-GRU)")
    emb = config.embedding_size("segmentation")
    n_mfcc = config.get_int("segmentation", "Number of MFCCs")
    batch = config.get_int("segmentation", "Batch size")
    iterations = config.get_int("segmentation", "Iterations")
    keep = config.get_float("segmentation", "Dropout keep probability")

    alphabet = build_pair_alphabet(prepared.phonemes.values())
    net = SegmentationNet(
        alphabet, n_mfcc=n_mfcc, conv_layers=conv.count,
        conv_channels=conv.channels, conv_height=conv.height,
        conv_width=conv.width, rec_layers=rec.count, rec_width=rec.width,
        dropout_keep=keep,
        speaker_ids=prepared.speakers if emb else None,
        embedding_size=emb)
    features = {s: torch.from_numpy(prepared.feature(s, "mfcc")).float()
                for s in prepared.stems}
    train = prepared.train_stems()

    def batch_loss(_k):
        chosen = rng.choice(len(train), size=min(batch, len(train)),
                            replace=False)
        losses = []
        for j in chosen:
            stem = train[j]
            losses.append(segmentation_loss(
                net, features[stem], prepared.phonemes[stem],
                speaker=prepared.speaker_of[stem] if emb else None))
        return torch.stack(losses).mean()

    schedule = config.schedule("segmentation")
    optimizer = make_optimizer(net.parameters(), schedule)
    lines: list = []
    losses = train_steps(net, optimizer, schedule, batch_loss, iterations,
                         log_lines=lines)

    # alignment pass over the whole corpus: these spans feed the
    # duration, frequency, and vocoder stages
    threshold = config.get_float("segmentation", "Silence threshold")
    width_ms = config.get("segmentation", "Gaussian width")
    from .config import parse_ms
    gaussian_s = parse_ms(width_ms) / 1000.0
    net.eval()
    from .data.synthetic import write_alignment
    with torch.no_grad():
        for stem in prepared.stems:
            log_probs = net(features[stem],
                            speaker=prepared.speaker_of[stem] if emb else None)
            spans = decode_boundaries(log_probs, prepared.phonemes[stem],
                                      alphabet)
            mask = frame_silence_mask(prepared.clip(stem), threshold,
                                      gaussian_s, log_probs.shape[0])
            spans = enforce_min_frames(fix_silence_boundaries(spans, mask))
            write_alignment(work.alignments / f"{stem}.align",
                            spans_to_ms(spans))

    path = work.checkpoint("segmentation")
    save_segmentation(path, net, iteration=iterations, seed=seed)
    return TrainReport("segmentation", path, iterations, losses[0],
                       losses[-1], _write_log(work, "segmentation", lines))


def _train_duration(prepared: Prepared, config: TrainConfig,
                    seed: int) -> TrainReport:
    if not prepared.has_alignments():
        raise ValueError("alignments missing; train segmentation first")
    work = prepared.work
    rng = set_seed(seed)
    fc = config.stack_spec("duration", "Fully-connected")
    rec = config.stack_spec("duration", "Recurrent layers (Bi-GRU)")
    emb = config.embedding_size("duration")
    batch = config.get_int("duration", "Batch size")
    iterations = config.get_int("duration", "Iterations")
    lo, hi = config.duration_range()
    buckets = DurationBuckets(config.get_int("duration", "Output buckets"),
                              lo, hi)

    net = DurationNet(
        len(prepared.inventory), buckets, fc_layers=fc.count,
        fc_units=fc.width, rec_layers=rec.count, rec_width=rec.width,
        dropout_keep=config.get_float("duration", "Dropout keep probability"),
        speaker_ids=prepared.speakers if emb else None, embedding_size=emb)

    train = prepared.train_stems()
    onehots = {s: phoneme_onehots(prepared.phonemes[s], prepared.inventory)
               for s in prepared.stems}
    labels = {s: [buckets.bucketize(d)
                  for d in prepared.durations_from_alignment(s)]
              for s in prepared.stems}

    def batch_loss(_k):
        chosen = rng.choice(len(train), size=min(batch, len(train)),
                            replace=False)
        losses = []
        for j in chosen:
            stem = train[j]
            ll = net.log_likelihood(
                onehots[stem], labels[stem],
                speaker=prepared.speaker_of[stem] if emb else None)
            losses.append(-ll / len(labels[stem]))
        return torch.stack(losses).mean()

    schedule = config.schedule("duration")
    optimizer = make_optimizer(net.parameters(), schedule)
    lines: list = []
    losses = train_steps(net, optimizer, schedule, batch_loss, iterations,
                         log_lines=lines)
    path = work.checkpoint("duration")
    save_duration(path, net, iteration=iterations, seed=seed)
    return TrainReport("duration", path, iterations, losses[0], losses[-1],
                       _write_log(work, "duration", lines))


def _train_frequency(prepared: Prepared, config: TrainConfig,
                     seed: int) -> TrainReport:
    if not prepared.has_alignments():
        raise ValueError("alignments missing; train segmentation first")
    work = prepared.work
    rng = set_seed(seed)
    rec = config.stack_spec("frequency", "Hidden layers (Bi-GRU)")
    emb = config.embedding_size("frequency")
    widths = tuple(config.int_list("frequency", "Convolution widths"))
    batch = config.get_int("frequency", "Batch size")
    iterations = config.get_int("frequency", "Iterations")

    stats = prepared.stats()
    all_means = [stats[s].f0_mean for s in prepared.speakers]
    all_stds = [stats[s].f0_std for s in prepared.speakers]
    model = FrequencyModel(
        len(prepared.inventory), float(np.mean(all_means)),
        float(np.mean(all_stds)), rec_layers=rec.count, rec_width=rec.width,
        output_dim=config.get_int("frequency", "Output dimension"),
        conv_widths=widths,
        speaker_ids=prepared.speakers if emb else None, embedding_size=emb)

    train = prepared.train_stems()
    frames: dict = {}
    targets: dict = {}
    for stem in prepared.stems:
        onehots = phoneme_onehots(prepared.phonemes[stem],
                                  prepared.inventory)
        durations = prepared.durations_from_alignment(stem)
        per_frame = upsample_to_frames(onehots, durations)
        track = prepared.f0_track(stem)
        n = min(per_frame.shape[0], len(track))
        frames[stem] = per_frame[:n]
        targets[stem] = (torch.from_numpy(track.voiced[:n].astype(
            np.float32)), torch.from_numpy(track.f0[:n].astype(np.float32)))

    def batch_loss(_k):
        chosen = rng.choice(len(train), size=min(batch, len(train)),
                            replace=False)
        losses = []
        for j in chosen:
            stem = train[j]
            speaker = prepared.speaker_of[stem]
            voiced_ref, f0_ref = targets[stem]
            losses.append(frequency_loss(
                model, frames[stem], voiced_ref, f0_ref,
                stats[speaker].f0_mean, stats[speaker].f0_std,
                speaker=speaker if emb else None))
        return torch.stack(losses).mean()

    schedule = config.schedule("frequency")
    optimizer = make_optimizer(model.parameters(), schedule)
    lines: list = []
    losses = train_steps(model, optimizer, schedule, batch_loss, iterations,
                         log_lines=lines)
    path = work.checkpoint("frequency")
    save_frequency(path, model, iteration=iterations, seed=seed)
    return TrainReport("frequency", path, iterations, losses[0], losses[-1],
                       _write_log(work, "frequency", lines))


def _vocoder_crop_loss(vocoder: Vocoder, features: torch.Tensor,
                       codes: torch.Tensor, rng, window_frames: int,
                       speaker):
    total = features.shape[0]
    if total > window_frames:
        start = int(rng.integers(0, total - window_frames + 1))
    else:
        start, window_frames = 0, total
    f = features[start:start + window_frames]
    c = codes[start * HOP:(start + window_frames) * HOP]
    return vocoder.nll(f, c, speaker=speaker)


def _train_vocoder(prepared: Prepared, config: TrainConfig,
                   seed: int) -> TrainReport:
    if not prepared.has_alignments():
        raise ValueError("alignments missing; train segmentation first")
    from .dsp.mulaw import mu_law_encode
    work = prepared.work
    emb = config.embedding_size("vocoder")
    layers = config.get_int("vocoder", "Layers")
    residual = config.get_int("vocoder", "Residual channels")
    skip = config.get_int("vocoder", "Skip channels")
    hidden = config.get_int("vocoder", "Conditioner size")
    batch = config.get_int("vocoder", "Batch size")
    iterations = config.get_int("vocoder", "Iterations")
    schedule = config.schedule("vocoder")
    window_frames = 40    # 0.4 s crops keep CPU iterations cheap

    train = prepared.train_stems()
    codes = {s: torch.from_numpy(
        mu_law_encode(prepared.clip(s).samples)).long()
        for s in prepared.stems}

    phoneme_feats: dict = {}
    mel_feats: dict = {}
    for stem in prepared.stems:
        spans = ms_to_spans(prepared.alignment(stem))
        track = prepared.f0_track(stem)
        per_frame = frames_from_spans(spans, prepared.inventory)
        n = min(per_frame.shape[0], len(track),
                codes[stem].shape[0] // HOP)
        phoneme_feats[stem] = phoneme_f0_features(
            per_frame[:n],
            torch.from_numpy(track.voiced[:n].astype(np.float32)),
            torch.from_numpy(track.f0[:n].astype(np.float32)))
        mel = normalize_log_spectrogram(prepared.feature(stem, "mel"))
        n_mel = min(mel.shape[0], codes[stem].shape[0] // HOP)
        mel_feats[stem] = spectrogram_features(mel[:n_mel])

    last_report = None
    for front_end, feats, name in (
            ("phoneme_f0", phoneme_feats, "vocoder"),
            ("spectrogram", mel_feats, "vocoder_spec")):
        rng = set_seed(seed)
        vocoder = Vocoder(
            front_end, feats[prepared.stems[0]].shape[1], n_layers=layers,
            residual_channels=residual, skip_channels=skip,
            conditioner_hidden=hidden,
            speaker_ids=prepared.speakers if emb else None,
            embedding_size=emb)

        def batch_loss(_k, feats=feats, vocoder=vocoder, rng=rng):
            chosen = rng.choice(len(train), size=min(batch, len(train)),
                                replace=False)
            losses = []
            for j in chosen:
                stem = train[j]
                losses.append(_vocoder_crop_loss(
                    vocoder, feats[stem], codes[stem], rng, window_frames,
                    speaker=prepared.speaker_of[stem] if emb else None))
            return torch.stack(losses).mean()

        optimizer = make_optimizer(vocoder.parameters(), schedule)
        lines: list = []
        losses = train_steps(vocoder, optimizer, schedule, batch_loss,
                             iterations, log_lines=lines)
        path = work.checkpoint(name)
        save_vocoder(path, vocoder, iteration=iterations, seed=seed)
        last_report = TrainReport(name, path, iterations, losses[0],
                                  losses[-1], _write_log(work, name, lines))
    return last_report


def _train_char2spec(prepared: Prepared, config: TrainConfig,
                     seed: int) -> TrainReport:
    work = prepared.work
    rng = set_seed(seed)
    emb = config.embedding_size("char2spec")
    proj_sizes = config.int_list("char2spec", "Enc.-CBHG proj. sizes")
    prenet = tuple(config.int_list("char2spec", "Decoder prenet sizes"))
    batch = config.get_int("char2spec", "Batch size")
    iterations = config.get_int("char2spec", "Iterations")
    reduction = config.get_int("char2spec", "Reduction factor")
    ctc_coeff = config.get_float("char2spec", "CTC loss coefficient")

    model = Char2Spec(
        prepared.inventory, mel_bins=MEL_BINS, linear_bins=513,
        bank_size=config.get_int("char2spec", "Enc.-CBHG bank size"),
        channels=config.get_int("char2spec", "Enc.-CBHG channels"),
        enc_rec=config.get_int("char2spec", "Enc.-CBHG recurrent size"),
        highway_layers=config.get_int("char2spec",
                                      "Enc.-CBHG highway layers"),
        proj_size=proj_sizes[0],
        proj_width=config.get_int("char2spec", "Enc.-CBHG proj. width"),
        attention_size=config.get_int("char2spec", "Attention size"),
        attention_state=config.get_int("char2spec", "Attention state size"),
        decoder_layers=config.get_int("char2spec", "Decoder layers"),
        prenet_sizes=prenet,
        reduction=reduction,
        dropout_keep=config.get_float("char2spec",
                                      "Dropout keep probability"),
        post_bank=config.get_int("char2spec", "Post-CBHG bank size"),
        post_channels=config.get_int("char2spec", "Post-CBHG channels"),
        post_width=config.get_int("char2spec", "Post-CBHG conv. widths"),
        post_rec=config.get_int("char2spec", "Post-CBHG recurrent size"),
        post_highways=config.get_int("char2spec", "Post-CBHG highway layers"),
        maxpool_width=config.get_int("char2spec", "Enc.-CBHG maxpool width"),
        speaker_ids=prepared.speakers if emb else None, embedding_size=emb)

    train = prepared.train_stems()
    char_ids = {s: model.vocab.encode(prepared.text_of[s])
                for s in prepared.stems}
    mels: dict = {}
    linears: dict = {}
    for stem in prepared.stems:
        mel = torch.from_numpy(normalize_log_spectrogram(
            prepared.feature(stem, "mel"))).float()
        linear = torch.from_numpy(normalize_log_spectrogram(
            prepared.feature(stem, "linear"))).float()
        n = min(mel.shape[0], linear.shape[0])
        mels[stem] = pad_for_reduction(mel[:n], reduction)
        linears[stem] = pad_for_reduction(linear[:n], reduction)

    def batch_loss(_k):
        chosen = rng.choice(len(train), size=min(batch, len(train)),
                            replace=False)
        losses = []
        for j in chosen:
            stem = train[j]
            speaker = prepared.speaker_of[stem] if emb else None
            out = model.teacher_forced(char_ids[stem], mels[stem],
                                       speaker=speaker)
            losses.append(spectrogram_loss(
                model, out, mels[stem], linears[stem],
                prepared.phonemes[stem], ctc_coeff=ctc_coeff))
        return torch.stack(losses).mean()

    schedule = config.schedule("char2spec")
    optimizer = make_optimizer(model.parameters(), schedule)
    lines: list = []
    losses = train_steps(model, optimizer, schedule, batch_loss, iterations,
                         log_lines=lines)
    path = work.checkpoint("char2spec")
    save_char2spec(path, model, iteration=iterations, seed=seed)
    return TrainReport("char2spec", path, iterations, losses[0], losses[-1],
                       _write_log(work, "char2spec", lines))


def _train_discriminator(prepared: Prepared, config: TrainConfig,
                         seed: int) -> TrainReport:
    work = prepared.work
    presets = [p.strip() for p in
               config.get("discriminator", "Presets").split(",")]
    for name in presets:
        if name not in PRESETS:
            raise ValueError(f"unknown discriminator preset {name!r}")
    batch = config.get_int("discriminator", "Batch size")
    iterations = config.get_int("discriminator", "Iterations")

    samples = [(prepared.clip(stem), prepared.speaker_of[stem])
               for stem in prepared.stems]
    best = None
    lines: list = []
    for name in presets:
        net, accuracy = train_discriminator(
            samples, name, iterations=iterations, batch_size=batch,
            seed=seed, log_lines=lines)
        lines.append(f"# preset {name}: held-out accuracy {accuracy:.4f}")
        if best is None or accuracy > best[2]:
            best = (name, net, accuracy)

    name, net, accuracy = best
    path = work.checkpoint("discriminator")
    save_discriminator(path, net, iteration=iterations, seed=seed)
    log_path = _write_log(work, "discriminator", lines)
    return TrainReport("discriminator", path, iterations, 0.0,
                       1.0 - accuracy, log_path)


# ---------------------------------------------------------------------------
# synthesis

@dataclass(frozen=True)
class SynthesisRequest:
    text: str
    speaker_id: str
    engine: str
    seed: int
    output_path: Path

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}; choose from "
                             f"{', '.join(ENGINES)}")


@dataclass(frozen=True)
class SynthesisReport:
    wav_path: Path
    seconds: float
    frames: int
    attention_flagged: bool


def _require_checkpoint(work: Workdir, name: str) -> Path:
    path = work.checkpoint(name)
    if not path.exists():
        raise ValueError(f"checkpoint missing: {name}; train it first")
    return path


def cmd_synthesize(request: SynthesisRequest,
                   workdir_root: str | Path) -> SynthesisReport:
    prepared = Prepared(workdir_root)
    work = prepared.work
    if request.engine == "deep_voice_2":
        return _synthesize_deep_voice_2(request, prepared, work)
    return _synthesize_char2spec(request, prepared, work)


def _synthesize_deep_voice_2(request: SynthesisRequest, prepared: Prepared,
                             work: Workdir) -> SynthesisReport:
    duration_net = load_duration(_require_checkpoint(work, "duration"))
    frequency_model = load_frequency(_require_checkpoint(work, "frequency"))
    vocoder = load_vocoder(_require_checkpoint(work, "vocoder"))

    phonemes = text_to_phonemes(request.text, prepared.lexicon)
    onehots = phoneme_onehots(phonemes, prepared.inventory)
    speaker = request.speaker_id if duration_net.speakers is not None \
        else None
    if duration_net.speakers is not None:
        duration_net.speakers.index_of(request.speaker_id)
    durations = duration_net.predict_durations_ms(onehots, speaker=speaker)

    counts = allocate_frames(durations)
    frames = torch.repeat_interleave(
        onehots, torch.tensor(counts, dtype=torch.long), dim=0)
    track = predicted_track(frequency_model, frames, speaker=speaker)
    features = phoneme_f0_features(
        frames, torch.from_numpy(track.voiced.astype(np.float32)),
        torch.from_numpy(track.f0.astype(np.float32)))
    clip = vocoder.sample(features, seed=request.seed, speaker=speaker,
                          sample_rate=SAMPLE_RATE)
    write_wav(request.output_path, clip)
    return SynthesisReport(Path(request.output_path),
                           clip.samples.shape[0] / SAMPLE_RATE,
                           features.shape[0], False)


def _synthesize_char2spec(request: SynthesisRequest, prepared: Prepared,
                          work: Workdir) -> SynthesisReport:
    model = load_char2spec(_require_checkpoint(work, "char2spec"))
    speaker = request.speaker_id if model.speakers is not None else None
    result = model.synthesize(request.text, speaker=speaker)

    if request.engine == "char2spec_griffin_lim":
        log_mag = denormalize_log_spectrogram(result.linear.numpy())
        clip = griffin_lim(log_mag, GRIFFIN_LIM_ITERATIONS,
                           default_spec(SAMPLE_RATE),
                           sample_rate=SAMPLE_RATE)
        frames = result.linear.shape[0]
    else:
        vocoder = load_vocoder(_require_checkpoint(work, "vocoder_spec"))
        features = spectrogram_features(result.mel.numpy())
        vocoder_speaker = request.speaker_id \
            if vocoder.conditioner.speakers is not None else None
        clip = vocoder.sample(features, seed=request.seed,
                              speaker=vocoder_speaker,
                              sample_rate=SAMPLE_RATE)
        frames = features.shape[0]
    write_wav(request.output_path, clip)
    return SynthesisReport(Path(request.output_path),
                           clip.samples.shape[0] / SAMPLE_RATE,
                           frames, result.attention_flagged)


# ---------------------------------------------------------------------------
# evaluation

def cmd_evaluate(workdir_root: str | Path, which: str) -> list:
    if which not in EVALUABLE:
        raise ValueError(f"unknown evaluation target {which!r}; choose "
                         f"from {', '.join(EVALUABLE)}")
    prepared = Prepared(workdir_root)
    rows = {
        "segmentation": _evaluate_segmentation,
        "duration": _evaluate_duration,
        "frequency": _evaluate_frequency,
        "discriminator": _evaluate_discriminator,
    }[which](prepared)
    out = prepared.work.metrics / f"{which}.tsv"
    out.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return rows


def _eval_stems(prepared: Prepared) -> list:
    stems = prepared.val_stems()
    return stems if stems else prepared.stems


def _reference_kind(prepared: Prepared) -> bool:
    return any(prepared.work.reference_alignments.glob("*.align"))


def _evaluate_segmentation(prepared: Prepared) -> list:
    net = load_segmentation(
        _require_checkpoint(prepared.work, "segmentation"))
    if not _reference_kind(prepared):
        raise ValueError("no reference alignments to score against")
    multi = net.speakers is not None
    rates = []
    with torch.no_grad():
        for stem in _eval_stems(prepared):
            feats = torch.from_numpy(prepared.feature(stem, "mfcc")).float()
            log_probs = net(feats,
                            speaker=prepared.speaker_of[stem] if multi
                            else None)
            spans = decode_boundaries(log_probs, prepared.phonemes[stem],
                                      net.alphabet)
            reference = ms_to_spans(prepared.alignment(stem, reference=True))
            n = min(spans[-1][2], reference[-1][2])
            spans[-1] = (spans[-1][0], spans[-1][1], n)
            reference[-1] = (reference[-1][0], reference[-1][1], n)
            rates.append(phoneme_pair_error_rate(spans, reference))
    return ["model\tmetric\tvalue",
            f"segmentation\tpair_error_rate\t{float(np.mean(rates)):.4f}"]


def _evaluate_duration(prepared: Prepared) -> list:
    net = load_duration(_require_checkpoint(prepared.work, "duration"))
    reference = _reference_kind(prepared)
    multi = net.speakers is not None
    errors = []
    for stem in _eval_stems(prepared):
        onehots = phoneme_onehots(prepared.phonemes[stem],
                                  prepared.inventory)
        predicted = net.predict_durations_ms(
            onehots, speaker=prepared.speaker_of[stem] if multi else None)
        target = prepared.durations_from_alignment(stem,
                                                   reference=reference)
        errors.append(duration_mae(predicted, target))
    return ["model\tmetric\tvalue",
            f"duration\tmae_ms\t{float(np.mean(errors)):.3f}"]


def _evaluate_frequency(prepared: Prepared) -> list:
    model = load_frequency(_require_checkpoint(prepared.work, "frequency"))
    multi = model.speakers is not None
    maes = []
    voiced_hits = []
    for stem in _eval_stems(prepared):
        onehots = phoneme_onehots(prepared.phonemes[stem],
                                  prepared.inventory)
        durations = prepared.durations_from_alignment(stem)
        frames = upsample_to_frames(onehots, durations)
        track = prepared.f0_track(stem)
        n = min(frames.shape[0], len(track))
        predicted = predicted_track(
            model, frames[:n],
            speaker=prepared.speaker_of[stem] if multi else None)
        reference = F0Track(track.f0[:n], track.voiced[:n])
        maes.append(f0_mae(predicted, reference))
        voiced_hits.append(
            float(np.mean(predicted.voiced == reference.voiced)))
    return ["model\tmetric\tvalue",
            f"frequency\tf0_mae_hz\t{float(np.mean(maes)):.3f}",
            f"frequency\tvoiced_accuracy\t{float(np.mean(voiced_hits)):.4f}"]


def _evaluate_discriminator(prepared: Prepared) -> list:
    net = load_discriminator(
        _require_checkpoint(prepared.work, "discriminator"))
    stems = _eval_stems(prepared)
    samples = [(prepared.clip(stem), prepared.speaker_of[stem])
               for stem in stems]
    accuracy = classification_accuracy(samples, net)
    return ["model_tag\tdataset_tag\tpreset\taccuracy",
            accuracy_report_row("ground_truth", prepared.work.root.name,
                                net.preset.name, accuracy)]


# ---------------------------------------------------------------------------
# embedding analysis

def read_speaker_metadata(path: str | Path) -> dict:
    """speaker_id -> attribute value from a headered TSV; the attribute
    is the last column."""
    out: dict = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("speaker_id\t"):
            raise ValueError(f"{path}: expected a speaker_id TSV header")
        for line in f:
            parts = line.rstrip("\n").split("\t")
            if len(parts) >= 2:
                out[parts[0]] = parts[-1]
    return out


def embedding_table_from_checkpoint(path: str | Path):
    """(speaker_ids, weight matrix) from any model checkpoint."""
    from .training import load_checkpoint
    ckpt = load_checkpoint(path)
    keys = [k for k in ckpt.arrays if k.endswith("speakers.weight")]
    if not keys:
        raise ValueError(f"{path}: checkpoint has no speaker embedding "
                         f"table")
    ids = ckpt.config.get("speaker_ids")
    if ids is None:
        raise ValueError(f"{path}: checkpoint lacks speaker ids")
    return list(ids), np.array(ckpt.arrays[keys[0]], dtype=np.float64)


def cmd_analyze_embeddings(checkpoint_path: str | Path,
                           metadata_path: str | Path | None,
                           out_dir: str | Path):
    """PCA coordinates TSV plus a scatter image; returns their paths
    and the PCA result."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, weight = embedding_table_from_checkpoint(checkpoint_path)
    metadata = read_speaker_metadata(metadata_path) if metadata_path else {}
    result = pca_embeddings(weight)
    rows = pca_report_rows(ids, result, metadata)
    tsv_path = out_dir / "embedding_pca.tsv"
    tsv_path.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    png_path = out_dir / "embedding_pca.png"
    save_pca_scatter(png_path, ids, result, metadata)
    return tsv_path, png_path, result
