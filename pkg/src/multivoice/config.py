"""Sectioned plain-text training configuration.

Format: UTF-8 "key = value" under [section] headers via configparser,
keys case-sensitive. Three full-scale presets carry the published
hyperparameter columns verbatim; "smoke" is the desk-scale profile
sized for the bundled synthetic corpus on a CPU.
"""
from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass
from pathlib import Path

from .training import OptimizerSchedule


@dataclass(frozen=True)
class ConvSpec:
    count: int
    channels: int
    height: int   # frequency bins
    width: int    # time frames


@dataclass(frozen=True)
class StackSpec:
    count: int
    width: int


def parse_conv_spec(text: str) -> ConvSpec:
    m = re.fullmatch(
        r"\s*(\d+)\s*[x×]\s*,?\s*(\d+)\s+(\d+)\s*[x×]\s*(\d+)"
        r"(?:\s+filters)?\s*", text)
    if not m:
        raise ValueError(f"bad convolution spec {text!r}; expected like "
                         f"'4x, 128 9x5 filters'")
    return ConvSpec(int(m[1]), int(m[2]), int(m[3]), int(m[4]))


def parse_stack_spec(text: str) -> StackSpec:
    m = re.fullmatch(r"\s*(\d+)\s*[x×]\s*,?\s*(\d+)(?:-wide|\s*units)\s*",
                     text)
    if not m:
        raise ValueError(f"bad layer-stack spec {text!r}; expected like "
                         f"'4x, 512-wide' or '2x, 256 units'")
    return StackSpec(int(m[1]), int(m[2]))


def parse_lr_triple(text: str) -> OptimizerSchedule:
    parts = [p.strip() for p in text.split("--")]
    if len(parts) != 3:
        raise ValueError(f"bad learning-rate triple {text!r}; expected "
                         f"'rate -- factor -- interval'")
    rate = float(parts[0])
    factor = float(parts[1])
    interval = None if parts[2].upper() in ("N/A", "NA") else int(parts[2])
    return OptimizerSchedule(rate, factor, interval)


def parse_int_list(text: str) -> list:
    items = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not items:
        raise ValueError("empty integer list")
    return [int(p) for p in items]


def parse_optional_int(text: str):
    return None if text.strip().upper() in ("N/A", "NA") else int(text)


def parse_ms(text: str) -> float:
    m = re.fullmatch(r"\s*([0-9.+-eE]+)\s*ms\s*", text)
    if not m:
        raise ValueError(f"expected a millisecond value like '0.25 ms', "
                         f"got {text!r}")
    return float(m[1])


_SEG = {
    "Number of MFCCs", "Convolutional layers", "Recurrent layers (Bi-GRU)",
    "Dropout keep probability", "Learning rate", "Silence threshold",
    "Gaussian width", "Batch size", "Speaker embedding size", "Iterations",
}
_DUR = {
    "Fully-connected", "Recurrent layers (Bi-GRU)",
    "Dropout keep probability", "Output buckets", "Learning rate",
    "Batch size", "Speaker embedding size", "Iterations", "Duration range",
}
_FREQ = {
    "Hidden layers (Bi-GRU)", "Output dimension", "Convolution widths",
    "Learning rate", "Batch size", "Speaker embedding size", "Iterations",
}
_VOC = {
    "Layers", "Learning rate", "Batch size", "Speaker embedding size",
    "Iterations", "Residual channels", "Skip channels", "Conditioner size",
}
_C2S = {
    "Enc.-CBHG bank size", "Enc.-CBHG channels", "Enc.-CBHG recurrent size",
    "Enc.-CBHG highway layers", "Enc.-CBHG maxpool width",
    "Enc.-CBHG proj. sizes", "Enc.-CBHG proj. width", "Decoder layers",
    "Dropout keep probability", "Attention size", "Attention state size",
    "Decoder prenet sizes", "Post-CBHG bank size", "Post-CBHG channels",
    "Post-CBHG conv. widths", "Post-CBHG recurrent size",
    "Post-CBHG highway layers", "Post-CBHG maxpool width",
    "Reduction factor", "CTC loss coefficient", "Learning rate",
    "Batch size", "Speaker embedding size", "Iterations",
}
_DISC = {"Presets", "Batch size", "Iterations"}
_DATA = {"root", "seed"}

SCHEMA = {
    "data": _DATA,
    "segmentation": _SEG,
    "duration": _DUR,
    "frequency": _FREQ,
    "vocoder": _VOC,
    "char2spec": _C2S,
    "discriminator": _DISC,
}

# the three published columns, plus a CPU-sized smoke profile
_PRESETS = {
    "single": {
        "data": {"root": "", "seed": "1234"},
        "segmentation": {
            "Number of MFCCs": "40",
            "Convolutional layers": "4x, 128 9x5 filters",
            "Recurrent layers (Bi-GRU)": "4x, 512-wide",
            "Dropout keep probability": "0.95",
            "Learning rate": "1e-3 -- 0.95 -- 400",
            "Silence threshold": "0.1",
            "Gaussian width": "0.25 ms",
            "Batch size": "8",
            "Speaker embedding size": "N/A",
            "Iterations": "90000",
        },
        "duration": {
            "Fully-connected": "2x, 256 units",
            "Recurrent layers (Bi-GRU)": "4x, 256-wide",
            "Dropout keep probability": "0.8",
            "Output buckets": "100",
            "Learning rate": "3e-4 -- 0.9 -- 300",
            "Batch size": "128",
            "Speaker embedding size": "N/A",
            "Iterations": "30000",
            "Duration range": "10, 400",
        },
        "frequency": {
            "Hidden layers (Bi-GRU)": "3x, 256-wide",
            "Output dimension": "32",
            "Convolution widths": "5, 10, 20",
            "Learning rate": "1e-3 -- 0.9 -- 300",
            "Batch size": "32",
            "Speaker embedding size": "N/A",
            "Iterations": "30000",
        },
        "vocoder": {
            "Layers": "60",
            "Learning rate": "1e-3 -- 0.9886 -- 1000",
            "Batch size": "8",
            "Speaker embedding size": "N/A",
            "Iterations": "300000",
            "Residual channels": "64",
            "Skip channels": "256",
            "Conditioner size": "64",
        },
        "char2spec": {
            "Enc.-CBHG bank size": "16",
            "Enc.-CBHG channels": "128",
            "Enc.-CBHG recurrent size": "128",
            "Enc.-CBHG highway layers": "4",
            "Enc.-CBHG maxpool width": "2",
            "Enc.-CBHG proj. sizes": "128, 128",
            "Enc.-CBHG proj. width": "3",
            "Decoder layers": "3",
            "Dropout keep probability": "0.5",
            "Attention size": "128",
            "Attention state size": "256",
            "Decoder prenet sizes": "256, 128",
            "Post-CBHG bank size": "8",
            "Post-CBHG channels": "128",
            "Post-CBHG conv. widths": "3",
            "Post-CBHG recurrent size": "128",
            "Post-CBHG highway layers": "4",
            "Post-CBHG maxpool width": "2",
            "Reduction factor": "4",
            "CTC loss coefficient": "0.01",
            "Learning rate": "1e-3 -- 1 -- N/A",
            "Batch size": "16",
            "Speaker embedding size": "N/A",
            "Iterations": "200000",
        },
        "discriminator": {
            "Presets": "D1, D2, D3, D4",
            "Batch size": "16",
            "Iterations": "10000",
        },
    },
    "vctk": {
        "data": {"root": "", "seed": "1234"},
        "segmentation": {
            "Number of MFCCs": "40",
            "Convolutional layers": "4x, 64 9x5 filters",
            "Recurrent layers (Bi-GRU)": "4x, 1024-wide",
            "Dropout keep probability": "0.85",
            "Learning rate": "2e-4 -- 0.95 -- 1000",
            "Silence threshold": "0.1",
            "Gaussian width": "0.25 ms",
            "Batch size": "8",
            "Speaker embedding size": "16",
            "Iterations": "90000",
        },
        "duration": {
            "Fully-connected": "4x, 256 units",
            "Recurrent layers (Bi-GRU)": "4x, 512-wide",
            "Dropout keep probability": "0.85",
            "Output buckets": "250",
            "Learning rate": "6e-4 -- 0.9 -- 400",
            "Batch size": "32",
            "Speaker embedding size": "16",
            "Iterations": "30000",
            "Duration range": "10, 400",
        },
        "frequency": {
            "Hidden layers (Bi-GRU)": "3x, 512-wide",
            "Output dimension": "32",
            "Convolution widths": "3, 6, 15, 30",
            "Learning rate": "4e-4 -- 0.9 -- 300",
            "Batch size": "32",
            "Speaker embedding size": "16",
            "Iterations": "30000",
        },
        "vocoder": {
            "Layers": "80",
            "Learning rate": "1e-3 -- 0.9886 -- 1000",
            "Batch size": "8",
            "Speaker embedding size": "16",
            "Iterations": "300000",
            "Residual channels": "64",
            "Skip channels": "256",
            "Conditioner size": "64",
        },
        "char2spec": {
            "Enc.-CBHG bank size": "16",
            "Enc.-CBHG channels": "128",
            "Enc.-CBHG recurrent size": "128",
            "Enc.-CBHG highway layers": "4",
            "Enc.-CBHG maxpool width": "2",
            "Enc.-CBHG proj. sizes": "128, 128",
            "Enc.-CBHG proj. width": "3",
            "Decoder layers": "3",
            "Dropout keep probability": "0.8",
            "Attention size": "256",
            "Attention state size": "256",
            "Decoder prenet sizes": "256, 128",
            "Post-CBHG bank size": "8",
            "Post-CBHG channels": "512",
            "Post-CBHG conv. widths": "3",
            "Post-CBHG recurrent size": "256",
            "Post-CBHG highway layers": "4",
            "Post-CBHG maxpool width": "2",
            "Reduction factor": "4",
            "CTC loss coefficient": "0.01",
            "Learning rate": "1e-3 -- 0.95 -- 3000",
            "Batch size": "16",
            "Speaker embedding size": "32",
            "Iterations": "200000",
        },
        "discriminator": {
            "Presets": "D1, D2, D3, D4",
            "Batch size": "16",
            "Iterations": "10000",
        },
    },
    "audiobooks": {
        "data": {"root": "", "seed": "1234"},
        "segmentation": {
            "Number of MFCCs": "40",
            "Convolutional layers": "5x, 128 9x5 filters",
            "Recurrent layers (Bi-GRU)": "4x, 1024-wide",
            "Dropout keep probability": "0.85",
            "Learning rate": "2e-4 -- 0.95 -- 2000",
            "Silence threshold": "0.1",
            "Gaussian width": "0.25 ms",
            "Batch size": "8",
            "Speaker embedding size": "32",
            "Iterations": "90000",
        },
        "duration": {
            "Fully-connected": "4x, 256 units",
            "Recurrent layers (Bi-GRU)": "4x, 512-wide",
            "Dropout keep probability": "0.85",
            "Output buckets": "300",
            "Learning rate": "3e-4 -- 0.9 -- 800",
            "Batch size": "32",
            "Speaker embedding size": "32",
            "Iterations": "30000",
            "Duration range": "10, 400",
        },
        "frequency": {
            "Hidden layers (Bi-GRU)": "3x, 512-wide",
            "Output dimension": "64",
            "Convolution widths": "6, 9, 18, 35",
            "Learning rate": "4e-4 -- 0.9 -- 300",
            "Batch size": "32",
            "Speaker embedding size": "16",
            "Iterations": "30000",
        },
        "vocoder": {
            "Layers": "80",
            "Learning rate": "1e-3 -- 0.9886 -- 1000",
            "Batch size": "8",
            "Speaker embedding size": "16",
            "Iterations": "300000",
            "Residual channels": "64",
            "Skip channels": "256",
            "Conditioner size": "64",
        },
        "char2spec": {
            "Enc.-CBHG bank size": "16",
            "Enc.-CBHG channels": "128",
            "Enc.-CBHG recurrent size": "128",
            "Enc.-CBHG highway layers": "4",
            "Enc.-CBHG maxpool width": "2",
            "Enc.-CBHG proj. sizes": "128, 128",
            "Enc.-CBHG proj. width": "3",
            "Decoder layers": "3",
            "Dropout keep probability": "0.8",
            "Attention size": "512",
            "Attention state size": "256",
            "Decoder prenet sizes": "256, 128, 64",
            "Post-CBHG bank size": "8",
            "Post-CBHG channels": "512",
            "Post-CBHG conv. widths": "3",
            "Post-CBHG recurrent size": "256",
            "Post-CBHG highway layers": "4",
            "Post-CBHG maxpool width": "2",
            "Reduction factor": "4",
            "CTC loss coefficient": "0.01",
            "Learning rate": "1e-3 -- 0.95 -- 3000",
            "Batch size": "16",
            "Speaker embedding size": "32",
            "Iterations": "200000",
        },
        "discriminator": {
            "Presets": "D5, D6, D7, D8",
            "Batch size": "16",
            "Iterations": "10000",
        },
    },
    "smoke": {
        "data": {"root": "", "seed": "1234"},
        "segmentation": {
            "Number of MFCCs": "40",
            "Convolutional layers": "2x, 16 9x5 filters",
            "Recurrent layers (Bi-GRU)": "1x, 64-wide",
            "Dropout keep probability": "1.0",
            "Learning rate": "1e-3 -- 1 -- N/A",
            "Silence threshold": "0.1",
            "Gaussian width": "0.25 ms",
            "Batch size": "8",
            "Speaker embedding size": "8",
            "Iterations": "300",
        },
        "duration": {
            "Fully-connected": "1x, 64 units",
            "Recurrent layers (Bi-GRU)": "1x, 32-wide",
            "Dropout keep probability": "1.0",
            "Output buckets": "40",
            "Learning rate": "3e-3 -- 1 -- N/A",
            "Batch size": "16",
            "Speaker embedding size": "8",
            "Iterations": "400",
            "Duration range": "10, 400",
        },
        "frequency": {
            "Hidden layers (Bi-GRU)": "1x, 32-wide",
            "Output dimension": "16",
            "Convolution widths": "5, 10",
            "Learning rate": "3e-3 -- 1 -- N/A",
            "Batch size": "8",
            "Speaker embedding size": "8",
            "Iterations": "400",
        },
        "vocoder": {
            "Layers": "20",
            "Learning rate": "1e-3 -- 1 -- N/A",
            "Batch size": "1",
            "Speaker embedding size": "8",
            "Iterations": "500",
            "Residual channels": "32",
            "Skip channels": "64",
            "Conditioner size": "32",
        },
        "char2spec": {
            "Enc.-CBHG bank size": "4",
            "Enc.-CBHG channels": "32",
            "Enc.-CBHG recurrent size": "32",
            "Enc.-CBHG highway layers": "2",
            "Enc.-CBHG maxpool width": "2",
            "Enc.-CBHG proj. sizes": "32, 32",
            "Enc.-CBHG proj. width": "3",
            "Decoder layers": "2",
            "Dropout keep probability": "1.0",
            "Attention size": "32",
            "Attention state size": "64",
            "Decoder prenet sizes": "64, 32",
            "Post-CBHG bank size": "4",
            "Post-CBHG channels": "32",
            "Post-CBHG conv. widths": "3",
            "Post-CBHG recurrent size": "32",
            "Post-CBHG highway layers": "2",
            "Post-CBHG maxpool width": "2",
            "Reduction factor": "4",
            "CTC loss coefficient": "0.01",
            "Learning rate": "1e-3 -- 1 -- N/A",
            "Batch size": "1",
            "Speaker embedding size": "8",
            "Iterations": "600",
        },
        "discriminator": {
            "Presets": "D2",
            "Batch size": "16",
            "Iterations": "600",
        },
    },
}

PRESET_NAMES = tuple(sorted(_PRESETS))

_DEFAULT_DURATION_RANGE = "10, 400"


class TrainConfig:
    """Nested section -> key -> raw-string mapping with typed accessors.

    Unknown sections or keys are rejected at construction, so typos in
    files fail loudly instead of silently using defaults.
    """

    def __init__(self, sections: dict):
        unknown = []
        for sec, kv in sections.items():
            if sec not in SCHEMA:
                unknown.append(f"[{sec}]")
                continue
            for key in kv:
                if key not in SCHEMA[sec]:
                    unknown.append(f"[{sec}] {key}")
        if unknown:
            raise ValueError("unknown config keys: " + "; ".join(sorted(unknown)))
        self.sections = {sec: dict(kv) for sec, kv in sections.items()}

    @classmethod
    def preset(cls, name: str) -> "TrainConfig":
        if name not in _PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from "
                             f"{', '.join(PRESET_NAMES)}")
        return cls(_PRESETS[name])

    @classmethod
    def load(cls, path: str | Path, base: "TrainConfig | None" = None) -> "TrainConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
        sections = {sec: dict(parser[sec]) for sec in parser.sections()}
        if base is None:
            return cls(sections)
        merged = {sec: dict(kv) for sec, kv in base.sections.items()}
        overlay = cls(sections)   # validates keys before merging
        for sec, kv in overlay.sections.items():
            merged.setdefault(sec, {}).update(kv)
        return cls(merged)

    def save(self, path: str | Path) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for sec in sorted(self.sections):
            parser[sec] = dict(sorted(self.sections[sec].items()))
        buf = io.StringIO()
        parser.write(buf)
        Path(path).write_text(buf.getvalue(), encoding="utf-8")

    # -- raw and typed accessors ------------------------------------
    def get(self, section: str, key: str) -> str:
        try:
            return self.sections[section][key]
        except KeyError:
            raise KeyError(f"config has no [{section}] {key!r}") from None

    def get_int(self, section: str, key: str) -> int:
        return int(self.get(section, key))

    def get_float(self, section: str, key: str) -> float:
        return float(self.get(section, key))

    def conv_spec(self, section: str, key: str) -> ConvSpec:
        return parse_conv_spec(self.get(section, key))

    def stack_spec(self, section: str, key: str) -> StackSpec:
        return parse_stack_spec(self.get(section, key))

    def schedule(self, section: str) -> OptimizerSchedule:
        return parse_lr_triple(self.get(section, "Learning rate"))

    def int_list(self, section: str, key: str) -> list:
        return parse_int_list(self.get(section, key))

    def embedding_size(self, section: str):
        return parse_optional_int(self.get(section, "Speaker embedding size"))

    def duration_range(self) -> tuple:
        lo, hi = parse_int_list(self.sections.get("duration", {}).get(
            "Duration range", _DEFAULT_DURATION_RANGE))
        return float(lo), float(hi)

    def __eq__(self, other) -> bool:
        return isinstance(other, TrainConfig) and self.sections == other.sections
