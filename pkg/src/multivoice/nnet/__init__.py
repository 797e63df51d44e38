"""Shared sequence-model primitives used by several front-ends."""
from .crf import crf_log_likelihood, crf_log_partition, crf_viterbi_decode
from .ctc import (
    ctc_best_path,
    ctc_feasible,
    ctc_loss,
    ctc_posteriors,
    min_frames,
)
from .qrnn import BiQRNN, QRNNLayer

__all__ = [
    "BiQRNN",
    "QRNNLayer",
    "crf_log_likelihood",
    "crf_log_partition",
    "crf_viterbi_decode",
    "ctc_best_path",
    "ctc_feasible",
    "ctc_loss",
    "ctc_posteriors",
    "min_frames",
]
