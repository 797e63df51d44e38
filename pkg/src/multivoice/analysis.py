"""Embedding-space analysis and diagnostic plots.

PCA of learned speaker embeddings, a perceptron separability probe,
and PNG renderings (scatter, attention matrix, F0 profiles) for the
analyze-embeddings and synthesis inspection commands.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")


@dataclass(frozen=True)
class PCAResult:
    coords: np.ndarray        # (n, 2) projections
    components: np.ndarray    # (2, dim) rows are principal directions
    eigenvalues: np.ndarray   # (2,) descending


def pca_embeddings(embeddings: np.ndarray) -> PCAResult:
    """Top-2 principal components of the embedding rows.

    Centered data, sample covariance, eigenvectors in descending
    eigenvalue order. Each component's sign is fixed by making its
    largest-magnitude coordinate positive, so runs are comparable.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a (speakers, dim) embedding matrix")
    n, dim = x.shape
    if n < 3:
        raise ValueError("PCA needs at least 3 speakers")
    if dim < 2:
        raise ValueError("embedding dimension must be at least 2")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:2]
    components = eigenvectors[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PCAResult(centered @ components.T, components,
                     eigenvalues[order].copy())


def linearly_separable(coords: np.ndarray, labels, max_epochs: int = 2000) -> bool:
    """Perceptron probe: converges iff the two label groups admit a
    separating line in the projection."""
    coords = np.asarray(coords, dtype=np.float64)
    names = sorted(set(labels))
    if len(names) != 2:
        raise ValueError("separability probe needs exactly 2 label values")
    y = np.array([1.0 if v == names[1] else -1.0 for v in labels])
    x = np.hstack([coords, np.ones((len(y), 1))])
    w = np.zeros(x.shape[1])
    for _ in range(max_epochs):
        mistakes = 0
        for i in range(len(y)):
            if y[i] * (x[i] @ w) <= 0.0:
                w += y[i] * x[i]
                mistakes += 1
        if mistakes == 0:
            return True
    return False


def pca_report_rows(speaker_ids, result: PCAResult, metadata=None) -> list:
    """TSV rows: speaker_id, pc1, pc2, attribute."""
    if len(speaker_ids) != result.coords.shape[0]:
        raise ValueError("speaker count does not match coordinate count")
    metadata = metadata or {}
    rows = ["speaker_id\tpc1\tpc2\tattribute"]
    for sid, (a, b) in zip(speaker_ids, result.coords):
        rows.append(f"{sid}\t{a:.6f}\t{b:.6f}\t{metadata.get(sid, '')}")
    return rows


# ---------------------------------------------------------------------------
# plots

def save_pca_scatter(path: str | Path, speaker_ids, result: PCAResult,
                     metadata=None) -> None:
    import matplotlib.pyplot as plt

    metadata = metadata or {}
    groups: dict = {}
    for i, sid in enumerate(speaker_ids):
        groups.setdefault(metadata.get(sid, ""), []).append(i)
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, idx in sorted(groups.items()):
        pts = result.coords[idx]
        ax.scatter(pts[:, 0], pts[:, 1], label=str(label) or None)
        for i in idx:
            ax.annotate(str(speaker_ids[i]), result.coords[i], fontsize=7)
    ax.set_xlabel("principal component 1")
    ax.set_ylabel("principal component 2")
    if any(groups):
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_attention_plot(path: str | Path, attention: np.ndarray,
                        title: str = "") -> None:
    import matplotlib.pyplot as plt

    attention = np.asarray(attention)
    if attention.ndim != 2:
        raise ValueError("attention must be (decoder steps, input positions)")
    fig, ax = plt.subplots(figsize=(5, 4))
    image = ax.imshow(attention, aspect="auto", origin="lower",
                      interpolation="nearest")
    ax.set_xlabel("input position")
    ax.set_ylabel("decoder step")
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_f0_profile_plot(path: str | Path, tracks: dict) -> None:
    """tracks: speaker id -> F0Track; unvoiced frames are masked out."""
    import matplotlib.pyplot as plt

    if not tracks:
        raise ValueError("no F0 tracks to plot")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for sid in sorted(tracks):
        track = tracks[sid]
        t = np.arange(len(track)) * track.hop_seconds
        f0 = np.where(track.voiced, track.f0, np.nan)
        ax.plot(t, f0, label=str(sid))
    ax.set_xlabel("time (s)")
    ax.set_ylabel("F0 (Hz)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
