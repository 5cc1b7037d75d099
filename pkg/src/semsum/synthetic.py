"""Seeded synthetic data: planted summaries for the decoders, planted pairs for the trainer."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np


@dataclass
class PlantedConfig:
    frames: int = 500
    sentences: int = 12
    dim: int = 64
    sigma: float = 0.05
    segment_length: int = 1  # frames per grid cell
    seed: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class PlantedInstance:
    frames: np.ndarray  # (F, dim)
    sentences: np.ndarray  # (N, dim)
    planted_cells: list[int]  # ground-truth grid cell per sentence, increasing
    grid: int
    segment_length: int
    config: PlantedConfig


def _unit(rng, n, dim):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def planted_instance(cfg: PlantedConfig | None = None, **overrides) -> PlantedInstance:
    """Random unit-norm sentences, each planted in one grid cell at increasing positions.

    Frames in a planted cell are the sentence vector plus Gaussian noise of
    per-coordinate std ``sigma``; every other frame is an unrelated random
    unit vector plus the same noise.
    """
    cfg = cfg or PlantedConfig()
    if overrides:
        cfg = PlantedConfig(**{**asdict(cfg), **overrides})
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.frames // cfg.segment_length
    if cfg.sentences > grid:
        raise ValueError(f"cannot plant {cfg.sentences} segments in a grid of {grid}")
    F = grid * cfg.segment_length
    sentences = _unit(rng, cfg.sentences, cfg.dim)
    cells = np.sort(rng.choice(grid, size=cfg.sentences, replace=False))
    frames = _unit(rng, F, cfg.dim)
    for t, c in enumerate(cells):
        frames[c * cfg.segment_length:(c + 1) * cfg.segment_length] = sentences[t]
    frames = frames + cfg.sigma * rng.standard_normal(frames.shape)
    return PlantedInstance(frames, sentences, [int(c) for c in cells], grid, cfg.segment_length, cfg)


@dataclass
class PairedConfig:
    """Planted cross-modal pairs for the embedding trainer."""

    train_pairs: int = 1000
    dev_pairs: int = 100
    latent_dim: int = 8
    feature_dim: int = 32  # h inputs for both modalities
    embed_dim: int = 16  # source embedding dim == output dim
    feature_noise: float = 0.1
    source_noise: float = 1.0
    seed: int = 0


@dataclass
class PairedData:
    frame_h: np.ndarray
    frame_vs: np.ndarray
    sent_h: np.ndarray
    sent_vs: np.ndarray

    def __len__(self):
        return self.frame_h.shape[0]

    def subset(self, idx):
        return PairedData(self.frame_h[idx], self.frame_vs[idx], self.sent_h[idx], self.sent_vs[idx])


def paired_data(cfg: PairedConfig | None = None) -> tuple[PairedData, PairedData]:
    """Train/dev pairs where row i of the frame side matches row i of the sentence side.

    Both modalities observe a shared latent code through different random
    linear maps. The frozen source embeddings carry the same code but are
    swamped by ``source_noise``, so a useful model has to learn from ``h``.
    """
    cfg = cfg or PairedConfig()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.train_pairs + cfg.dev_pairs
    z = rng.standard_normal((n, cfg.latent_dim))
    maps = [rng.standard_normal((cfg.latent_dim, d)) / np.sqrt(cfg.latent_dim)
            for d in (cfg.feature_dim, cfg.feature_dim, cfg.embed_dim)]
    src_f = rng.standard_normal((cfg.latent_dim, cfg.embed_dim)) / np.sqrt(cfg.latent_dim)

    def noisy(x, s):
        return x + s * rng.standard_normal(x.shape)

    data = PairedData(
        frame_h=noisy(z @ maps[0], cfg.feature_noise),
        frame_vs=noisy(z @ src_f, cfg.source_noise),
        sent_h=noisy(z @ maps[1], cfg.feature_noise),
        sent_vs=noisy(z @ maps[2], cfg.source_noise),
    )
    train = np.arange(cfg.train_pairs)
    dev = np.arange(cfg.train_pairs, n)
    return data.subset(train), data.subset(dev)
