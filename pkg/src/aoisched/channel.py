"""Quantized i.i.d. block-fading channels with per-level packet-drop rates.

Levels are indexed so that the drop probability is non-decreasing in the
level index; the canonical five-level drop list is (0.01, 0.05, 0.1, 0.15,
0.2).  Channel draws are i.i.d. across time steps and across (device,
channel) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# canonical per-level drops, ordered non-decreasing in the level index
DEFAULT_DROP_PROBS = (0.01, 0.05, 0.1, 0.15, 0.2)


def quantize_rayleigh(scale: float, levels: int, thresholds=None) -> np.ndarray:
    """Probability of each quantization level of a Rayleigh(scale) gain.

    With thresholds=None, levels are equal-quantile (each 1/levels).  With an
    ascending list of levels-1 gain cut-points, level probabilities come from
    CDF differences, F(x) = 1 - exp(-x^2 / (2 scale^2)).
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if thresholds is None:
        return np.full(levels, 1.0 / levels)
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.shape != (levels - 1,):
        raise ValueError(f"need {levels - 1} thresholds, got {thresholds.shape}")
    if np.any(np.diff(thresholds) <= 0) or thresholds[0] <= 0:
        raise ValueError("thresholds must be positive and strictly increasing")
    cdf = 1.0 - np.exp(-(thresholds**2) / (2.0 * scale**2))
    edges = np.concatenate(([0.0], cdf, [1.0]))
    return np.diff(edges)


@dataclass(frozen=True)
class ChannelModel:
    """Per-(device, channel) level distributions q and drop probabilities p.

    level_probs has shape (N, M, levels) and each slice sums to one;
    drop_probs has the same shape, entries in [0, 1] and (by default)
    non-decreasing in the level index.
    """

    num_devices: int
    num_channels: int
    levels: int
    level_probs: np.ndarray
    drop_probs: np.ndarray

    def __post_init__(self):
        n, m, h = self.num_devices, self.num_channels, self.levels
        q = np.array(self.level_probs, dtype=float)
        p = np.array(self.drop_probs, dtype=float)
        if q.shape != (n, m, h):
            raise ValueError(f"level_probs must be {(n, m, h)}, got {q.shape}")
        if p.shape != (n, m, h):
            raise ValueError(f"drop_probs must be {(n, m, h)}, got {p.shape}")
        if np.any(q < 0):
            raise ValueError("level probabilities must be non-negative")
        sums = q.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > 1e-12:
            raise ValueError("level probabilities must sum to 1 per (device, channel)")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("drop probabilities must lie in [0, 1]")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "level_probs", q)
        object.__setattr__(self, "drop_probs", p)
        cdf = np.cumsum(q, axis=2)
        cdf.setflags(write=False)
        object.__setattr__(self, "_level_cdf", cdf)

    @classmethod
    def build(
        cls,
        num_devices: int,
        num_channels: int,
        levels: int,
        drop_probs=DEFAULT_DROP_PROBS,
        rng: np.random.Generator | None = None,
        scale_range: tuple[float, float] = (0.5, 2.0),
        thresholds=None,
        level_probs=None,
        check_monotone_drop: bool = True,
    ) -> "ChannelModel":
        """Assemble a model from shared or per-pair tables.

        drop_probs may be a length-`levels` list (shared across pairs) or a
        full (N, M, levels) table.  level_probs, if omitted, comes from
        Rayleigh quantization with a per-pair scale drawn from scale_range
        (the scale only matters in fixed-threshold mode).
        check_monotone_drop=False admits deliberately inverted drop tables
        for negative-control experiments.
        """
        n, m, h = num_devices, num_channels, levels
        p = np.asarray(drop_probs, dtype=float)
        if p.shape == (h,):
            p = np.broadcast_to(p, (n, m, h)).copy()
        elif p.shape != (n, m, h):
            raise ValueError(f"drop_probs must have shape ({h},) or {(n, m, h)}")
        if check_monotone_drop and np.any(np.diff(p, axis=2) < 0):
            raise ValueError("drop probability must be non-decreasing in the level")
        if level_probs is None:
            if rng is None:
                rng = np.random.default_rng(0)
            q = np.empty((n, m, h))
            for i in range(n):
                for j in range(m):
                    scale = rng.uniform(*scale_range)
                    q[i, j] = quantize_rayleigh(scale, h, thresholds)
        else:
            q = np.asarray(level_probs, dtype=float)
        return cls(
            num_devices=n,
            num_channels=m,
            levels=h,
            level_probs=q,
            drop_probs=p,
        )

    def to_dict(self) -> dict:
        return {
            "num_devices": self.num_devices,
            "num_channels": self.num_channels,
            "levels": self.levels,
            "level_probs": self.level_probs.tolist(),
            "drop_probs": self.drop_probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelModel":
        return cls(
            num_devices=d["num_devices"],
            num_channels=d["num_channels"],
            levels=d["levels"],
            level_probs=np.array(d["level_probs"], dtype=float),
            drop_probs=np.array(d["drop_probs"], dtype=float),
        )


def drop_probability(model: ChannelModel, n: int, m: int, h: int) -> float:
    """Packet-drop probability of device n on channel m at level h (1-based h)."""
    if not 1 <= h <= model.levels:
        raise ValueError(f"level must be in 1..{model.levels}, got {h}")
    return float(model.drop_probs[n, m, h - 1])


def sample_channel_matrix(model: ChannelModel, rng: np.random.Generator) -> np.ndarray:
    """One N x M matrix of levels in 1..levels, entries independent per q."""
    return sample_channel_matrices(model, rng, 1)[0]


def sample_channel_matrices(
    model: ChannelModel, rng: np.random.Generator, count: int
) -> np.ndarray:
    """count independent channel matrices, shape (count, N, M)."""
    cdf = model._level_cdf
    u = rng.random((count, model.num_devices, model.num_channels))
    idx = np.sum(u[..., None] >= cdf[None, ...], axis=3)
    return (np.minimum(idx, model.levels - 1) + 1).astype(np.int64)
