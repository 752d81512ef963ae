"""Stochastic view generation for vector data.

The transformation pool is {additive Gaussian noise, random coordinate
masking, random uniform scaling}, applied in that order; each view of a pair
is an independent draw.  Batch augmentation keys a counter-based generator
by row so a row's views depend only on (row content, its key, config) and
never on batch composition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class AugmentConfig:
    gaussian_noise_sigma: float = 0.1
    mask_rate: float = 0.1
    scale_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        object.__setattr__(self, "scale_range", tuple(float(v) for v in self.scale_range))
        if self.gaussian_noise_sigma < 0:
            raise ConfigError(
                "augment.gaussian_noise_sigma",
                f"must be >= 0, got {self.gaussian_noise_sigma}",
            )
        if not 0.0 <= self.mask_rate < 1.0:
            raise ConfigError("augment.mask_rate", f"must lie in [0, 1), got {self.mask_rate}")
        if len(self.scale_range) != 2:
            raise ConfigError("augment.scale_range", "expected (lo, hi)")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise ConfigError("augment.scale_range", f"need 0 < lo <= hi, got ({lo}, {hi})")

    def is_identity(self) -> bool:
        return (
            self.gaussian_noise_sigma == 0.0
            and self.mask_rate == 0.0
            and self.scale_range == (1.0, 1.0)
        )


def _one_view(rng: np.random.Generator, cfg: AugmentConfig, x: np.ndarray) -> np.ndarray:
    noise = rng.standard_normal(x.size)
    mask_draw = rng.random(x.size)
    lo, hi = cfg.scale_range
    scale = rng.uniform(lo, hi)
    y = x + cfg.gaussian_noise_sigma * noise if cfg.gaussian_noise_sigma > 0 else x.copy()
    if cfg.mask_rate > 0:
        y[mask_draw < cfg.mask_rate] = 0.0
    return y * scale


def make_pair(rng: np.random.Generator, cfg: AugmentConfig, x) -> tuple[np.ndarray, np.ndarray]:
    """Two independent transformed views of one sample row."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("make_pair expects a 1-D sample row")
    return _one_view(rng, cfg, x), _one_view(rng, cfg, x)


def row_generator(base_key: int, row_key: int) -> np.random.Generator:
    """Counter-based generator for one row: Philox keyed by (base_key, row_key)."""
    return np.random.Generator(np.random.Philox(key=(int(base_key) << 64) + int(row_key)))


def augment_batch(
    cfg: AugmentConfig,
    x: np.ndarray,
    base_key: int,
    row_keys=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Rowwise :func:`make_pair` over a batch.

    ``row_keys`` defaults to the row positions; passing stable per-sample
    keys makes augmentation independent of batch composition and ordering.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("augment_batch expects a 2-D batch")
    n = x.shape[0]
    if row_keys is None:
        row_keys = np.arange(n)
    row_keys = np.asarray(row_keys, dtype=np.int64)
    if row_keys.shape != (n,):
        raise ShapeError(f"row_keys must have shape ({n},), got {row_keys.shape}")
    x_a = np.empty_like(x)
    x_b = np.empty_like(x)
    for r in range(n):
        rng = row_generator(base_key, int(row_keys[r]))
        x_a[r], x_b[r] = make_pair(rng, cfg, x[r])
    return x_a, x_b
