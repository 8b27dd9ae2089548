"""Label Distribution Smoothing (LDS) sample weights for imbalanced regression."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LdsConfig:
    n_bins: int = 700
    kernel_length: int = 7
    sigma: float = 2.0  # in bins
    low: float = 0.0
    high: float = 1.0
    density_floor: float = 1.0

    def __post_init__(self):
        if self.kernel_length < 1 or self.kernel_length % 2 == 0:
            raise ValueError("kernel_length must be a positive odd integer")
        if self.n_bins < self.kernel_length:
            raise ValueError("n_bins must be at least kernel_length")
        if self.sigma <= 0 or self.high <= self.low:
            raise ValueError("sigma must be positive and high > low")


def gaussian_kernel(length: int, sigma: float) -> np.ndarray:
    half = length // 2
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def bin_index(targets, config: LdsConfig) -> np.ndarray:
    t = np.asarray(targets, dtype=float)
    pos = (t - config.low) / (config.high - config.low) * config.n_bins
    return np.clip(np.floor(pos), 0, config.n_bins - 1).astype(np.int64)


def smoothed_histogram(targets, config: LdsConfig = LdsConfig()) -> np.ndarray:
    """Per-bin label counts convolved with the Gaussian kernel (mirrored edges)."""
    counts = np.bincount(bin_index(targets, config), minlength=config.n_bins).astype(float)
    kernel = gaussian_kernel(config.kernel_length, config.sigma)
    half = config.kernel_length // 2
    padded = np.pad(counts, half, mode="symmetric")
    return np.convolve(padded, kernel, mode="valid")


def smoothed_density(targets, config: LdsConfig = LdsConfig()) -> np.ndarray:
    """Effective label density at each sample's bin."""
    t = np.asarray(targets, dtype=float)
    return smoothed_histogram(t, config)[bin_index(t, config)]


def lds_weights(targets, config: LdsConfig = LdsConfig(), normalize: bool = True) -> np.ndarray:
    """Inverse smoothed-density weights, rescaled to mean 1 unless ``normalize`` is False."""
    t = np.asarray(targets, dtype=float)
    if t.size == 0:
        raise ValueError("lds_weights needs at least one target")
    if not np.all(np.isfinite(t)):
        raise ValueError("targets must be finite")
    if np.any(t < config.low) or np.any(t > config.high):
        raise ValueError(f"targets must lie in [{config.low}, {config.high}]")
    w = 1.0 / np.maximum(smoothed_density(t, config), config.density_floor)
    if normalize:
        w = w / w.mean()
    return w


def write_weights(names, weights, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_name", "weight"])
        for n, v in zip(names, weights):
            w.writerow([n, repr(float(v))])


def read_weights(path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["cell_name"]: float(row["weight"]) for row in csv.DictReader(fh)}
