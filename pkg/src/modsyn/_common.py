"""Shared intensity conventions: 8-bit quantization and network range mapping."""

from __future__ import annotations

import numpy as np


def round_half_up(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with .5 going up (unlike numpy's banker's rounding)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def quantize_u8(x: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] and round half-up to uint8."""
    return np.clip(round_half_up(x), 0, 255).astype(np.uint8)


def to_network_range(image: np.ndarray) -> np.ndarray:
    """Map [0, 255] grayscale to the generators' [-1, 1] input range."""
    return np.asarray(image, dtype=np.float32) / 127.5 - 1.0


def from_network_range(image: np.ndarray) -> np.ndarray:
    """Map [-1, 1] network output back to 8-bit grayscale (half-up rounding)."""
    return quantize_u8((np.asarray(image, dtype=np.float64) + 1.0) * 127.5)
