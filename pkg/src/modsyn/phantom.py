"""Synthetic two-modality phantom datasets with a known ground-truth mapping.

Modality-A slices are piecewise-constant random shapes; the modality-B
counterpart of any A slice is ``modality_map(A)``: intensity inversion,
followed by a mild fixed 3x3 smoothing, followed by a monotone gamma curve.
The mapping is invertible (``modality_map_inverse``), so tests can verify
generated pairs analytically, and smooth enough that a small translation
network can learn it quickly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from ._common import quantize_u8
from .pgmio import DatasetManifest, ManifestRecord, write_manifest, write_pgm

# Fixed parameters of the A->B mapping. SMOOTH_ALPHA keeps the smoothing
# operator well conditioned so 8-bit quantization noise stays below one gray
# level after inversion; GAMMA is the monotone contrast exponent.
SMOOTH_ALPHA = 0.15
GAMMA = 0.8


def _box3(image: np.ndarray) -> np.ndarray:
    """3x3 box average with symmetric (reflect) boundary handling."""
    p = np.pad(np.asarray(image, dtype=np.float64), 1, mode="symmetric")
    return (
        p[:-2, :-2] + p[:-2, 1:-1] + p[:-2, 2:]
        + p[1:-1, :-2] + p[1:-1, 1:-1] + p[1:-1, 2:]
        + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:]
    ) / 9.0


def _smooth(image: np.ndarray) -> np.ndarray:
    return (1.0 - SMOOTH_ALPHA) * image + SMOOTH_ALPHA * _box3(image)


def _smooth_operator(shape: tuple[int, int]) -> scipy.sparse.csc_matrix:
    """The _smooth linear operator as an explicit sparse matrix."""
    h, w = shape
    n = h * w
    rows, cols, vals = [], [], []
    for y in range(h):
        for x in range(w):
            out = y * w + x
            rows.append(out)
            cols.append(out)
            vals.append(1.0 - SMOOTH_ALPHA)
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    # symmetric padding folds out-of-range neighbors back in
                    yy, xx = y + dy, x + dx
                    yy = -1 - yy if yy < 0 else (2 * h - 1 - yy if yy >= h else yy)
                    xx = -1 - xx if xx < 0 else (2 * w - 1 - xx if xx >= w else xx)
                    rows.append(out)
                    cols.append(yy * w + xx)
                    vals.append(SMOOTH_ALPHA / 9.0)
    return scipy.sparse.csc_matrix(
        scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def modality_map(image_a: np.ndarray) -> np.ndarray:
    """Ground-truth A->B mapping: gamma(smooth(255 - A)); returns uint8."""
    inverted = 255.0 - np.asarray(image_a, dtype=np.float64)
    smoothed = _smooth(inverted)
    curved = 255.0 * (smoothed / 255.0) ** GAMMA
    return quantize_u8(curved)


def modality_map_inverse(image_b: np.ndarray) -> np.ndarray:
    """Analytic inverse of modality_map; returns float64 (un-quantized)."""
    b = np.asarray(image_b, dtype=np.float64)
    smoothed = 255.0 * (b / 255.0) ** (1.0 / GAMMA)
    op = _smooth_operator(b.shape)
    inverted = scipy.sparse.linalg.spsolve(op, smoothed.ravel()).reshape(b.shape)
    return 255.0 - inverted


@dataclass
class PhantomSpec:
    seed: int
    num_paired: int
    num_unpaired_a: int
    num_unpaired_b: int
    slice_size: int = 64
    shape_complexity: int = 5

    def validate(self) -> None:
        if self.slice_size < 16 or self.slice_size % 4 != 0:
            raise ValueError(
                f"slice_size must be >= 16 and divisible by 4, got {self.slice_size}")
        for name in ("num_paired", "num_unpaired_a", "num_unpaired_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.shape_complexity < 1:
            raise ValueError("shape_complexity must be >= 1")


def render_slice(rng: np.random.Generator, size: int, complexity: int) -> np.ndarray:
    """One piecewise-constant A-domain slice: random ellipses/rectangles on black."""
    image = np.zeros((size, size), dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(complexity):
        kind = rng.integers(0, 2)
        intensity = int(rng.integers(30, 256))
        cy, cx = rng.integers(0, size, size=2)
        ry, rx = rng.integers(max(2, size // 16), max(3, size // 3), size=2)
        if kind == 0:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        image[mask] = intensity
    return image


def generate_phantom(spec: PhantomSpec, out_dir) -> DatasetManifest:
    """Write a paired + unpaired two-modality dataset; returns its manifest.

    Layout under out_dir: paired/pair_NNNN_{a,b}.pgm, unpaired_a/slice_NNNN.pgm,
    unpaired_b/slice_NNNN.pgm, manifest.txt. Geometry streams for the three
    pools are spawned independently from the spec seed, so the pools are
    disjoint by construction and the whole dataset is a pure function of the
    spec.
    """
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pool_seeds = np.random.SeedSequence(spec.seed).spawn(3)
    manifest = DatasetManifest(root=out_dir, seed=spec.seed)

    rng = np.random.default_rng(pool_seeds[0])
    (out_dir / "paired").mkdir(exist_ok=True)
    for i in range(spec.num_paired):
        image_a = render_slice(rng, spec.slice_size, spec.shape_complexity)
        image_b = modality_map(image_a)
        rel_a = f"paired/pair_{i:04d}_a.pgm"
        rel_b = f"paired/pair_{i:04d}_b.pgm"
        write_pgm(out_dir / rel_a, image_a)
        write_pgm(out_dir / rel_b, image_b)
        manifest.records.append(ManifestRecord(rel_a, "A", "paired", f"p{i:04d}"))
        manifest.records.append(ManifestRecord(rel_b, "B", "paired", f"p{i:04d}"))

    for pool_seed, modality, count, subdir in (
        (pool_seeds[1], "A", spec.num_unpaired_a, "unpaired_a"),
        (pool_seeds[2], "B", spec.num_unpaired_b, "unpaired_b"),
    ):
        rng = np.random.default_rng(pool_seed)
        (out_dir / subdir).mkdir(exist_ok=True)
        for i in range(count):
            image = render_slice(rng, spec.slice_size, spec.shape_complexity)
            if modality == "B":
                image = modality_map(image)
            rel = f"{subdir}/slice_{i:04d}.pgm"
            write_pgm(out_dir / rel, image)
            manifest.records.append(ManifestRecord(rel, modality, "unpaired", None))

    write_manifest(manifest, out_dir / "manifest.txt")
    return manifest
