"""Paired/unpaired slice sampling with deterministic online augmentation.

Augmentation order: horizontal flip, reflect-pad, crop at a drawn offset,
rotate (bilinear, zero fill). A paired sample applies one parameter draw to
both sides; the unpaired A and B pools own independent RNG streams. Samplers
shuffle per epoch without replacement and are checkpointable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

from ._common import round_half_up, to_network_range
from .pgmio import DatasetManifest, read_pgm

ROTATION_RANGE = 5.0  # degrees, uniform in [-5, 5]


def pad_for(slice_size: int) -> int:
    """Reflect-pad width per side; 15 px at 256, scaled proportionally."""
    return int(round_half_up(slice_size * 15.0 / 256.0))


@dataclass
class AugmentParams:
    flip: bool
    crop_offset: tuple[int, int]  # (dx, dy) into the padded image
    rotation: float               # degrees


@dataclass
class SliceSample:
    """One training unit: a single slice (unpaired) or an aligned A/B pair."""

    image_a: np.ndarray | None = None
    image_b: np.ndarray | None = None
    pair_id: str | None = None

    def __post_init__(self):
        if self.image_a is None and self.image_b is None:
            raise ValueError("sample carries no image")
        if self.image_a is not None and self.image_b is not None:
            if self.image_a.shape != self.image_b.shape:
                raise ValueError(
                    f"paired images disagree in shape: {self.image_a.shape} "
                    f"vs {self.image_b.shape}")

    @property
    def is_paired(self) -> bool:
        return self.image_a is not None and self.image_b is not None


def draw_params(rng: np.random.Generator, slice_size: int) -> AugmentParams:
    pad = pad_for(slice_size)
    flip = bool(rng.random() < 0.5)
    dx, dy = (int(v) for v in rng.integers(0, 2 * pad + 1, size=2))
    rotation = float(rng.uniform(-ROTATION_RANGE, ROTATION_RANGE))
    return AugmentParams(flip=flip, crop_offset=(dx, dy), rotation=rotation)


def _augment_image(image: np.ndarray, params: AugmentParams) -> np.ndarray:
    size = image.shape[0]
    pad = pad_for(size)
    dx, dy = params.crop_offset
    if not (0 <= dx <= 2 * pad and 0 <= dy <= 2 * pad):
        raise ValueError(
            f"crop offset {params.crop_offset} outside [0, {2 * pad}] for size {size}")
    out = np.asarray(image, dtype=np.float64)
    if params.flip:
        out = out[:, ::-1]
    out = np.pad(out, pad, mode="reflect")
    out = out[dy:dy + size, dx:dx + size]
    if params.rotation != 0.0:
        out = scipy.ndimage.rotate(out, params.rotation, reshape=False,
                                   order=1, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 255.0).astype(np.float32)


def augment(sample: SliceSample, params: AugmentParams) -> SliceSample:
    """Apply one augmentation draw; a pair receives identical transforms."""
    return SliceSample(
        image_a=None if sample.image_a is None else _augment_image(sample.image_a, params),
        image_b=None if sample.image_b is None else _augment_image(sample.image_b, params),
        pair_id=sample.pair_id,
    )


class _EpochSampler:
    """Without-replacement index stream, reshuffled each epoch."""

    def __init__(self, count: int, rng: np.random.Generator):
        if count == 0:
            raise ValueError("empty pool")
        self.count = count
        self.rng = rng
        self.order = list(self.rng.permutation(count))
        self.pos = 0

    def next_index(self) -> int:
        if self.pos >= len(self.order):
            self.order = list(self.rng.permutation(self.count))
            self.pos = 0
        idx = self.order[self.pos]
        self.pos += 1
        return int(idx)

    def state_dict(self) -> dict:
        return {"rng": self.rng.bit_generator.state,
                "order": [int(i) for i in self.order], "pos": self.pos}

    def load_state_dict(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]
        self.order = list(state["order"])
        self.pos = int(state["pos"])


class UnpairedSampler:
    """Draws augmented single-modality samples from one pool."""

    def __init__(self, images: list[np.ndarray], modality: str,
                 rng: np.random.Generator, augment_enabled: bool = True):
        self.images = images
        self.modality = modality
        self.augment_enabled = augment_enabled
        self._epoch = _EpochSampler(len(images), rng)

    def __len__(self) -> int:
        return len(self.images)

    def next_batch(self, m: int) -> list[SliceSample]:
        batch = []
        for _ in range(m):
            image = self.images[self._epoch.next_index()]
            key = "image_a" if self.modality == "A" else "image_b"
            sample = SliceSample(**{key: image})
            if self.augment_enabled:
                sample = augment(sample, draw_params(self._epoch.rng, image.shape[0]))
            batch.append(sample)
        return batch

    def state_dict(self) -> dict:
        return self._epoch.state_dict()

    def load_state_dict(self, state: dict) -> None:
        self._epoch.load_state_dict(state)


class PairedSampler:
    """Draws aligned pairs; both sides share a single parameter draw."""

    def __init__(self, pairs: list[tuple[np.ndarray, np.ndarray, str]],
                 rng: np.random.Generator, augment_enabled: bool = True):
        self.pairs = pairs
        self.augment_enabled = augment_enabled
        self._epoch = _EpochSampler(len(pairs), rng)

    def __len__(self) -> int:
        return len(self.pairs)

    def next_batch(self, m: int) -> list[SliceSample]:
        batch = []
        for _ in range(m):
            a, b, pair_id = self.pairs[self._epoch.next_index()]
            sample = SliceSample(image_a=a, image_b=b, pair_id=pair_id)
            if self.augment_enabled:
                sample = augment(sample, draw_params(self._epoch.rng, a.shape[0]))
            batch.append(sample)
        return batch

    def state_dict(self) -> dict:
        return self._epoch.state_dict()

    def load_state_dict(self, state: dict) -> None:
        self._epoch.load_state_dict(state)


def next_unpaired_batch(pool_a: UnpairedSampler, pool_b: UnpairedSampler,
                        m: int) -> tuple[list[SliceSample], list[SliceSample]]:
    """m A-samples and m B-samples, independently drawn and augmented."""
    return pool_a.next_batch(m), pool_b.next_batch(m)


def next_paired_batch(pool: PairedSampler, m: int) -> list[SliceSample]:
    return pool.next_batch(m)


def assemble(samples: list[SliceSample], side: str) -> np.ndarray:
    """Stack one side of a batch into (m, 1, H, W) float32 in [-1, 1]."""
    images = [getattr(s, f"image_{side}") for s in samples]
    if any(im is None for im in images):
        raise ValueError(f"batch has samples without an {side.upper()} image")
    return np.stack([to_network_range(im)[None] for im in images])


def load_pools(manifest: DatasetManifest):
    """Load manifest images into memory pools.

    Returns (pairs, unpaired_a, unpaired_b): pairs as (a, b, pair_id) tuples,
    unpaired pools as lists of uint8 arrays.
    """
    pairs = [(read_pgm(manifest.resolve(ra)), read_pgm(manifest.resolve(rb)), ra.pair_id)
             for ra, rb in manifest.paired_records()]
    pool_a = [read_pgm(manifest.resolve(r)) for r in manifest.unpaired_records("A")]
    pool_b = [read_pgm(manifest.resolve(r)) for r in manifest.unpaired_records("B")]
    return pairs, pool_a, pool_b


def make_samplers(manifest: DatasetManifest, seed: int, augment_enabled: bool = True,
                  use_paired: bool = True):
    """Build the three training samplers with independent spawned RNG streams.

    Returns (paired_sampler | None, sampler_a, sampler_b).
    """
    pairs, pool_a, pool_b = load_pools(manifest)
    seeds = np.random.SeedSequence(seed).spawn(3)
    sampler_a = UnpairedSampler(pool_a, "A", np.random.default_rng(seeds[0]),
                                augment_enabled)
    sampler_b = UnpairedSampler(pool_b, "B", np.random.default_rng(seeds[1]),
                                augment_enabled)
    paired = None
    if use_paired and pairs:
        paired = PairedSampler(pairs, np.random.default_rng(seeds[2]), augment_enabled)
    return paired, sampler_a, sampler_b
