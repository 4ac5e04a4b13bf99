"""Volume ingestion and preparation: HU windowing, resampling, slicing.

Raw CT-like volumes are windowed to 8-bit grayscale; MR-like volumes carry no
calibrated unit and are min-max scaled per volume instead. Prepared volumes
are retagged CT->A, MR->B so a second preparation pass is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.ndimage

from ._common import quantize_u8
from .pgmio import read_volume_dir, write_volume_dir

MODALITIES = ("CT", "MR", "A", "B")


@dataclass(frozen=True)
class Volume:
    """A 3D stack of axial slices; voxels indexed (slice, row, col)."""

    voxels: np.ndarray
    spacing: tuple[float, float, float]  # (x, y, z) mm, as in the sidecar header
    modality: str
    patient_id: str

    def __post_init__(self):
        if self.voxels.ndim != 3:
            raise ValueError(f"voxels must be 3D, got shape {self.voxels.shape}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing components must be > 0, got {self.spacing}")
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")


@dataclass(frozen=True)
class WindowSpec:
    """HU display window; paper defaults center 40, length 80."""

    center: float = 40.0
    length: float = 80.0

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"window length must be > 0, got {self.length}")


def load_volume(vol_dir) -> Volume:
    voxels, spacing, modality, patient_id = read_volume_dir(vol_dir)
    return Volume(voxels, spacing, modality, patient_id)


def save_volume(volume: Volume, out_dir, offset: int = 0, maxval: int = 255) -> None:
    write_volume_dir(out_dir, volume.voxels, volume.spacing, volume.modality,
                     volume.patient_id, offset=offset, maxval=maxval)


def window_hu(volume: Volume, window: WindowSpec = WindowSpec()) -> Volume:
    """Map HU range [center - length/2, center + length/2] onto [0, 255].

    Values outside the window clip to 0/255; outputs are integers (half-up).
    """
    low = window.center - window.length / 2.0
    scaled = (np.asarray(volume.voxels, dtype=np.float64) - low) / window.length * 255.0
    return replace(volume, voxels=quantize_u8(scaled).astype(np.float64))


def minmax_scale(volume: Volume) -> Volume:
    """Per-volume min-max normalization to [0, 255]; a constant volume maps to 0."""
    voxels = np.asarray(volume.voxels, dtype=np.float64)
    lo, hi = voxels.min(), voxels.max()
    if hi == lo:
        scaled = np.zeros_like(voxels)
    else:
        scaled = (voxels - lo) / (hi - lo) * 255.0
    return replace(volume, voxels=quantize_u8(scaled).astype(np.float64))


def resample(volume: Volume, target_spacing=(1.0, 1.0, 1.0)) -> Volume:
    """Trilinear resample to target voxel spacing (paper default 1x1x1 mm).

    Output dims = round(input_dim * input_spacing / target_spacing). Output
    sample k along an axis reads input index coordinate k * (target/input),
    edge-clamped, so identical spacings reproduce the input exactly.
    """
    if any(t <= 0 for t in target_spacing):
        raise ValueError(f"target spacing components must be > 0, got {target_spacing}")
    if any(d < 2 for d in volume.voxels.shape):
        raise ValueError(
            f"cannot resample a degenerate axis, volume shape {volume.voxels.shape}")
    # spacing header order is (x, y, z); voxel axes are (z, y, x)
    in_sp = (volume.spacing[2], volume.spacing[1], volume.spacing[0])
    out_sp = (target_spacing[2], target_spacing[1], target_spacing[0])
    out_dims = [int(round(d * si / so))
                for d, si, so in zip(volume.voxels.shape, in_sp, out_sp)]
    if any(d < 1 for d in out_dims):
        raise ValueError(f"target spacing {target_spacing} collapses the volume")
    axes = [np.arange(n, dtype=np.float64) * (so / si)
            for n, si, so in zip(out_dims, in_sp, out_sp)]
    grid = np.meshgrid(*axes, indexing="ij")
    voxels = scipy.ndimage.map_coordinates(
        np.asarray(volume.voxels, dtype=np.float64), grid, order=1, mode="nearest")
    return replace(volume, voxels=voxels, spacing=tuple(target_spacing))


def resize_slice(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear rescale of one 2D slice to size x size (same grid convention)."""
    image = np.asarray(image, dtype=np.float64)
    axes = [np.arange(size, dtype=np.float64) * ((n - 1) / (size - 1) if size > 1 else 0.0)
            for n in image.shape]
    grid = np.meshgrid(*axes, indexing="ij")
    return scipy.ndimage.map_coordinates(image, grid, order=1, mode="nearest")


def to_slices(volume: Volume, slice_size: int) -> list[np.ndarray]:
    """Axial slices rescaled to slice_size^2, 8-bit, order preserved."""
    if volume.voxels.shape[0] == 0:
        raise ValueError("empty volume")
    return [quantize_u8(resize_slice(s, slice_size)) for s in volume.voxels]


def prepare_volume(volume: Volume, window: WindowSpec = WindowSpec(),
                   target_spacing=(1.0, 1.0, 1.0), slice_size: int = 256) -> Volume:
    """Full preparation: normalize intensities, resample, rescale slices.

    CT volumes are HU-windowed, MR volumes min-max scaled; A/B volumes are
    assumed already 8-bit and pass through. The result is retagged to A
    (CT-like) or B (MR-like), so preparing prepared data is the identity.
    """
    if volume.modality == "CT":
        volume = replace(window_hu(volume, window), modality="A")
    elif volume.modality == "MR":
        volume = replace(minmax_scale(volume), modality="B")
    if volume.spacing != tuple(target_spacing):
        volume = resample(volume, target_spacing)
    slices = to_slices(volume, slice_size)
    return replace(volume, voxels=np.stack(slices).astype(np.float64))


def resize_grid_note() -> str:
    """Documented grid convention, for reports and debugging."""
    return ("resample: out[k] = in[k * target/input] (index space, edge-clamped); "
            "resize: corner-aligned, out[k] = in[k * (n_in-1)/(n_out-1)]")
