"""Binary PGM (P5) raster IO, dataset manifests, and volume directories.

All on-disk artifacts of the toolkit use these three formats:

* slices: binary PGM, maxval 255 (prepared data) or up to 65535 (raw input);
* manifests: one line per slice, ``<relative-path> <A|B> <paired|unpaired> <pair-id|->``;
* volumes: a directory of ordered PGM slices plus a ``header.txt`` sidecar
  with ``spacing x y z``, ``modality``, ``patient_id`` and an optional
  ``offset`` (stored value = intensity + offset, so signed units fit the
  unsigned raster).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SLICE_PATTERN = re.compile(r"^slice_(\d{4})\.pgm$")


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    """Write a 2D array as binary (P5) PGM. Values must lie in [0, maxval]."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"PGM image must be 2D, got shape {image.shape}")
    if image.min() < 0 or image.max() > maxval:
        raise ValueError(f"pixel values outside [0, {maxval}]")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    h, w = image.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(image.astype(dtype).tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM into an integer array (u1 or int32 for 16-bit)."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with optional '#' comments.
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raster = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    image = raster.reshape(h, w)
    return image.astype(np.int32) if maxval > 255 else image.copy()


@dataclass
class ManifestRecord:
    path: str          # relative to the manifest's directory
    modality: str      # "A" or "B"
    split: str         # "paired" or "unpaired"
    pair_id: str | None


@dataclass
class DatasetManifest:
    """Parsed manifest plus the directory its relative paths resolve against."""

    root: Path
    records: list[ManifestRecord] = field(default_factory=list)
    seed: int | None = None

    def paired_records(self) -> list[tuple[ManifestRecord, ManifestRecord]]:
        """Aligned (A, B) record pairs, ordered by pair id."""
        by_id: dict[str, dict[str, ManifestRecord]] = {}
        for rec in self.records:
            if rec.split == "paired" and rec.pair_id:
                by_id.setdefault(rec.pair_id, {})[rec.modality] = rec
        pairs = []
        for pair_id in sorted(by_id):
            sides = by_id[pair_id]
            if set(sides) != {"A", "B"}:
                raise ValueError(f"pair {pair_id}: missing one side of the pair")
            pairs.append((sides["A"], sides["B"]))
        return pairs

    def unpaired_records(self, modality: str) -> list[ManifestRecord]:
        return [r for r in self.records
                if r.split == "unpaired" and r.modality == modality]

    def resolve(self, rec: ManifestRecord) -> Path:
        return self.root / rec.path


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = []
    if manifest.seed is not None:
        lines.append(f"# seed {manifest.seed}")
    for rec in manifest.records:
        pair = rec.pair_id if rec.pair_id else "-"
        lines.append(f"{rec.path} {rec.modality} {rec.split} {pair}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    manifest = DatasetManifest(root=path.parent)
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            tokens = line[1:].split()
            if len(tokens) == 2 and tokens[0] == "seed":
                manifest.seed = int(tokens[1])
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise ValueError(f"{path}: malformed manifest line: {line!r}")
        rel, modality, split, pair = tokens
        if modality not in ("A", "B") or split not in ("paired", "unpaired"):
            raise ValueError(f"{path}: malformed manifest line: {line!r}")
        manifest.records.append(
            ManifestRecord(rel, modality, split, None if pair == "-" else pair))
    return manifest


def write_volume_dir(out_dir, voxels: np.ndarray, spacing, modality: str,
                     patient_id: str, offset: int = 0, maxval: int = 255) -> None:
    """Write an axial slice stack as slice_0000.pgm ... plus header.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stored = np.asarray(voxels) + offset
    for i in range(stored.shape[0]):
        write_pgm(out_dir / f"slice_{i:04d}.pgm", stored[i], maxval=maxval)
    header = [
        f"spacing {spacing[0]:g} {spacing[1]:g} {spacing[2]:g}",
        f"modality {modality}",
        f"patient_id {patient_id}",
    ]
    if offset:
        header.append(f"offset {offset:g}")
    (out_dir / "header.txt").write_text("\n".join(header) + "\n")


def read_volume_dir(vol_dir):
    """Read a volume directory; returns (voxels, spacing, modality, patient_id).

    Voxels are float64 with the header offset already subtracted; slice order
    follows the zero-padded file index.
    """
    vol_dir = Path(vol_dir)
    header_path = vol_dir / "header.txt"
    if not header_path.is_file():
        raise FileNotFoundError(f"{vol_dir}: missing header.txt sidecar")
    spacing, modality, patient_id, offset = None, None, None, 0.0
    for line in header_path.read_text().splitlines():
        tokens = line.split()
        if not tokens:
            continue
        key = tokens[0]
        if key == "spacing":
            spacing = tuple(float(t) for t in tokens[1:4])
        elif key == "modality":
            modality = tokens[1]
        elif key == "patient_id":
            patient_id = tokens[1]
        elif key == "offset":
            offset = float(tokens[1])
    if spacing is None or modality is None or patient_id is None:
        raise ValueError(f"{header_path}: header must define spacing, modality, patient_id")
    names = sorted(p.name for p in vol_dir.iterdir() if SLICE_PATTERN.match(p.name))
    if not names:
        raise ValueError(f"{vol_dir}: no slice_NNNN.pgm files")
    slices = [read_pgm(vol_dir / n).astype(np.float64) - offset for n in names]
    shapes = {s.shape for s in slices}
    if len(shapes) != 1:
        raise ValueError(f"{vol_dir}: slices disagree in shape: {sorted(shapes)}")
    return np.stack(slices), spacing, modality, patient_id


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write-then-rename so readers never observe a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
