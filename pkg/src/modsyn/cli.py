"""Command-line interface: phantom-gen, preprocess, train, synthesize, evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error.
Every command validates its inputs before touching the filesystem.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import torch

from . import metrics
from ._common import from_network_range, quantize_u8, to_network_range
from .config import ConfigError, RunConfig, echo_toml, load_run_config
from .losses import LossReport
from .networks import Generator, GeneratorConfig
from .pgmio import read_manifest, read_pgm, write_pgm
from .phantom import PhantomSpec, generate_phantom
from .pipeline import make_samplers
from .training import (CheckpointError, Trainer, TrainingDiverged,
                       load_checkpoint)
from .volume import WindowSpec, load_volume, prepare_volume, save_volume


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modsyn",
        description="Cross-modality slice synthesis: phantom data, preprocessing, "
                    "dual cycle-consistent adversarial training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom-gen",
                       help="generate a deterministic two-modality phantom dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paired", type=int, default=8, help="number of aligned pairs")
    p.add_argument("--unpaired", type=int, default=16,
                   help="slices per unpaired pool (both pools)")
    p.add_argument("--unpaired-a", type=int, default=None)
    p.add_argument("--unpaired-b", type=int, default=None)
    p.add_argument("--size", type=int, default=64, help="slice size in pixels")
    p.add_argument("--complexity", type=int, default=5, help="shapes per slice")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("preprocess",
                       help="window/scale, resample, and rescale raw volumes")
    p.add_argument("--input", nargs="+", required=True, help="volume directories")
    p.add_argument("--out", required=True, help="output parent directory")
    p.add_argument("--window-center", type=float, default=40.0)
    p.add_argument("--window-length", type=float, default=80.0)
    p.add_argument("--target-spacing", type=float, nargs=3, default=[1.0, 1.0, 1.0],
                   metavar=("X", "Y", "Z"))
    p.add_argument("--slice-size", type=int, default=256)
    p.add_argument("--manifest", action="store_true",
                   help="also write a training manifest over the prepared slices")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="run the training loop from a config file")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--iters", type=int, default=None,
                   help="iterations to run in this invocation (default: to the end)")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--run-dir", default=None, help="override [output] run_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize",
                       help="run the trained A->B synthesis network over a volume")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="prepared input volume directory")
    p.add_argument("--out", required=True, help="output volume directory")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate",
                       help="MAE/PSNR report between reference and synthesized volumes")
    p.add_argument("--reference", required=True)
    p.add_argument("--synthesized", required=True)
    p.add_argument("--out", default=None, help="report directory (default: stdout)")
    p.add_argument("--checkpoint", default=None,
                   help="with --diag-input: run the cycle-reconstruction diagnostic")
    p.add_argument("--diag-input", default=None,
                   help="volume directory for the cycle diagnostic")
    p.set_defaults(func=cmd_evaluate)
    return parser


def cmd_phantom_gen(args) -> int:
    spec = PhantomSpec(
        seed=args.seed,
        num_paired=args.paired,
        num_unpaired_a=args.unpaired if args.unpaired_a is None else args.unpaired_a,
        num_unpaired_b=args.unpaired if args.unpaired_b is None else args.unpaired_b,
        slice_size=args.size,
        shape_complexity=args.complexity,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    manifest = generate_phantom(spec, args.out)
    print(f"wrote {len(manifest.records)} slices "
          f"({spec.num_paired} pairs, {spec.num_unpaired_a}+{spec.num_unpaired_b} "
          f"unpaired) to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    for vol_dir in args.input:
        if not (Path(vol_dir) / "header.txt").is_file():
            raise ConfigError(f"not a volume directory (no header.txt): {vol_dir}")
    window = WindowSpec(center=args.window_center, length=args.window_length)
    out_root = Path(args.out)
    records = []
    for vol_dir in args.input:
        volume = load_volume(vol_dir)
        prepared = prepare_volume(volume, window, tuple(args.target_spacing),
                                  args.slice_size)
        name = Path(vol_dir).name
        save_volume(prepared, out_root / name)
        records.append((name, prepared))
        print(f"{vol_dir}: {volume.modality} {volume.voxels.shape} -> "
              f"{prepared.modality} {prepared.voxels.shape}")
    if args.manifest:
        _write_prepared_manifest(out_root, records)
    return 0


def _write_prepared_manifest(out_root: Path, records) -> None:
    """Pair prepared volumes by patient id when both modalities are present."""
    from .pgmio import DatasetManifest, ManifestRecord, write_manifest

    by_patient: dict[str, dict[str, tuple[str, int]]] = {}
    for name, vol in records:
        by_patient.setdefault(vol.patient_id, {})[vol.modality] = \
            (name, vol.voxels.shape[0])
    manifest = DatasetManifest(root=out_root)
    for patient in sorted(by_patient):
        sides = by_patient[patient]
        paired = set(sides) == {"A", "B"}
        if paired and sides["A"][1] != sides["B"][1]:
            raise ConfigError(
                f"patient {patient}: paired volumes disagree in slice count "
                f"({sides['A'][1]} vs {sides['B'][1]})")
        for modality, (name, count) in sorted(sides.items()):
            for i in range(count):
                manifest.records.append(ManifestRecord(
                    f"{name}/slice_{i:04d}.pgm", modality,
                    "paired" if paired else "unpaired",
                    f"{patient}_{i:04d}" if paired else None))
    write_manifest(manifest, out_root / "manifest.txt")
    print(f"wrote manifest with {len(manifest.records)} slices")


def _sample_source(manifest):
    """First aligned pair (or first unpaired A slice) for progress grids."""
    pairs = manifest.paired_records()
    if pairs:
        ra, rb = pairs[0]
        return read_pgm(manifest.resolve(ra)), read_pgm(manifest.resolve(rb))
    unpaired = manifest.unpaired_records("A")
    if unpaired:
        return read_pgm(manifest.resolve(unpaired[0])), None
    return None, None


def _write_sample_grid(path, syn_mr, image_a, image_b) -> None:
    with torch.no_grad():
        x = torch.from_numpy(to_network_range(image_a)[None, None])
        fake = from_network_range(syn_mr(x).numpy()[0, 0])
    panels = [np.asarray(image_a, dtype=np.uint8), fake]
    if image_b is not None:
        panels.append(np.asarray(image_b, dtype=np.uint8))
    sep = np.full((panels[0].shape[0], 2), 255, dtype=np.uint8)
    grid = panels[0]
    for panel in panels[1:]:
        grid = np.hstack([grid, sep, panel])
    write_pgm(path, grid)


def cmd_train(args) -> int:
    overrides = {}
    cfg = load_run_config(args.config, overrides)
    if args.run_dir:
        cfg.run_dir = args.run_dir
    cfg.validate()
    manifest = read_manifest(Path(cfg.manifest))
    paired_sampler, sampler_a, sampler_b = make_samplers(
        manifest, cfg.train.seed, cfg.augment, cfg.use_paired)
    trainer = Trainer.create(cfg.generator, cfg.discriminator_spec(), cfg.train,
                             cfg.weights, sampler_a, sampler_b, paired_sampler)
    resuming = False
    if args.resume:
        trainer.restore(load_checkpoint(args.resume))
        resuming = True

    run_dir = Path(cfg.run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run_dir / "samples").mkdir(exist_ok=True)
    (run_dir / "config-echo.toml").write_text(echo_toml(cfg))
    log_path = run_dir / "log.csv"
    log_exists = log_path.is_file() and resuming
    log_file = open(log_path, "a" if log_exists else "w", newline="")
    log = csv.writer(log_file)
    if not log_exists:
        log.writerow(("iteration", "lr") + LossReport.FIELDS)

    sample_a, sample_b = (_sample_source(manifest) if cfg.sample_every else (None, None))
    remaining = cfg.train.total_iterations - trainer.iteration
    iters = remaining if args.iters is None else min(args.iters, remaining)

    def on_report(iteration, lr, rep):
        log.writerow([iteration, f"{lr:.8g}"] + [f"{v:.8g}" for v in rep.values()])
        if cfg.train.checkpoint_every and iteration % cfg.train.checkpoint_every == 0:
            trainer.save_checkpoint(run_dir / "checkpoints" / f"iter_{iteration:07d}.pt")
        if cfg.sample_every and sample_a is not None \
                and iteration % cfg.sample_every == 0:
            _write_sample_grid(run_dir / "samples" / f"iter_{iteration:07d}.pgm",
                               trainer.nets["syn_mr"], sample_a, sample_b)

    try:
        trainer.run(iters, on_report)
    finally:
        log_file.close()
    trainer.save_checkpoint(run_dir / "checkpoints" / "latest.pt")
    print(f"trained {iters} iterations (now at {trainer.iteration}); "
          f"run artifacts in {run_dir}")
    return 0


def _load_generator(payload, key="syn_mr") -> Generator:
    if "generator_config" not in payload:
        raise CheckpointError("checkpoint carries no generator architecture")
    gen = Generator(GeneratorConfig(**payload["generator_config"]))
    try:
        gen.load_state_dict(payload["networks"][key])
    except (RuntimeError, KeyError) as exc:
        raise CheckpointError(f"incompatible checkpoint: {exc}") from exc
    gen.eval()
    return gen


def cmd_synthesize(args) -> int:
    payload = load_checkpoint(args.checkpoint)
    volume = load_volume(args.input)
    syn_mr = _load_generator(payload)
    out_slices = []
    with torch.no_grad():
        for sl in volume.voxels:
            x = torch.from_numpy(to_network_range(sl)[None, None])
            out_slices.append(from_network_range(syn_mr(x).numpy()[0, 0]))
    synthesized = np.stack(out_slices)
    save_volume(
        volume.__class__(synthesized.astype(np.float64), volume.spacing, "B",
                         volume.patient_id),
        args.out)
    print(f"synthesized {len(out_slices)} slices -> {args.out}")
    return 0


def _discover_patients(root: Path) -> list[str]:
    if (root / "header.txt").is_file():
        return ["."]
    subdirs = sorted(p.name for p in root.iterdir()
                     if p.is_dir() and (p / "header.txt").is_file())
    if not subdirs:
        raise ConfigError(f"{root}: neither a volume directory nor a directory "
                          "of volume directories")
    return subdirs


def cmd_evaluate(args) -> int:
    ref_root, syn_root = Path(args.reference), Path(args.synthesized)
    for root in (ref_root, syn_root):
        if not root.is_dir():
            raise ConfigError(f"not a directory: {root}")
    names = _discover_patients(ref_root)
    if set(names) != set(_discover_patients(syn_root)):
        raise RuntimeError(
            "reference and synthesized directories hold different patients")
    patients = []
    for name in names:
        ref = load_volume(ref_root / name)
        syn = load_volume(syn_root / name)
        if ref.voxels.shape != syn.voxels.shape:
            raise RuntimeError(
                f"cannot pair volumes for {ref.patient_id}: shapes "
                f"{ref.voxels.shape} vs {syn.voxels.shape}")
        patients.append((ref.patient_id, ref.voxels, syn.voxels))
    rep = metrics.report(patients)
    table = metrics.render_table(rep)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(metrics.render_csv(rep))
        (out / "report.txt").write_text(table)
    sys.stdout.write(table)
    if rep.psnr_infinite:
        print("note: at least one volume pair is identical (PSNR = inf)")

    if args.checkpoint and args.diag_input:
        payload = load_checkpoint(args.checkpoint)
        syn_mr = _load_generator(payload, "syn_mr")
        syn_ct = _load_generator(payload, "syn_ct")
        volume = load_volume(args.diag_input)
        recon, rel = metrics.cycle_reconstruction_diag(volume.voxels, syn_mr, syn_ct)
        out = Path(args.out) if args.out else Path("diag")
        save_volume(volume.__class__(recon.astype(np.float64), volume.spacing,
                                     volume.modality, volume.patient_id),
                    out / "cycle_reconstruction")
        rel_u8 = quantize_u8(np.clip(rel, 0.0, 1.0) * 255.0)
        save_volume(volume.__class__(rel_u8.astype(np.float64), volume.spacing,
                                     volume.modality, volume.patient_id),
                    out / "cycle_relative_difference")
        print(f"cycle diagnostic written under {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, TrainingDiverged, OSError, ValueError,
            RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
