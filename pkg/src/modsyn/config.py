"""Run configuration: TOML file schema, validation, and echo.

Every hyperparameter carries the published defaults (lambda 10, gamma 100,
learning rate 2e-4, batch size 1, n_iter 1, window 40/80, spacing 1 mm); a
config file only needs to name the data manifest and an output directory.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .losses import LossWeights
from .networks import DISCRIMINATOR_PRESETS, DiscriminatorSpec, GeneratorConfig
from .training import TrainConfig
from .volume import WindowSpec


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 2 at the CLI."""


@dataclass
class RunConfig:
    manifest: str = ""
    run_dir: str = ""
    slice_size: int = 256
    use_paired: bool = True
    augment: bool = True
    discriminator: str = "D1"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    window: WindowSpec = field(default_factory=WindowSpec)
    target_spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    sample_every: int = 0  # 0: no sample grids

    def discriminator_spec(self) -> DiscriminatorSpec:
        return DISCRIMINATOR_PRESETS[self.discriminator]

    def validate(self, require_data: bool = True) -> None:
        if self.discriminator not in DISCRIMINATOR_PRESETS:
            raise ConfigError(
                f"unknown discriminator {self.discriminator!r}; valid names: "
                f"{', '.join(sorted(DISCRIMINATOR_PRESETS))}")
        if self.slice_size < 16 or self.slice_size % 4:
            raise ConfigError(
                f"slice_size must be >= 16 and divisible by 4, got {self.slice_size}")
        if require_data:
            if not self.manifest:
                raise ConfigError("config must set [data] manifest")
            if not Path(self.manifest).is_file():
                raise ConfigError(f"manifest not found: {self.manifest}")
            if not self.run_dir:
                raise ConfigError("config must set [output] run_dir")


# (section, key) -> RunConfig field path; used both to read and to echo.
_SCHEMA = {
    ("data", "manifest"): ("manifest", str),
    ("data", "slice_size"): ("slice_size", int),
    ("data", "use_paired"): ("use_paired", bool),
    ("data", "augment"): ("augment", bool),
    ("discriminator", "name"): ("discriminator", str),
    ("generator", "base_width"): ("generator.base_width", int),
    ("generator", "residual_blocks"): ("generator.num_residual_blocks", int),
    ("loss", "lambda_cyc"): ("weights.lambda_cyc", float),
    ("loss", "gamma_l1"): ("weights.gamma_l1", float),
    ("loss", "adv_weight"): ("weights.adv_weight", float),
    ("loss", "generator_adv_mode"): ("weights.generator_adv_mode", str),
    ("train", "learning_rate"): ("train.alpha", float),
    ("train", "batch_size"): ("train.m", int),
    ("train", "n_iter"): ("train.n_iter", int),
    ("train", "total_iterations"): ("train.total_iterations", int),
    ("train", "decay_start"): ("train.decay_start", int),
    ("train", "adam_beta1"): ("train.adam_beta1", float),
    ("train", "adam_beta2"): ("train.adam_beta2", float),
    ("train", "seed"): ("train.seed", int),
    ("train", "checkpoint_every"): ("train.checkpoint_every", int),
    ("preprocess", "window_center"): ("window.center", float),
    ("preprocess", "window_length"): ("window.length", float),
    ("preprocess", "target_spacing"): ("target_spacing", "vec3"),
    ("output", "run_dir"): ("run_dir", str),
    ("output", "sample_every"): ("sample_every", int),
}


def _coerce(value, kind, where):
    if kind == "vec3":
        if not (isinstance(value, (list, tuple)) and len(value) == 3):
            raise ConfigError(f"{where}: expected a 3-element list")
        return tuple(float(v) for v in value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if kind in (int, float) and isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where}: expected an integer")
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    if kind is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string")
    return value


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a TOML run config; unknown sections or keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    values: dict[str, object] = {}
    for section, table in raw.items():
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: top-level key {section!r} must be a section")
        for key, value in table.items():
            if (section, key) not in _SCHEMA:
                raise ConfigError(f"{path}: unknown config key [{section}] {key}")
            target, kind = _SCHEMA[(section, key)]
            values[target] = _coerce(value, kind, f"[{section}] {key}")
    for target, value in (overrides or {}).items():
        values[target] = value

    def pick(prefix, cls):
        sub = {t.split(".", 1)[1]: v for t, v in values.items()
               if t.startswith(prefix + ".")}
        try:
            return cls(**sub)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    cfg = RunConfig(
        manifest=values.get("manifest", ""),
        run_dir=values.get("run_dir", ""),
        slice_size=values.get("slice_size", 256),
        use_paired=values.get("use_paired", True),
        augment=values.get("augment", True),
        discriminator=values.get("discriminator", "D1"),
        generator=pick("generator", GeneratorConfig),
        weights=pick("weights", LossWeights),
        train=pick("train", TrainConfig),
        window=pick("window", WindowSpec),
        target_spacing=values.get("target_spacing", (1.0, 1.0, 1.0)),
        sample_every=values.get("sample_every", 0),
    )
    return cfg


def echo_toml(cfg: RunConfig) -> str:
    """Serialize the resolved configuration back to TOML."""
    g, w, t, win = (asdict(cfg.generator), asdict(cfg.weights),
                    asdict(cfg.train), asdict(cfg.window))
    spacing = ", ".join(f"{v:g}" for v in cfg.target_spacing)
    return "\n".join([
        "[data]",
        f'manifest = "{cfg.manifest}"',
        f"slice_size = {cfg.slice_size}",
        f"use_paired = {str(cfg.use_paired).lower()}",
        f"augment = {str(cfg.augment).lower()}",
        "",
        "[discriminator]",
        f'name = "{cfg.discriminator}"',
        "",
        "[generator]",
        f"base_width = {g['base_width']}",
        f"residual_blocks = {g['num_residual_blocks']}",
        "",
        "[loss]",
        f"lambda_cyc = {w['lambda_cyc']:g}",
        f"gamma_l1 = {w['gamma_l1']:g}",
        f"adv_weight = {w['adv_weight']:g}",
        f'generator_adv_mode = "{w["generator_adv_mode"]}"',
        "",
        "[train]",
        f"learning_rate = {t['alpha']:g}",
        f"batch_size = {t['m']}",
        f"n_iter = {t['n_iter']}",
        f"total_iterations = {t['total_iterations']}",
        f"decay_start = {t['decay_start']}",
        f"adam_beta1 = {t['adam_beta1']:g}",
        f"adam_beta2 = {t['adam_beta2']:g}",
        f"seed = {t['seed']}",
        f"checkpoint_every = {t['checkpoint_every']}",
        "",
        "[preprocess]",
        f"window_center = {win['center']:g}",
        f"window_length = {win['length']:g}",
        f"target_spacing = [{spacing}]",
        "",
        "[output]",
        f'run_dir = "{cfg.run_dir}"',
        f"sample_every = {cfg.sample_every}",
    ]) + "\n"
