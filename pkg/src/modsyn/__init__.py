"""Cross-modality 2D slice synthesis trained on mixed paired/unpaired data."""

from .losses import LossReport, LossWeights
from .networks import (DISCRIMINATOR_PRESETS, Discriminator, DiscriminatorSpec,
                       Generator, GeneratorConfig, build_discriminator,
                       build_generator, patch_map_size)
from .phantom import PhantomSpec, generate_phantom
from .pipeline import AugmentParams, SliceSample, augment, draw_params
from .training import TrainConfig, Trainer, lr_at
from .volume import Volume, WindowSpec, resample, to_slices, window_hu

__version__ = "0.1.0"

__all__ = [
    "AugmentParams", "DISCRIMINATOR_PRESETS", "Discriminator",
    "DiscriminatorSpec", "Generator", "GeneratorConfig", "LossReport",
    "LossWeights", "PhantomSpec", "SliceSample", "TrainConfig", "Trainer",
    "Volume", "WindowSpec", "augment", "build_discriminator",
    "build_generator", "draw_params", "generate_phantom", "lr_at",
    "patch_map_size", "resample", "to_slices", "window_hu",
]
