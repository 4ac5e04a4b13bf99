"""Synthesis and discriminator network construction.

The two synthesis networks are residual-block image transformers: one 7x7
conv, two stride-2 downsampling convs, N residual blocks, two stride-2
transposed convs, and a final 7x7 conv, with instance norm + ReLU after every
convolution except the last, and a tanh output in [-1, 1].

Each discriminator is a 4x4-conv patch classifier with two input-specific
heads (1-channel single image, 2-channel concatenated pair), a shared trunk,
and two task-specific tails (linear map for the least-squares objective,
sigmoid map for the negative log-likelihood objective). Head convs and the
first three trunk convs use stride 2; every later conv uses stride 1.
Instance norm + leaky ReLU (slope 0.2) follow every conv except the first
and the last of a path.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

INSTANCE_NORM_EPS = 1e-5
LEAKY_SLOPE = 0.2
INIT_STD = 0.02

INPUT_KINDS = ("unpaired", "paired")
LOSS_KINDS = ("least_squares", "nll")


@dataclass(frozen=True)
class GeneratorConfig:
    base_width: int = 64
    num_residual_blocks: int = 9
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.num_residual_blocks < 1:
            raise ValueError("num_residual_blocks must be >= 1")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")


@dataclass(frozen=True)
class DiscriminatorSpec:
    head_widths: tuple[int, ...]
    shared_widths: tuple[int, ...]
    tail_widths: tuple[int, ...]

    def __post_init__(self):
        if not self.head_widths or not self.shared_widths or not self.tail_widths:
            raise ValueError("head, shared, and tail width lists must be non-empty")
        for w in (*self.head_widths, *self.shared_widths, *self.tail_widths):
            if w < 1:
                raise ValueError("all widths must be positive")
        if self.tail_widths[-1] != 1:
            raise ValueError("last tail width must be 1")


# Named presets, widths as published for the five variants.
DISCRIMINATOR_PRESETS = {
    "D1": DiscriminatorSpec((64,), (64, 128, 256, 512), (512, 1)),
    "D2": DiscriminatorSpec((64, 64), (64, 128, 256, 512), (512, 512, 1)),
    "D3": DiscriminatorSpec((64, 64), (64, 128, 256, 512), (512, 512, 512, 1)),
    "D4": DiscriminatorSpec((64,), (128, 256, 512), (512, 1)),
    "D5": DiscriminatorSpec((64,), (128, 256, 512), (1,)),
}


def init_weights(module: nn.Module) -> None:
    """Zero-mean Gaussian init (std 0.02) for all conv weights, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, INIT_STD)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def _inorm_relu(x: torch.Tensor) -> torch.Tensor:
    return F.relu(F.instance_norm(x, eps=INSTANCE_NORM_EPS))


class ResidualBlock(nn.Module):
    """Two 3x3 convs with instance norm, ReLU after the first only, identity skip."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect")
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect")

    def forward(self, x):
        h = _inorm_relu(self.conv1(x))
        h = F.instance_norm(self.conv2(h), eps=INSTANCE_NORM_EPS)
        return x + h


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.cfg = cfg
        w = cfg.base_width
        self.entry = nn.Conv2d(cfg.in_channels, w, 7, padding=3, padding_mode="reflect")
        self.down1 = nn.Conv2d(w, w * 2, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(w * 2, w * 4, 3, stride=2, padding=1)
        self.blocks = nn.ModuleList(
            [ResidualBlock(w * 4) for _ in range(cfg.num_residual_blocks)])
        self.up1 = nn.ConvTranspose2d(w * 4, w * 2, 3, stride=2, padding=1,
                                      output_padding=1)
        self.up2 = nn.ConvTranspose2d(w * 2, w, 3, stride=2, padding=1,
                                      output_padding=1)
        self.exit = nn.Conv2d(w, cfg.out_channels, 7, padding=3, padding_mode="reflect")
        init_weights(self)

    def forward(self, x):
        h = _inorm_relu(self.entry(x))
        h = _inorm_relu(self.down1(h))
        h = _inorm_relu(self.down2(h))
        for block in self.blocks:
            h = block(h)
        h = _inorm_relu(self.up1(h))
        h = _inorm_relu(self.up2(h))
        return torch.tanh(self.exit(h))


def build_generator(cfg: GeneratorConfig = GeneratorConfig()) -> Generator:
    return Generator(cfg)


def _stride_schedule(spec: DiscriminatorSpec) -> list[int]:
    """Per-conv strides for the assembled head+shared+tail stack."""
    strides = [2] * len(spec.head_widths)
    strides += [2 if i < 3 else 1 for i in range(len(spec.shared_widths))]
    strides += [1] * len(spec.tail_widths)
    return strides


def patch_map_size(spec: DiscriminatorSpec, input_size: int) -> int:
    """Closed-form output size of the patch map for a square input.

    Each 4x4 conv with padding 1 maps n -> floor((n - 2) / stride) + 1.
    Raises ValueError when the stack collapses below a valid conv input.
    """
    n = input_size
    for stride in _stride_schedule(spec):
        if n + 2 < 4:
            raise ValueError(
                f"input size {input_size} is too small for this discriminator "
                f"(map collapses to {n} px mid-stack)")
        n = (n + 2 - 4) // stride + 1
    if n < 1:
        raise ValueError(
            f"input size {input_size} is too small for this discriminator")
    return n


class Discriminator(nn.Module):
    """Dual-input, dual-task patch discriminator with a shared trunk.

    ``forward(x, input_kind, loss_kind)`` routes through the head for the
    input kind and the tail for the loss kind; the trunk parameters are the
    same for every route.
    """

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        strides = _stride_schedule(spec)
        nh = len(spec.head_widths)

        def conv_stack(widths, in_ch, stride_slice):
            convs, prev = [], in_ch
            for w, s in zip(widths, stride_slice):
                convs.append(nn.Conv2d(prev, w, 4, stride=s, padding=1))
                prev = w
            return nn.ModuleList(convs)

        self.heads = nn.ModuleDict({
            "unpaired": conv_stack(spec.head_widths, 1, strides[:nh]),
            "paired": conv_stack(spec.head_widths, 2, strides[:nh]),
        })
        ns = len(spec.shared_widths)
        self.shared = conv_stack(spec.shared_widths, spec.head_widths[-1],
                                 strides[nh:nh + ns])
        self.tails = nn.ModuleDict({
            "least_squares": conv_stack(spec.tail_widths, spec.shared_widths[-1],
                                        strides[nh + ns:]),
            "nll": conv_stack(spec.tail_widths, spec.shared_widths[-1],
                              strides[nh + ns:]),
        })
        init_weights(self)

    def forward(self, x, input_kind: str = "unpaired",
                loss_kind: str = "least_squares"):
        if input_kind not in INPUT_KINDS:
            raise ValueError(f"input_kind must be one of {INPUT_KINDS}")
        if loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        expected = 2 if input_kind == "paired" else 1
        if x.shape[1] != expected:
            raise ValueError(
                f"{input_kind} input must have {expected} channel(s), got {x.shape[1]}")
        patch_map_size(self.spec, int(x.shape[-1]))  # fail with a clear message
        convs = list(self.heads[input_kind]) + list(self.shared) \
            + list(self.tails[loss_kind])
        last = len(convs) - 1
        h = x
        for i, conv in enumerate(convs):
            h = conv(h)
            if 0 < i < last:
                h = F.leaky_relu(F.instance_norm(h, eps=INSTANCE_NORM_EPS),
                                 LEAKY_SLOPE)
        if loss_kind == "nll":
            h = torch.sigmoid(h)
        return h

    def path(self, input_kind: str, loss_kind: str) -> "DiscriminatorPath":
        return DiscriminatorPath(self, input_kind, loss_kind)


class DiscriminatorPath(nn.Module):
    """A single (input_kind, loss_kind) route, sharing the core's parameters."""

    def __init__(self, core: Discriminator, input_kind: str, loss_kind: str):
        super().__init__()
        if input_kind not in INPUT_KINDS:
            raise ValueError(f"no head for input kind {input_kind!r}")
        if loss_kind not in LOSS_KINDS:
            raise ValueError(f"no tail for loss kind {loss_kind!r}")
        self.core = core
        self.input_kind = input_kind
        self.loss_kind = loss_kind

    def forward(self, x):
        return self.core(x, self.input_kind, self.loss_kind)


def build_discriminator(spec: DiscriminatorSpec, input_kind: str,
                        loss_kind: str) -> DiscriminatorPath:
    """Build one discriminator route (see Discriminator for the dual core)."""
    return Discriminator(spec).path(input_kind, loss_kind)
