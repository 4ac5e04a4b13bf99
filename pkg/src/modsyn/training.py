"""Training loop: alternating unpaired and paired inner loops over four networks.

Each outer iteration runs n_iter unpaired steps (update dis_mr, syn_mr,
dis_ct, syn_ct in that order) followed by n_iter paired steps (same order on
paired batches), all with Adam at a linearly decaying learning rate. The
A domain is CT-like (inputs to syn_mr), the B domain MR-like.

Every optimizer step is appended to ``update_log`` as (network, loop kind),
so tests can assert the exact update sequence. Checkpoints capture network
parameters, optimizer moments, and every RNG stream bit-exactly.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .losses import (LossReport, LossWeights, cycle_loss, d_loss_paired,
                     d_loss_unpaired, g_loss_paired, g_loss_unpaired, l1_loss,
                     total_generator_loss)
from .networks import (Discriminator, DiscriminatorSpec, Generator,
                       GeneratorConfig)
from .pgmio import atomic_write_bytes
from .pipeline import PairedSampler, UnpairedSampler, assemble

CHECKPOINT_VERSION = 1

NETWORK_NAMES = ("syn_mr", "syn_ct", "dis_mr", "dis_ct")


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the offending report."""

    def __init__(self, message: str, report: LossReport):
        super().__init__(message)
        self.report = report


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 2e-4
    m: int = 1
    n_iter: int = 1
    total_iterations: int = 300_000
    decay_start: int = 100_000
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("learning rate must be > 0")
        if self.decay_start > self.total_iterations:
            raise ValueError("decay_start must be <= total_iterations")
        if self.m < 1 or self.n_iter < 1:
            raise ValueError("m and n_iter must be >= 1")


def lr_at(t: int, cfg: TrainConfig) -> float:
    """Piecewise-linear schedule: constant alpha, then linear decay to zero."""
    if not 0 <= t <= cfg.total_iterations:
        raise ValueError(f"iteration {t} outside [0, {cfg.total_iterations}]")
    if t < cfg.decay_start:
        return cfg.alpha
    span = cfg.total_iterations - cfg.decay_start
    if span == 0:
        return 0.0
    return cfg.alpha * (cfg.total_iterations - t) / span


def _set_requires_grad(net: torch.nn.Module, flag: bool) -> None:
    for p in net.parameters():
        p.requires_grad_(flag)


def _to_tensor(batch: np.ndarray, device) -> torch.Tensor:
    return torch.from_numpy(batch).to(device)


class Trainer:
    def __init__(self, syn_mr: Generator, syn_ct: Generator,
                 dis_mr: Discriminator, dis_ct: Discriminator,
                 cfg: TrainConfig, weights: LossWeights,
                 sampler_a: UnpairedSampler, sampler_b: UnpairedSampler,
                 paired_sampler: PairedSampler | None = None,
                 device: str = "cpu"):
        self.nets = {"syn_mr": syn_mr, "syn_ct": syn_ct,
                     "dis_mr": dis_mr, "dis_ct": dis_ct}
        self.cfg = cfg
        self.weights = weights
        self.sampler_a = sampler_a
        self.sampler_b = sampler_b
        self.paired_sampler = paired_sampler
        self.device = device
        self.iteration = 0
        self.update_log: list[tuple[str, str]] = []
        self.optimizers = {
            name: torch.optim.Adam(net.parameters(), lr=cfg.alpha,
                                   betas=(cfg.adam_beta1, cfg.adam_beta2))
            for name, net in self.nets.items()
        }
        for net in self.nets.values():
            net.to(device)

    @classmethod
    def create(cls, gen_cfg: GeneratorConfig, disc_spec: DiscriminatorSpec,
               cfg: TrainConfig, weights: LossWeights,
               sampler_a, sampler_b, paired_sampler=None, device: str = "cpu"):
        """Seeded construction of all four networks plus the trainer."""
        torch.manual_seed(cfg.seed)
        trainer = cls(Generator(gen_cfg), Generator(gen_cfg),
                      Discriminator(disc_spec), Discriminator(disc_spec),
                      cfg, weights, sampler_a, sampler_b, paired_sampler, device)
        trainer.gen_cfg = gen_cfg
        trainer.disc_spec = disc_spec
        return trainer

    # -- single updates ------------------------------------------------------

    def _check_finite(self, loss: torch.Tensor, label: str,
                      report: LossReport) -> None:
        if not torch.isfinite(loss).all():
            raise TrainingDiverged(
                f"non-finite {label} loss at iteration {self.iteration}", report)

    def _opt_step(self, name: str, loop: str, loss: torch.Tensor) -> None:
        opt = self.optimizers[name]
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        self.update_log.append((name, loop))

    def _update_discriminator(self, name: str, loop: str, real, fake, report):
        """One discriminator update; real/fake forwarded as a single batch."""
        dis = self.nets[name]
        _set_requires_grad(dis, True)
        m = real.shape[0]
        if loop == "unpaired":
            out = dis(torch.cat([real, fake], dim=0), "unpaired", "least_squares")
            loss = d_loss_unpaired(out[:m], out[m:])
        else:
            out = dis(torch.cat([real, fake], dim=0), "paired", "nll")
            loss = d_loss_paired(out[:m], out[m:])
        setattr(report, f"{'d_mr' if name == 'dis_mr' else 'd_ct'}_{loop}",
                float(loss.item()))
        self._check_finite(loss, f"{name}/{loop}", report)
        self._opt_step(name, loop, self.weights.adv_weight * loss)

    def _unpaired_generator_update(self, gen_name, dis_name, cycle_gen_name,
                                   source, fake, report):
        """Alg lines 6/8: adversarial term plus the through-cycle L1 term.

        ``fake`` is the generator's own output for ``source``, reused from the
        preceding discriminator update (the generator has not changed since).
        """
        dis, cycle_gen = self.nets[dis_name], self.nets[cycle_gen_name]
        _set_requires_grad(dis, False)
        _set_requires_grad(cycle_gen, False)
        adv = g_loss_unpaired(dis(fake, "unpaired", "least_squares"),
                              self.weights.generator_adv_mode)
        cyc = cycle_loss(source, cycle_gen(fake))
        report.g_adv_unpaired += float(adv.item())
        report.cyc_unpaired += float(cyc.item())
        loss = self.weights.adv_weight * adv + self.weights.lambda_cyc * cyc
        self._check_finite(loss, f"{gen_name}/unpaired", report)
        self._opt_step(gen_name, "unpaired", loss)
        _set_requires_grad(dis, True)
        _set_requires_grad(cycle_gen, True)

    def _paired_generator_update(self, gen_name, dis_name, cycle_gen_name,
                                 source, reference, fake, report):
        """Alg lines 13/15: paired adversarial + cycle + voxel-wise L1."""
        dis, cycle_gen = self.nets[dis_name], self.nets[cycle_gen_name]
        _set_requires_grad(dis, False)
        _set_requires_grad(cycle_gen, False)
        adv = g_loss_paired(dis(torch.cat([source, fake], dim=1), "paired", "nll"),
                            self.weights.generator_adv_mode)
        cyc = cycle_loss(source, cycle_gen(fake))
        voxel = l1_loss(reference, fake)
        report.g_adv_paired += float(adv.item())
        report.cyc_paired += float(cyc.item())
        report.l1_paired += float(voxel.item())
        loss = (self.weights.adv_weight * adv + self.weights.lambda_cyc * cyc
                + self.weights.gamma_l1 * voxel)
        self._check_finite(loss, f"{gen_name}/paired", report)
        self._opt_step(gen_name, "paired", loss)
        _set_requires_grad(dis, True)
        _set_requires_grad(cycle_gen, True)

    # -- one outer iteration -------------------------------------------------

    def _set_lr(self, lr: float) -> None:
        for opt in self.optimizers.values():
            for group in opt.param_groups:
                group["lr"] = lr

    def train_step(self) -> LossReport:
        """One outer iteration: n_iter unpaired steps, then n_iter paired steps."""
        report = LossReport()
        self._set_lr(lr_at(self.iteration, self.cfg))
        m = self.cfg.m

        for _ in range(self.cfg.n_iter):
            batch_a = _to_tensor(assemble(self.sampler_a.next_batch(m), "a"),
                                 self.device)
            batch_b = _to_tensor(assemble(self.sampler_b.next_batch(m), "b"),
                                 self.device)
            fake_b = self.nets["syn_mr"](batch_a)
            self._update_discriminator("dis_mr", "unpaired", batch_b,
                                       fake_b.detach(), report)
            self._unpaired_generator_update("syn_mr", "dis_mr", "syn_ct",
                                            batch_a, fake_b, report)
            fake_a = self.nets["syn_ct"](batch_b)
            self._update_discriminator("dis_ct", "unpaired", batch_a,
                                       fake_a.detach(), report)
            self._unpaired_generator_update("syn_ct", "dis_ct", "syn_mr",
                                            batch_b, fake_a, report)

        if self.paired_sampler is not None:
            for _ in range(self.cfg.n_iter):
                pairs = self.paired_sampler.next_batch(m)
                a = _to_tensor(assemble(pairs, "a"), self.device)
                b = _to_tensor(assemble(pairs, "b"), self.device)
                fake_b = self.nets["syn_mr"](a)
                self._update_discriminator("dis_mr", "paired",
                                           torch.cat([a, b], dim=1),
                                           torch.cat([a, fake_b.detach()], dim=1),
                                           report)
                self._paired_generator_update("syn_mr", "dis_mr", "syn_ct",
                                              a, b, fake_b, report)
                fake_a = self.nets["syn_ct"](b)
                self._update_discriminator("dis_ct", "paired",
                                           torch.cat([b, a], dim=1),
                                           torch.cat([b, fake_a.detach()], dim=1),
                                           report)
                self._paired_generator_update("syn_ct", "dis_ct", "syn_mr",
                                              b, a, fake_a, report)

        _, report = total_generator_loss(
            report.g_adv_unpaired + report.g_adv_paired,
            report.cyc_unpaired + report.cyc_paired,
            report.l1_paired, self.weights, report)
        if not report.is_finite():
            raise TrainingDiverged(
                f"non-finite loss report at iteration {self.iteration}", report)
        self.iteration += 1
        return report

    def run(self, iterations: int, on_report=None):
        """Run a number of outer iterations; on_report(iteration, lr, report)."""
        reports = []
        for _ in range(iterations):
            lr = lr_at(self.iteration, self.cfg)
            report = self.train_step()
            reports.append(report)
            if on_report is not None:
                on_report(self.iteration, lr, report)
        return reports

    # -- checkpointing -------------------------------------------------------

    def state_payload(self) -> dict:
        payload = {
            "format_version": CHECKPOINT_VERSION,
            "train_config": asdict(self.cfg),
            "loss_weights": asdict(self.weights),
            "iteration": self.iteration,
            "networks": {n: net.state_dict() for n, net in self.nets.items()},
            "optimizers": {n: o.state_dict() for n, o in self.optimizers.items()},
            "torch_rng": torch.get_rng_state(),
            "samplers": {
                "a": self.sampler_a.state_dict(),
                "b": self.sampler_b.state_dict(),
                "paired": (self.paired_sampler.state_dict()
                           if self.paired_sampler is not None else None),
            },
        }
        if hasattr(self, "gen_cfg"):
            payload["generator_config"] = asdict(self.gen_cfg)
            payload["discriminator_spec"] = asdict(self.disc_spec)
        return payload

    def save_checkpoint(self, path) -> None:
        buf = io.BytesIO()
        torch.save(self.state_payload(), buf)
        atomic_write_bytes(path, buf.getvalue())

    def restore(self, payload: dict) -> None:
        if payload.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint format {payload.get('format_version')} "
                f"!= supported {CHECKPOINT_VERSION}")
        if hasattr(self, "gen_cfg") and "generator_config" in payload:
            if payload["generator_config"] != asdict(self.gen_cfg):
                raise CheckpointError(
                    "checkpoint generator architecture does not match: "
                    f"{payload['generator_config']} vs {asdict(self.gen_cfg)}")
            if payload["discriminator_spec"] != asdict(self.disc_spec):
                raise CheckpointError(
                    "checkpoint discriminator architecture does not match: "
                    f"{payload['discriminator_spec']} vs {asdict(self.disc_spec)}")
        try:
            for name, net in self.nets.items():
                net.load_state_dict(payload["networks"][name])
        except (RuntimeError, KeyError) as exc:
            raise CheckpointError(f"incompatible checkpoint: {exc}") from exc
        for name, opt in self.optimizers.items():
            opt.load_state_dict(payload["optimizers"][name])
        self.iteration = int(payload["iteration"])
        torch.set_rng_state(payload["torch_rng"])
        self.sampler_a.load_state_dict(payload["samplers"]["a"])
        self.sampler_b.load_state_dict(payload["samplers"]["b"])
        if self.paired_sampler is not None and payload["samplers"]["paired"]:
            self.paired_sampler.load_state_dict(payload["samplers"]["paired"])


def load_checkpoint(path) -> dict:
    """Read a checkpoint payload; apply it with Trainer.restore."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path}: not a recognized checkpoint file")
    return payload
