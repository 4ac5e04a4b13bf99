"""Image-quality metrics (MAE, MSE, PSNR) and per-patient reporting.

Metrics operate on 8-bit grayscale volumes (identical shapes) and average
over every voxel of the stack. PSNR is 10*log10(255^2 / MSE); a zero MSE is
reported as +inf and flagged. Aggregates use the sample standard deviation
(n - 1 denominator) across patients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_INTENSITY = 255.0


def _paired_arrays(reference, synthesized):
    ref = np.asarray(reference, dtype=np.float64)
    syn = np.asarray(synthesized, dtype=np.float64)
    if ref.shape != syn.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {syn.shape}")
    return ref, syn


def mae(reference, synthesized) -> float:
    """Mean absolute voxel difference."""
    ref, syn = _paired_arrays(reference, synthesized)
    return float(np.mean(np.abs(ref - syn)))


def mse(reference, synthesized) -> float:
    """Mean squared voxel difference."""
    ref, syn = _paired_arrays(reference, synthesized)
    return float(np.mean((ref - syn) ** 2))


def psnr(reference, synthesized) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the volumes are identical."""
    err = mse(reference, synthesized)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(MAX_INTENSITY ** 2 / err)


@dataclass
class MetricsReport:
    per_patient: list[tuple[str, float, float]]  # (patient_id, mae, psnr)
    aggregate: tuple[float, float, float, float]  # mae mean/sd, psnr mean/sd
    max_intensity: float = MAX_INTENSITY
    psnr_infinite: bool = False   # at least one patient with zero error
    single_sample: bool = False   # sd not estimable, reported as 0

    def rows(self) -> list[tuple[str, float, float]]:
        return list(self.per_patient)


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, sd


def report(patients) -> MetricsReport:
    """Per-patient rows plus mean and sample sd across patients.

    ``patients`` is a non-empty list of (patient_id, reference, synthesized).
    """
    patients = list(patients)
    if not patients:
        raise ValueError("empty patient list")
    rows = [(pid, mae(ref, syn), psnr(ref, syn)) for pid, ref, syn in patients]
    maes = [r[1] for r in rows]
    psnrs = [r[2] for r in rows]
    return MetricsReport(
        per_patient=rows,
        aggregate=(*_mean_sd(maes), *_mean_sd(psnrs)),
        psnr_infinite=any(math.isinf(p) for p in psnrs),
        single_sample=len(rows) == 1,
    )


def render_csv(rep: MetricsReport) -> str:
    lines = ["patient,mae,psnr"]
    for pid, m, p in rep.per_patient:
        lines.append(f"{pid},{m:.6g},{p:.6g}")
    mm, ms, pm, ps = rep.aggregate
    lines.append(f"avg,{mm:.6g},{pm:.6g}")
    lines.append(f"sd,{ms:.6g},{ps:.6g}")
    return "\n".join(lines) + "\n"


def render_table(rep: MetricsReport) -> str:
    """Aligned plain-text table: per-patient rows, then an Avg+/-sd row."""
    def fmt(x):
        return "inf" if math.isinf(x) else f"{x:.2f}"

    rows = [(pid, fmt(m), fmt(p)) for pid, m, p in rep.per_patient]
    mm, ms, pm, ps = rep.aggregate
    rows.append(("Avg±sd", f"{fmt(mm)}±{ms:.2f}", f"{fmt(pm)}±{ps:.2f}"))
    headers = ("", "MAE", "PSNR")
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(3)]
    out = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
    for r in rows:
        out.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(r)).rstrip())
    return "\n".join(out) + "\n"


def cycle_reconstruction_diag(volume, syn_forward, syn_backward,
                              eps: float = 1e-6):
    """Two-hop reconstruction of a volume and its relative difference map.

    Runs each slice through syn_forward then syn_backward (callables mapping
    [-1, 1] arrays of shape (1, 1, H, W) to the same shape) and returns
    (reconstructed uint8 volume, float64 map of |x - x_hat| / (|x| + eps))
    with the input's dimensions.
    """
    from ._common import from_network_range, to_network_range
    import torch

    volume = np.asarray(volume, dtype=np.float64)
    recon = []
    with torch.no_grad():
        for sl in volume:
            x = torch.from_numpy(to_network_range(sl)[None, None])
            back = syn_backward(syn_forward(x))
            recon.append(from_network_range(back.numpy()[0, 0]))
    recon = np.stack(recon).astype(np.float64)
    rel = np.abs(volume - recon) / (np.abs(volume) + eps)
    return recon.astype(np.uint8), rel
