"""Unsupervised activation-threshold calibration.

A cheap velocity proxy (mean keypoint speed per frame step) is Otsu-
thresholded into binary motion/non-motion pseudo-labels; theta_on is then
the candidate that maximizes framewise F1 between the thresholded smoothed
latent energy and those pseudo-labels.

Proxy samples live on frame steps while latent energy lives on latent
steps, so the proxy is resampled at each latent step's source frame before
comparison. Calibration over several clips pools the aligned samples; every
statistic used (min/max, histogram counts, quantiles, F1 counts) is a
function of the pooled multiset, so the result is independent of clip
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detector import ema_smooth, latent_action_energy
from .encoder import EncoderConfig, SurrogateEncoder
from .errors import DataError
from .stream_io import KeypointClip, LatentStream

DEFAULT_SWEEP_SIZE = 200


@dataclass
class CalibrationResult:
    theta_on: float
    theta_off: float
    f1_at_best: float
    sweep_table: list[tuple[float, float]]
    otsu_threshold: float

    def to_json(self, path: str | Path) -> None:
        doc = {
            "theta_on": self.theta_on,
            "theta_off": self.theta_off,
            "f1_at_best": self.f1_at_best,
            "otsu_threshold": self.otsu_threshold,
            "sweep_table": [[t, f] for t, f in self.sweep_table],
        }
        Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "CalibrationResult":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(theta_on=float(doc["theta_on"]), theta_off=float(doc["theta_off"]),
                   f1_at_best=float(doc["f1_at_best"]),
                   sweep_table=[(float(t), float(f)) for t, f in doc["sweep_table"]],
                   otsu_threshold=float(doc["otsu_threshold"]))


def velocity_proxy_energy(clip: KeypointClip) -> np.ndarray:
    """Mean keypoint speed per frame step, length T - 1."""
    clip.validate()
    diffs = np.diff(clip.tracks.astype(np.float64), axis=0)
    return np.sqrt((diffs * diffs).sum(axis=2)).mean(axis=1)


def otsu_threshold(signal: np.ndarray, bins: int = 256) -> float:
    """Bin-edge threshold maximizing between-class variance of the histogram.

    Class statistics use bin centers; with equal values the degenerate rule
    returns that value. Ties pick the lowest edge. Because between-class
    variance is invariant (up to a positive factor) under affine maps of the
    class values, the argmax is computed over integer bin indices with exact
    integer arithmetic, so plateau ties cannot be broken by rounding noise.
    """
    signal = np.asarray(signal, dtype=np.float64).reshape(-1)
    if signal.size == 0:
        raise DataError("cannot threshold an empty signal")
    if not np.isfinite(signal).all():
        raise DataError("signal must be finite")
    if bins < 2:
        raise DataError(f"need at least 2 bins, got {bins}")
    lo, hi = float(signal.min()), float(signal.max())
    if lo == hi:
        return lo
    counts, edges = np.histogram(signal, bins=bins, range=(lo, hi))
    counts = [int(c) for c in counts]
    n_total = sum(counts)
    s_total = sum(c * j for j, c in enumerate(counts))
    # variance at a split is (S0*n1 - S1*n0)^2 / (n0*n1); compare as exact
    # rationals by cross-multiplication
    best_split, best_num, best_den = 1, -1, 1
    n0 = s0 = 0
    for split in range(1, bins):
        n0 += counts[split - 1]
        s0 += counts[split - 1] * (split - 1)
        n1 = n_total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (s0 * n1 - (s_total - s0) * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_split, best_num, best_den = split, num, den
    return float(edges[best_split])


def pseudo_labels(proxy: np.ndarray, tau: float) -> np.ndarray:
    """Binary motion labels: 1 where the proxy strictly exceeds tau."""
    return (np.asarray(proxy, dtype=np.float64) > tau).astype(np.int8)


def _binary_f1(pred: np.ndarray, labels: np.ndarray) -> float:
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & (1 - labels)))
    fn = int(np.sum((1 - pred) & labels))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def sweep_theta_on(e_smoothed: np.ndarray, y_pseudo: np.ndarray,
                   candidates: np.ndarray, r: float,
                   otsu_tau: float = float("nan")) -> CalibrationResult:
    """Pick the candidate theta_on maximizing framewise F1 against the
    pseudo-labels; ties break toward the smallest candidate."""
    e_smoothed = np.asarray(e_smoothed, dtype=np.float64)
    y_pseudo = np.asarray(y_pseudo, dtype=np.int8)
    if e_smoothed.shape != y_pseudo.shape:
        raise DataError(
            f"energy and pseudo-labels misaligned: {e_smoothed.shape} vs {y_pseudo.shape}")
    candidates = np.asarray(candidates, dtype=np.float64).reshape(-1)
    if candidates.size == 0:
        raise DataError("candidate grid is empty")
    if int(y_pseudo.sum()) == 0:
        raise DataError("degenerate labels: no positive pseudo-labels, F1 undefined")
    sweep: list[tuple[float, float]] = []
    best_theta, best_f1 = None, -1.0
    for theta in candidates:
        f1 = _binary_f1((e_smoothed > theta).astype(np.int8), y_pseudo)
        sweep.append((float(theta), f1))
        if f1 > best_f1 or (f1 == best_f1 and best_theta is not None and theta < best_theta):
            best_theta, best_f1 = float(theta), f1
    return CalibrationResult(theta_on=best_theta, theta_off=r * best_theta,
                             f1_at_best=best_f1, sweep_table=sweep,
                             otsu_threshold=otsu_tau)


def candidate_grid(e_smoothed: np.ndarray, size: int = DEFAULT_SWEEP_SIZE) -> np.ndarray:
    """Equal-quantile candidate thresholds spanning the smoothed energy."""
    e_smoothed = np.asarray(e_smoothed, dtype=np.float64)
    if e_smoothed.size == 0:
        raise DataError("cannot build a candidate grid from an empty signal")
    return np.unique(np.quantile(e_smoothed, np.linspace(0.0, 1.0, size)))


def calibrate(clips: list[KeypointClip], encoder_cfg: EncoderConfig, alpha: float,
              r: float, bins: int = 256,
              sweep_size: int = DEFAULT_SWEEP_SIZE) -> CalibrationResult:
    """Full two-stage calibration over a pooled set of clips."""
    if not clips:
        raise DataError("calibration needs at least one clip")
    encoder = SurrogateEncoder(encoder_cfg)
    streams = [encoder.encode_stream(clip) for clip in clips]
    return calibrate_streams(clips, streams, alpha=alpha, r=r, bins=bins,
                             sweep_size=sweep_size)


def calibrate_streams(clips: list[KeypointClip], streams: list[LatentStream],
                      alpha: float, r: float, bins: int = 256,
                      sweep_size: int = DEFAULT_SWEEP_SIZE) -> CalibrationResult:
    """Calibrate from already-encoded streams paired with their source clips."""
    if len(clips) != len(streams):
        raise DataError("clips and streams must pair up")
    pooled_energy, pooled_proxy = [], []
    for clip, stream in zip(clips, streams):
        energy = latent_action_energy(stream)
        smoothed = ema_smooth(energy, alpha, y0=float(energy[0]))
        proxy = velocity_proxy_energy(clip)
        frames = stream.frame_of_step[:stream.steps - 1]
        pooled_energy.append(smoothed)
        pooled_proxy.append(proxy[frames])
    e_all = np.concatenate(pooled_energy)
    proxy_all = np.concatenate(pooled_proxy)
    tau = otsu_threshold(proxy_all, bins=bins)
    labels = pseudo_labels(proxy_all, tau)
    return sweep_theta_on(e_all, labels, candidate_grid(e_all, sweep_size), r,
                          otsu_tau=tau)
