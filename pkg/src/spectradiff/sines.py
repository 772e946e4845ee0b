"""Synthetic multivariate sine dataset with known ground-truth frequencies.

Each channel is a sum of sinusoids with fixed amplitudes, per-sample
Beta(2,2)-sampled frequencies, uniform random phases and additive Gaussian
noise, on a shared uniform time grid. An irregular-jitter option exists for
stressing the spectral estimator only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import TimeSeriesBatch
from .missingness import MissingnessSpec, apply_missingness


@dataclass(frozen=True)
class SineChannelSpec:
    mean_freqs: tuple      # mu_k, one per component
    widths: tuple          # w_k, > 0
    amplitudes: tuple      # a_{k,i}, fixed across samples
    noise_sigma: float = 0.1

    def __post_init__(self):
        if not (len(self.mean_freqs) == len(self.widths) == len(self.amplitudes)):
            raise ValueError("mean_freqs, widths, amplitudes must align")
        for mu, w in zip(self.mean_freqs, self.widths):
            if w <= 0:
                raise ValueError("widths must be positive")
            if mu - w / 2 < 0:
                raise ValueError("frequency range must stay non-negative")

    @property
    def n_components(self) -> int:
        return len(self.mean_freqs)


def default_channel_specs(noise_sigma: float = 0.1) -> list[SineChannelSpec]:
    """The five-channel configuration used throughout the experiments."""
    table = [
        ([1.0], [1.0], [1.0]),
        ([1.0, 2.0], [1.0, 1.5], [0.5, 1.0]),
        ([1.0, 2.0, 3.0], [1.0, 1.0, 1.5], [0.5, 1.0, 1.5]),
        ([0.5, 1.0, 1.5, 2.0], [1.0, 1.0, 1.0, 2.0], [0.8, 1.2, 1.5, 2.0]),
        ([0.5, 1.0, 2.0, 3.0, 4.0], [0.5, 1.0, 1.0, 1.5, 2.0],
         [1.0, 1.5, 2.0, 2.5, 3.0]),
    ]
    return [SineChannelSpec(tuple(mu), tuple(w), tuple(a), noise_sigma)
            for mu, w, a in table]


def generate_sines(n_samples: int = 2000, n_steps: int = 100, horizon: float = 10.0,
                   specs: list[SineChannelSpec] | None = None, seed: int = 0,
                   initial_missing: float = 0.1,
                   jitter: float = 0.0) -> tuple[TimeSeriesBatch, np.ndarray]:
    """Generate the sine dataset.

    Frequencies are drawn per sample as Beta(2,2) * w + (mu - w/2), phases
    uniform on [0, 2pi). The observation mask starts fully observed, then an
    initial MCAR fraction is removed. Returns the batch and the ground-truth
    component frequencies, shaped [n_samples, K, max_components] with NaN
    padding for channels with fewer components.
    """
    if specs is None:
        specs = default_channel_specs()
    k = len(specs)
    max_nc = max(s.n_components for s in specs)
    rng = np.random.default_rng(seed)
    base_t = np.linspace(0.0, horizon, n_steps)
    values = np.zeros((n_samples, k, n_steps))
    timestamps = np.zeros((n_samples, n_steps))
    gt_freqs = np.full((n_samples, k, max_nc), np.nan)
    for i in range(n_samples):
        srng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        if jitter > 0:
            dt = base_t[1] - base_t[0]
            t = base_t + srng.uniform(-jitter * dt, jitter * dt, size=n_steps)
            t = np.sort(t)
        else:
            t = base_t
        timestamps[i] = t
        for c, spec in enumerate(specs):
            x = np.zeros(n_steps)
            for j in range(spec.n_components):
                mu, w, a = spec.mean_freqs[j], spec.widths[j], spec.amplitudes[j]
                f = srng.beta(2.0, 2.0) * w + (mu - w / 2)
                phi = srng.uniform(0.0, 2.0 * np.pi)
                gt_freqs[i, c, j] = f
                x += a * np.sin(2.0 * np.pi * f * t + phi)
            x += srng.normal(0.0, spec.noise_sigma, size=n_steps)
            values[i, c] = x
    batch = TimeSeriesBatch(values=values, timestamps=timestamps,
                            obs_mask=np.ones_like(values))
    if initial_missing > 0:
        batch, _, _ = apply_missingness(
            batch, MissingnessSpec(mechanism="mcar", rate=initial_missing,
                                   seed=seed + 1))
    return batch, gt_freqs


def dominant_gt_freq(specs: list[SineChannelSpec],
                     gt_freqs: np.ndarray) -> np.ndarray:
    """Per (sample, channel) frequency of the largest-amplitude component."""
    n, k, _ = gt_freqs.shape
    out = np.zeros((n, k))
    for c, spec in enumerate(specs):
        j = int(np.argmax(spec.amplitudes))
        out[:, c] = gt_freqs[:, c, j]
    return out


def gt_freqs_to_json(gt_freqs: np.ndarray) -> str:
    payload = [[[None if np.isnan(v) else v for v in comp] for comp in sample]
               for sample in gt_freqs.tolist()]
    return json.dumps({"ground_truth_freqs": payload})


def gt_freqs_from_json(text: str) -> np.ndarray:
    raw = json.loads(text)["ground_truth_freqs"]
    arr = np.array([[[np.nan if v is None else v for v in comp]
                     for comp in sample] for sample in raw], dtype=np.float64)
    return arr
