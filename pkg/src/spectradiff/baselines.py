"""Deterministic reference imputers: per-channel mean and linear interpolation.

Both return a dense [B, K, L] prediction that reproduces condition entries
exactly, so the metrics module treats them interchangeably with the learned
imputer.
"""

from __future__ import annotations

import numpy as np

from .data import ConditionalSplit, TimeSeriesBatch


def impute_mean(batch: TimeSeriesBatch, split: ConditionalSplit) -> np.ndarray:
    """Fill every non-condition entry with the per-sample-channel mean of the
    condition entries; falls back to the batch-wide channel mean (then 0)
    when a channel has no condition points."""
    m = split.cond_mask
    x = batch.values
    xm = np.where(m > 0, x, 0.0)  # NaN-poison safe
    b, k, l = x.shape
    n = m.sum(axis=2)  # [B, K]
    chan_sum = xm.sum(axis=2)
    chan_n = m.sum(axis=(0, 2))  # [K]
    global_mean = np.where(chan_n > 0,
                           xm.sum(axis=(0, 2)) / np.maximum(chan_n, 1.0), 0.0)
    mean = np.where(n > 0, chan_sum / np.maximum(n, 1.0),
                    global_mean[None, :])
    out = np.broadcast_to(mean[:, :, None], x.shape).copy()
    return np.where(m > 0, x, out)


def impute_lerp(batch: TimeSeriesBatch, split: ConditionalSplit) -> np.ndarray:
    """Linear interpolation in time between condition points per channel, with
    constant (nearest-value) extension beyond the endpoints. Channels with
    fewer than 2 condition points fall back to the mean rule."""
    x = batch.values
    t = batch.timestamps
    m = split.cond_mask
    b, k, l = x.shape
    mean_fill = impute_mean(batch, split)
    out = np.empty_like(x)
    for i in range(b):
        for c in range(k):
            obs = m[i, c] > 0
            if obs.sum() < 2:
                out[i, c] = mean_fill[i, c]
            else:
                out[i, c] = np.interp(t[i], t[i][obs], x[i, c][obs])
    return np.where(m > 0, x, out)
