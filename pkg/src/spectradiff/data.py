"""Core data model: batched, masked, irregularly sampled multivariate series.

Arrays follow the [B, K, L] convention (batch, channel, time step), with
timestamps shaped [B, L]. All containers are frozen value objects; every
operation is a pure function of its inputs and an explicit seed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeSeriesBatch:
    """Values, timestamps and observation mask for B samples x K channels x L steps.

    Masked-out values are carried but must never influence any computation;
    tests enforce this by NaN-poisoning unobserved entries.
    """

    values: np.ndarray      # [B, K, L]
    timestamps: np.ndarray  # [B, L], strictly increasing per sample
    obs_mask: np.ndarray    # [B, K, L], {0, 1}

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        timestamps = np.asarray(self.timestamps, dtype=np.float64)
        obs_mask = np.asarray(self.obs_mask, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"values must be [B, K, L], got shape {values.shape}")
        if obs_mask.shape != values.shape:
            raise ValueError(
                f"obs_mask shape {obs_mask.shape} != values shape {values.shape}")
        b, _, l = values.shape
        if timestamps.shape != (b, l):
            raise ValueError(
                f"timestamps must be [B, L] = {(b, l)}, got {timestamps.shape}")
        if not np.all(np.diff(timestamps, axis=1) > 0):
            raise ValueError("timestamps must be strictly increasing per sample")
        uniq = np.unique(obs_mask)
        if not np.all(np.isin(uniq, (0.0, 1.0))):
            raise ValueError("obs_mask entries must be 0 or 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "obs_mask", obs_mask)
        for name in ("values", "timestamps", "obs_mask"):
            getattr(self, name).setflags(write=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "TimeSeriesBatch":
        return TimeSeriesBatch(values, self.timestamps, self.obs_mask)

    def with_mask(self, obs_mask: np.ndarray) -> "TimeSeriesBatch":
        return TimeSeriesBatch(self.values, self.timestamps, obs_mask)


@dataclass(frozen=True)
class ConditionalSplit:
    """Disjoint condition/target masks carved out of an observation mask."""

    cond_mask: np.ndarray    # [B, K, L]
    target_mask: np.ndarray  # [B, K, L]
    empty_samples: tuple = ()  # sample indices whose obs mask was empty

    def __post_init__(self):
        cond = np.asarray(self.cond_mask, dtype=np.float64)
        targ = np.asarray(self.target_mask, dtype=np.float64)
        if cond.shape != targ.shape:
            raise ValueError("cond/target mask shapes differ")
        if np.any(cond * targ != 0):
            raise ValueError("cond_mask and target_mask overlap")
        object.__setattr__(self, "cond_mask", cond)
        object.__setattr__(self, "target_mask", targ)
        cond.setflags(write=False)
        targ.setflags(write=False)


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel mean/std over observed entries only; std falls back to 1."""

    mean: np.ndarray  # [K]
    std: np.ndarray   # [K], > 0


def make_conditional_split(batch: TimeSeriesBatch, strategy: str, ratio: float,
                           rng: np.random.Generator) -> ConditionalSplit:
    """Split the observed entries into condition and target masks.

    strategy "uniform-random" drops each observed entry into the target with
    probability `ratio`; "per-sample-ratio" draws a fresh ratio ~ U[0, ratio]
    per sample and then assigns entries with that probability.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    if strategy not in ("uniform-random", "per-sample-ratio"):
        raise ValueError(f"unknown split strategy {strategy!r}")
    obs = batch.obs_mask
    b = obs.shape[0]
    if strategy == "uniform-random":
        p = np.full((b, 1, 1), ratio)
    else:
        p = rng.uniform(0.0, ratio, size=(b, 1, 1))
    u = rng.random(obs.shape)
    target = ((u < p) & (obs > 0)).astype(np.float64)
    cond = obs - target
    empty = tuple(int(i) for i in range(b) if obs[i].sum() == 0)
    return ConditionalSplit(cond_mask=cond, target_mask=target,
                            empty_samples=empty)


def normalize(batch: TimeSeriesBatch) -> tuple[TimeSeriesBatch, NormalizationStats]:
    """Z-score each channel using observed entries only.

    Channels with fewer than 2 observed points get stats (0, 1), i.e. pass
    through unchanged. Masked entries are zeroed in the output so downstream
    kernels stay branch-free.
    """
    m = batch.obs_mask
    x = np.where(m > 0, batch.values, 0.0)  # NaN-poison safe
    count = m.sum(axis=(0, 2))  # [K]
    safe = np.maximum(count, 1.0)
    mean = x.sum(axis=(0, 2)) / safe
    var = (((x - mean[None, :, None]) * m) ** 2).sum(axis=(0, 2)) / safe
    std = np.sqrt(var)
    degenerate = count < 2
    mean = np.where(degenerate, 0.0, mean)
    std = np.where(degenerate | (std <= 0), 1.0, std)
    normed = (x - mean[None, :, None]) / std[None, :, None] * m
    return batch.with_values(normed), NormalizationStats(mean=mean, std=std)


def denormalize(batch: TimeSeriesBatch, stats: NormalizationStats) -> TimeSeriesBatch:
    x = batch.values * stats.std[None, :, None] + stats.mean[None, :, None]
    return batch.with_values(x * batch.obs_mask)


def denormalize_values(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Undo z-scoring on a dense prediction array (no masking applied)."""
    return values * stats.std[None, :, None] + stats.mean[None, :, None]


# ---------------------------------------------------------------------------
# Serialization: JSON container and flat CSV, both exact round-trips.
# ---------------------------------------------------------------------------

def batch_to_json(batch: TimeSeriesBatch, meta: dict | None = None) -> str:
    payload = {
        "values": batch.values.tolist(),
        "timestamps": batch.timestamps.tolist(),
        "obs_mask": batch.obs_mask.astype(int).tolist(),
        "meta": meta or {},
    }
    return json.dumps(payload)


def batch_from_json(text: str) -> tuple[TimeSeriesBatch, dict]:
    payload = json.loads(text)
    batch = TimeSeriesBatch(
        values=np.asarray(payload["values"], dtype=np.float64),
        timestamps=np.asarray(payload["timestamps"], dtype=np.float64),
        obs_mask=np.asarray(payload["obs_mask"], dtype=np.float64),
    )
    return batch, payload.get("meta", {})


def batch_to_csv(batch: TimeSeriesBatch) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "channel", "step", "time", "value", "observed"])
    b, k, l = batch.shape
    for i in range(b):
        for c in range(k):
            for s in range(l):
                writer.writerow([
                    i, c, s,
                    repr(float(batch.timestamps[i, s])),
                    repr(float(batch.values[i, c, s])),
                    int(batch.obs_mask[i, c, s]),
                ])
    return buf.getvalue()


def batch_from_csv(text: str) -> TimeSeriesBatch:
    rows = list(csv.reader(io.StringIO(text)))
    header, rows = rows[0], rows[1:]
    if header != ["sample_id", "channel", "step", "time", "value", "observed"]:
        raise ValueError("unexpected CSV header for a time-series batch")
    b = max(int(r[0]) for r in rows) + 1
    k = max(int(r[1]) for r in rows) + 1
    l = max(int(r[2]) for r in rows) + 1
    values = np.zeros((b, k, l))
    timestamps = np.zeros((b, l))
    mask = np.zeros((b, k, l))
    for r in rows:
        i, c, s = int(r[0]), int(r[1]), int(r[2])
        timestamps[i, s] = float(r[3])
        values[i, c, s] = float(r[4])
        mask[i, c, s] = float(r[5])
    return TimeSeriesBatch(values=values, timestamps=timestamps, obs_mask=mask)
