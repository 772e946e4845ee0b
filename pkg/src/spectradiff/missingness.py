"""Seeded missingness mechanisms applied on top of an observation mask.

All three mechanisms (mcar, sequence, block) only ever remove currently
observed entries, so the new mask is elementwise <= the old one. Randomness
is derived per sample from (seed, sample_id) so results are independent of
any batch partitioning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TimeSeriesBatch

MECHANISMS = ("mcar", "sequence", "block")


@dataclass(frozen=True)
class MissingnessSpec:
    mechanism: str
    rate: float            # drop probability (mcar, sequence) or block factor
    seq_len: int = 50
    block_len: int = 40
    block_width: int = 4
    seed: int = 0

    def validate(self, shape: tuple[int, int, int]) -> None:
        _, k, l = shape
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate/factor must be in [0, 1], got {self.rate}")
        if self.mechanism == "sequence" and not 1 <= self.seq_len <= l:
            raise ValueError(f"seq_len must be in [1, {l}]")
        if self.mechanism == "block":
            if not 1 <= self.block_len <= l:
                raise ValueError(f"block_len must be in [1, {l}]")
            if not 1 <= self.block_width <= k:
                raise ValueError(f"block_width must be in [1, {k}]")

    @classmethod
    def from_dict(cls, d: dict) -> "MissingnessSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def _sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, sample_id)))


def apply_missingness(batch: TimeSeriesBatch,
                      spec: MissingnessSpec) -> tuple[TimeSeriesBatch, float, dict]:
    """Drop observed entries per the mechanism.

    Returns (batch with the new mask, achieved rate among originally observed
    entries, metadata). When a target cannot be reached (sequence windows
    exhausted) the best-effort mask is returned and flagged in the metadata.
    """
    spec.validate(batch.shape)
    old = batch.obs_mask
    b, k, l = batch.shape
    new = old.copy()
    meta: dict = {"mechanism": spec.mechanism, "warnings": []}

    if spec.mechanism == "mcar":
        for i in range(b):
            rng = _sample_rng(spec.seed, i)
            drop = rng.random((k, l)) < spec.rate
            new[i] = np.where(drop, 0.0, old[i])

    elif spec.mechanism == "sequence":
        shortfall = 0
        for i in range(b):
            rng = _sample_rng(spec.seed, i)
            for c in range(k):
                n_obs = old[i, c].sum()
                if n_obs == 0:
                    continue
                target = spec.rate * n_obs
                anchors = rng.permutation(l - spec.seq_len + 1)
                removed = 0.0
                for a in anchors:
                    if removed >= target:
                        break
                    window = new[i, c, a:a + spec.seq_len]
                    removed += window.sum()
                    window[:] = 0.0
                if removed < target:
                    shortfall += 1
        if shortfall:
            meta["warnings"].append(
                f"sequence target unreachable for {shortfall} channel(s); "
                "best-effort mask returned")

    else:  # block
        n_blocks = int(round(spec.rate * b * k * l
                             / (spec.block_len * spec.block_width)))
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 1 << 32)))
        for _ in range(n_blocks):
            i = int(rng.integers(0, b))
            c0 = int(rng.integers(0, k - spec.block_width + 1))
            t0 = int(rng.integers(0, l - spec.block_len + 1))
            new[i, c0:c0 + spec.block_width, t0:t0 + spec.block_len] = 0.0
        meta["n_blocks"] = n_blocks

    n_old = old.sum()
    achieved = float((old - new).sum() / n_old) if n_old > 0 else 0.0
    meta["achieved_rate"] = achieved
    meta["overall_missing_rate"] = float(1.0 - new.mean())
    return batch.with_mask(new), achieved, meta
