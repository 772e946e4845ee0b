"""Time- and frequency-domain evaluation metrics.

Time-domain errors are computed only on target-mask entries. Frequency-
domain metrics compare centered Lomb-Scargle PSDs computed strictly from
observed (obs_mask = 1) positions of truth and prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import ConditionalSplit, TimeSeriesBatch
from .lombscargle import FrequencyGrid, periodogram_arrays


@dataclass(frozen=True)
class EvalReport:
    mae: float
    rmse: float
    s_mae: float
    lfe: float
    per_channel_mae: tuple = ()
    per_channel_rmse: tuple = ()
    n_target_entries: int = 0
    n_spectra: int = 0
    n_degenerate_spectra: int = 0

    def to_dict(self) -> dict:
        return {
            "mae": self.mae, "rmse": self.rmse,
            "s_mae": self.s_mae, "lfe": self.lfe,
            "per_channel_mae": list(self.per_channel_mae),
            "per_channel_rmse": list(self.per_channel_rmse),
            "n_target_entries": self.n_target_entries,
            "n_spectra": self.n_spectra,
            "n_degenerate_spectra": self.n_degenerate_spectra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def mae(truth: TimeSeriesBatch, pred: np.ndarray, split: ConditionalSplit) -> float:
    m = split.target_mask
    n = m.sum()
    if n == 0:
        raise ValueError("MAE undefined: no target entries")
    diff = np.where(m > 0, truth.values - pred, 0.0)
    return float(np.abs(diff).sum() / n)


def rmse(truth: TimeSeriesBatch, pred: np.ndarray, split: ConditionalSplit) -> float:
    m = split.target_mask
    n = m.sum()
    if n == 0:
        raise ValueError("RMSE undefined: no target entries")
    diff = np.where(m > 0, truth.values - pred, 0.0)
    return float(np.sqrt((diff ** 2).sum() / n))


def _normalized_psds(truth: TimeSeriesBatch, pred_full: np.ndarray,
                     grid: FrequencyGrid):
    """Sum-one PSDs of truth/pred over observed points, plus a validity mask."""
    mask = truth.obs_mask
    p_gt = periodogram_arrays(truth.values, truth.timestamps, mask, grid,
                              center=True)
    p_pr = periodogram_arrays(pred_full, truth.timestamps, mask, grid,
                              center=True)
    tot_gt = p_gt.power.sum(axis=2)
    tot_pr = p_pr.power.sum(axis=2)
    valid = (tot_gt > 0) & (tot_pr > 0)
    tot_gt = np.where(tot_gt > 0, tot_gt, 1.0)
    tot_pr = np.where(tot_pr > 0, tot_pr, 1.0)
    return (p_gt.power / tot_gt[:, :, None],
            p_pr.power / tot_pr[:, :, None], valid)


def s_mae(truth: TimeSeriesBatch, pred_full: np.ndarray,
          grid: FrequencyGrid) -> float:
    """Mean absolute difference of sum-normalized observed-point PSDs.

    Averaged per (sample, channel) over frequencies first, then globally;
    degenerate (all-zero) spectra are skipped.
    """
    q_gt, q_pr, valid = _normalized_psds(truth, pred_full, grid)
    per_cell = np.abs(q_gt - q_pr).mean(axis=2)
    if valid.sum() == 0:
        raise ValueError("S-MAE undefined: all spectra degenerate")
    return float(per_cell[valid].mean())


def lfe(truth: TimeSeriesBatch, pred_full: np.ndarray,
        grid: FrequencyGrid) -> float:
    """Mean absolute difference of leading (argmax-power) frequencies, in the
    same frequency units as grid.freqs. Argmax ties break toward the lower
    frequency (np.argmax takes the first maximum)."""
    q_gt, q_pr, valid = _normalized_psds(truth, pred_full, grid)
    freqs = grid.freqs
    f_gt = freqs[np.argmax(q_gt, axis=2)]
    f_pr = freqs[np.argmax(q_pr, axis=2)]
    if valid.sum() == 0:
        raise ValueError("LFE undefined: all spectra degenerate")
    return float(np.abs(f_gt - f_pr)[valid].mean())


def evaluate(truth: TimeSeriesBatch, pred_full: np.ndarray,
             split: ConditionalSplit, grid: FrequencyGrid) -> EvalReport:
    m = split.target_mask
    k = truth.shape[1]
    pc_mae, pc_rmse = [], []
    for c in range(k):
        n = m[:, c].sum()
        if n == 0:
            pc_mae.append(float("nan"))
            pc_rmse.append(float("nan"))
        else:
            diff = np.where(m[:, c] > 0,
                            truth.values[:, c] - pred_full[:, c], 0.0)
            pc_mae.append(float(np.abs(diff).sum() / n))
            pc_rmse.append(float(np.sqrt((diff ** 2).sum() / n)))
    q_gt, q_pr, valid = _normalized_psds(truth, pred_full, grid)
    return EvalReport(
        mae=mae(truth, pred_full, split),
        rmse=rmse(truth, pred_full, split),
        s_mae=s_mae(truth, pred_full, grid),
        lfe=lfe(truth, pred_full, grid),
        per_channel_mae=tuple(pc_mae),
        per_channel_rmse=tuple(pc_rmse),
        n_target_entries=int(m.sum()),
        n_spectra=int(valid.size),
        n_degenerate_spectra=int(valid.size - valid.sum()),
    )
