import numpy as np
import pytest

from spectradiff.baselines import impute_lerp, impute_mean
from spectradiff.data import ConditionalSplit, TimeSeriesBatch

from conftest import make_batch


def simple_batch(values, mask, t=None):
    values = np.asarray(values, dtype=float)[None, None, :]
    mask = np.asarray(mask, dtype=float)[None, None, :]
    l = values.shape[-1]
    if t is None:
        t = np.arange(float(l))
    return TimeSeriesBatch(values=values, timestamps=np.asarray(t)[None],
                           obs_mask=np.ones_like(values)), ConditionalSplit(
        cond_mask=mask, target_mask=np.ones_like(values) - mask)


def mean_oracle(batch, split):
    out = np.empty_like(batch.values)
    b, k, l = batch.shape
    for i in range(b):
        for c in range(k):
            sel = split.cond_mask[i, c] > 0
            if sel.sum() > 0:
                fill = batch.values[i, c][sel].mean()
            else:
                gsel = split.cond_mask[:, c] > 0
                fill = (batch.values[:, c][gsel].mean()
                        if gsel.sum() > 0 else 0.0)
            for s in range(l):
                out[i, c, s] = (batch.values[i, c, s]
                                if split.cond_mask[i, c, s] > 0 else fill)
    return out


def test_constant_channel_mean():
    batch, split = simple_batch([3.0] * 6, [1, 1, 0, 0, 1, 0])
    assert np.allclose(impute_mean(batch, split), 3.0)


def test_single_condition_point_everywhere():
    batch, split = simple_batch([7.0, 0.0, 0.0], [1, 0, 0])
    pred = impute_mean(batch, split)
    assert np.allclose(pred, 7.0)


def test_mean_matches_scalar_oracle():
    for seed in range(8):
        batch = make_batch(b=3, k=2, l=25, seed=seed)
        rng = np.random.default_rng(seed)
        cond = ((rng.random(batch.shape) < 0.5) & (batch.obs_mask > 0))
        split = ConditionalSplit(cond_mask=cond.astype(float),
                                 target_mask=batch.obs_mask - cond)
        assert np.max(np.abs(impute_mean(batch, split)
                             - mean_oracle(batch, split))) < 1e-12


def test_mean_empty_channel_uses_batch_mean():
    vals = np.array([[[2.0, 4.0]], [[9.0, 9.0]]])
    mask = np.array([[[1.0, 1.0]], [[0.0, 0.0]]])
    batch = TimeSeriesBatch(values=vals,
                            timestamps=np.tile(np.arange(2.0), (2, 1)),
                            obs_mask=np.ones_like(vals))
    split = ConditionalSplit(cond_mask=mask, target_mask=1.0 - mask)
    pred = impute_mean(batch, split)
    assert np.allclose(pred[1, 0], 3.0)  # batch-wide channel mean of {2, 4}


def test_lerp_midpoint():
    batch, split = simple_batch([0.0, 99.0, 10.0], [1, 0, 1],
                                t=[0.0, 5.0, 10.0])
    pred = impute_lerp(batch, split)
    assert pred[0, 0, 1] == pytest.approx(5.0)


def test_lerp_endpoint_extension():
    batch, split = simple_batch([99.0, 2.0, 4.0, 99.0], [0, 1, 1, 0])
    pred = impute_lerp(batch, split)
    assert pred[0, 0, 0] == pytest.approx(2.0)   # before first cond point
    assert pred[0, 0, 3] == pytest.approx(4.0)   # after last cond point


def test_lerp_exact_on_linear_signals():
    t = np.sort(np.random.default_rng(3).uniform(0, 10, 30))
    x = 2.0 * t - 5.0
    mask = np.zeros(30); mask[::3] = 1.0
    batch = TimeSeriesBatch(values=x[None, None], timestamps=t[None],
                            obs_mask=np.ones((1, 1, 30)))
    split = ConditionalSplit(cond_mask=mask[None, None],
                             target_mask=1.0 - mask[None, None])
    pred = impute_lerp(batch, split)
    interior = (t >= t[mask > 0].min()) & (t <= t[mask > 0].max())
    assert np.max(np.abs(pred[0, 0][interior] - x[interior])) < 1e-10


def test_lerp_falls_back_to_mean_below_two_points():
    batch, split = simple_batch([5.0, 1.0, 1.0], [1, 0, 0])
    assert np.allclose(impute_lerp(batch, split),
                       impute_mean(batch, split))


def test_lerp_dense_scalar_oracle():
    rng = np.random.default_rng(7)
    batch = make_batch(b=2, k=2, l=40, seed=7)
    cond = ((rng.random(batch.shape) < 0.6) & (batch.obs_mask > 0))
    split = ConditionalSplit(cond_mask=cond.astype(float),
                             target_mask=batch.obs_mask - cond)
    pred = impute_lerp(batch, split)
    for i in range(2):
        for c in range(2):
            sel = split.cond_mask[i, c] > 0
            if sel.sum() < 2:
                continue
            tc, xc = batch.timestamps[i][sel], batch.values[i, c][sel]
            for s in range(40):
                if split.cond_mask[i, c, s] > 0:
                    expected = batch.values[i, c, s]
                else:
                    ts = batch.timestamps[i, s]
                    jj = np.searchsorted(tc, ts)
                    if jj == 0:
                        expected = xc[0]
                    elif jj == len(tc):
                        expected = xc[-1]
                    else:
                        w = (ts - tc[jj - 1]) / (tc[jj] - tc[jj - 1])
                        expected = (1 - w) * xc[jj - 1] + w * xc[jj]
                assert pred[i, c, s] == pytest.approx(expected, abs=1e-12)


def test_both_reproduce_condition_entries():
    batch = make_batch(seed=11)
    rng = np.random.default_rng(11)
    cond = ((rng.random(batch.shape) < 0.5) & (batch.obs_mask > 0))
    split = ConditionalSplit(cond_mask=cond.astype(float),
                             target_mask=batch.obs_mask - cond)
    for fn in (impute_mean, impute_lerp):
        pred = fn(batch, split)
        assert np.array_equal(pred[cond], batch.values[cond])
