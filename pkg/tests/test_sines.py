import numpy as np
import pytest

from spectradiff.lombscargle import default_grid, periodogram
from spectradiff.sines import (SineChannelSpec, default_channel_specs,
                               dominant_gt_freq, generate_sines,
                               gt_freqs_from_json, gt_freqs_to_json)


def test_spec_validation():
    with pytest.raises(ValueError, match="align"):
        SineChannelSpec((1.0,), (1.0, 2.0), (1.0,))
    with pytest.raises(ValueError, match="positive"):
        SineChannelSpec((1.0,), (0.0,), (1.0,))
    with pytest.raises(ValueError, match="non-negative"):
        SineChannelSpec((0.4,), (1.0,), (1.0,))


def test_default_specs_channel_table():
    specs = default_channel_specs()
    assert len(specs) == 5
    assert specs[0].mean_freqs == (1.0,)
    assert specs[0].widths == (1.0,)
    assert specs[0].amplitudes == (1.0,)
    assert [s.n_components for s in specs] == [1, 2, 3, 4, 5]
    assert specs[4].mean_freqs == (0.5, 1.0, 2.0, 3.0, 4.0)
    assert all(s.noise_sigma == 0.1 for s in specs)


def test_noiseless_single_component_is_exact_sinusoid():
    spec = SineChannelSpec((1.0,), (1.0,), (2.0,), noise_sigma=0.0)
    batch, gt = generate_sines(n_samples=3, n_steps=50, specs=[spec], seed=4,
                               initial_missing=0.0)
    t = batch.timestamps[0]
    f = gt[0, 0, 0]
    x = batch.values[0, 0]
    # recover the phase from the first point, then check the whole series
    phi = np.arcsin(np.clip(x[0] / 2.0, -1, 1))
    cand = [phi, np.pi - phi]
    errs = [np.max(np.abs(x - 2.0 * np.sin(2 * np.pi * f * t + p)))
            for p in cand]
    assert min(errs) < 1e-8


def test_frequency_support_and_mean():
    spec = SineChannelSpec((2.0,), (1.0,), (1.0,), noise_sigma=0.0)
    _, gt = generate_sines(n_samples=2000, n_steps=4, specs=[spec], seed=8,
                           initial_missing=0.0)
    f = gt[:, 0, 0]
    assert np.all(f >= 1.5) and np.all(f <= 2.5)
    assert abs(f.mean() - 2.0) < 0.02  # Beta(2,2) symmetry


def test_uniform_grid_and_initial_missing_rate():
    batch, _ = generate_sines(n_samples=50, n_steps=100, seed=2)
    assert np.allclose(np.diff(batch.timestamps, axis=1),
                       10.0 / 99, atol=1e-12)
    missing = 1.0 - batch.obs_mask.mean()
    assert abs(missing - 0.1) < 0.01


def test_seed_determinism_and_nan_padding():
    a, ga = generate_sines(n_samples=5, seed=6)
    b, gb = generate_sines(n_samples=5, seed=6)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(ga, gb, equal_nan=True)
    # channel 1 has a single component; the rest of its row is NaN padding
    assert np.all(np.isnan(ga[:, 0, 1:]))
    assert np.all(~np.isnan(ga[:, 4, :]))


def test_per_sample_seeding_partition_independent():
    a, ga = generate_sines(n_samples=6, seed=12, initial_missing=0.0)
    b, gb = generate_sines(n_samples=3, seed=12, initial_missing=0.0)
    assert np.array_equal(a.values[:3], b.values)
    assert np.array_equal(ga[:3], gb, equal_nan=True)


def test_jitter_keeps_strict_order():
    batch, _ = generate_sines(n_samples=4, n_steps=60, seed=3, jitter=0.4,
                              initial_missing=0.0)
    assert np.all(np.diff(batch.timestamps, axis=1) > 0)


def test_periodogram_recovers_dominant_frequency():
    specs = default_channel_specs()[:1]
    batch, gt = generate_sines(n_samples=100, specs=specs, seed=0,
                               initial_missing=0.0)
    grid = default_grid(batch.timestamps)
    p = periodogram(batch, grid)
    f_est = grid.freqs[np.argmax(p.power[:, 0, :], axis=1)]
    f_true = dominant_gt_freq(specs, gt)[:, 0]
    bin_width = grid.freqs[1] - grid.freqs[0]
    hit = np.abs(f_est - f_true) <= bin_width
    assert hit.mean() >= 0.95


def test_gt_freqs_json_round_trip():
    _, gt = generate_sines(n_samples=3, seed=1)
    back = gt_freqs_from_json(gt_freqs_to_json(gt))
    assert np.array_equal(gt, back, equal_nan=True)


def test_dominant_freq_picks_largest_amplitude():
    specs = [SineChannelSpec((1.0, 2.0), (0.5, 0.5), (0.3, 1.0))]
    gt = np.array([[[1.1, 2.2]]])
    assert dominant_gt_freq(specs, gt)[0, 0] == pytest.approx(2.2)
