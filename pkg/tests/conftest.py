import numpy as np
import pytest

from spectradiff.data import TimeSeriesBatch


def make_batch(b=3, k=2, l=20, seed=0, missing=0.3, irregular=True):
    """Random batch with irregular timestamps and a random observation mask."""
    rng = np.random.default_rng(seed)
    if irregular:
        t = np.sort(rng.uniform(0.0, 10.0, size=(b, l)), axis=1)
        # enforce strict increase
        t += np.arange(l) * 1e-6
    else:
        t = np.tile(np.linspace(0.0, 10.0, l), (b, 1))
    values = rng.normal(size=(b, k, l))
    mask = (rng.random((b, k, l)) >= missing).astype(float)
    # guarantee at least 3 observed points per channel so nothing degenerates
    for i in range(b):
        for c in range(k):
            idx = rng.choice(l, size=3, replace=False)
            mask[i, c, idx] = 1.0
    return TimeSeriesBatch(values=values, timestamps=t, obs_mask=mask)


@pytest.fixture
def batch():
    return make_batch()


def poison(batch: TimeSeriesBatch) -> TimeSeriesBatch:
    """NaN out every unobserved value to prove downstream code ignores them."""
    vals = np.where(batch.obs_mask > 0, batch.values, np.nan)
    return TimeSeriesBatch(values=vals, timestamps=batch.timestamps,
                           obs_mask=batch.obs_mask)
