"""Batched, masked Lomb-Scargle periodogram with analytic input gradients.

The estimator fits sinusoids directly to the observed points of each
(sample, channel) series, so no interpolation of missing entries is ever
needed. A per-frequency time shift makes the power invariant to time
translation. Also provided: false-alarm probabilities under the chi^2_2
null, the weighted/log/standardized feature transform used as a learned
conditioning input, a least-squares oracle for equivalence testing, and an
FFT + gap-filling reference pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENOM_CLAMP = 1e-10
FAP_EPS = 1e-10

# Batch slab size for the [B, K, J, L] trig intermediates.
_CHUNK = 128


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive angular frequencies shared by a batch."""

    omegas: np.ndarray  # [J], radians per time unit

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=np.float64)
        if om.ndim != 1 or om.size == 0:
            raise ValueError("omegas must be a non-empty 1-D array")
        if not np.all(np.isfinite(om)):
            raise ValueError("omegas must be finite")
        if not np.all(om > 0):
            raise ValueError("omegas must be positive")
        if not np.all(np.diff(om) > 0):
            raise ValueError("omegas must be strictly increasing")
        object.__setattr__(self, "omegas", om)
        om.setflags(write=False)

    @property
    def size(self) -> int:
        return self.omegas.size

    @property
    def freqs(self) -> np.ndarray:
        return self.omegas / (2.0 * np.pi)


def default_grid(timestamps: np.ndarray, n_freqs: int | None = None) -> FrequencyGrid:
    """Linearly spaced grid over (0, f_nyquist] from the median time spacing.

    n_freqs defaults to L // 2.
    """
    timestamps = np.atleast_2d(np.asarray(timestamps, dtype=np.float64))
    l = timestamps.shape[1]
    if n_freqs is None:
        n_freqs = max(l // 2, 1)
    dt = np.median(np.diff(timestamps, axis=1))
    f_nyq = 0.5 / dt
    freqs = np.linspace(f_nyq / n_freqs, f_nyq, n_freqs)
    return FrequencyGrid(omegas=2.0 * np.pi * freqs)


def grid_from_spec(spec: dict, timestamps: np.ndarray | None = None) -> FrequencyGrid:
    """Build a grid from an explicit omega list or a {j, f_min, f_max} triple."""
    if "omegas" in spec:
        return FrequencyGrid(omegas=np.asarray(spec["omegas"], dtype=np.float64))
    if {"j", "f_min", "f_max"} <= set(spec):
        freqs = np.linspace(spec["f_min"], spec["f_max"], int(spec["j"]))
        return FrequencyGrid(omegas=2.0 * np.pi * freqs)
    if timestamps is not None:
        return default_grid(timestamps, spec.get("j"))
    raise ValueError("grid spec needs 'omegas' or {'j','f_min','f_max'}")


@dataclass(frozen=True)
class Periodogram:
    power: np.ndarray  # [B, K, J], >= 0
    grid: FrequencyGrid
    tau: np.ndarray    # [B, K, J]
    degenerate: np.ndarray | None = None  # [B, K] bool, < 2 observed points


@dataclass(frozen=True)
class FapAnnotation:
    fap: np.ndarray      # [B, K, J] in [0, 1]
    j_eff: float
    weights: np.ndarray  # [B, K, J], = 1 / (fap + eps)


def _as_bkl_mask(mask: np.ndarray, k: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 2:  # [B, L] -> broadcast over channels
        mask = np.repeat(mask[:, None, :], k, axis=1)
    return mask


def compute_tau(timestamps: np.ndarray, mask: np.ndarray,
                grid: FrequencyGrid) -> np.ndarray:
    """Per-frequency time shift from the observed points of each channel.

    tau = atan2(sum sin 2ws_i, sum cos 2ws_i) / (2w); a channel with no
    observed points gets tau = 0 (atan2(0, 0) = 0).
    """
    timestamps = np.asarray(timestamps, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    b, k, l = mask.shape
    om = grid.omegas
    out = np.empty((b, k, om.size))
    for lo in range(0, b, _CHUNK):
        hi = min(lo + _CHUNK, b)
        two_wt = 2.0 * om[None, None, :, None] * timestamps[lo:hi, None, None, :]
        m = mask[lo:hi, :, None, :]
        s2 = (np.sin(two_wt) * m).sum(axis=3)
        c2 = (np.cos(two_wt) * m).sum(axis=3)
        out[lo:hi] = np.arctan2(s2, c2) / (
            2.0 * np.maximum(om[None, None, :], DENOM_CLAMP))
    return out


def _trig_sums(values, timestamps, mask, grid, center, tau=None):
    """Shared forward-pass sums, computed in batch slabs.

    Returns per-(b,k,j): C, S, CC, SS plus the mask-applied cos/sin arrays
    are NOT retained (recomputed by the VJP) to keep peak memory low.
    """
    b, k, l = values.shape
    om = grid.omegas
    j = om.size
    if tau is None:
        tau = compute_tau(timestamps, mask, grid)
    n_obs = mask.sum(axis=2)  # [B, K]
    # np.where (not multiply) so NaN-poisoned masked entries cannot leak
    xm = np.where(mask > 0, values, 0.0)
    if center:
        xbar = xm.sum(axis=2) / np.maximum(n_obs, 1.0)
        xt = np.where(mask > 0, xm - xbar[:, :, None], 0.0)
    else:
        xt = xm
    c_sum = np.empty((b, k, j))
    s_sum = np.empty((b, k, j))
    cc = np.empty((b, k, j))
    ss = np.empty((b, k, j))
    for lo in range(0, b, _CHUNK):
        hi = min(lo + _CHUNK, b)
        phi = timestamps[lo:hi, None, None, :] - tau[lo:hi, :, :, None]
        arg = om[None, None, :, None] * phi
        m = mask[lo:hi, :, None, :]
        cos_a = np.cos(arg) * m
        sin_a = np.sin(arg) * m
        xt_e = xt[lo:hi, :, None, :]
        c_sum[lo:hi] = (xt_e * cos_a).sum(axis=3)
        s_sum[lo:hi] = (xt_e * sin_a).sum(axis=3)
        cc[lo:hi] = (cos_a ** 2).sum(axis=3)
        ss[lo:hi] = (sin_a ** 2).sum(axis=3)
    return c_sum, s_sum, cc, ss, tau, n_obs


def periodogram_arrays(values: np.ndarray, timestamps: np.ndarray,
                       mask: np.ndarray, grid: FrequencyGrid,
                       center: bool = True) -> Periodogram:
    """Masked Lomb-Scargle power for raw arrays (values [B,K,L])."""
    values = np.asarray(values, dtype=np.float64)
    timestamps = np.asarray(timestamps, dtype=np.float64)
    mask = _as_bkl_mask(mask, values.shape[1])
    c_sum, s_sum, cc, ss, tau, n_obs = _trig_sums(
        values, timestamps, mask, grid, center)
    power = 0.5 * (c_sum ** 2 / np.maximum(cc, DENOM_CLAMP)
                   + s_sum ** 2 / np.maximum(ss, DENOM_CLAMP))
    degenerate = n_obs < 2
    power = np.where(degenerate[:, :, None], 0.0, power)
    return Periodogram(power=power, grid=grid, tau=tau, degenerate=degenerate)


def periodogram(batch, grid: FrequencyGrid, mask: np.ndarray | str = "obs",
                center: bool = True) -> Periodogram:
    """Periodogram of a TimeSeriesBatch.

    mask selects which points enter the sums: "obs" for the batch's own
    observation mask, or an explicit [B,K,L] array (e.g. a conditional mask).
    """
    if isinstance(mask, str):
        if mask != "obs":
            raise ValueError(f"unknown mask selector {mask!r}")
        mask = batch.obs_mask
    return periodogram_arrays(batch.values, batch.timestamps, mask, grid,
                              center=center)


def periodogram_vjp(values: np.ndarray, timestamps: np.ndarray,
                    mask: np.ndarray, grid: FrequencyGrid,
                    upstream: np.ndarray, center: bool = True) -> np.ndarray:
    """Gradient of <upstream, P> with respect to the input values.

    tau depends only on timestamps, so it is exactly constant w.r.t. values.
    Masked-out positions receive exactly zero gradient; degenerate channels
    (< 2 observed points) receive zero gradient everywhere.
    """
    values = np.asarray(values, dtype=np.float64)
    timestamps = np.asarray(timestamps, dtype=np.float64)
    mask = _as_bkl_mask(mask, values.shape[1])
    upstream = np.asarray(upstream, dtype=np.float64)
    b, k, l = values.shape
    om = grid.omegas
    c_sum, s_sum, cc, ss, tau, n_obs = _trig_sums(
        values, timestamps, mask, grid, center)
    cc_cl = np.maximum(cc, DENOM_CLAMP)
    ss_cl = np.maximum(ss, DENOM_CLAMP)
    # dP/dC = C/CC, dP/dS = S/SS (the 0.5 cancels the squares' factor 2)
    g_c = upstream * c_sum / cc_cl  # [B, K, J]
    g_s = upstream * s_sum / ss_cl
    degenerate = n_obs < 2
    g_c = np.where(degenerate[:, :, None], 0.0, g_c)
    g_s = np.where(degenerate[:, :, None], 0.0, g_s)
    grad = np.empty((b, k, l))
    inv_n = 1.0 / np.maximum(n_obs, 1.0)
    for lo in range(0, b, _CHUNK):
        hi = min(lo + _CHUNK, b)
        phi = timestamps[lo:hi, None, None, :] - tau[lo:hi, :, :, None]
        arg = om[None, None, :, None] * phi
        m = mask[lo:hi, :, None, :]
        cos_a = np.cos(arg) * m
        sin_a = np.sin(arg) * m
        g = (g_c[lo:hi, :, :, None] * cos_a
             + g_s[lo:hi, :, :, None] * sin_a)
        if center:
            # x_tilde_i = (x_i - xbar) m_i; d xbar / d x_i = m_i / n
            col_c = cos_a.sum(axis=3)  # [b, K, J]
            col_s = sin_a.sum(axis=3)
            corr = (g_c[lo:hi] * col_c + g_s[lo:hi] * col_s)  # [b, K, J]
            g = g - corr[:, :, :, None] * m * inv_n[lo:hi, :, None, None]
        grad[lo:hi] = g.sum(axis=2)
    return grad * mask


def false_alarm_probability(p: Periodogram, j_eff: float) -> FapAnnotation:
    """FAP under the chi^2_2 null: 1 - (1 - exp(-P))^j_eff."""
    if j_eff < 1:
        raise ValueError("j_eff must be >= 1")
    single = -np.expm1(-p.power)          # 1 - exp(-P), in [0, 1)
    single = np.clip(single, 0.0, 1.0)
    # 1 - single^j_eff, via logs to keep the P -> inf tail accurate
    fap = -np.expm1(j_eff * np.log(np.maximum(single, 1e-300)))
    fap = np.clip(fap, 0.0, 1.0)
    weights = 1.0 / (fap + FAP_EPS)
    return FapAnnotation(fap=fap, j_eff=float(j_eff), weights=weights)


def spectral_feature(p: Periodogram, fap: FapAnnotation) -> np.ndarray:
    """Conditioning input: standardize log(1 + w * P) per channel over the grid.

    Channels whose weighted log power is constant over the grid (e.g. all-zero
    power) map to the zero feature vector.
    """
    z = np.log1p(fap.weights * p.power)
    mean = z.mean(axis=2, keepdims=True)
    std = z.std(axis=2, keepdims=True)
    flat = std < 1e-300
    return np.where(flat, 0.0, (z - mean) / np.where(flat, 1.0, std))


def ls_oracle(t: np.ndarray, x: np.ndarray, f: float) -> float:
    """Least-squares power at frequency f: half the squared norm of the
    projection of x onto span{cos(2 pi f t), sin(2 pi f t)}.

    Solves the 2x2 normal equations with a tolerance-1e-12 pseudo-inverse.
    Used only in tests as an independent oracle.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if t.size < 2:
        raise ValueError("oracle needs at least 2 observed points")
    h = np.stack([np.cos(2.0 * np.pi * f * t), np.sin(2.0 * np.pi * f * t)], axis=1)
    theta = np.linalg.pinv(h.T @ h, rcond=1e-12) @ (h.T @ x)
    fitted = h @ theta
    return 0.5 * float(fitted @ fitted)


def ls_oracle_amplitude(t: np.ndarray, x: np.ndarray, f: float) -> float:
    """Fitted sinusoid amplitude sqrt(a1^2 + a2^2) from the same 2x2 solve."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    h = np.stack([np.cos(2.0 * np.pi * f * t), np.sin(2.0 * np.pi * f * t)], axis=1)
    theta = np.linalg.pinv(h.T @ h, rcond=1e-12) @ (h.T @ x)
    return float(np.hypot(theta[0], theta[1]))


def fft_psd_with_fill(batch, fill: str = "linear-interp"):
    """FFT power spectrum after filling gaps on the uniform grid.

    fill is "linear-interp" (nearest-value extension at the edges) or "zero".
    Returns (power [B, K, n_bins], freqs [n_bins]) over the positive rfft
    bins, using the first sample's (assumed shared, uniform) time grid.
    """
    if fill not in ("linear-interp", "zero"):
        raise ValueError(f"unknown fill strategy {fill!r}")
    x = batch.values
    m = batch.obs_mask
    t = batch.timestamps
    b, k, l = x.shape
    dt = float(np.median(np.diff(t[0])))
    filled = np.zeros_like(x)
    for i in range(b):
        for c in range(k):
            obs = m[i, c] > 0
            if fill == "zero":
                filled[i, c] = np.where(obs, x[i, c], 0.0)
            elif obs.sum() == 0:
                filled[i, c] = 0.0
            else:
                # np.interp extends with the edge values on both sides
                filled[i, c] = np.interp(t[i], t[i][obs], x[i, c][obs])
    spec = np.fft.rfft(filled, axis=2)
    power = (np.abs(spec) ** 2) / l
    freqs = np.fft.rfftfreq(l, d=dt)
    # Drop the DC bin: leading-frequency comparisons are about oscillations.
    return power[:, :, 1:], freqs[1:]


def leading_frequency(power: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Argmax frequency per (..., J) row; ties break toward lower frequency."""
    idx = np.argmax(power, axis=-1)
    return freqs[idx]
