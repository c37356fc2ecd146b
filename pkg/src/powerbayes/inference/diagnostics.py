from __future__ import annotations

import numpy as np


def autocorrelation(series) -> np.ndarray:
    """Sample autocorrelation at every lag, computed with a zero-padded FFT."""
    x = np.asarray(series, dtype=float)
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def effective_sample_size(series) -> float:
    """N / (1 + 2 sum rho_k), summing autocorrelations up to the first negative one."""
    x = np.asarray(series, dtype=float)
    if x.size < 10:
        raise ValueError("need at least 10 values")
    if np.ptp(x) == 0:
        raise ValueError("constant series has no defined effective sample size")
    rho = autocorrelation(x)[1:]
    neg = np.flatnonzero(rho < 0)
    cut = neg[0] if neg.size else rho.size
    return float(x.size / (1.0 + 2.0 * rho[:cut].sum()))
