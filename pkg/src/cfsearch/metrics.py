"""Distribution and signal metrics used to score sub-generators.

``frechet_moment_distance`` compares two sample sets through the first
two moments: fit a Gaussian to each and take the squared Fréchet
distance between them,

    |mu_a - mu_b|^2 + tr(Sig_a) + tr(Sig_b) - 2 tr((Sig_a^1/2 Sig_b Sig_a^1/2)^1/2).

The matrix square roots run over symmetric eigendecompositions with
eigenvalues clipped at zero, so the result is deterministic, real, and
exactly 0.0 for identical sets up to rounding.

``psnr`` is the usual peak signal-to-noise ratio over a fixed peak; a
perfect reconstruction would divide by zero, so it saturates at a large
documented cap instead.
"""

from __future__ import annotations

import numpy as np

# Signals handled here live in [-1, 1]; peak-to-peak range.
SIGNAL_PEAK = 2.0

# Returned for (near-)exact reconstructions; far above any attainable
# genuine ratio, so it is recognizably a sentinel and keeps fitness finite.
PSNR_CAP = 300.0


def _sym_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2.0)
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.T


def frechet_moment_distance(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """Squared Gaussian Fréchet distance between two (n, d) sample sets."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"need (n, d) sample sets with equal d, got {a.shape}, {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least 2 samples per set to estimate covariance")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False).reshape(a.shape[1], a.shape[1])
    cov_b = np.cov(b, rowvar=False).reshape(b.shape[1], b.shape[1])
    root_a = _sym_sqrt(cov_a)
    cross = _sym_sqrt(root_a @ cov_b @ root_a)
    value = float(
        np.sum((mu_a - mu_b) ** 2)
        + np.trace(cov_a)
        + np.trace(cov_b)
        - 2.0 * np.trace(cross)
    )
    return max(value, 0.0)


def psnr(output: np.ndarray, target: np.ndarray, peak: float = SIGNAL_PEAK) -> float:
    """Peak signal-to-noise ratio in dB, capped at ``PSNR_CAP``."""
    out = np.asarray(output, dtype=np.float64)
    ref = np.asarray(target, dtype=np.float64)
    if out.shape != ref.shape:
        raise ValueError(f"shape mismatch: {out.shape} vs {ref.shape}")
    mse = float(np.mean((out - ref) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    value = 10.0 * np.log10(peak * peak / mse)
    return min(value, PSNR_CAP)
