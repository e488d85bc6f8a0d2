"""
Unpaired distribution metrics on feature vectors: FID and KID
"""

import numpy as np
from scipy import linalg

from aspstain.core.exceptions import CapacityError, ConfigurationError, ShapeError

FID_EPS = 1e-6
KID_SCALE = 1000.0


def _check_features(features_a: np.ndarray, features_b: np.ndarray, minimum: int = 2):
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"Expected two N x D feature sets with equal D, got {a.shape} and {b.shape}")
    if a.shape[0] < minimum or b.shape[0] < minimum:
        raise CapacityError(f"At least {minimum} samples per set are required, got {a.shape[0]} and {b.shape[0]}")
    return a, b


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric positive semi-definite matrix"""
    eigvals, eigvecs = linalg.eigh(matrix)
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def fid(features_a: np.ndarray, features_b: np.ndarray, eps: float = FID_EPS) -> float:
    """
    Frechet distance between Gaussians fitted to two feature sets.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with eps added
    to both covariance diagonals. The trace of the cross term is taken as
    tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)), which only needs symmetric roots.
    """
    a, b = _check_features(features_a, features_b)
    dim = a.shape[1]
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    sigma_a = np.atleast_2d(np.cov(a, rowvar=False)) + eps * np.eye(dim)
    sigma_b = np.atleast_2d(np.cov(b, rowvar=False)) + eps * np.eye(dim)

    root_a = _sqrtm_psd(sigma_a)
    middle = root_a @ sigma_b @ root_a
    middle = (middle + middle.T) / 2.0
    tr_covmean = np.sqrt(np.clip(linalg.eigvalsh(middle), 0.0, None)).sum()

    diff = mu_a - mu_b
    value = diff @ diff + np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * tr_covmean
    return max(float(value), 0.0)


def _polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x @ y.T / x.shape[1] + 1.0) ** 3


def kid(
    features_a: np.ndarray,
    features_b: np.ndarray,
    subset_size: int = 100,
    num_subsets: int = 100,
    seed: int = 0,
) -> float:
    """
    Kernel inception distance (raw, not scaled by 1000).

    Unbiased MMD^2 with the cubic polynomial kernel, estimated as the
    U-statistic over equal-size subsets and averaged over `num_subsets`
    draws. Both sets are subsampled from generators with the same seed, so
    identical sets give identical subsets and a zero estimate.
    """
    a, b = _check_features(features_a, features_b)
    if subset_size < 2:
        raise ConfigurationError(f"subset_size must be at least 2, got {subset_size}")
    if subset_size > min(a.shape[0], b.shape[0]):
        raise CapacityError(f"subset_size {subset_size} exceeds set sizes {a.shape[0]} and {b.shape[0]}")
    if num_subsets < 1:
        raise ConfigurationError(f"num_subsets must be positive, got {num_subsets}")

    rng_a = np.random.default_rng(seed)
    rng_b = np.random.default_rng(seed)
    n = subset_size
    pairs = n * (n - 1)
    estimates = []
    for _ in range(num_subsets):
        x = a[rng_a.choice(a.shape[0], n, replace=False)]
        y = b[rng_b.choice(b.shape[0], n, replace=False)]
        k_xx = _polynomial_kernel(x, x)
        k_yy = _polynomial_kernel(y, y)
        k_xy = _polynomial_kernel(x, y)
        estimates.append(
            (k_xx.sum() - np.trace(k_xx)) / pairs
            + (k_yy.sum() - np.trace(k_yy)) / pairs
            - 2.0 * (k_xy.sum() - np.trace(k_xy)) / pairs
        )
    return float(np.mean(estimates))
