"""Bad-pixel error rates in the Middlebury style."""

from __future__ import annotations

import numpy as np

THRESHOLDS = (0.5, 1.0, 2.0, 4.0)


def bad_rate(est: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None, threshold: float = 2.0) -> float:
    """Percentage of masked pixels whose absolute disparity error exceeds ``threshold``.

    Pixels with unknown ground truth (non-finite) are never counted.
    """
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {gt.shape}")
    valid = np.isfinite(gt)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("evaluation mask is empty")
    err = np.abs(est[valid] - gt[valid])
    # a non-finite estimate is always wrong
    bad = ~(err <= threshold)
    return 100.0 * float(bad.sum()) / n


def bad_rates(est: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None,
              thresholds=THRESHOLDS) -> dict[float, float]:
    return {t: bad_rate(est, gt, mask, t) for t in thresholds}
