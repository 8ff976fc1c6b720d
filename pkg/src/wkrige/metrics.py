"""Error metrics between predicted and true measures."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ValidationError
from .measures import QuantileGrid

__all__ = ["MetricsRecord", "q95_index", "pointwise_errors", "evaluate_metrics"]

Q95_LEVEL = 0.95


def q95_index(grid: QuantileGrid) -> int:
    """Grid node used for the 95% quantile: the nearest one, lower on ties."""
    dist = np.abs(grid.nodes - Q95_LEVEL)
    return int(np.nonzero(dist <= dist.min() + 1e-12)[0][0])


@dataclass(frozen=True)
class MetricsRecord:
    rmse_mean: float
    rmse_q95: float
    rmse_w: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def pointwise_errors(pred, truth):
    """Per-measure errors ``(mean error, q95 error, W2 distance)`` as three arrays."""
    p = np.atleast_2d(np.asarray(pred, dtype=float))
    t = np.atleast_2d(np.asarray(truth, dtype=float))
    if p.shape != t.shape:
        raise ValidationError(f"grid mismatch: predictions {p.shape} vs truths {t.shape}")
    if p.shape[0] == 0:
        raise ValidationError("empty test set")
    grid = QuantileGrid(p.shape[1])
    k = q95_index(grid)
    mean_err = p.mean(axis=1) - t.mean(axis=1)
    q95_err = p[:, k] - t[:, k]
    w2 = np.sqrt(np.mean((p - t) ** 2, axis=1))
    return mean_err, q95_err, w2


def evaluate_metrics(pred, truth) -> MetricsRecord:
    """Root-mean-square errors of the mean, the 95% quantile and the W2 distance."""
    mean_err, q95_err, w2 = pointwise_errors(pred, truth)
    rms = lambda e: float(np.sqrt(np.mean(e * e)))  # noqa: E731
    return MetricsRecord(rms(mean_err), rms(q95_err), rms(w2), int(w2.size))
