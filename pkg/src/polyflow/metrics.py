"""Evaluation metrics for the reconstruction and classification tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricReport:
    name: str
    value: float
    count: int
    series: list | None = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"metric {self.name} is not finite")
        if self.count < 1:
            raise ValueError("need at least one sample")


def monotonicity_error(values, mode: str = "consecutive") -> float:
    """Fraction of samples breaking the majority ordering direction.

    values are latent coordinates ordered by the curve parameter.  The
    majority direction is the sign of the median consecutive
    difference; each consecutive pair violating it counts one
    misaligned point, normalized by the number of points.  mode
    'inversions' instead counts all order-inverted pairs, normalized by
    the pair count.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        raise ValueError("need at least 2 values")
    diffs = np.diff(values)
    direction = np.sign(np.median(diffs))
    if mode == "consecutive":
        if direction == 0.0:
            return float(np.count_nonzero(np.sign(diffs)) / n)
        return float(np.count_nonzero(np.sign(diffs) != direction) / n)
    if mode == "inversions":
        if direction == 0.0:
            direction = 1.0
        v = direction * values
        bad = sum(int(np.count_nonzero(v[i + 1 :] < v[i])) for i in range(n - 1))
        return float(bad / (n * (n - 1) / 2))
    raise ValueError(f"unknown mode {mode!r}")


def relative_reconstruction_error(finals, targets, diameter: float) -> float:
    """Mean Euclidean error over the non-depth slots, relative to diameter.

    The depth slot is excluded: it is exact by construction and would
    dilute the metric.
    """
    if diameter <= 0:
        raise ValueError("diameter must be positive")
    finals = np.atleast_2d(np.asarray(finals, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    err = np.linalg.norm(finals[:, 1:] - targets[:, 1:], axis=1)
    return float(err.mean() / diameter)


def classification_accuracy(finals, labels, targets) -> float:
    """Fraction of samples whose final state is nearest its label's target.

    Ties go to the lowest target index.
    """
    finals = np.atleast_2d(np.asarray(finals, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(np.unique(targets, axis=0)) != len(targets):
        raise ValueError("targets must be pairwise distinct")
    d2 = ((finals[:, None, :] - targets[None, :, :]) ** 2).sum(-1)
    pred = np.argmin(d2, axis=1)
    return float(np.mean(pred == np.asarray(labels)))
