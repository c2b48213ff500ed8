"""Aggregation rules over client updates: FedAvg, coordinate-wise median and
trimmed mean, and signSGD majority voting."""

from __future__ import annotations

import math

import numpy as np


class AggregationError(ValueError):
    """Raised for empty inputs, ragged dims, or degenerate trim/weight settings."""


def _stack(updates: list[np.ndarray]) -> np.ndarray:
    if not updates:
        raise AggregationError("no updates to aggregate")
    dims = {u.shape for u in updates}
    if len(dims) != 1:
        raise AggregationError(f"updates have mismatched shapes: {sorted(dims)}")
    return np.stack(updates)


def fedavg(updates: list[np.ndarray], weights: list[float] | None = None) -> np.ndarray:
    """Weighted average of updates; equal weights give the plain mean."""
    stacked = _stack(updates)
    if weights is None:
        return stacked.mean(axis=0)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(updates),):
        raise AggregationError("one weight per update required")
    if np.any(w < 0):
        raise AggregationError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise AggregationError("weights must sum to a positive value")
    return (w[:, None] * stacked).sum(axis=0) / total


def coordinate_median(updates: list[np.ndarray]) -> np.ndarray:
    """Per-coordinate median; even counts average the two central order statistics."""
    return np.median(_stack(updates), axis=0)


def trimmed_mean(updates: list[np.ndarray], trim_fraction: float) -> np.ndarray:
    """Per coordinate, drop the floor(trim_fraction * N) largest and smallest
    values and average the rest."""
    if not 0 <= trim_fraction < 0.5:
        raise AggregationError("trim_fraction must lie in [0, 0.5)")
    stacked = _stack(updates)
    n = stacked.shape[0]
    k = math.floor(trim_fraction * n)
    if 2 * k >= n:
        raise AggregationError(f"trimming {k} per side leaves nothing of {n} updates")
    if k == 0:
        return stacked.mean(axis=0)
    ordered = np.sort(stacked, axis=0)
    return ordered[k:n - k].mean(axis=0)


def signsgd_aggregate(gradient_updates: list[np.ndarray], eta: float) -> np.ndarray:
    """Majority-vote the per-coordinate gradient signs; the applied global
    delta is -eta times the vote vector. Even splits vote 0."""
    stacked = _stack(gradient_updates)
    vote = np.sign(np.sign(stacked).sum(axis=0))
    return -eta * vote
