"""Contribution evaluation and elimination.

Two defenses: the peer parameter audit (accuracy-divergence reports smoothed
through tanh, elimination below 1/(beta * N)), and the cosine-reputation
baseline. Plus the defense quality metrics (defense success rate, false
positive rate).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .model import ModelConfig, accuracy

log = logging.getLogger(__name__)

# Peer audits need at least two peers to mean anything; below this many active
# clients elimination is suspended.
MIN_ACTIVE_FOR_ELIMINATION = 3


@dataclass(frozen=True)
class AuditDefenseConfig:
    """Knobs for the audit defense (config key "pass").

    threshold = 1 / (beta * N); threshold_mode picks whether N is the current
    active count or the initial roster size.
    """

    alpha: float = 0.95
    beta: float = 1.75
    initial_contribution: float | None = None  # None -> 1/N at runtime
    threshold_mode: str = "current"

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.threshold_mode not in ("current", "initial"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")


@dataclass(frozen=True)
class CosineDefenseConfig:
    """Knobs for the cosine-reputation baseline (config key "rffl")."""

    alpha: float = 0.95
    threshold: float | None = None  # None -> 1/(3N) at runtime
    initial_contribution: float | None = None

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass
class AuditMatrix:
    """One round's accuracy-divergence reports: entries[auditor][target].

    No self-audits (the diagonal is absent) and only non-eliminated,
    data-holding auditors contribute rows.
    """

    round: int
    entries: dict[int, dict[int, float]] = field(default_factory=dict)

    def add(self, auditor: int, target: int, value: float) -> None:
        if auditor == target:
            raise ValueError("self-audits are excluded")
        self.entries.setdefault(auditor, {})[target] = value

    def reports_for(self, target: int) -> list[float]:
        return [row[target] for row in self.entries.values() if target in row]


@dataclass
class ContributionLedger:
    """Per-client contribution scores, the eliminated set, per-round snapshots."""

    contributions: dict[int, float]
    eliminated: set[int] = field(default_factory=set)
    history: list[dict[int, float]] = field(default_factory=list)

    @classmethod
    def fresh(cls, client_ids: list[int], initial: float) -> "ContributionLedger":
        return cls({cid: initial for cid in client_ids})

    def active_ids(self) -> list[int]:
        return [cid for cid in self.contributions if cid not in self.eliminated]

    def snapshot(self):
        self.history.append(dict(self.contributions))


def audit_peer_update(auditor_shard: Dataset, config: ModelConfig,
                      theta_curr: np.ndarray, theta_prev: np.ndarray,
                      peer_update: np.ndarray) -> float:
    """One accuracy-divergence report on the auditor's own data.

    Acc(theta_curr) - Acc(theta_prev + peer_update): an upload that merely
    echoes the allocated transition scores exactly zero.
    """
    if theta_curr.shape != theta_prev.shape or theta_curr.shape != peer_update.shape:
        raise ValueError("audit parameter vectors must have matching dims")
    return (accuracy(theta_curr, config, auditor_shard)
            - accuracy(theta_prev + peer_update, config, auditor_shard))


def contribution_step(c_prev: float, accdiv_reports: list[float], alpha: float) -> float:
    """alpha * c_prev + (1 - alpha) * tanh(mean reports); no reports carries
    the value forward."""
    if not accdiv_reports:
        log.debug("no audit reports this round; carrying contribution forward")
        return c_prev
    return alpha * c_prev + (1 - alpha) * math.tanh(sum(accdiv_reports) / len(accdiv_reports))


def eliminate_low_contributors(ledger: ContributionLedger, beta: float,
                               n_threshold: int) -> set[int]:
    """Mark every active client with contribution < 1/(beta * n_threshold).

    Suspended (returns the empty set) when fewer than
    MIN_ACTIVE_FOR_ELIMINATION clients remain active. Elimination is
    permanent.
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    if n_threshold < 1:
        raise ValueError("threshold denominator must be >= 1")
    active = ledger.active_ids()
    if len(active) < MIN_ACTIVE_FOR_ELIMINATION:
        return set()
    cutoff = 1.0 / (beta * n_threshold)
    newly = {cid for cid in active if ledger.contributions[cid] < cutoff}
    ledger.eliminated |= newly
    return newly


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0 when either has zero norm."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        log.debug("zero-norm vector in cosine similarity; returning 0")
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def cosine_contribution_step(c_prev: float, global_update: np.ndarray,
                             local_update: np.ndarray, alpha: float) -> float:
    """alpha * c_prev + (1 - alpha) * cos(global_update, local_update)."""
    return alpha * c_prev + (1 - alpha) * cosine_similarity(global_update, local_update)


def defense_success_rate(eliminated: set[int], fr_ids: set[int]) -> float | None:
    """Percentage of free-rider clients eliminated; None without any FR."""
    if not fr_ids:
        return None
    return 100.0 * len(eliminated & fr_ids) / len(fr_ids)


def false_positive_rate(eliminated: set[int], fair_ids: set[int]) -> float | None:
    """Percentage of fair clients wrongly eliminated; None without fair clients."""
    if not fair_ids:
        return None
    return 100.0 * len(eliminated & fair_ids) / len(fair_ids)
