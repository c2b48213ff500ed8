"""Experiment configuration: dataclasses, JSON loading, and validation.

Validation failures are collected and reported with field paths
("defense.beta: must be >= 1") so a bad config file fails before any round
runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .clients import FR_ADAM_DECAY, FR_ADAM_LR
from .model import ModelConfig
from .privacy import PrivacyConfig

AGGREGATOR_KINDS = ("fedavg", "median", "trimmed_mean", "signsgd")
DEFENSE_KINDS = ("pass", "rffl", "none")
DATA_SOURCES = ("synthetic", "idx")


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists field paths."""


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    num_classes: int = 4
    input_dim: int = 12
    separation: float = 3.0
    samples_per_client: int = 25
    holdout_samples: int = 500
    mode: str = "iid"
    non_iid_concentration: float = 0.5
    images_path: str | None = None
    labels_path: str | None = None


@dataclass(frozen=True)
class RosterConfig:
    """Client counts per behavior, plus free-rider knobs."""

    fair: int = 10
    plain: int = 0
    disguised: int = 0
    anonymous: int = 0
    selfish: int = 0
    disguise_variance: float = 1e-2
    afr_init_variance: float = 1e-2
    fr_adam_lr: float = FR_ADAM_LR
    fr_adam_decay: float = FR_ADAM_DECAY
    sfr_pretrain_epochs: int = 5

    @property
    def total(self) -> int:
        return self.fair + self.plain + self.disguised + self.anonymous + self.selfish

    @property
    def fr_total(self) -> int:
        return self.plain + self.disguised + self.anonymous + self.selfish


@dataclass(frozen=True)
class AggregatorConfig:
    kind: str = "fedavg"
    trim_fraction: float = 0.1


@dataclass(frozen=True)
class DefenseSettings:
    """Flat defense block; which fields apply depends on `kind`."""

    kind: str = "pass"
    alpha: float = 0.95
    beta: float = 1.75
    initial_contribution: float | None = None
    threshold_mode: str = "current"
    rffl_threshold: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment run needs; defaults follow the reference
    setting (eta 0.1, 200 rounds, alpha 0.95, beta 1.75, prune 0.9, noise 1e-2)."""

    seed: int = 0
    rounds: int = 200
    eta: float = 0.1
    local_epochs: int = 1
    local_batch_size: int | None = None  # None = full batch
    model: ModelConfig = field(default_factory=lambda: ModelConfig(12, (), 4))
    data: DataConfig = field(default_factory=DataConfig)
    roster: RosterConfig = field(default_factory=RosterConfig)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    defense: DefenseSettings = field(default_factory=DefenseSettings)
    privacy: PrivacyConfig = field(default_factory=lambda: PrivacyConfig(1e-2, 0.9))

    def validate(self) -> None:
        problems: list[str] = []
        if self.rounds < 1:
            problems.append("rounds: must be >= 1")
        if self.eta <= 0:
            problems.append("eta: must be > 0")
        if self.local_epochs < 0:
            problems.append("local_epochs: must be >= 0")
        if self.local_batch_size is not None:
            if self.local_batch_size < 1:
                problems.append("local_batch_size: must be >= 1 (or null for full batch)")
            elif self.local_batch_size > self.data.samples_per_client:
                problems.append("local_batch_size: cannot exceed data.samples_per_client")
        if self.roster.total < 1:
            problems.append("roster: at least one client required")
        for kind in ("fair", "plain", "disguised", "anonymous", "selfish"):
            if getattr(self.roster, kind) < 0:
                problems.append(f"roster.{kind}: must be >= 0")
        if self.roster.disguise_variance < 0:
            problems.append("roster.disguise_variance: must be >= 0")
        if self.roster.sfr_pretrain_epochs < 0:
            problems.append("roster.sfr_pretrain_epochs: must be >= 0")
        if self.aggregator.kind not in AGGREGATOR_KINDS:
            problems.append(
                f"aggregator.kind: {self.aggregator.kind!r} not one of {AGGREGATOR_KINDS}")
        if not 0 <= self.aggregator.trim_fraction < 0.5:
            problems.append("aggregator.trim_fraction: must lie in [0, 0.5)")
        if self.defense.kind not in DEFENSE_KINDS:
            problems.append(
                f"defense.kind: {self.defense.kind!r} not one of {DEFENSE_KINDS}")
        if not 0 <= self.defense.alpha <= 1:
            problems.append("defense.alpha: must lie in [0, 1]")
        if self.defense.beta < 1:
            problems.append("defense.beta: must be >= 1")
        if self.defense.threshold_mode not in ("current", "initial"):
            problems.append("defense.threshold_mode: must be 'current' or 'initial'")
        if self.data.source not in DATA_SOURCES:
            problems.append(f"data.source: {self.data.source!r} not one of {DATA_SOURCES}")
        if self.data.source == "synthetic":
            if self.data.num_classes != self.model.num_classes:
                problems.append("data.num_classes: must match model.num_classes")
            if self.data.input_dim != self.model.input_dim:
                problems.append("data.input_dim: must match model.input_dim")
            if self.data.num_classes < 2:
                problems.append("data.num_classes: must be >= 2")
            if self.data.separation <= 0:
                problems.append("data.separation: must be > 0")
        else:
            if not self.data.images_path or not self.data.labels_path:
                problems.append("data.images_path/labels_path: required for source 'idx'")
        if self.data.samples_per_client < 1:
            problems.append("data.samples_per_client: must be >= 1")
        if self.data.holdout_samples < 1:
            problems.append("data.holdout_samples: must be >= 1")
        if self.data.mode not in ("iid", "non_iid"):
            problems.append("data.mode: must be 'iid' or 'non_iid'")
        if self.data.non_iid_concentration <= 0:
            problems.append("data.non_iid_concentration: must be > 0")
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))


def _build(cls, raw: dict, path: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = dict(raw)
    if cls is ModelConfig and "hidden_dims" in kwargs:
        kwargs["hidden_dims"] = tuple(kwargs["hidden_dims"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed JSON dict."""
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")
    known = {"seed", "rounds", "eta", "local_epochs", "model", "data", "roster",
             "aggregator", "defense", "privacy", "sweep", "dlg"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"top level: unknown keys {sorted(unknown)}")
    defaults = ExperimentConfig()
    cfg = ExperimentConfig(
        seed=raw.get("seed", defaults.seed),
        rounds=raw.get("rounds", defaults.rounds),
        eta=raw.get("eta", defaults.eta),
        local_epochs=raw.get("local_epochs", defaults.local_epochs),
        local_batch_size=raw.get("local_batch_size"),
        model=_build(ModelConfig, raw["model"], "model") if "model" in raw else defaults.model,
        data=_build(DataConfig, raw.get("data", {}), "data"),
        roster=_build(RosterConfig, raw.get("roster", {}), "roster"),
        aggregator=_build(AggregatorConfig, raw.get("aggregator", {}), "aggregator"),
        defense=_build(DefenseSettings, raw.get("defense", {}), "defense"),
        privacy=_build(PrivacyConfig, raw.get("privacy", {}), "privacy"),
    )
    cfg.validate()
    return cfg


def load_config(path) -> tuple[ExperimentConfig, dict]:
    """Read a JSON config file; returns the config plus the raw dict (which
    may carry 'sweep'/'dlg' sections for those subcommands)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(raw), raw
