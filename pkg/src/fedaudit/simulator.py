"""Round-by-round orchestration: allocation, client updates, privacy
transforms, peer audits, contribution scoring, elimination, aggregation,
metric logging, and communication accounting.

Round pipeline (two-phase): uploads computed in round t are audited at the
start of round t+1, against the global parameters that were current when the
uploads were computed. An upload that merely echoes the transition allocated
with it therefore scores an accuracy divergence of exactly zero. Round-0
uploads are never audited (no allocated transition existed yet), so the first
contribution update lands in round 2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import aggregation
from .clients import (AnonymousFreeRider, Client, DisguisedFreeRider, FairClient,
                      PlainFreeRider, SelfishFreeRider)
from .config import ConfigError, ExperimentConfig
from .data import Dataset, PartitionSpec, generate_synthetic, load_idx, partition
from .defense import (AuditMatrix, ContributionLedger, contribution_step,
                      cosine_contribution_step, defense_success_rate,
                      eliminate_low_contributors, false_positive_rate)
from .model import (ModelConfig, accuracy, backward, epoch_permutations,
                    init_params, param_count, train_clients)
from .privacy import (DLGConfig, PrivacyConfig, ReconstructionDivergedError,
                      add_gaussian_noise, apply_privacy, dlg_reconstruct,
                      prune_update, reconstruction_mse, DEFENDED_MSE_THRESHOLD)


@dataclass(frozen=True)
class RoundLog:
    round: int
    global_accuracy: float
    contributions: dict[int, float]
    newly_eliminated: tuple[int, ...]
    n_active: int
    comm_scalars: int


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    rounds: tuple[RoundLog, ...]
    fair_ids: tuple[int, ...]
    fr_ids: tuple[int, ...]
    eliminated: tuple[int, ...]
    dsr: float | None
    fpr: float | None
    total_comm_scalars: int
    halted_early: bool

    @property
    def accuracy_curve(self) -> list[float]:
        return [log.global_accuracy for log in self.rounds]

    @property
    def final_accuracy(self) -> float:
        return self.rounds[-1].global_accuracy if self.rounds else float("nan")

    @property
    def fr_ratio_percent(self) -> int:
        total = len(self.fair_ids) + len(self.fr_ids)
        return int(round(100.0 * len(self.fr_ids) / total)) if total else 0


class AllClientsEliminated(RuntimeError):
    """Every client has been eliminated; the experiment halts."""


def comm_cost(n_active: int, gamma: float, d: int) -> int:
    """Scalars the server sends per audit-defense round: one global payload of
    d per active client plus (n-1) pruned peer updates each, zeros elided."""
    if n_active < 1:
        raise ValueError("n_active must be >= 1")
    pruned_away = int(round(gamma * d))
    return n_active * d + n_active * (n_active - 1) * (d - pruned_away)


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


class Simulation:
    """One experiment instance; build once, then run_round() until done."""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        root = np.random.SeedSequence(config.seed)
        (data_seq, init_seq, part_seq, split_seq,
         client_seq, privacy_seq) = root.spawn(6)

        roster = config.roster
        shards, public_shards, holdout = self._build_data(data_seq, part_seq, split_seq)
        self.holdout = holdout

        self.clients: list[Client] = []
        cid = 0
        for i in range(roster.fair):
            self.clients.append(FairClient(cid, shards[i], config.local_batch_size))
            cid += 1
        forged = config.data.samples_per_client
        for _ in range(roster.plain):
            self.clients.append(PlainFreeRider(cid, declared_samples=forged))
            cid += 1
        for _ in range(roster.disguised):
            self.clients.append(DisguisedFreeRider(
                cid, roster.disguise_variance, declared_samples=forged))
            cid += 1
        for _ in range(roster.anonymous):
            self.clients.append(AnonymousFreeRider(
                cid, roster.fr_adam_lr, roster.fr_adam_decay,
                roster.afr_init_variance, declared_samples=forged))
            cid += 1
        for i in range(roster.selfish):
            self.clients.append(SelfishFreeRider(
                cid, public_shards[i], roster.sfr_pretrain_epochs,
                roster.fr_adam_lr, roster.fr_adam_decay))
            cid += 1

        self.fair_ids = tuple(c.id for c in self.clients if c.kind == "fair")
        self.fr_ids = tuple(c.id for c in self.clients if c.kind != "fair")

        n = len(self.clients)
        behavior_seqs = client_seq.spawn(n)
        privacy_seqs = privacy_seq.spawn(n)
        self.client_rngs = {c.id: np.random.default_rng(behavior_seqs[i])
                            for i, c in enumerate(self.clients)}
        self.privacy_rngs = {c.id: np.random.default_rng(privacy_seqs[i])
                             for i, c in enumerate(self.clients)}

        initial = config.defense.initial_contribution
        if initial is None:
            initial = 1.0 / n
        self.ledger = ContributionLedger.fresh([c.id for c in self.clients], initial)
        self.initial_roster_size = n

        self.params = init_params(config.model, _seed_int(init_seq))
        self.prev_params: np.ndarray | None = None  # params before the last aggregation
        self.dim = param_count(config.model)
        self.alloc: np.ndarray | None = None  # delta allocated this round
        self._pending_audit = None  # (uploads, theta_at_upload, theta_before_upload)
        self.last_audit_matrix: AuditMatrix | None = None
        self.round_index = 0
        self.logs: list[RoundLog] = []
        self.halted_early = False

    def _build_data(self, data_seq, part_seq, split_seq):
        cfg = self.config
        data_clients = cfg.roster.fair + cfg.roster.selfish
        pool_n = data_clients * cfg.data.samples_per_client
        if cfg.data.source == "synthetic":
            full = generate_synthetic(
                cfg.data.num_classes, cfg.data.input_dim,
                pool_n + cfg.data.holdout_samples, cfg.data.separation,
                _seed_int(data_seq))
        else:
            full = load_idx(cfg.data.images_path, cfg.data.labels_path)
            if cfg.model.input_dim != full.input_dim:
                raise ConfigError(
                    f"model.input_dim: {cfg.model.input_dim} != IDX image dim {full.input_dim}")
            if len(full) < pool_n + cfg.data.holdout_samples:
                raise ConfigError(
                    f"data: IDX dataset has {len(full)} samples, "
                    f"need {pool_n + cfg.data.holdout_samples}")
        split_rng = np.random.default_rng(split_seq)
        order = split_rng.permutation(len(full))
        pool = full.subset(order[:pool_n])
        holdout = full.subset(order[pool_n:pool_n + cfg.data.holdout_samples])
        shards: list[Dataset] = []
        if data_clients:
            spec = PartitionSpec(data_clients, cfg.data.samples_per_client,
                                 cfg.data.mode, cfg.data.non_iid_concentration,
                                 _seed_int(part_seq))
            shards = partition(pool, spec)
        return shards[:cfg.roster.fair], shards[cfg.roster.fair:], holdout

    # -- round phases ------------------------------------------------------

    def _consume_audits(self):
        """Score the previous round's uploads and eliminate low contributors."""
        uploads_prev, theta_then, theta_before = self._pending_audit
        auditors = [c for c in self.clients
                    if not c.eliminated and c.audit_dataset is not None]
        model = self.config.model
        alpha = self.config.defense.alpha
        acc_curr = {a.id: accuracy(theta_then, model, a.audit_dataset)
                    for a in auditors}
        matrix = AuditMatrix(round=self.round_index)
        for target_id, upload in uploads_prev.items():
            solo = theta_before + upload
            for a in auditors:
                if a.id != target_id:
                    matrix.add(a.id, target_id,
                               acc_curr[a.id] - accuracy(solo, model, a.audit_dataset))
            self.ledger.contributions[target_id] = contribution_step(
                self.ledger.contributions[target_id],
                matrix.reports_for(target_id), alpha)
        self.last_audit_matrix = matrix
        if self.config.defense.threshold_mode == "initial":
            n_thr = self.initial_roster_size
        else:
            n_thr = len(self.ledger.active_ids())
        newly = eliminate_low_contributors(self.ledger, self.config.defense.beta, n_thr)
        for c in self.clients:
            if c.id in newly:
                c.eliminated = True
        return newly

    def _rffl_score(self, uploads: dict[int, np.ndarray], delta: np.ndarray):
        alpha = self.config.defense.alpha
        for cid, upload in uploads.items():
            self.ledger.contributions[cid] = cosine_contribution_step(
                self.ledger.contributions[cid], delta, upload, alpha)
        threshold = self.config.defense.rffl_threshold
        if threshold is None:
            threshold = 1.0 / (3.0 * self.initial_roster_size)
        newly = {cid for cid in self.ledger.active_ids()
                 if self.ledger.contributions[cid] < threshold}
        self.ledger.eliminated |= newly
        for c in self.clients:
            if c.id in newly:
                c.eliminated = True
        return newly

    def _aggregate(self, uploads: dict[int, np.ndarray],
                   active: list[Client]) -> np.ndarray:
        vectors = [uploads[c.id] for c in active]
        agg = self.config.aggregator
        if agg.kind == "fedavg":
            weights = [float(c.declared_samples) for c in active]
            return aggregation.fedavg(vectors, weights)
        if agg.kind == "median":
            return aggregation.coordinate_median(vectors)
        if agg.kind == "trimmed_mean":
            return aggregation.trimmed_mean(vectors, agg.trim_fraction)
        # signsgd consumes gradients; uploads are update vectors, so feed the
        # implied pseudo-gradients -delta/eta
        pseudo = [-v / self.config.eta for v in vectors]
        return aggregation.signsgd_aggregate(pseudo, self.config.eta)

    def _compute_updates(self, t: int, active: list[Client]) -> dict[int, np.ndarray]:
        """Per-client raw updates; active fair clients train as one batch
        (bitwise-equal to per-client training, see model.train_clients)."""
        cfg = self.config
        updates: dict[int, np.ndarray] = {}
        fair_active = [c for c in active if c.kind == "fair"]
        if len(fair_active) > 1 and cfg.local_epochs > 0:
            features = np.stack([c.shard.features for c in fair_active])
            labels = np.stack([c.shard.labels for c in fair_active])
            if cfg.local_batch_size is None:
                perms = None
            else:
                # shuffles drawn per client from its own stream, in id order,
                # exactly as the per-client path would draw them
                perms = np.stack([
                    epoch_permutations(len(c.shard), cfg.local_epochs,
                                       self.client_rngs[c.id])
                    for c in fair_active])
            trained = train_clients(self.params, cfg.model, features, labels,
                                    cfg.eta, cfg.local_epochs, perms,
                                    cfg.local_batch_size)
            for i, c in enumerate(fair_active):
                updates[c.id] = trained[i] - self.params
            rest = [c for c in active if c.kind != "fair"]
        else:
            rest = active
        for c in rest:
            updates[c.id] = c.compute_update(t, self.params, self.alloc, cfg.model,
                                             cfg.eta, cfg.local_epochs,
                                             self.client_rngs[c.id])
        return {c.id: updates[c.id] for c in active}

    def run_round(self) -> RoundLog:
        """Run one full round and return its log."""
        cfg = self.config
        t = self.round_index
        newly: set[int] = set()
        if cfg.defense.kind == "pass" and self._pending_audit is not None:
            newly = self._consume_audits()

        active = [c for c in self.clients if not c.eliminated]
        if not active:
            raise AllClientsEliminated("no active clients remain")

        uploads: dict[int, np.ndarray] = {}
        raw_updates = self._compute_updates(t, active)
        for c in active:
            uploads[c.id] = apply_privacy(raw_updates[c.id], cfg.privacy,
                                          self.privacy_rngs[c.id])

        if self.alloc is not None and cfg.defense.kind == "pass":
            # an echoed allocation applied to prev_params reproduces params
            # bitwise, so its audit reports are exactly zero
            self._pending_audit = (uploads, self.params, self.prev_params)
        else:
            self._pending_audit = None

        delta = self._aggregate(uploads, active)
        self.prev_params = self.params
        self.params = self.params + delta
        self.alloc = delta

        if cfg.defense.kind == "rffl":
            newly |= self._rffl_score(uploads, delta)

        if cfg.defense.kind == "pass" and t >= 1:
            prune_gamma = cfg.privacy.prune_rate if cfg.privacy.prune_mode == "mask" else 0.0
            comm = comm_cost(len(active), prune_gamma, self.dim)
        else:
            comm = len(active) * self.dim

        log = RoundLog(
            round=t,
            global_accuracy=accuracy(self.params, cfg.model, self.holdout),
            contributions=dict(self.ledger.contributions),
            newly_eliminated=tuple(sorted(newly)),
            n_active=len(active),
            comm_scalars=comm,
        )
        self.logs.append(log)
        self.ledger.snapshot()
        self.round_index += 1
        return log

    def run(self) -> ExperimentResult:
        for _ in range(self.config.rounds):
            try:
                self.run_round()
            except AllClientsEliminated:
                self.halted_early = True
                break
        return ExperimentResult(
            config=self.config,
            rounds=tuple(self.logs),
            fair_ids=self.fair_ids,
            fr_ids=self.fr_ids,
            eliminated=tuple(sorted(self.ledger.eliminated)),
            dsr=defense_success_rate(self.ledger.eliminated, set(self.fr_ids)),
            fpr=false_positive_rate(self.ledger.eliminated, set(self.fair_ids)),
            total_comm_scalars=sum(log.comm_scalars for log in self.logs),
            halted_early=self.halted_early,
        )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Validate, build, and run one experiment; deterministic per seed."""
    return Simulation(config).run()


# -- parameter sweeps ------------------------------------------------------

SWEEPABLE = ("beta", "gamma", "noise_variance", "fr_count")


def _with_fr_count(config: ExperimentConfig, count: int) -> ExperimentConfig:
    roster = config.roster
    nonzero = [k for k in ("plain", "disguised", "anonymous", "selfish")
               if getattr(roster, k) > 0]
    if len(nonzero) != 1:
        raise ConfigError(
            "sweep.fr_count: roster must have exactly one free-rider kind to sweep")
    return replace(config, roster=replace(roster, **{nonzero[0]: count}))


def sweep_experiment(base: ExperimentConfig, sweep: dict) -> list[dict]:
    """Run the cartesian grid over any of beta / gamma / noise_variance /
    fr_count; one result row per combination, base seed reused throughout."""
    unknown = set(sweep) - set(SWEEPABLE)
    if unknown:
        raise ConfigError(f"sweep: unknown keys {sorted(unknown)}")
    if not sweep:
        raise ConfigError("sweep: at least one swept parameter required")
    keys = [k for k in SWEEPABLE if k in sweep]
    rows = []
    for combo in itertools.product(*(sweep[k] for k in keys)):
        cfg = base
        named = dict(zip(keys, combo))
        if "beta" in named:
            cfg = replace(cfg, defense=replace(cfg.defense, beta=named["beta"]))
        if "gamma" in named:
            cfg = replace(cfg, privacy=replace(cfg.privacy, prune_rate=named["gamma"]))
        if "noise_variance" in named:
            cfg = replace(cfg, privacy=replace(cfg.privacy,
                                               noise_variance=named["noise_variance"]))
        if "fr_count" in named:
            cfg = _with_fr_count(cfg, named["fr_count"])
        cfg.validate()
        result = run_experiment(cfg)
        row = dict(named)
        row.update(
            dsr=result.dsr, fpr=result.fpr,
            final_accuracy=result.final_accuracy,
            total_comm_scalars=result.total_comm_scalars,
            eliminated_count=len(result.eliminated),
        )
        rows.append(row)
    return rows


# -- gradient-leakage evaluation -------------------------------------------

@dataclass(frozen=True)
class DLGExperimentConfig:
    """Grid evaluation of the leakage attack under noise/prune settings."""

    noise_variances: tuple[float, ...] = (0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
    prune_rates: tuple[float, ...] = (0.0, 0.9)
    instances: int = 10
    iterations: int = 300
    batch_samples: int = 1
    input_dim: int = 8
    hidden_dims: tuple[int, ...] = ()
    num_classes: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.instances < 1:
            raise ValueError("instances must be >= 1")
        if self.batch_samples < 1:
            raise ValueError("batch_samples must be >= 1")

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(self.input_dim, tuple(self.hidden_dims), self.num_classes)


@dataclass(frozen=True)
class DLGCell:
    noise_variance: float
    prune_rate: float
    median_mse: float
    defended: bool
    instances: int
    diverged: int
    source: str = "simulated"


def run_dlg_experiment(cfg: DLGExperimentConfig) -> list[DLGCell]:
    """Reconstruction MSE per (noise variance, prune rate) cell.

    Each instance draws one model/batch/noise-direction/prune-mask set that
    is shared across all cells (common random numbers), so cells differ only
    by the transform strengths. A cell is defended when its median MSE
    exceeds DEFENDED_MSE_THRESHOLD.
    """
    model = cfg.model
    d = param_count(model)
    root = np.random.SeedSequence(cfg.seed)
    instance_seqs = root.spawn(cfg.instances)

    mses: dict[tuple[float, float], list[float]] = {
        (nv, pr): [] for nv in cfg.noise_variances for pr in cfg.prune_rates}
    diverged: dict[tuple[float, float], int] = {key: 0 for key in mses}

    for seq in instance_seqs:
        rng = np.random.default_rng(seq)
        params = init_params(model, _seed_int(seq.spawn(1)[0]))
        features = rng.uniform(0.0, 1.0, (cfg.batch_samples, cfg.input_dim))
        labels = rng.integers(0, cfg.num_classes, cfg.batch_samples)
        raw = Dataset(features, labels, cfg.num_classes)
        gradient = backward(params, model, raw)
        noise_direction = rng.standard_normal(d)
        masks = {pr: rng.choice(d, size=int(round(pr * d)), replace=False)
                 for pr in cfg.prune_rates}
        dlg_seed = _seed_int(seq.spawn(2)[1])

        for nv in cfg.noise_variances:
            for pr in cfg.prune_rates:
                observed = gradient + np.sqrt(nv) * noise_direction
                observed[masks[pr]] = 0.0
                try:
                    rec = dlg_reconstruct(
                        model, params, observed,
                        (cfg.batch_samples, cfg.input_dim),
                        DLGConfig(cfg.iterations, seed=dlg_seed))
                except ReconstructionDivergedError:
                    diverged[(nv, pr)] += 1
                    continue
                mses[(nv, pr)].append(reconstruction_mse(raw, rec))

    cells = []
    for nv in cfg.noise_variances:
        for pr in cfg.prune_rates:
            vals = mses[(nv, pr)]
            median = float(np.median(vals)) if vals else float("nan")
            cells.append(DLGCell(
                noise_variance=nv, prune_rate=pr, median_mse=median,
                defended=bool(median > DEFENDED_MSE_THRESHOLD),
                instances=len(vals), diverged=diverged[(nv, pr)]))
    return cells
