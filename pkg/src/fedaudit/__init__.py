"""fedaudit: a deterministic federated-learning simulator for studying
free-rider attacks, peer parameter audits, robust aggregation, and
gradient-leakage defenses on flat parameter vectors."""

from .aggregation import (AggregationError, coordinate_median, fedavg,
                          signsgd_aggregate, trimmed_mean)
from .clients import (AnonymousFreeRider, DisguisedFreeRider, FairClient,
                      PlainFreeRider, SelfishFreeRider, adam_echo_update,
                      disguised_fr_update, fair_update, plain_fr_update)
from .config import (AggregatorConfig, ConfigError, DataConfig, DefenseSettings,
                     ExperimentConfig, RosterConfig, config_from_dict, load_config)
from .data import (BadMagicError, CountMismatchError, Dataset, IdxFormatError,
                   PartitionSpec, TruncatedFileError, generate_synthetic,
                   load_idx, partition)
from .defense import (AuditDefenseConfig, AuditMatrix, ContributionLedger,
                      CosineDefenseConfig,
                      audit_peer_update, contribution_step,
                      cosine_contribution_step, cosine_similarity,
                      defense_success_rate, eliminate_low_contributors,
                      false_positive_rate)
from .model import (AdamState, ModelConfig, accuracy, adam_step, backward,
                    backward_soft, forward_loss, init_params, param_count,
                    sgd_step, train, unflatten)
from .privacy import (DEFENDED_MSE_THRESHOLD, DLGConfig, PrivacyConfig,
                      ReconstructionDivergedError, add_gaussian_noise,
                      apply_privacy, dlg_reconstruct, leak_gradient,
                      prune_update, reconstruction_mse)
from .scenarios import standard_config
from .simulator import (DLGCell, DLGExperimentConfig, ExperimentResult, RoundLog,
                        Simulation, comm_cost, run_dlg_experiment,
                        run_experiment, sweep_experiment)

__version__ = "0.1.0"
