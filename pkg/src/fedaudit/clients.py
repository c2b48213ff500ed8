"""The five client behaviors: fair training plus four free-rider variants.

Free riders never touch a private shard; the selfish variant is the only one
holding data (a public dataset used for its first-round update and for
honest-looking audits). All cross-client interaction flows through the
server payload (the current global parameters and the previously allocated
global update), so clients are independent within a round.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .model import (AdamState, ModelConfig, adam_step, backward, epoch_permutations,
                    sgd_step, train, train_minibatch)

FR_ADAM_LR = 0.015
FR_ADAM_DECAY = 0.997


def fair_update(global_params: np.ndarray, config: ModelConfig, shard: Dataset,
                eta: float, local_epochs: int, batch_size: int | None = None,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Train locally for `local_epochs` epochs and return the delta.

    An epoch is one full-batch GD step by default; with batch_size set it is
    a simple-shuffle pass of minibatch SGD steps (shuffles drawn from rng).
    """
    if len(shard) == 0:
        raise ValueError("fair client needs a non-empty shard")
    if batch_size is None:
        trained = train(global_params, config, shard, eta, local_epochs)
    else:
        if rng is None:
            raise ValueError("minibatch training needs an rng for the shuffles")
        perms = epoch_permutations(len(shard), local_epochs, rng)
        trained = train_minibatch(global_params, config, shard, eta, perms, batch_size)
    return trained - global_params


def plain_fr_update(prev_global_update: np.ndarray | None, dim: int) -> np.ndarray:
    """Echo the allocated global update; zero vector before one exists."""
    if prev_global_update is None:
        return np.zeros(dim)
    return prev_global_update.copy()


def disguised_fr_update(prev_global_update: np.ndarray | None, dim: int,
                        noise_variance: float, rng: np.random.Generator) -> np.ndarray:
    """Echo plus i.i.d. Gaussian noise of the given variance."""
    base = plain_fr_update(prev_global_update, dim)
    if noise_variance == 0:
        return base
    return base + rng.normal(0.0, np.sqrt(noise_variance), dim)


def adam_echo_update(prev_global_update: np.ndarray,
                     state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One Adam step on the allocated update, with its own values as the
    pseudo-gradient. This is how the Adam-evolved free riders track the global
    trajectory without computing anything."""
    return adam_step(state, prev_global_update, prev_global_update)


class Client:
    """Base participant: id, elimination flag, and an optional audit dataset."""

    kind = "fair"
    declared_samples = 1  # nominal FedAvg weight; free riders forge the fair count

    def __init__(self, client_id: int):
        self.id = client_id
        self.eliminated = False

    @property
    def audit_dataset(self) -> Dataset | None:
        """Data this client can honestly audit peers with (None = cannot audit)."""
        return None

    def compute_update(self, round_index: int, global_params: np.ndarray,
                       prev_global_update: np.ndarray | None, config: ModelConfig,
                       eta: float, local_epochs: int,
                       rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class FairClient(Client):
    kind = "fair"

    def __init__(self, client_id: int, shard: Dataset, batch_size: int | None = None):
        super().__init__(client_id)
        self.shard = shard
        self.batch_size = batch_size
        self.declared_samples = len(shard)

    @property
    def audit_dataset(self) -> Dataset | None:
        return self.shard

    def compute_update(self, round_index, global_params, prev_global_update,
                       config, eta, local_epochs, rng):
        return fair_update(global_params, config, self.shard, eta, local_epochs,
                           self.batch_size, rng)


class PlainFreeRider(Client):
    kind = "plain"

    def __init__(self, client_id: int, declared_samples: int = 1):
        super().__init__(client_id)
        self.declared_samples = declared_samples

    def compute_update(self, round_index, global_params, prev_global_update,
                       config, eta, local_epochs, rng):
        return plain_fr_update(prev_global_update, global_params.shape[0])


class DisguisedFreeRider(Client):
    kind = "disguised"

    def __init__(self, client_id: int, noise_variance: float = 1e-2,
                 declared_samples: int = 1):
        super().__init__(client_id)
        if noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        self.noise_variance = noise_variance
        self.declared_samples = declared_samples

    def compute_update(self, round_index, global_params, prev_global_update,
                       config, eta, local_epochs, rng):
        return disguised_fr_update(prev_global_update, global_params.shape[0],
                                   self.noise_variance, rng)


class AnonymousFreeRider(Client):
    """No data at all: pure noise on round 0, Adam-evolved echoes afterwards."""

    kind = "anonymous"

    def __init__(self, client_id: int, adam_lr: float = FR_ADAM_LR,
                 adam_decay: float = FR_ADAM_DECAY, init_noise_variance: float = 1e-2,
                 declared_samples: int = 1):
        super().__init__(client_id)
        self.adam_lr = adam_lr
        self.adam_decay = adam_decay
        self.init_noise_variance = init_noise_variance
        self.declared_samples = declared_samples
        self.adam_state: AdamState | None = None

    def _evolve(self, prev_global_update: np.ndarray) -> np.ndarray:
        if self.adam_state is None:
            self.adam_state = AdamState.fresh(prev_global_update.shape[0],
                                              self.adam_lr, self.adam_decay)
        evolved, self.adam_state = adam_echo_update(prev_global_update, self.adam_state)
        return evolved

    def compute_update(self, round_index, global_params, prev_global_update,
                       config, eta, local_epochs, rng):
        if prev_global_update is None:
            return rng.normal(0.0, np.sqrt(self.init_noise_variance),
                              global_params.shape[0])
        return self._evolve(prev_global_update)


class SelfishFreeRider(Client):
    """Owns a public dataset: one genuine pretrained update on round 0, then
    Adam-evolved echoes. Audits honestly with the public data to stay
    protocol-conformant."""

    kind = "selfish"

    def __init__(self, client_id: int, public_data: Dataset,
                 pretrain_epochs: int = 5, adam_lr: float = FR_ADAM_LR,
                 adam_decay: float = FR_ADAM_DECAY, declared_samples: int | None = None):
        super().__init__(client_id)
        if len(public_data) == 0:
            raise ValueError("selfish free rider needs non-empty public data")
        self.public_data = public_data
        self.pretrain_epochs = pretrain_epochs
        self.adam_lr = adam_lr
        self.adam_decay = adam_decay
        self.declared_samples = declared_samples if declared_samples is not None else len(public_data)
        self.adam_state: AdamState | None = None

    @property
    def audit_dataset(self) -> Dataset | None:
        return self.public_data

    def compute_update(self, round_index, global_params, prev_global_update,
                       config, eta, local_epochs, rng):
        if round_index == 0 or prev_global_update is None:
            return fair_update(global_params, config, self.public_data, eta,
                               self.pretrain_epochs)
        if self.adam_state is None:
            self.adam_state = AdamState.fresh(prev_global_update.shape[0],
                                              self.adam_lr, self.adam_decay)
        evolved, self.adam_state = adam_echo_update(prev_global_update, self.adam_state)
        return evolved


FREE_RIDER_KINDS = ("plain", "disguised", "anonymous", "selfish")
