"""SGD with momentum and weight decay that honors gate plans.

A step touches exactly the gated-on parameter tensors: gated-off parameters
are neither read nor written, take no decay, and their momentum buffers stay
untouched, so a skipped tensor is bitwise-identical after any number of steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .network import GatePlan, Network


@dataclass
class SgdConfig:
    learning_rate_init: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    step_size_epochs: int = 30
    gamma: float = 0.1
    batch_size: int = 128
    epochs: int = 200

    def validate(self) -> "SgdConfig":
        if self.learning_rate_init < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate, momentum and weight decay must be non-negative")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.step_size_epochs < 1:
            raise ConfigError(f"step_size_epochs must be >= 1, got {self.step_size_epochs}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        return self


def lr_at_epoch(cfg: SgdConfig, epoch: int) -> float:
    """Step schedule: divide the initial rate by 1/gamma every step_size epochs."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return cfg.learning_rate_init * cfg.gamma ** (epoch // cfg.step_size_epochs)


@dataclass(frozen=True)
class UpdateCounts:
    """Parameter elements written by one step, split by class."""

    weights: int
    biases: int

    @property
    def total(self) -> int:
        return self.weights + self.biases


class SgdState:
    """Per-parameter momentum buffers, zero-initialized."""

    def __init__(self, buffers: dict):
        self.buffers = buffers

    @classmethod
    def for_network(cls, net: Network) -> "SgdState":
        return cls({
            (i, name): np.zeros_like(p) for i, name, p in net.param_items()
        })

    def reset_entries(self, entries) -> None:
        for key in entries:
            self.buffers[key][...] = 0


def sgd_step(net: Network, grads: dict, plan: GatePlan, state: SgdState,
             cfg: SgdConfig, lr: float) -> UpdateCounts:
    """Apply one momentum-SGD update to the gated-on parameters.

    Per tensor: g' = g + weight_decay * p (weight-class only), v <- momentum * v + g',
    p <- p - lr * v. Returns the element counts written per class.
    """
    expected = plan.param_entries(net)
    if set(grads) != expected:
        raise ContractError(
            f"gradient set {sorted(grads)} does not match plan entries {sorted(expected)}"
        )
    weights_written = 0
    biases_written = 0
    for (i, name), g in grads.items():
        p = net.layers[i].params[name]
        if name == "weight" and cfg.weight_decay:
            g = g + cfg.weight_decay * p
        v = state.buffers[(i, name)]
        v *= cfg.momentum
        v += g
        p -= lr * v
        if name == "weight":
            weights_written += p.size
        else:
            biases_written += p.size
    return UpdateCounts(weights=int(weights_written), biases=int(biases_written))
