"""Phase controller for weight-update skipping.

The controller is a small finite-state machine driven once per epoch by the
validation accuracy:

  WARMUP          normal training until the accuracy curve settles: when two
                  successive epochs both show a rolling standard deviation of
                  validation accuracy below the threshold, the next epoch is
                  latched as the initial epoch and the WUS phase begins.
  WUS_PHASE       weight gradients/updates are skipped; only the biases of the
                  last depth_k parametric layers train. The best validation
                  accuracy is tracked with tolerance delta; `patience`
                  consecutive non-improving epochs trigger a normal interlude
                  (variant WUS), or a learning-rate change does (variant
                  WUS_LR, patience machinery disabled).
  NORMAL_INTERLUDE a full-update recovery period of normal_interlude_epochs
                  epochs (default one), after which WUS resumes.

BASELINE ignores all of the above and always emits the all-on plan. The
controller is a pure function of its inputs: replaying a recorded
(accuracy, lr_changed) trace reproduces the phase sequence exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .network import GatePlan, Network


class Variant(str, enum.Enum):
    BASELINE = "baseline"
    WUS = "wus"
    WUS_LR = "wus-lr"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        normalized = str(text).strip().lower().replace("_", "-")
        for member in cls:
            if member.value == normalized:
                return member
        raise ConfigError(f"unknown variant {text!r}; expected baseline, wus or wus-lr")


class Phase(str, enum.Enum):
    NORMAL = "normal"        # baseline training, never gated
    WARMUP = "warmup"        # pre-initial-epoch normal training
    WUS = "wus"              # weight updates skipped
    INTERLUDE = "interlude"  # temporary full-update recovery

    @property
    def full_update(self) -> bool:
        return self is not Phase.WUS


@dataclass
class ControllerConfig:
    variant: Variant = Variant.WUS
    std_threshold: float = 0.71
    std_window: int = 5
    patience: int = 7
    delta: float = 0.0
    depth_k: int = 1
    normal_interlude_epochs: int = 1

    def validate(self) -> "ControllerConfig":
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.std_threshold <= 0:
            raise ConfigError(f"std_threshold must be > 0, got {self.std_threshold}")
        if self.std_window < 1:
            raise ConfigError(f"std_window must be >= 1, got {self.std_window}")
        if self.depth_k < 1:
            raise ConfigError(f"depth_k must be >= 1, got {self.depth_k}")
        if self.normal_interlude_epochs < 1:
            raise ConfigError(
                f"normal_interlude_epochs must be >= 1, got {self.normal_interlude_epochs}"
            )
        return self


@dataclass
class ControllerState:
    phase: Phase = Phase.WARMUP
    initial_epoch: int | None = None
    best_accuracy: float | None = None
    counter: int = 0
    previous_epoch: int | None = None
    accuracy_history: list = field(default_factory=list)
    interlude_remaining: int = 0
    next_expected_epoch: int = 0


@dataclass(frozen=True)
class PhaseDecision:
    """Phase effective for the NEXT epoch, with its gate plan and trigger."""

    phase: Phase
    plan: GatePlan
    reason: str
    std: float | None
    counter: int

    def event(self, epoch: int, lr: float) -> dict:
        return {
            "epoch": epoch,
            "phase": self.phase.value,
            "reason": self.reason,
            "std": self.std,
            "counter": self.counter,
            "lr": lr,
        }


def rolling_std(history, window: int) -> float:
    """Population standard deviation of the last min(window, len) values."""
    if len(history) == 0:
        raise ContractError("rolling_std needs at least one accuracy value")
    tail = np.asarray(history[-window:], dtype=np.float64)
    return float(tail.std())


def detect_initial_epoch(state: ControllerState, cfg: ControllerConfig,
                         epoch: int) -> int | None:
    """Latch the epoch after two successive sub-threshold accuracy stds.

    Called after the epoch's accuracy is appended to the history. A standard
    deviation over fewer than two values is degenerate and never counts, so
    the earliest possible trigger is epoch 2.
    """
    if state.initial_epoch is not None:
        return None
    if epoch < 2:
        return None
    history = state.accuracy_history
    std_prev = rolling_std(history[:-1], cfg.std_window)
    std_now = rolling_std(history, cfg.std_window)
    if std_prev < cfg.std_threshold and std_now < cfg.std_threshold:
        state.initial_epoch = epoch + 1
        return state.initial_epoch
    return None


def gate_plan_for(phase: Phase, depth_k: int, net: Network) -> GatePlan:
    """All gates on outside the WUS phase; bias-only last-k gates inside it."""
    if phase is Phase.WUS:
        return GatePlan.wus(net, depth_k)
    return GatePlan.normal(net)


class PhaseController:
    """Drives phase decisions for one training run."""

    def __init__(self, cfg: ControllerConfig, net: Network):
        cfg.validate()
        parametric = len(net.parametric_indices())
        if cfg.depth_k > parametric:
            raise ConfigError(
                f"depth_k={cfg.depth_k} exceeds the {parametric} parametric layers"
            )
        self.cfg = cfg
        self.net = net
        self.state = ControllerState(
            phase=Phase.NORMAL if cfg.variant is Variant.BASELINE else Phase.WARMUP
        )

    def plan_for_epoch(self) -> GatePlan:
        """Gate plan for the epoch about to run (current phase)."""
        return gate_plan_for(self.state.phase, self.cfg.depth_k, self.net)

    def _track_best(self, accuracy: float) -> bool:
        """Algorithm-1 best/counter update; returns True when patience trips."""
        st = self.state
        if st.best_accuracy is None:
            st.best_accuracy = accuracy
            return False
        if accuracy < st.best_accuracy + self.cfg.delta:
            st.counter += 1
            if st.counter >= self.cfg.patience:
                st.counter = 0
                return True
        else:
            st.best_accuracy = accuracy
            st.counter = 0
        return False

    def on_validation_end(self, accuracy: float, epoch: int,
                          lr_changed: bool = False) -> PhaseDecision:
        """Consume one epoch's validation accuracy (percent); decide the next phase."""
        st, cfg = self.state, self.cfg
        if epoch != st.next_expected_epoch:
            raise ContractError(
                f"epochs must arrive in order: expected {st.next_expected_epoch}, got {epoch}"
            )
        st.next_expected_epoch = epoch + 1
        st.accuracy_history.append(float(accuracy))

        if cfg.variant is Variant.BASELINE:
            return self._decide(Phase.NORMAL, "baseline", None)

        if st.phase is Phase.WARMUP:
            detected = detect_initial_epoch(st, cfg, epoch)
            std = rolling_std(st.accuracy_history, cfg.std_window)
            if detected is not None and detected == epoch + 1:
                return self._decide(Phase.WUS, "initial_epoch", std)
            return self._decide(Phase.WARMUP, "warmup", std)

        # Past the initial epoch the best/counter bookkeeping runs every
        # validation, interlude epochs included.
        stagnated = self._track_best(float(accuracy))

        if st.phase is Phase.INTERLUDE:
            st.interlude_remaining -= 1
            if st.interlude_remaining <= 0:
                return self._decide(Phase.WUS, "interlude_complete", None)
            return self._decide(Phase.INTERLUDE, "interlude", None)

        # Phase.WUS
        if cfg.variant is Variant.WUS_LR:
            if lr_changed:
                st.previous_epoch = epoch
                st.interlude_remaining = cfg.normal_interlude_epochs
                return self._decide(Phase.INTERLUDE, "lr_change", None)
        elif stagnated:
            st.previous_epoch = epoch
            st.interlude_remaining = cfg.normal_interlude_epochs
            return self._decide(Phase.INTERLUDE, "stagnation", None)
        return self._decide(Phase.WUS, "steady", None)

    def _decide(self, phase: Phase, reason: str, std: float | None) -> PhaseDecision:
        self.state.phase = phase
        return PhaseDecision(
            phase=phase,
            plan=gate_plan_for(phase, self.cfg.depth_k, self.net),
            reason=reason,
            std=std,
            counter=self.state.counter,
        )
