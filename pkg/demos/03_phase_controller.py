#!/usr/bin/env python3
"""The phase controller as a standalone state machine.

Feeds hand-written validation-accuracy traces through the controller and
prints the resulting phase timeline: warmup until the accuracy settles, then
weight-update skipping, with one-epoch normal interludes on stagnation (or on
learning-rate changes for the wus-lr variant).

Run:  python demos/03_phase_controller.py
"""

from wustrain import (
    ControllerConfig,
    LayerSpec,
    PhaseController,
    SgdConfig,
    Variant,
    build_network,
    lr_at_epoch,
)

L = LayerSpec
net = build_network([L.dense(8), L.relu(), L.dense(4), L.relu(), L.dense(2)], (6,), 0)

SYMBOL = {"warmup": "w", "wus": "S", "interlude": "N", "normal": "n"}


def show(title, controller, accuracies, lr_changes=()):
    timeline = []
    notes = []
    for epoch, acc in enumerate(accuracies):
        timeline.append(SYMBOL[controller.state.phase.value])
        decision = controller.on_validation_end(acc, epoch, lr_changed=epoch in lr_changes)
        if decision.reason in ("initial_epoch", "stagnation", "lr_change"):
            notes.append(f"epoch {epoch:>2}: {decision.reason} -> {decision.phase.value}")
    print(f"{title}\n  {''.join(timeline)}   (w=warmup S=skip N=interlude)")
    for note in notes:
        print(f"  {note}")
    print()


# 1. Accuracy stagnates: seven consecutive non-improving epochs force one
#    normal epoch, then skipping resumes.
accuracies = [80.0] * 4 + [79.9] * 7 + [79.9] * 4
ctl = PhaseController(ControllerConfig(variant=Variant.WUS), net)
show("WUS variant, patience 7:", ctl, accuracies)

# 2. Same trace, but an improvement inside the stagnation window resets the
#    patience counter.
accuracies = [80.0] * 4 + [79.9] * 5 + [80.5] + [79.9] * 6
ctl = PhaseController(ControllerConfig(variant=Variant.WUS), net)
show("WUS variant, improvement resets the counter:", ctl, accuracies)

# 3. wus-lr: the return to normal training is driven by the lr schedule
#    (0.1 divided by 10 after 30 epochs), not by the patience rule.
sgd = SgdConfig()
changes = {e for e in range(1, 36) if lr_at_epoch(sgd, e) != lr_at_epoch(sgd, e - 1)}
ctl = PhaseController(ControllerConfig(variant=Variant.WUS_LR), net)
show("WUS+LR variant, epoch-30 schedule step:", ctl, [70.0] * 36, changes)
