#!/usr/bin/env python3
"""Gate plans and truncated backpropagation.

Shows how a kL gate plan stops the backward pass at its truncation index,
which kernels actually run under each plan, and how the analytic backward
FLOP count collapses as more layers are gated off.

Run:  python demos/02_gated_backward.py
"""

import numpy as np

from wustrain import GatePlan, LayerSpec, build_network, softmax_cross_entropy

L = LayerSpec

net = build_network(
    [L.conv2d(4, 3, padding=1), L.relu(), L.maxpool2d(2),
     L.conv2d(8, 3, padding=1), L.relu(), L.maxpool2d(2),
     L.flatten(), L.dense(16), L.relu(), L.dense(4)],
    input_shape=(1, 8, 8), init_seed=7, dtype=np.float64,
)
print("parametric layers at indices:", net.parametric_indices())
print(f"weights w = {net.weight_count()}, biases b = {net.bias_count()}\n")

x = np.random.default_rng(0).standard_normal((4, 1, 8, 8))
labels = np.array([0, 1, 2, 3])

plans = {"normal": GatePlan.normal(net)}
for k in range(1, len(net.parametric_indices()) + 1):
    plans[f"wus k={k}"] = GatePlan.wus(net, k)

for name, plan in plans.items():
    logits, tape = net.forward(x, training=True, plan=plan)
    _, grad_logits = softmax_cross_entropy(logits, labels)
    grads = net.backward(tape, grad_logits, plan)
    kernels = {}
    for _, kind in net.last_backward_calls:
        kernels[kind] = kernels.get(kind, 0) + 1
    flops = net.backward_flops(plan, batch_size=4)
    print(f"{name:<10s} truncation@{plan.truncation_index:<2d} "
          f"grads={len(grads):<2d} kernel calls={kernels} "
          f"backward MACs={flops:,}")

print("\nThe gradients that are returned under a truncated plan are the same")
print("arithmetic as the full plan; only the gated-off kernels are skipped:")
plan_full, plan_1l = plans["normal"], plans["wus k=1"]
logits, tape = net.forward(x, training=True, plan=plan_full)
_, g = softmax_cross_entropy(logits, labels)
full = net.backward(tape, g, plan_full)
logits, tape = net.forward(x, training=True, plan=plan_1l)
_, g = softmax_cross_entropy(logits, labels)
gated = net.backward(tape, g, plan_1l)
key = (9, "bias")
print(f"  layer9.bias bitwise-identical: {np.array_equal(full[key], gated[key])}")
