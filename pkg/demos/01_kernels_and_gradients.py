#!/usr/bin/env python3
"""Tensor kernels and gradient checking, from the ground up.

Builds a small conv-relu-pool-dense stack, runs a forward pass, then verifies
the analytic backward pass against central finite differences. This is the
same machinery the test suite uses as its independent oracle.

Run:  python demos/01_kernels_and_gradients.py
"""

import numpy as np

from wustrain import GatePlan, LayerSpec, build_network, softmax_cross_entropy

L = LayerSpec

net = build_network(
    [L.conv2d(3, 3, stride=1, padding=1), L.relu(), L.maxpool2d(2),
     L.flatten(), L.dense(4)],
    input_shape=(2, 6, 6), init_seed=0, dtype=np.float64,
)
rng = np.random.default_rng(0)
x = rng.standard_normal((2, 2, 6, 6))
labels = np.array([0, 3])

logits, tape = net.forward(x, training=True)
loss, grad_logits = softmax_cross_entropy(logits, labels)
print(f"forward: logits shape {logits.shape}, loss {loss:.4f}")

plan = GatePlan.normal(net)
analytic = net.backward(tape, grad_logits, plan)
print(f"backward returned {len(analytic)} gradient tensors:")
for (layer, name), g in sorted(analytic.items()):
    print(f"  layer{layer}.{name:<7s} shape {g.shape}, |g|_max {np.abs(g).max():.4e}")


def loss_at_current_params():
    out, _ = net.forward(x, training=True)
    return softmax_cross_entropy(out, labels)[0]


# Central finite differences on a few randomly chosen parameter coordinates.
h = 1e-3
rng = np.random.default_rng(1)
print("\nspot-checking against central finite differences (h=1e-3):")
for (layer, name), g in sorted(analytic.items()):
    p = net.layers[layer].params[name]
    flat = p.ravel()
    i = int(rng.integers(flat.size))
    orig = flat[i]
    flat[i] = orig + h
    f_plus = loss_at_current_params()
    flat[i] = orig - h
    f_minus = loss_at_current_params()
    flat[i] = orig
    numeric = (f_plus - f_minus) / (2 * h)
    analytic_i = g.ravel()[i]
    rel = abs(analytic_i - numeric) / max(abs(analytic_i), abs(numeric), 1e-8)
    print(f"  layer{layer}.{name:<7s}[{i:3d}]  analytic {analytic_i:+.6e}  "
          f"numeric {numeric:+.6e}  rel err {rel:.2e}")
