"""Sequential networks with gated, truncation-aware backpropagation.

A GatePlan says, per layer, which parameter classes (weights, biases) receive
gradients this epoch. Its truncation index is the shallowest layer with any
gate enabled: backward walks from the logits down to that layer and stops, so
nothing below it pays for cotangent propagation. The gradients that are
computed under a truncated plan use exactly the same kernel arithmetic as a
full backward pass, so skipping never changes the values that do get updated.

Batchnorm's scale is treated as weight-class and its shift as bias-class;
running statistics update on every training-mode forward regardless of gating.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .errors import BuildError, ConfigError, ContractError, ShapeError

LAYER_KINDS = ("dense", "conv2d", "relu", "maxpool2d", "batchnorm2d", "flatten")

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer; geometry fields depend on kind."""

    kind: str
    units: int | None = None
    filters: int | None = None
    kernel_size: int | None = None
    stride: int | None = None
    padding: int | None = None
    window: int | None = None

    @classmethod
    def dense(cls, units: int) -> "LayerSpec":
        return cls(kind="dense", units=units)

    @classmethod
    def conv2d(cls, filters: int, kernel_size: int, stride: int = 1, padding: int = 0) -> "LayerSpec":
        return cls(kind="conv2d", filters=filters, kernel_size=kernel_size,
                   stride=stride, padding=padding)

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(kind="relu")

    @classmethod
    def maxpool2d(cls, window: int, stride: int | None = None) -> "LayerSpec":
        return cls(kind="maxpool2d", window=window, stride=window if stride is None else stride)

    @classmethod
    def batchnorm2d(cls) -> "LayerSpec":
        return cls(kind="batchnorm2d")

    @classmethod
    def flatten(cls) -> "LayerSpec":
        return cls(kind="flatten")

    _FIELDS_BY_KIND = {
        "dense": ("units",),
        "conv2d": ("filters", "kernel_size", "stride", "padding"),
        "relu": (),
        "maxpool2d": ("window", "stride"),
        "batchnorm2d": (),
        "flatten": (),
    }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind not in cls._FIELDS_BY_KIND:
            raise ConfigError(f"unknown layer kind: {kind!r}")
        allowed = cls._FIELDS_BY_KIND[kind]
        unknown = set(d) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown fields for {kind} layer: {sorted(unknown)}")
        if kind == "dense":
            return cls.dense(int(d["units"]))
        if kind == "conv2d":
            return cls.conv2d(int(d["filters"]), int(d["kernel_size"]),
                              int(d.get("stride", 1)), int(d.get("padding", 0)))
        if kind == "maxpool2d":
            window = int(d["window"])
            stride = d.get("stride")
            return cls.maxpool2d(window, None if stride is None else int(stride))
        return cls(kind=kind)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in self._FIELDS_BY_KIND[self.kind]:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


class Layer:
    """Base layer: owns params/buffers and its static in/out shapes."""

    kind = "?"

    def __init__(self, in_shape: tuple, out_shape: tuple):
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(out_shape)
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    @property
    def parametric(self) -> bool:
        return bool(self.params)

    def weight_count(self) -> int:
        return int(self.params["weight"].size) if self.parametric else 0

    def bias_count(self) -> int:
        return int(self.params["bias"].size) if self.parametric else 0

    def forward(self, x, training, keep_input_cache, keep_weight_cache):
        raise NotImplementedError

    def backward(self, grad_out, cache, need_input, need_weight, need_bias, record):
        raise NotImplementedError

    def backward_macs(self, batch, need_input, need_weight, need_bias) -> int:
        raise NotImplementedError


class DenseLayer(Layer):
    kind = "dense"

    def __init__(self, in_shape, units, rng, dtype):
        if len(in_shape) != 1:
            raise BuildError(f"dense layer needs a flat input, got shape {in_shape}")
        super().__init__(in_shape, (units,))
        fan_in = in_shape[0]
        bound = np.sqrt(6.0 / fan_in)
        self.params["weight"] = rng.uniform(-bound, bound, (fan_in, units)).astype(dtype)
        self.params["bias"] = np.zeros(units, dtype=dtype)

    def forward(self, x, training, keep_input_cache, keep_weight_cache):
        y = tc.matmul(x, self.params["weight"]) + self.params["bias"]
        return y, (x if keep_weight_cache else None)

    def backward(self, grad_out, cache, need_input, need_weight, need_bias, record):
        grads = {}
        if need_bias:
            record("bias_grad")
            grads["bias"] = grad_out.sum(axis=0)
        if need_weight:
            record("weight_grad")
            grads["weight"] = tc.matmul(cache.T, grad_out)
        grad_in = None
        if need_input:
            record("input_grad")
            grad_in = tc.matmul(grad_out, self.params["weight"].T)
        return grad_in, grads

    def backward_macs(self, batch, need_input, need_weight, need_bias):
        i, o = self.in_shape[0], self.out_shape[0]
        total = 0
        if need_bias:
            total += batch * o
        if need_weight:
            total += batch * i * o
        if need_input:
            total += batch * i * o
        return total


class Conv2dLayer(Layer):
    kind = "conv2d"

    def __init__(self, in_shape, filters, kernel_size, stride, padding, rng, dtype):
        if len(in_shape) != 3:
            raise BuildError(f"conv2d layer needs a C,H,W input, got shape {in_shape}")
        c, h, w = in_shape
        try:
            out_h = tc._conv_out_dim(h, kernel_size, stride, padding)
            out_w = tc._conv_out_dim(w, kernel_size, stride, padding)
        except ShapeError as exc:
            raise BuildError(f"conv2d geometry invalid for input {in_shape}: {exc}") from exc
        super().__init__(in_shape, (filters, out_h, out_w))
        self.stride = stride
        self.padding = padding
        fan_in = c * kernel_size * kernel_size
        bound = np.sqrt(6.0 / fan_in)
        self.params["weight"] = rng.uniform(
            -bound, bound, (filters, c, kernel_size, kernel_size)
        ).astype(dtype)
        self.params["bias"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training, keep_input_cache, keep_weight_cache):
        k = self.params["weight"]
        f, _, kh, kw = k.shape
        n = x.shape[0]
        col = tc.im2col(x, kh, kw, self.stride, self.padding)
        out = col @ k.reshape(f, -1).T + self.params["bias"]
        oh, ow = self.out_shape[1], self.out_shape[2]
        y = np.ascontiguousarray(out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))
        return y, (col if keep_weight_cache else None)

    def backward(self, grad_out, cache, need_input, need_weight, need_bias, record):
        k = self.params["weight"]
        grads = {}
        if need_bias:
            record("bias_grad")
            grads["bias"] = tc.conv2d_grad_bias(grad_out)
        if need_weight:
            record("weight_grad")
            grads["weight"] = tc.conv2d_grad_kernels(cache, grad_out, k.shape)
        grad_in = None
        if need_input:
            record("input_grad")
            input_shape = (grad_out.shape[0],) + self.in_shape
            grad_in = tc.conv2d_grad_input(k, grad_out, input_shape, self.stride, self.padding)
        return grad_in, grads

    def backward_macs(self, batch, need_input, need_weight, need_bias):
        f, oh, ow = self.out_shape
        k = self.params["weight"]
        patch = k.shape[1] * k.shape[2] * k.shape[3]
        positions = batch * oh * ow
        total = 0
        if need_bias:
            total += positions * f
        if need_weight:
            total += positions * f * patch
        if need_input:
            total += positions * f * patch
        return total


class ReluLayer(Layer):
    kind = "relu"

    def __init__(self, in_shape):
        super().__init__(in_shape, in_shape)

    def forward(self, x, training, keep_input_cache, keep_weight_cache):
        y = tc.relu(x)
        return y, ((x > 0).astype(x.dtype) if keep_input_cache else None)

    def backward(self, grad_out, cache, need_input, need_weight, need_bias, record):
        grad_in = None
        if need_input:
            record("input_grad")
            grad_in = tc.relu_grad_input(grad_out, cache)
        return grad_in, {}

    def backward_macs(self, batch, need_input, need_weight, need_bias):
        return batch * int(np.prod(self.in_shape)) if need_input else 0


class MaxPool2dLayer(Layer):
    kind = "maxpool2d"

    def __init__(self, in_shape, window, stride):
        if len(in_shape) != 3:
            raise BuildError(f"maxpool2d layer needs a C,H,W input, got shape {in_shape}")
        c, h, w = in_shape
        if window > h or window > w:
            raise BuildError(f"pool window {window} larger than input {h}x{w}")
        out_h = (h - window) // stride + 1
        out_w = (w - window) // stride + 1
        super().__init__(in_shape, (c, out_h, out_w))
        self.window = window
        self.stride = stride

    def forward(self, x, training, keep_input_cache, keep_weight_cache):
        if keep_input_cache:
            y, argmax = tc.maxpool2d(x, self.window, self.stride)
            return y, argmax
        return tc.maxpool2d_values(x, self.window, self.stride), None

    def backward(self, grad_out, cache, need_input, need_weight, need_bias, record):
        grad_in = None
        if need_input:
            record("input_grad")
            input_shape = (grad_out.shape[0],) + self.in_shape
            grad_in = tc.maxpool2d_grad_input(grad_out, cache, input_shape)
        return grad_in, {}

    def backward_macs(self, batch, need_input, need_weight, need_bias):
        return batch * int(np.prod(self.out_shape)) if need_input else 0


class BatchNorm2dLayer(Layer):
    """Per-channel batch normalization over N, H, W with learnable scale/shift."""

    kind = "batchnorm2d"

    def __init__(self, in_shape, dtype):
        if len(in_shape) != 3:
            raise BuildError(f"batchnorm2d layer needs a C,H,W input, got shape {in_shape}")
        super().__init__(in_shape, in_shape)
        c = in_shape[0]
        self.params["weight"] = np.ones(c, dtype=dtype)   # scale
        self.params["bias"] = np.zeros(c, dtype=dtype)    # shift
        self.buffers["running_mean"] = np.zeros(c, dtype=dtype)
        self.buffers["running_var"] = np.ones(c, dtype=dtype)

    def forward(self, x, training, keep_input_cache, keep_weight_cache):
        gamma = self.params["weight"]
        beta = self.params["bias"]
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            # Running stats track every training forward, gated or not.
            m = BN_MOMENTUM
            self.buffers["running_mean"] = ((1 - m) * self.buffers["running_mean"]
                                            + m * mean).astype(x.dtype)
            self.buffers["running_var"] = ((1 - m) * self.buffers["running_var"]
                                           + m * var).astype(x.dtype)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
        cache = (xhat, inv_std) if (keep_input_cache or keep_weight_cache) else None
        return y, cache

    def backward(self, grad_out, cache, need_input, need_weight, need_bias, record):
        grads = {}
        if need_bias:
            record("bias_grad")
            grads["bias"] = grad_out.sum(axis=(0, 2, 3))
        if need_weight:
            xhat, _ = cache
            record("weight_grad")
            grads["weight"] = (grad_out * xhat).sum(axis=(0, 2, 3))
        grad_in = None
        if need_input:
            record("input_grad")
            xhat, inv_std = cache
            n, _, h, w = grad_out.shape
            m = n * h * w
            s1 = grad_out.sum(axis=(0, 2, 3))
            s2 = (grad_out * xhat).sum(axis=(0, 2, 3))
            gamma = self.params["weight"]
            coeff = (gamma * inv_std / m)[None, :, None, None]
            grad_in = coeff * (m * grad_out - s1[None, :, None, None]
                               - xhat * s2[None, :, None, None])
        return grad_in, grads

    def backward_macs(self, batch, need_input, need_weight, need_bias):
        size = batch * int(np.prod(self.in_shape))
        total = 0
        if need_bias:
            total += size
        if need_weight:
            total += 2 * size
        if need_input:
            total += 5 * size
        return total


class FlattenLayer(Layer):
    kind = "flatten"

    def __init__(self, in_shape):
        super().__init__(in_shape, (int(np.prod(in_shape)),))

    def forward(self, x, training, keep_input_cache, keep_weight_cache):
        return x.reshape(x.shape[0], -1), None

    def backward(self, grad_out, cache, need_input, need_weight, need_bias, record):
        grad_in = None
        if need_input:
            record("input_grad")
            grad_in = grad_out.reshape((grad_out.shape[0],) + self.in_shape)
        return grad_in, {}

    def backward_macs(self, batch, need_input, need_weight, need_bias):
        return 0


@dataclass(frozen=True)
class LayerGates:
    grad_weights: bool
    grad_biases: bool

    @property
    def any(self) -> bool:
        return self.grad_weights or self.grad_biases


@dataclass(frozen=True)
class GatePlan:
    """Per-layer gradient gates plus the derived backward truncation index."""

    gates: tuple
    truncation_index: int

    @staticmethod
    def _truncation(gates) -> int:
        enabled = [i for i, g in enumerate(gates) if g.any]
        return min(enabled) if enabled else len(gates)

    @classmethod
    def from_gates(cls, gates) -> "GatePlan":
        gates = tuple(gates)
        return cls(gates=gates, truncation_index=cls._truncation(gates))

    @classmethod
    def normal(cls, net: "Network") -> "GatePlan":
        return cls.from_gates(LayerGates(True, True) for _ in net.layers)

    @classmethod
    def wus(cls, net: "Network", depth_k: int) -> "GatePlan":
        """Bias gates on the last depth_k parametric layers; all weights off."""
        parametric = net.parametric_indices()
        if not 1 <= depth_k <= len(parametric):
            raise ConfigError(
                f"depth_k={depth_k} outside 1..{len(parametric)} parametric layers"
            )
        active = set(parametric[-depth_k:])
        return cls.from_gates(
            LayerGates(False, i in active) for i in range(len(net.layers))
        )

    @classmethod
    def disabled(cls, net: "Network") -> "GatePlan":
        return cls.from_gates(LayerGates(False, False) for _ in net.layers)

    def param_entries(self, net: "Network") -> set:
        """The exact set of (layer_index, param_name) this plan trains."""
        entries = set()
        for i, layer in enumerate(net.layers):
            if not layer.parametric:
                continue
            if self.gates[i].grad_weights:
                entries.add((i, "weight"))
            if self.gates[i].grad_biases:
                entries.add((i, "bias"))
        return entries


@dataclass
class Tape:
    """Intermediates captured by forward for a matching backward pass."""

    caches: list
    kept_input: list
    kept_weight: list
    truncation_index: int
    training: bool
    logits_shape: tuple


def _cache_needs(net: "Network", plan: GatePlan | None) -> tuple:
    """Which caches forward must keep so the given plan's backward can run."""
    n = len(net.layers)
    if plan is None:
        return [True] * n, [True] * n, 0
    t = plan.truncation_index
    keep_input = [i > t for i in range(n)]
    keep_weight = [plan.gates[i].grad_weights and net.layers[i].parametric for i in range(n)]
    return keep_input, keep_weight, t


class Network:
    """Ordered layer stack; the last layer produces the class logits."""

    def __init__(self, layers, input_shape, dtype, init_seed):
        if not layers:
            raise BuildError("a network needs at least one layer")
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.init_seed = init_seed
        self.last_backward_calls: list = []

    def parametric_indices(self) -> list:
        return [i for i, layer in enumerate(self.layers) if layer.parametric]

    def weight_count(self) -> int:
        return sum(layer.weight_count() for layer in self.layers)

    def bias_count(self) -> int:
        return sum(layer.bias_count() for layer in self.layers)

    def bias_count_last_k(self, depth_k: int) -> int:
        parametric = self.parametric_indices()
        if not 1 <= depth_k <= len(parametric):
            raise ConfigError(
                f"depth_k={depth_k} outside 1..{len(parametric)} parametric layers"
            )
        return sum(self.layers[i].bias_count() for i in parametric[-depth_k:])

    def param_items(self):
        for i, layer in enumerate(self.layers):
            for name in ("weight", "bias"):
                if name in layer.params:
                    yield i, name, layer.params[name]

    def state_items(self):
        """Params then buffers, in layer order, with stable dotted names."""
        for i, layer in enumerate(self.layers):
            for name in ("weight", "bias"):
                if name in layer.params:
                    yield f"layer{i}.{name}", layer.params[name]
            for name in ("running_mean", "running_var"):
                if name in layer.buffers:
                    yield f"layer{i}.{name}", layer.buffers[name]

    def forward(self, batch: np.ndarray, training: bool = True,
                plan: GatePlan | None = None) -> tuple:
        """Run the stack; returns (logits, tape).

        When a plan is supplied, the tape only retains the intermediates that
        plan's backward will touch, which shrinks forward memory under deep
        truncation without changing any computed value.
        """
        x = np.asarray(batch, dtype=self.dtype)
        expect = (x.shape[0],) + self.input_shape
        if x.shape != expect:
            raise ShapeError(
                f"batch shape {x.shape} does not match network input {expect}",
                x.shape, expect,
            )
        keep_input, keep_weight, trunc = _cache_needs(self, plan)
        if not training:
            keep_input = [False] * len(self.layers)
            keep_weight = [False] * len(self.layers)
        caches = []
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(x, training, keep_input[i], keep_weight[i])
            caches.append(cache)
        tape = Tape(caches=caches, kept_input=keep_input, kept_weight=keep_weight,
                    truncation_index=trunc, training=training, logits_shape=x.shape)
        return x, tape

    def backward(self, tape: Tape, grad_logits: np.ndarray, plan: GatePlan) -> dict:
        """Gated backward pass from the logits down to the plan's truncation index.

        Returns {(layer_index, "weight"|"bias"): gradient} for exactly the
        gated-on parameter classes. Kernel invocations are appended to
        self.last_backward_calls as (layer_index, kind) for instrumentation.
        """
        if not tape.training:
            raise ContractError("backward requires a training-mode tape")
        if len(plan.gates) != len(self.layers):
            raise ContractError(
                f"plan covers {len(plan.gates)} layers, network has {len(self.layers)}"
            )
        if grad_logits.shape != tape.logits_shape:
            raise ContractError(
                f"grad_logits shape {grad_logits.shape} != logits shape {tape.logits_shape}"
            )
        t = plan.truncation_index
        for i, layer in enumerate(self.layers):
            need_input = i > t
            if need_input and not tape.kept_input[i]:
                raise ContractError(
                    f"tape lacks the input-gradient cache for layer {i}; "
                    "forward was run for a more truncated plan"
                )
            if plan.gates[i].grad_weights and layer.parametric and not tape.kept_weight[i]:
                raise ContractError(
                    f"tape lacks the weight-gradient cache for layer {i}; "
                    "forward was run with that gate off"
                )
        self.last_backward_calls = []
        calls = self.last_backward_calls
        grads: dict = {}
        cot = grad_logits
        for i in range(len(self.layers) - 1, t - 1, -1):
            layer = self.layers[i]
            gates = plan.gates[i]

            def record(kind, _i=i):
                calls.append((_i, kind))

            grad_in, pgrads = layer.backward(
                cot, tape.caches[i],
                need_input=i > t,
                need_weight=gates.grad_weights and layer.parametric,
                need_bias=gates.grad_biases and layer.parametric,
                record=record,
            )
            for name, g in pgrads.items():
                grads[(i, name)] = g
            cot = grad_in
        return grads

    def backward_flops(self, plan: GatePlan, batch_size: int = 1) -> int:
        """Analytic multiply-accumulate count of backward under the plan."""
        t = plan.truncation_index
        total = 0
        for i in range(len(self.layers) - 1, t - 1, -1):
            layer = self.layers[i]
            gates = plan.gates[i]
            total += layer.backward_macs(
                batch_size,
                need_input=i > t,
                need_weight=gates.grad_weights and layer.parametric,
                need_bias=gates.grad_biases and layer.parametric,
            )
        return total


_LAYER_BUILDERS = {
    "dense": lambda spec, shape, rng, dtype: DenseLayer(shape, spec.units, rng, dtype),
    "conv2d": lambda spec, shape, rng, dtype: Conv2dLayer(
        shape, spec.filters, spec.kernel_size, spec.stride, spec.padding, rng, dtype),
    "relu": lambda spec, shape, rng, dtype: ReluLayer(shape),
    "maxpool2d": lambda spec, shape, rng, dtype: MaxPool2dLayer(shape, spec.window, spec.stride),
    "batchnorm2d": lambda spec, shape, rng, dtype: BatchNorm2dLayer(shape, dtype),
    "flatten": lambda spec, shape, rng, dtype: FlattenLayer(shape),
}


def build_network(specs, input_shape, init_seed: int, dtype=np.float32) -> Network:
    """Build and initialize a network; deterministic in init_seed.

    Weights are Kaiming-uniform over the fan-in, biases start at zero,
    batchnorm scale at one and shift at zero.
    """
    rng = np.random.default_rng(init_seed)
    shape = tuple(input_shape)
    layers = []
    for i, spec in enumerate(specs):
        builder = _LAYER_BUILDERS.get(spec.kind)
        if builder is None:
            raise BuildError(f"layer {i}: unknown kind {spec.kind!r}")
        try:
            layer = builder(spec, shape, rng, np.dtype(dtype))
        except BuildError as exc:
            raise BuildError(f"layer {i} ({spec.kind}): {exc}") from exc
        layers.append(layer)
        shape = layer.out_shape
    if len(shape) != 1:
        raise BuildError(
            f"last layer must produce a class-logit vector, got shape {shape}"
        )
    return Network(layers, input_shape, dtype, init_seed)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple:
    """Mean cross-entropy over the batch; returns (loss, grad_logits)."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    eps = np.finfo(logits.dtype).tiny
    loss = -np.log(probs[np.arange(n), labels] + eps).mean()
    grad = probs
    grad[np.arange(n), labels] -= 1
    return float(loss), grad / n


def accuracy_percent(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(100.0 * np.mean(logits.argmax(axis=1) == labels))


# ---------------------------------------------------------------------------
# Parameter snapshots: flat binary format.
#   header: magic "WUSM", version u32, layer count u32 (all little-endian)
#   per tensor: name length u32, name bytes (utf-8), rank u32, dims u64 each,
#               element type tag u8 (0 = float32, 1 = float64), raw LE elements
# Tensor records are self-delimiting and run to end of file.
# ---------------------------------------------------------------------------

SNAPSHOT_MAGIC = b"WUSM"
SNAPSHOT_VERSION = 1
_TAG_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_TO_TAG = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_snapshot(net: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<II", SNAPSHOT_VERSION, len(net.layers)))
        for name, arr in net.state_items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            tag = _DTYPE_TO_TAG[np.dtype(arr.dtype)]
            fh.write(struct.pack("<B", tag))
            fh.write(np.ascontiguousarray(arr).astype(_TAG_TO_DTYPE[tag], copy=False).tobytes())


def load_snapshot(path) -> tuple:
    """Read a snapshot file; returns (version, layer_count, {name: array})."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ContractError(f"bad snapshot magic: {data[:4]!r}")
    version, layer_count = struct.unpack_from("<II", data, 4)
    tensors: dict[str, np.ndarray] = {}
    pos = 12
    while pos < len(data):
        try:
            (name_len,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", data, pos)
            pos += 8 * rank
            (tag,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dtype = _TAG_TO_DTYPE[tag]
            count = int(np.prod(dims)) if rank else 1
            nbytes = count * dtype.itemsize
            if pos + nbytes > len(data):
                raise struct.error("truncated tensor payload")
            arr = np.frombuffer(data[pos:pos + nbytes], dtype=dtype).reshape(dims)
            pos += nbytes
        except (struct.error, KeyError) as exc:
            raise ContractError(f"corrupt snapshot record at byte {pos}: {exc}") from exc
        tensors[name] = arr.copy()
    return version, layer_count, tensors


def load_parameters(net: Network, tensors: dict) -> None:
    """Assign snapshot tensors onto a structurally matching network."""
    for name, current in net.state_items():
        if name not in tensors:
            raise ContractError(f"snapshot missing tensor {name}")
        arr = tensors[name]
        if arr.shape != current.shape:
            raise ContractError(
                f"snapshot tensor {name} has shape {arr.shape}, expected {current.shape}"
            )
        current[...] = arr.astype(current.dtype)
