import hashlib
import struct

import numpy as np
import pytest

from wustrain import tensor_core as tc
from wustrain.errors import BuildError, ConfigError, ContractError, ShapeError
from wustrain.network import (
    GatePlan,
    LayerSpec,
    build_network,
    load_parameters,
    load_snapshot,
    save_snapshot,
    softmax_cross_entropy,
)

from gradcheck import build_margin_safe, check_network_grads

L = LayerSpec


def small_cnn_specs():
    return [
        L.conv2d(3, 3, stride=1, padding=1), L.relu(), L.maxpool2d(2),
        L.flatten(), L.dense(4),
    ]


def bn_cnn_specs():
    return [
        L.conv2d(3, 3, stride=1, padding=1), L.batchnorm2d(), L.relu(),
        L.maxpool2d(2), L.flatten(), L.dense(4),
    ]


def build_small_cnn(seed, dtype=np.float64, specs=None):
    return build_network(specs or small_cnn_specs(), (2, 6, 6), seed, dtype=dtype)


class TestBuild:
    def test_deterministic_in_seed(self):
        a = build_network([L.dense(2)], (4,), init_seed=7)
        b = build_network([L.dense(2)], (4,), init_seed=7)
        for (_, _, pa), (_, _, pb) in zip(a.param_items(), b.param_items()):
            assert np.array_equal(pa, pb)

    def test_different_seed_differs(self):
        a = build_network([L.dense(2)], (4,), init_seed=7)
        b = build_network([L.dense(2)], (4,), init_seed=8)
        assert not np.array_equal(a.layers[0].params["weight"], b.layers[0].params["weight"])

    def test_biases_start_at_zero(self):
        net = build_small_cnn(0)
        for i, name, p in net.param_items():
            if name == "bias":
                assert not p.any()

    def test_batchnorm_init(self):
        net = build_network(bn_cnn_specs(), (2, 6, 6), 0)
        bn = net.layers[1]
        assert np.array_equal(bn.params["weight"], np.ones(3))
        assert np.array_equal(bn.params["bias"], np.zeros(3))
        assert np.array_equal(bn.buffers["running_mean"], np.zeros(3))
        assert np.array_equal(bn.buffers["running_var"], np.ones(3))

    def test_parameter_counts_dense(self):
        net = build_network([L.dense(5)], (10,), init_seed=0)
        assert net.weight_count() == 50
        assert net.bias_count() == 5

    def test_shape_chain_violation_names_layer(self):
        with pytest.raises(BuildError, match="layer 1"):
            build_network([L.flatten(), L.conv2d(2, 3)], (2, 6, 6), 0)

    def test_logits_must_be_flat(self):
        with pytest.raises(BuildError, match="class-logit"):
            build_network([L.conv2d(2, 3, padding=1)], (2, 6, 6), 0)

    def test_pool_window_too_large(self):
        with pytest.raises(BuildError):
            build_network([L.maxpool2d(8), L.flatten(), L.dense(2)], (1, 4, 4), 0)


class TestForward:
    def test_identity_dense_network(self):
        net = build_network([L.dense(3)], (3,), init_seed=0)
        net.layers[0].params["weight"][...] = np.eye(3)
        x = np.array([[1.0, -2.0, 3.0]], dtype=np.float32)
        logits, _ = net.forward(x, training=False)
        np.testing.assert_array_equal(logits, x)

    def test_eval_forward_is_pure(self):
        net = build_network(bn_cnn_specs(), (2, 6, 6), 1)
        x = np.random.default_rng(0).standard_normal((3, 2, 6, 6))
        first, _ = net.forward(x, training=False)
        rm = net.layers[1].buffers["running_mean"].copy()
        second, _ = net.forward(x, training=False)
        np.testing.assert_array_equal(first, second)
        np.testing.assert_array_equal(rm, net.layers[1].buffers["running_mean"])

    def test_training_forward_updates_running_stats(self):
        net = build_network(bn_cnn_specs(), (2, 6, 6), 1)
        x = np.random.default_rng(0).standard_normal((3, 2, 6, 6))
        net.forward(x, training=True, plan=GatePlan.wus(net, 1))
        assert net.layers[1].buffers["running_mean"].any()

    def test_batch_shape_mismatch(self):
        net = build_small_cnn(0)
        with pytest.raises(ShapeError):
            net.forward(np.zeros((1, 2, 5, 5)))

    def test_composition_matches_hand_kernel_sequence(self):
        net = build_small_cnn(5, dtype=np.float64)
        x = np.random.default_rng(5).standard_normal((2, 2, 6, 6))
        logits, _ = net.forward(x, training=False)

        conv = net.layers[0]
        h = tc.conv2d(x, conv.params["weight"], conv.params["bias"], 1, 1)
        h = tc.relu(h)
        h, _ = tc.maxpool2d(h, 2, 2)
        h = h.reshape(2, -1)
        expected = tc.matmul(h, net.layers[4].params["weight"]) + net.layers[4].params["bias"]
        np.testing.assert_allclose(logits, expected, atol=1e-12)


class TestBackward:
    def test_normal_plan_matches_finite_differences(self):
        net, x = build_margin_safe(
            lambda s: build_small_cnn(s, specs=bn_cnn_specs()),
            seed=3,
            x_maker=lambda s: np.random.default_rng(s).standard_normal((3, 2, 6, 6)),
        )
        labels = np.array([0, 1, 2])
        check_network_grads(net, x, labels)

    def test_one_layer_plan_returns_single_bitwise_entry(self):
        net = build_small_cnn(2)
        x = np.random.default_rng(2).standard_normal((3, 2, 6, 6))
        labels = np.array([0, 1, 3])

        plan_full = GatePlan.normal(net)
        logits, tape = net.forward(x, training=True, plan=plan_full)
        _, grad_logits = softmax_cross_entropy(logits, labels)
        full = net.backward(tape, grad_logits, plan_full)

        plan_1l = GatePlan.wus(net, 1)
        logits2, tape2 = net.forward(x, training=True, plan=plan_1l)
        _, grad_logits2 = softmax_cross_entropy(logits2, labels)
        gated = net.backward(tape2, grad_logits2, plan_1l)

        assert set(gated) == {(4, "bias")}
        assert np.array_equal(gated[(4, "bias")], full[(4, "bias")])

    def test_all_gates_off_runs_no_kernels(self):
        net = build_small_cnn(0)
        x = np.random.default_rng(0).standard_normal((2, 2, 6, 6))
        plan = GatePlan.disabled(net)
        logits, tape = net.forward(x, training=True, plan=plan)
        grads = net.backward(tape, np.ones_like(logits), plan)
        assert grads == {}
        assert net.last_backward_calls == []

    @pytest.mark.parametrize("k", [1, 2])
    def test_truncation_soundness(self, k):
        specs = [L.conv2d(2, 3, padding=1), L.relu(), L.flatten(), L.dense(6), L.relu(),
                 L.dense(3)]
        net = build_network(specs, (1, 4, 4), init_seed=k, dtype=np.float64)
        x = np.random.default_rng(k).standard_normal((2, 1, 4, 4))
        labels = np.array([0, 2])

        plan_full = GatePlan.normal(net)
        logits, tape = net.forward(x, training=True, plan=plan_full)
        _, g = softmax_cross_entropy(logits, labels)
        full = net.backward(tape, g, plan_full)

        plan_k = GatePlan.wus(net, k)
        logits2, tape2 = net.forward(x, training=True, plan=plan_k)
        _, g2 = softmax_cross_entropy(logits2, labels)
        gated = net.backward(tape2, g2, plan_k)

        assert set(gated) == plan_k.param_entries(net)
        for key, value in gated.items():
            assert np.array_equal(value, full[key]), key
        assert all(kind != "weight_grad" for _, kind in net.last_backward_calls)
        assert all(i >= plan_k.truncation_index for i, _ in net.last_backward_calls)

    def test_tape_plan_mismatch_raises(self):
        net = build_small_cnn(0)
        x = np.random.default_rng(0).standard_normal((2, 2, 6, 6))
        _, tape = net.forward(x, training=True, plan=GatePlan.wus(net, 1))
        with pytest.raises(ContractError):
            net.backward(tape, np.ones((2, 4)), GatePlan.normal(net))

    def test_eval_tape_rejected(self):
        net = build_small_cnn(0)
        x = np.random.default_rng(0).standard_normal((2, 2, 6, 6))
        logits, tape = net.forward(x, training=False)
        with pytest.raises(ContractError):
            net.backward(tape, np.ones_like(logits), GatePlan.normal(net))

    def test_grad_logits_shape_checked(self):
        net = build_small_cnn(0)
        x = np.random.default_rng(0).standard_normal((2, 2, 6, 6))
        _, tape = net.forward(x, training=True)
        with pytest.raises(ContractError):
            net.backward(tape, np.ones((3, 4)), GatePlan.normal(net))

    def test_plan_aware_tape_drops_unneeded_caches(self):
        # Under 1L only the layers above the truncation point keep anything;
        # the full plan keeps a cache for every cache-bearing layer.
        net = build_network(bn_cnn_specs(), (2, 6, 6), 0)
        x = np.random.default_rng(0).standard_normal((2, 2, 6, 6))
        plan = GatePlan.wus(net, 1)
        _, tape = net.forward(x, training=True, plan=plan)
        assert all(cache is None for cache in tape.caches)

        _, tape_k2 = net.forward(x, training=True, plan=GatePlan.wus(net, 2))
        kept = [i for i, c in enumerate(tape_k2.caches) if c is not None]
        assert kept and min(kept) > GatePlan.wus(net, 2).truncation_index

        _, tape_full = net.forward(x, training=True, plan=GatePlan.normal(net))
        cache_bearing = {"relu", "maxpool2d", "batchnorm2d", "dense", "conv2d"}
        for i, layer in enumerate(net.layers):
            if layer.kind in cache_bearing:
                assert tape_full.caches[i] is not None, (i, layer.kind)


class TestGatePlan:
    def test_normal_plan(self):
        net = build_small_cnn(0)
        plan = GatePlan.normal(net)
        assert plan.truncation_index == 0
        assert all(g.grad_weights and g.grad_biases for g in plan.gates)

    def test_wus_plan_k1_gates_only_last_bias(self):
        specs = [L.dense(4), L.relu(), L.dense(4), L.relu(), L.dense(2)]
        net = build_network(specs, (3,), init_seed=0)
        assert net.parametric_indices() == [0, 2, 4]
        plan = GatePlan.wus(net, 1)
        assert plan.truncation_index == 4
        assert [g.grad_biases for g in plan.gates] == [False, False, False, False, True]
        assert not any(g.grad_weights for g in plan.gates)

    def test_wus_plan_k2(self):
        specs = [L.dense(4), L.relu(), L.dense(4), L.relu(), L.dense(2)]
        net = build_network(specs, (3,), init_seed=0)
        plan = GatePlan.wus(net, 2)
        assert plan.truncation_index == 2
        assert [g.grad_biases for g in plan.gates] == [False, False, True, False, True]
        assert not any(g.grad_weights for g in plan.gates)

    def test_depth_out_of_range(self):
        net = build_network([L.dense(2)], (3,), init_seed=0)
        with pytest.raises(ConfigError):
            GatePlan.wus(net, 2)
        with pytest.raises(ConfigError):
            GatePlan.wus(net, 0)

    @pytest.mark.parametrize("seed", range(6))
    def test_truncation_index_is_minimal_enabled(self, seed):
        from wustrain.network import LayerGates
        rng = np.random.default_rng(seed)
        gates = [LayerGates(bool(rng.integers(2)), bool(rng.integers(2))) for _ in range(7)]
        plan = GatePlan.from_gates(gates)
        enabled = [i for i, g in enumerate(gates) if g.any]
        if enabled:
            t = plan.truncation_index
            assert t == min(enabled)
            assert all(not g.any for g in gates[:t])
        else:
            assert plan.truncation_index == 7


class TestBackwardFlops:
    def test_all_gates_off_is_zero(self):
        net = build_small_cnn(0)
        assert net.backward_flops(GatePlan.disabled(net), batch_size=8) == 0

    def test_normal_dominates_wus(self):
        net = build_network(bn_cnn_specs(), (2, 6, 6), 0)
        normal = net.backward_flops(GatePlan.normal(net), batch_size=4)
        for k in range(1, len(net.parametric_indices()) + 1):
            assert net.backward_flops(GatePlan.wus(net, k), batch_size=4) < normal

    def test_monotone_in_k(self):
        net = build_network(bn_cnn_specs(), (2, 6, 6), 0)
        flops = [net.backward_flops(GatePlan.wus(net, k), batch_size=4)
                 for k in range(1, len(net.parametric_indices()) + 1)]
        assert flops == sorted(flops)

    def test_hand_counted_two_layer_dense(self):
        net = build_network([L.dense(8), L.dense(2)], (4,), init_seed=0)
        n = 3
        # layer1: bias 3*2, weight 3*8*2, input 3*8*2; layer0: bias 3*8, weight 3*4*8.
        expected = (3 * 2 + 3 * 8 * 2 + 3 * 8 * 2) + (3 * 8 + 3 * 4 * 8)
        assert net.backward_flops(GatePlan.normal(net), batch_size=n) == expected
        # 1L: only the last bias kernel runs.
        assert net.backward_flops(GatePlan.wus(net, 1), batch_size=n) == 3 * 2


class TestLayerKindGradients:
    """Finite-difference checks for each layer kind in isolation."""

    @pytest.mark.parametrize("seed", range(20))
    def test_dense(self, seed):
        net = build_network([L.dense(5), L.dense(3)], (4,), seed, dtype=np.float64)
        x = np.random.default_rng(seed).standard_normal((3, 4))
        check_network_grads(net, x, np.array([0, 1, 2]))

    @pytest.mark.parametrize("seed", range(20))
    def test_conv(self, seed):
        net = build_network([L.conv2d(2, 3, padding=1), L.flatten(), L.dense(3)],
                            (2, 4, 4), seed, dtype=np.float64)
        x = np.random.default_rng(seed).standard_normal((2, 2, 4, 4))
        check_network_grads(net, x, np.array([0, 2]))

    @pytest.mark.parametrize("seed", range(20))
    def test_relu(self, seed):
        net, x = build_margin_safe(
            lambda s: build_network([L.dense(6), L.relu(), L.dense(3)], (4,), s,
                                    dtype=np.float64),
            seed=seed,
            x_maker=lambda s: np.random.default_rng(s).standard_normal((3, 4)),
        )
        check_network_grads(net, x, np.array([0, 1, 2]))

    @pytest.mark.parametrize("seed", range(20))
    def test_maxpool(self, seed):
        net, x = build_margin_safe(
            lambda s: build_network([L.maxpool2d(2), L.flatten(), L.dense(3)],
                                    (1, 4, 4), s, dtype=np.float64),
            seed=seed,
            x_maker=lambda s: np.random.default_rng(s).standard_normal((2, 1, 4, 4)),
        )
        check_network_grads(net, x, np.array([0, 2]))

    @pytest.mark.parametrize("seed", range(20))
    def test_batchnorm(self, seed):
        net = build_network([L.conv2d(2, 3, padding=1), L.batchnorm2d(), L.flatten(),
                             L.dense(3)], (1, 4, 4), seed, dtype=np.float64)
        x = np.random.default_rng(seed).standard_normal((4, 1, 4, 4))
        check_network_grads(net, x, np.array([0, 1, 2, 0]))


class TestSnapshot:
    def test_round_trip_bitwise(self, tmp_path):
        net = build_network(bn_cnn_specs(), (2, 6, 6), 9)
        x = np.random.default_rng(1).standard_normal((3, 2, 6, 6))
        net.forward(x, training=True)  # move running stats off init values
        path = tmp_path / "net.wusm"
        save_snapshot(net, path)

        version, layer_count, tensors = load_snapshot(path)
        assert version == 1
        assert layer_count == len(net.layers)
        for name, arr in net.state_items():
            assert np.array_equal(tensors[name], arr), name

        other = build_network(bn_cnn_specs(), (2, 6, 6), 1234)
        load_parameters(other, tensors)
        for (_, a), (_, b) in zip(net.state_items(), other.state_items()):
            assert np.array_equal(a, b)

    def test_header_layout(self, tmp_path):
        net = build_network([L.dense(2)], (3,), init_seed=0)
        path = tmp_path / "net.wusm"
        save_snapshot(net, path)
        blob = path.read_bytes()
        assert blob[:4] == b"WUSM"
        version, layer_count = struct.unpack_from("<II", blob, 4)
        assert version == 1 and layer_count == 1
        (name_len,) = struct.unpack_from("<I", blob, 12)
        name = blob[16:16 + name_len].decode()
        assert name == "layer0.weight"
        pos = 16 + name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        dims = struct.unpack_from(f"<{rank}Q", blob, pos + 4)
        assert rank == 2 and dims == (3, 2)
        (tag,) = struct.unpack_from("<B", blob, pos + 4 + 8 * rank)
        assert tag == 0  # float32
        payload = blob[pos + 5 + 8 * rank:pos + 5 + 8 * rank + 24]
        np.testing.assert_array_equal(
            np.frombuffer(payload, dtype="<f4").reshape(3, 2),
            net.layers[0].params["weight"],
        )

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.wusm"
        path.write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(ContractError):
            load_snapshot(path)

    def test_truncated_payload_rejected(self, tmp_path):
        net = build_network([L.dense(2)], (3,), init_seed=0)
        path = tmp_path / "net.wusm"
        save_snapshot(net, path)
        (tmp_path / "cut.wusm").write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ContractError):
            load_snapshot(tmp_path / "cut.wusm")

    def test_float64_round_trip(self, tmp_path):
        net = build_network([L.dense(2)], (3,), init_seed=0, dtype=np.float64)
        path = tmp_path / "net64.wusm"
        save_snapshot(net, path)
        _, _, tensors = load_snapshot(path)
        assert tensors["layer0.weight"].dtype == np.float64
        assert np.array_equal(tensors["layer0.weight"], net.layers[0].params["weight"])


def checksum(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


class TestWeightImmutability:
    def test_gated_off_tensors_unchanged_over_epoch(self):
        from wustrain.data import BatchPlan, batches, synthetic_dataset
        from wustrain.optim import SgdConfig, SgdState, sgd_step

        net = build_network(bn_cnn_specs(), (2, 6, 6), 3)
        ds = synthetic_dataset(0, 60, 3, (2, 6, 6))
        plan = GatePlan.wus(net, 1)
        state = SgdState.for_network(net)
        cfg = SgdConfig(batch_size=16)
        gated_off = [(i, n) for i, n, _ in net.param_items()
                     if (i, n) not in plan.param_entries(net)]
        before = {key: checksum(net.layers[key[0]].params[key[1]]) for key in gated_off}
        before_buf = {key: checksum(state.buffers[key]) for key in gated_off}

        for images, labels in batches(ds, BatchPlan(seed=0, batch_size=16), epoch=0):
            logits, tape = net.forward(images, training=True, plan=plan)
            _, grad = softmax_cross_entropy(logits, labels)
            grads = net.backward(tape, grad, plan)
            sgd_step(net, grads, plan, state, cfg, lr=0.1)

        for key in gated_off:
            assert checksum(net.layers[key[0]].params[key[1]]) == before[key]
            assert checksum(state.buffers[key]) == before_buf[key]
