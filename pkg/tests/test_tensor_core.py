import numpy as np
import pytest

from wustrain import tensor_core as tc
from wustrain.errors import ShapeError

from gradcheck import fd_grads, max_rel_err
from oracles import conv2d_loop, matmul_loop, maxpool_loop


class TestMatmul:
    def test_identity_case(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        b = np.array([[3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(tc.matmul(a, b), b)

    def test_hand_dot_product(self):
        out = tc.matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        np.testing.assert_array_equal(out, [[11.0]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((7, 5))
        b = rng.standard_normal((5, 3))
        np.testing.assert_allclose(tc.matmul(a, b), matmul_loop(a, b), atol=1e-12)

    def test_shape_mismatch_carries_shapes(self):
        with pytest.raises(ShapeError) as exc:
            tc.matmul(np.zeros((7, 5)), np.zeros((3, 4)))
        assert exc.value.shapes == ((7, 5), (3, 4))

    @pytest.mark.parametrize("seed", range(5))
    def test_identity_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((4, 4))
        eye = np.eye(4)
        np.testing.assert_array_equal(tc.matmul(a, eye), a)
        np.testing.assert_array_equal(tc.matmul(eye, a), a)


class TestConv2d:
    def test_identity_kernel(self):
        x = np.arange(9.0).reshape(1, 1, 3, 3)
        k = np.ones((1, 1, 1, 1))
        out = tc.conv2d(x, k, np.zeros(1))
        np.testing.assert_array_equal(out, x)

    def test_unit_kernel_identity_per_channel(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 3, 4, 4))
        k = np.zeros((3, 3, 1, 1))
        for c in range(3):
            k[c, c, 0, 0] = 1.0
        np.testing.assert_array_equal(tc.conv2d(x, k, np.zeros(3)), x)

    def test_bias_broadcast(self):
        out = tc.conv2d(np.zeros((1, 1, 4, 4)), np.ones((1, 1, 3, 3)), np.array([2.5]))
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 2.5))

    def test_matches_loop_oracle(self):
        # 9x9 rather than 8x8 so the strided geometry divides exactly.
        rng = np.random.default_rng(42)
        x = rng.standard_normal((2, 3, 9, 9))
        k = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = tc.conv2d(x, k, b, stride=2, padding=1)
        np.testing.assert_allclose(out, conv2d_loop(x, k, b, stride=2, padding=1), atol=1e-10)

    def test_matches_loop_oracle_unstrided(self):
        rng = np.random.default_rng(43)
        x = rng.standard_normal((2, 3, 8, 8))
        k = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = tc.conv2d(x, k, b, stride=1, padding=1)
        np.testing.assert_allclose(out, conv2d_loop(x, k, b, stride=1, padding=1), atol=1e-10)

    def test_non_integral_output_raises(self):
        with pytest.raises(ShapeError):
            tc.conv2d(np.zeros((1, 1, 5, 5)), np.zeros((1, 1, 2, 2)), np.zeros(1), stride=2)

    def test_kernel_exceeds_padded_input_raises(self):
        with pytest.raises(ShapeError):
            tc.conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 4, 4)), np.zeros(1))

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            tc.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 2, 2)), np.zeros(1))


class TestConv2dGrads:
    def test_zero_cotangent(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 2, 5, 5))
        k = rng.standard_normal((3, 2, 3, 3))
        gx, gk, gb = tc.conv2d_grads(x, k, np.zeros((1, 3, 3, 3)))
        assert not gx.any() and not gk.any() and not gb.any()

    def test_grad_bias_sums_ones(self):
        grad_out = np.ones((1, 2, 4, 4))
        np.testing.assert_array_equal(tc.conv2d_grad_bias(grad_out), [16.0, 16.0])

    def test_grad_out_shape_mismatch_raises(self):
        x = np.zeros((1, 1, 4, 4))
        k = np.zeros((1, 1, 3, 3))
        with pytest.raises(ShapeError):
            tc.conv2d_grads(x, k, np.zeros((1, 1, 4, 4)))

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        stride, padding = [(1, 0), (1, 1), (2, 1)][seed % 3]
        x = rng.standard_normal((2, 2, 5, 5))
        k = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        out = tc.conv2d(x, k, b, stride, padding)
        cot = rng.standard_normal(out.shape)

        def scalar():
            return float((tc.conv2d(x, k, b, stride, padding) * cot).sum())

        gx, gk, gb = tc.conv2d_grads(x, k, cot, stride, padding)
        nx, nk, nb = fd_grads(scalar, [x, k, b])
        assert max_rel_err(gx, nx) < 1e-4
        assert max_rel_err(gk, nk) < 1e-4
        assert max_rel_err(gb, nb) < 1e-4


class TestMaxPool:
    def test_single_window(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        out, argmax = tc.maxpool2d(x, 2, 2)
        np.testing.assert_array_equal(out, [[[[4.0]]]])
        assert argmax[0, 0, 0, 0] == 3  # flat position of the 4

    def test_tie_breaks_to_lowest_linear_index(self):
        x = np.full((1, 1, 4, 4), 7.0)
        out, argmax = tc.maxpool2d(x, 2, 2)
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 7.0))
        np.testing.assert_array_equal(argmax[0, 0], [[0, 2], [8, 10]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((1, 1, 6, 6))
        out, argmax = tc.maxpool2d(x, 2, 2)
        ref_out, ref_argmax = maxpool_loop(x, 2, 2)
        np.testing.assert_array_equal(out, ref_out)
        np.testing.assert_array_equal(argmax, ref_argmax)

    @pytest.mark.parametrize("seed", range(10))
    def test_overlapping_windows_match_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 2, 7, 7))
        out, argmax = tc.maxpool2d(x, 3, 2)
        ref_out, ref_argmax = maxpool_loop(x, 3, 2)
        np.testing.assert_array_equal(out, ref_out)
        np.testing.assert_array_equal(argmax, ref_argmax)

    def test_floor_truncation(self):
        x = np.arange(25.0).reshape(1, 1, 5, 5)
        out, _ = tc.maxpool2d(x, 2, 2)
        assert out.shape == (1, 1, 2, 2)

    def test_window_too_large_raises(self):
        with pytest.raises(ShapeError):
            tc.maxpool2d(np.zeros((1, 1, 2, 2)), 3, 1)

    def test_grad_scatter_routes_to_winners(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        _, argmax = tc.maxpool2d(x, 2, 2)
        grad = tc.maxpool2d_grad_input(np.array([[[[5.0]]]]), argmax, (1, 1, 2, 2))
        np.testing.assert_array_equal(grad, [[[[0.0, 0.0], [0.0, 5.0]]]])

    @pytest.mark.parametrize("window,stride", [(2, 2), (3, 2), (2, 1)])
    def test_values_path_matches_argmax_path(self, window, stride):
        x = np.random.default_rng(4).standard_normal((2, 3, 7, 7)).astype(np.float32)
        full, _ = tc.maxpool2d(x, window, stride)
        assert np.array_equal(tc.maxpool2d_values(x, window, stride), full)

    def test_grad_scatter_accumulates_overlaps(self):
        # One element wins two overlapping windows; the grads must add.
        x = np.array([[0.0, 0.0, 0.0], [0.0, 9.0, 0.0], [0.0, 0.0, 0.0]]).reshape(1, 1, 3, 3)
        _, argmax = tc.maxpool2d(x, 2, 1)
        grad = tc.maxpool2d_grad_input(np.ones((1, 1, 2, 2)), argmax, (1, 1, 3, 3))
        assert grad[0, 0, 1, 1] == 4.0
        assert grad.sum() == 4.0


class TestKernelProperties:
    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
        k = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        assert np.array_equal(tc.conv2d(x, k, b, 1, 1), tc.conv2d(x, k, b, 1, 1))
        out1 = tc.maxpool2d(x, 2, 2)
        out2 = tc.maxpool2d(x, 2, 2)
        assert np.array_equal(out1[0], out2[0]) and np.array_equal(out1[1], out2[1])
        a2 = rng.standard_normal((16, 16))
        b2 = rng.standard_normal((16, 16))
        assert np.array_equal(tc.matmul(a2, b2), tc.matmul(a2, b2))

    @pytest.mark.parametrize("seed", range(8))
    def test_finite_in_finite_out(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 2, 6, 6)) * 100
        k = rng.standard_normal((3, 2, 3, 3)) * 100
        b = rng.standard_normal(3) * 100
        out = tc.conv2d(x, k, b, 1, 1)
        assert np.isfinite(out).all()
        gx, gk, gb = tc.conv2d_grads(x, k, rng.standard_normal(out.shape), 1, 1)
        assert np.isfinite(gx).all() and np.isfinite(gk).all() and np.isfinite(gb).all()
        pooled, _ = tc.maxpool2d(x, 2, 2)
        assert np.isfinite(pooled).all()

    def test_im2col_col2im_adjoint(self):
        # <im2col(x), y> == <x, col2im(y)> for random x, y.
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2, 2, 6, 6))
        col = tc.im2col(x, 3, 3, stride=1, padding=1)
        y = rng.standard_normal(col.shape)
        lhs = float((col * y).sum())
        rhs = float((x * tc.col2im(y, x.shape, 3, 3, stride=1, padding=1)).sum())
        assert abs(lhs - rhs) < 1e-9
