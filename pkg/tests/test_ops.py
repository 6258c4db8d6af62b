"""Candidate operation catalog."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asapnas import tensor as tn
from asapnas.ops import (DEFAULT_NAMES, REGISTRY, OpSet, apply, default_opset,
                         make_opset)
from asapnas.tensor import ShapeError, Tensor


class TestDefaultOpset:
    def test_seven_candidates(self):
        assert default_opset(4).N == 7
        assert default_opset(4).names == list(DEFAULT_NAMES)

    def test_zero_is_opt_in(self):
        ops = default_opset(4, include_zero=True)
        assert ops.N == 8 and "zero" in ops.names
        assert "zero" not in default_opset(4).names

    def test_width_validation(self):
        with pytest.raises(ValueError):
            default_opset(0)

    def test_opset_needs_two_unique_ops(self):
        with pytest.raises(ValueError):
            OpSet([REGISTRY["identity"]], 4)
        with pytest.raises(ValueError):
            OpSet([REGISTRY["identity"], REGISTRY["identity"]], 4)
        with pytest.raises(KeyError):
            make_opset(["identity", "conv3x3"], 4)

    def test_parameter_partition(self):
        for name, op in REGISTRY.items():
            inst = op.build(5, np.random.default_rng(0))
            n = sum(p.size for p in inst.params)
            assert n == op.param_count(5)
            assert (n > 0) == op.parameterized, name


class TestApply:
    def test_identity(self):
        x = Tensor([[1.0, 2.0, 3.0, 4.0]])
        np.testing.assert_array_equal(apply(REGISTRY["identity"], x).data, x.data)

    def test_zero(self, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        np.testing.assert_array_equal(apply(REGISTRY["zero"], x).data, np.zeros((3, 4)))

    def test_dense_with_identity_weights(self, rng):
        inst = REGISTRY["dense"].build(4, rng)
        w, b = inst.params
        w.data[...] = np.eye(4)
        b.data[...] = 0.0
        x = Tensor(rng.normal(size=(2, 4)))
        np.testing.assert_array_equal(apply(inst, x).data, x.data)

    def test_pool_analogs(self):
        x = Tensor([[1.0, 5.0, 2.0]])
        # fixed permutation rolls the features by one: [2, 1, 5]
        np.testing.assert_array_equal(apply(REGISTRY["max_mix"], x).data, [[2.0, 5.0, 5.0]])
        np.testing.assert_array_equal(apply(REGISTRY["mean_mix"], x).data, [[1.5, 3.0, 3.5]])

    def test_width_mismatch(self, rng):
        inst = REGISTRY["tanh_dense"].build(4, rng)
        with pytest.raises(ShapeError, match="tanh_dense"):
            inst(Tensor(np.zeros((2, 3))))

    def test_call_counter(self, rng):
        inst = REGISTRY["relu_dense"].build(3, rng)
        for _ in range(3):
            inst(Tensor(np.ones((1, 3))))
        assert inst.calls == 3

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(sorted(REGISTRY)), st.integers(1, 8), st.integers(1, 6),
           st.integers(0, 2**31 - 1))
    def test_width_preserved(self, name, d, n, seed):
        rng = np.random.default_rng(seed)
        y = apply(REGISTRY[name], Tensor(rng.uniform(-1, 1, size=(n, d))), rng)
        assert y.shape == (n, d)

    def test_parameter_gradients_flow(self, rng):
        inst = REGISTRY["relu_dense_x2"].build(3, rng)
        tn.backward(tn.sum_(inst(Tensor(rng.uniform(0.1, 1, size=(2, 3))))))
        assert all(p.grad is not None for p in inst.params)
