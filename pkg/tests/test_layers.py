"""Batchnorm, self-attention, and positional encoding behavior."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lgkws.autograd import Tensor, gradient_check
from lgkws.layers import (
    BatchNormState,
    batchnorm1d,
    positional_encoding,
    self_attention,
)

GRAD_TOL = 1e-4


def _bn_params(c):
    return Tensor(np.ones(c), requires_grad=True), Tensor(np.zeros(c), requires_grad=True)


def test_batchnorm_two_values_normalize_to_unit():
    x = Tensor(np.array([1.0, 3.0]).reshape(1, 1, 2))
    gamma, beta = _bn_params(1)
    out = batchnorm1d(x, gamma, beta, BatchNormState.fresh(1, np.float64), train=True)
    np.testing.assert_allclose(out.data.reshape(-1), [-1.0, 1.0], atol=1e-4)


@given(
    b=st.integers(1, 4),
    c=st.integers(1, 5),
    t=st.integers(2, 8),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=40, deadline=None)
def test_batchnorm_train_output_is_standardized(b, c, t, seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((b, c, t)) * 3 + 1
    # eps swamps the normalization when a channel is nearly constant
    assume(raw.var(axis=(0, 2)).min() >= 0.1)
    x = Tensor(raw)
    gamma, beta = _bn_params(c)
    out = batchnorm1d(x, gamma, beta, BatchNormState.fresh(c, np.float64), train=True).data
    mean = out.mean(axis=(0, 2))
    var = out.var(axis=(0, 2))
    assert np.all(np.abs(mean) <= 1e-6)
    assert np.all(np.abs(var - 1.0) <= 1e-4)


def test_batchnorm_eval_identity_with_unit_stats():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((2, 3, 4)))
    gamma, beta = _bn_params(3)
    state = BatchNormState(mean=np.zeros(3), var=np.ones(3), count=1)
    out = batchnorm1d(x, gamma, beta, state, train=False, eps=0.0)
    np.testing.assert_allclose(out.data, x.data, atol=1e-12)


def test_batchnorm_eval_without_stats_is_state_error():
    x = Tensor(np.zeros((1, 2, 4)))
    gamma, beta = _bn_params(2)
    with pytest.raises(RuntimeError, match="running stats"):
        batchnorm1d(x, gamma, beta, BatchNormState.fresh(2), train=False)


def test_batchnorm_train_single_value_rejected():
    x = Tensor(np.zeros((1, 2, 1)))
    gamma, beta = _bn_params(2)
    with pytest.raises(ValueError, match="at least 2"):
        batchnorm1d(x, gamma, beta, BatchNormState.fresh(2), train=True)


def test_batchnorm_updates_running_stats_deterministically():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 2, 8))
    gamma, beta = _bn_params(2)

    def run():
        state = BatchNormState.fresh(2, np.float64)
        batchnorm1d(Tensor(x), gamma, beta, state, train=True)
        return state

    s1, s2 = run(), run()
    np.testing.assert_array_equal(s1.mean, s2.mean)
    np.testing.assert_array_equal(s1.var, s2.var)
    assert s1.count == s2.count == 1
    assert not np.allclose(s1.mean, 0.0)  # stats actually moved


def test_batchnorm_gradients():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((2, 3, 5)), requires_grad=True)
    gamma = Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True)
    beta = Tensor(rng.standard_normal(3), requires_grad=True)
    probe = rng.standard_normal((2, 3, 5))

    def fn():
        state = BatchNormState.fresh(3, np.float64)
        return (batchnorm1d(x, gamma, beta, state, train=True) * probe).sum()

    assert gradient_check(fn, [x, gamma, beta]) <= GRAD_TOL


def test_positional_encoding_values():
    pe = positional_encoding(4, 6)
    assert pe[1, 0] == pytest.approx(math.sin(1.0), abs=1e-9)
    assert pe[0, 0] == 0.0
    assert pe[0, 1] == 1.0  # cos(0)
    assert pe[2, 0] == pytest.approx(math.sin(2.0), abs=1e-9)
    # pair (2i, 2i+1) shares its frequency
    freq = 1.0 / 10000.0 ** (2.0 / 6.0)
    assert pe[3, 2] == pytest.approx(math.sin(3.0 * freq), abs=1e-9)
    assert pe[3, 3] == pytest.approx(math.cos(3.0 * freq), abs=1e-9)


def test_positional_encoding_odd_channels():
    pe_odd = positional_encoding(5, 5)
    pe_even = positional_encoding(5, 6)
    assert pe_odd.shape == (5, 5)
    # odd C computes one extra column and crops it; shared columns differ
    # because the frequency base uses the true C, so just check structure
    assert np.all(np.abs(pe_odd) <= 1.0)
    assert pe_even.shape == (5, 6)


def _identity_attention_params(c):
    eye = Tensor(np.eye(c))
    zero = Tensor(np.zeros(c))
    return dict(wq=eye, bq=zero, wk=eye, bk=zero, wv=eye, bv=zero, wo=eye, bo=zero)


def test_attention_identity_projection_fixture():
    x = Tensor(np.array([[[1.0], [0.0]]]))  # (B=1, T=2, C=1)
    out = self_attention(x, **_identity_attention_params(1))
    e = math.e
    np.testing.assert_allclose(
        out.data.reshape(-1), [e / (e + 1.0), 0.5], atol=1e-12
    )


def test_attention_rows_mix_only_over_time():
    # constant-over-time input is a fixed point of the mixing step
    rng = np.random.default_rng(3)
    row = rng.standard_normal(4)
    x = Tensor(np.tile(row, (1, 5, 1)))
    out = self_attention(x, **_identity_attention_params(4))
    np.testing.assert_allclose(out.data, x.data, atol=1e-10)


def test_attention_gradients_single_head():
    rng = np.random.default_rng(4)
    c = 3
    x = Tensor(rng.standard_normal((2, 4, c)), requires_grad=True)
    params = {
        name: Tensor(rng.standard_normal((c, c)) * 0.5, requires_grad=True)
        for name in ("wq", "wk", "wv", "wo")
    }
    biases = {
        name: Tensor(rng.standard_normal(c) * 0.1, requires_grad=True)
        for name in ("bq", "bk", "bv", "bo")
    }
    probe = rng.standard_normal((2, 4, c))

    def fn():
        return (
            self_attention(
                x,
                params["wq"], biases["bq"],
                params["wk"], biases["bk"],
                params["wv"], biases["bv"],
                params["wo"], biases["bo"],
            )
            * probe
        ).sum()

    checked = [x] + list(params.values()) + list(biases.values())
    assert gradient_check(fn, checked) <= GRAD_TOL


def test_attention_multi_head_shape_and_grad():
    rng = np.random.default_rng(5)
    c = 4
    x = Tensor(rng.standard_normal((1, 3, c)), requires_grad=True)
    mats = {n: Tensor(rng.standard_normal((c, c)) * 0.5, requires_grad=True)
            for n in ("wq", "wk", "wv", "wo")}
    zeros = {n: Tensor(np.zeros(c)) for n in ("bq", "bk", "bv", "bo")}
    out = self_attention(x, mats["wq"], zeros["bq"], mats["wk"], zeros["bk"],
                         mats["wv"], zeros["bv"], mats["wo"], zeros["bo"], num_heads=2)
    assert out.shape == (1, 3, c)

    probe = rng.standard_normal((1, 3, c))

    def fn():
        return (
            self_attention(x, mats["wq"], zeros["bq"], mats["wk"], zeros["bk"],
                           mats["wv"], zeros["bv"], mats["wo"], zeros["bo"], num_heads=2)
            * probe
        ).sum()

    assert gradient_check(fn, [x] + list(mats.values())) <= GRAD_TOL


def test_attention_rejects_indivisible_heads():
    x = Tensor(np.zeros((1, 2, 3)))
    p = _identity_attention_params(3)
    with pytest.raises(ValueError, match="divisible"):
        self_attention(x, **p, num_heads=2)
