import math

import numpy as np
import pytest

from guidedplan.errors import ShapeError
from guidedplan.numerics import (Linear, MultiHeadAttention, Tensor,
                                 causal_mask, check_gradients, ops)


def loop_attention(mha, q, k, v, mask=None):
    """ Straightforward per-head, per-row evaluation """

    def proj(lin, x):
        return x @ lin.weight.values + lin.bias.values

    Q, K, V = proj(mha.q_proj, q), proj(mha.k_proj, k), proj(mha.v_proj, v)
    n, m = q.shape[0], k.shape[0]
    dh = mha.d // mha.heads
    ctx = np.zeros((n, mha.d))
    for _h in range(mha.heads):
        cols = slice(_h * dh, (_h + 1) * dh)
        for _i in range(n):
            logits = []
            for _j in range(m):
                if mask is not None and not mask[_i, _j]:
                    logits.append(-math.inf)
                else:
                    logits.append(
                        float(np.dot(Q[_i, cols], K[_j, cols])) / math.sqrt(dh))
            top = max(logits)
            w = [math.exp(_l - top) for _l in logits]
            total = sum(w)
            for _j in range(m):
                ctx[_i, cols] += w[_j] / total * V[_j, cols]
    return proj(mha.out_proj, ctx)


class TestMultiHeadAttention:

    def test_A(self):
        # single key: weights exactly 1
        rng = np.random.default_rng(0)
        mha = MultiHeadAttention(8, 2, rng)
        q, k = rng.normal(size=(5, 8)), rng.normal(size=(1, 8))
        out, w = mha(q, k, k, return_weights=True)
        assert (np.all(w.values == 1.0))
        expected = mha.out_proj(mha.v_proj(k)).values
        assert (np.allclose(out.values, np.repeat(expected, 5, axis=0),
                            atol=1e-12))

    def test_B(self):
        # causal mask: position 0 sees only itself
        rng = np.random.default_rng(1)
        mha = MultiHeadAttention(8, 2, rng)
        x = rng.normal(size=(4, 8))
        _, w = mha(x, x, x, mask=causal_mask(4), return_weights=True)
        assert (np.all(w.values[:, 0, 0] == 1.0))
        assert (np.all(w.values[:, 0, 1:] == 0.0))

    def test_loop_oracle(self):
        rng = np.random.default_rng(2)
        mha = MultiHeadAttention(8, 2, rng)
        for _ in range(5):
            q, k, v = rng.normal(size=(4, 8)), rng.normal(
                size=(6, 8)), rng.normal(size=(6, 8))
            assert (np.allclose(mha(q, k, v).values,
                                loop_attention(mha, q, k, v),
                                atol=1e-10))
            mask = rng.uniform(size=(4, 6)) < 0.7
            mask[:, 0] = True
            assert (np.allclose(mha(q, k, v, mask=mask).values,
                                loop_attention(mha, q, k, v, mask),
                                atol=1e-10))

    def test_heads_divide_width(self):
        with pytest.raises(ShapeError):
            MultiHeadAttention(10, 3, np.random.default_rng(0))

    def test_shape_mismatch(self):
        mha = MultiHeadAttention(8, 2, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            mha(np.zeros((2, 8)), np.zeros((3, 6)), np.zeros((3, 6)))

    def test_gradients(self):
        rng = np.random.default_rng(3)
        mha = MultiHeadAttention(4, 2, rng)
        q = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        k = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        w = rng.normal(size=(3, 4))
        params = list(mha.parameters().values())

        def loss():
            return ops.sum(ops.mul(mha(q, k, k), w))

        assert (check_gradients(loss, [q, k] + params) < 1e-4)


class TestLinear:

    def test_A(self):
        lin = Linear(3, 2, np.random.default_rng(0))
        y = lin(np.zeros(3))
        assert (y.shape == (2, ))
        assert (np.array_equal(y.values, lin.bias.values))

    def test_state_dict(self):
        a = Linear(3, 2, np.random.default_rng(0))
        b = Linear(3, 2, np.random.default_rng(1))
        b.load_state_dict(a.state_dict())
        assert (np.array_equal(a.weight.values, b.weight.values))
        assert (list(a.parameters()) == ['weight', 'bias'])
