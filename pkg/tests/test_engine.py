import math

import numpy as np
import pytest

from gradcheck import check, check_module
from surro.encoders import TransformerBlock
from surro.engine import (Adam, BatchNorm1d, Conv1d, Linear, Module, Parameter, Tensor,
                          adam_step, backward, initialize, no_grad)
from surro.engine import functional as F
from surro.errors import InvalidArgument, ShapeError, StaleTape

N_INSTANCES = 20
TOL = 1e-4


def t(x, grad=False):
    return Tensor(np.asarray(x, dtype=float), requires_grad=grad)


# ------------------------------------------------------------- examples

def test_conv_valid_mode_hand_example():
    out = F.conv1d(t([[[1, 2, 3, 4]]]), t([[[1, 1]]]), padding="valid")
    assert out.data.ravel().tolist() == [3, 5, 7]


def test_conv_identity_and_zero():
    x = np.random.default_rng(0).standard_normal((2, 3, 7))
    eye = np.eye(3)[:, :, None]
    assert np.array_equal(F.conv1d(t(x), t(eye), t(np.zeros(3))).data, x)
    assert not F.conv1d(t(x), t(np.zeros((4, 3, 5))), t(np.zeros(4))).data.any()


def test_conv_shape_errors():
    with pytest.raises(ShapeError):
        F.conv1d(t(np.zeros((1, 2, 5))), t(np.zeros((1, 3, 3))))
    with pytest.raises(ShapeError):
        F.conv1d(t(np.zeros((1, 2, 5))), t(np.zeros((1, 2, 2))))


def test_linear_examples():
    assert F.linear(t([[1, 1]]), t([[2, 3]]), t([1])).data.tolist() == [[6.0]]
    x = np.random.default_rng(1).standard_normal((4, 3))
    assert np.array_equal(F.linear(t(x), t(np.eye(3)), t(np.zeros(3))).data, x)
    assert F.linear(t(np.zeros((2, 3))), t(np.ones((2, 3))), t([4, 5])).data.tolist() == [[4, 5], [4, 5]]
    with pytest.raises(ShapeError):
        F.linear(t(np.zeros((2, 3))), t(np.ones((2, 4))))


def test_relu_dropout_batchnorm_examples():
    assert F.relu(t([-1.0, 2.0])).data.tolist() == [0.0, 2.0]
    x = t(np.arange(6.0))
    assert F.dropout(x, 0.5, seed=3, training=False) is x
    with pytest.raises(InvalidArgument):
        F.dropout(x, 1.0, seed=3, training=True)
    with pytest.raises(InvalidArgument):
        F.dropout(x, -0.1, seed=3, training=True)
    # channel 0 has mean 5 and variance 4
    data = np.array([[[3.0, 7.0], [0.0, 1.0]], [[3.0, 7.0], [2.0, 3.0]]])
    out = F.batch_norm(t(data), t([1, 1]), t([0, 0]), np.zeros(2), np.ones(2), training=True)
    assert np.allclose(out.data[:, 0], (data[:, 0] - 5.0) / math.sqrt(4 + 1e-5), rtol=0, atol=1e-15)


def test_dropout_scales_kept_units_and_is_seeded():
    x = t(np.ones(1000))
    a = F.dropout(x, 0.3, seed=11, training=True).data
    b = F.dropout(x, 0.3, seed=11, training=True).data
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1 / 0.7}
    assert 0.2 < np.mean(a == 0) < 0.4


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm1d(2)
    x = np.random.default_rng(2).normal(3.0, 2.0, (64, 2, 5))
    for _ in range(200):
        bn(t(x))
    assert np.allclose(bn.running_mean, x.mean(axis=(0, 2)), atol=1e-8)
    n = x.shape[0] * x.shape[2]
    assert np.allclose(bn.running_var, x.var(axis=(0, 2)) * n / (n - 1), atol=1e-8)
    bn.eval()
    out = bn(t(x)).data
    expected = (x - bn.running_mean[None, :, None]) / np.sqrt(bn.running_var[None, :, None] + 1e-5)
    assert np.allclose(out, expected, atol=1e-12)


def test_pooling_examples():
    assert F.max_pool1d(t([[[1, 3, 2, 2]]])).data.ravel().tolist() == [3, 2]
    assert F.global_avg_pool(t([[[2, 4, 6]]])).data.tolist() == [[4.0]]
    # odd length drops the trailing element
    assert F.max_pool1d(t([[[1, 3, 2, 2, 9]]])).data.ravel().tolist() == [3, 2]
    x = t([[[1.0, 3.0, 2.5, 2.0]]], grad=True)
    backward(F.sum(F.max_pool1d(x)))
    assert x.grad.ravel().tolist() == [0.0, 1.0, 1.0, 0.0]
    with pytest.raises(ShapeError):
        F.max_pool1d(t([[[1.0]]]))


def _mha_weights(rng, d):
    return [rng.standard_normal(s) * 0.5 for s in [(d, d), (d,)] * 4]


def test_attention_zero_query_is_uniform():
    rng = np.random.default_rng(4)
    d, T = 4, 5
    x = rng.standard_normal((2, T, d))
    w = _mha_weights(rng, d)
    w[0][:] = 0.0
    w[1][:] = 0.0
    probs = F.attention_probs(x, w[0], w[1], w[2], w[3], heads=2)
    assert np.allclose(probs, 1.0 / T, atol=1e-15)
    out = F.multi_head_attention(t(x), 2, *[t(a) for a in w]).data
    v = x @ w[4].T + w[5]
    expected = v.mean(axis=1, keepdims=True) @ w[6].T + w[7]
    assert np.allclose(out, np.broadcast_to(expected, out.shape), atol=1e-12)


def test_attention_single_step_and_rows_sum_to_one():
    rng = np.random.default_rng(5)
    d = 6
    x = rng.standard_normal((3, 1, d))
    w = _mha_weights(rng, d)
    out = F.multi_head_attention(t(x), 3, *[t(a) for a in w]).data
    assert np.allclose(out, (x @ w[4].T + w[5]) @ w[6].T + w[7], atol=1e-12)
    x = rng.standard_normal((2, 9, d)) * 3
    probs = F.attention_probs(x, w[0], w[1], w[2], w[3], heads=3)
    assert np.max(np.abs(probs.sum(axis=-1) - 1.0)) < 1e-12
    with pytest.raises(InvalidArgument):
        F.multi_head_attention(t(x), 4, *[t(a) for a in w])


def test_positional_encoding():
    pe = F.sinusoidal_positional_encoding(50, 8)
    assert pe.shape == (50, 8)
    assert np.all(pe[0, 0::2] == 0.0) and np.all(pe[0, 1::2] == 1.0)
    assert np.all(np.abs(pe) <= 1.0)
    assert abs(pe[1, 0] - 0.8414709848078965) < 1e-15
    with pytest.raises(InvalidArgument):
        F.sinusoidal_positional_encoding(4, 3)


def test_transposed_conv_shapes_and_zero():
    w = t(np.random.default_rng(6).standard_normal((3, 2, 4)))
    assert F.conv_transpose1d(t(np.zeros((1, 3, 2))), w).shape == (1, 2, 4)
    assert not F.conv_transpose1d(t(np.zeros((2, 3, 5))), w).data.any()


def test_conv_transpose_adjoint_identity():
    rng = np.random.default_rng(7)
    for _ in range(N_INSTANCES):
        B, cin, cout, T = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4), rng.integers(2, 9)
        w = rng.standard_normal((cout, cin, 4))
        x = rng.standard_normal((B, cin, 2 * T))
        y = rng.standard_normal((B, cout, T))
        down = F.conv1d(t(x), t(w), stride=2, padding=1).data
        assert down.shape == y.shape
        # (Cout, Cin, K) conv weight is the (Cin', Cout', K) weight of its adjoint
        up = F.conv_transpose1d(t(y), t(w), stride=2, padding=1).data
        assert abs(np.vdot(down, y) - np.vdot(x, up)) < 1e-10


def test_mse_examples():
    assert F.mse_loss(t([1.0, 2.0]), [1.0, 2.0]).item() == 0.0
    pred = t([1.0, 1.0], grad=True)
    loss = F.mse_loss(pred, [1.0, 3.0])
    assert loss.item() == 2.0
    backward(loss)
    assert pred.grad.tolist() == [0.0, -2.0]
    with pytest.raises(ShapeError):
        F.mse_loss(t([1.0, 2.0]), [1.0])


def test_adam_examples():
    p = Parameter(np.array([1.0]))
    p.grad = np.array([0.5])
    adam_step([p], lr=0.001)
    assert abs((p.data[0] - 1.0) - (-0.001)) < 1e-10
    assert p.step_count == 1
    assert p.grad.tolist() == [0.5]
    q = Parameter(np.array([2.0, -1.0]))
    for _ in range(5):
        q.grad = np.zeros(2)
        adam_step([q], lr=0.1)
    assert q.data.tolist() == [2.0, -1.0]


def _train_tiny(seed):
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((16, 3)), rng.standard_normal(16)
    lin = Linear(3, 1, nonlinearity="linear")
    initialize(lin, seed)
    opt = Adam(lin.parameters(), lr=0.01)
    for _ in range(10):
        opt.zero_grad()
        backward(F.mse_loss(lin(t(x)), y))
        opt.step()
    return [p.data.copy() for p in lin.parameters()]


def test_adam_runs_are_identical():
    a, b = _train_tiny(3), _train_tiny(3)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    c = _train_tiny(4)
    assert not np.array_equal(a[0], c[0])


def test_backward_basics():
    x = t([3.0], grad=True)
    backward(F.sum(x * x))
    assert x.grad.tolist() == [6.0]

    x = t([3.0], grad=True)
    loss = F.sum(x * x)
    backward(loss)
    with pytest.raises(StaleTape):
        backward(loss)

    a = t([2.0], grad=True)
    frozen = t([5.0])
    backward(F.sum(a * frozen + a.detach()))
    assert a.grad.tolist() == [5.0]
    assert frozen.grad is None


def test_fan_out_accumulates():
    x = t([1.5, -2.0], grad=True)
    y = x * x
    backward(F.sum(y + y * 3.0 + x))
    assert np.allclose(x.grad, 8 * x.data + 1)


def test_no_grad_records_nothing():
    x = t([1.0], grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_rank_limit():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((1, 1, 1, 1)))


# ------------------------------------------------------ gradient checks

def _instances(seed):
    rng = np.random.default_rng(seed)
    return [rng for _ in range(N_INSTANCES)]


def _worst(cases):
    return max(cases)


def gradcheck_cases():
    """Per layer: list of relative errors over random small instances."""
    out = {}
    rng = np.random.default_rng(100)

    def many(build):
        return [build(rng) for _ in range(N_INSTANCES)]

    def conv_case(r):
        B, cin, cout, T = r.integers(1, 3), r.integers(1, 4), r.integers(1, 4), r.integers(3, 8)
        K = int(r.choice([1, 3, 5]))
        return check(lambda x, w, b: F.conv1d(x, w, b), [r.standard_normal((B, cin, T)),
                     r.standard_normal((cout, cin, K)), r.standard_normal(cout)], r)
    out["conv1d"] = many(conv_case)

    def strided_case(r):
        B, cin, cout, T = r.integers(1, 3), r.integers(1, 3), r.integers(1, 3), r.integers(2, 5)
        return check(lambda x, w, b: F.conv1d(x, w, b, stride=2, padding=1),
                     [r.standard_normal((B, cin, 2 * T)), r.standard_normal((cout, cin, 4)),
                      r.standard_normal(cout)], r)
    out["conv1d_stride2"] = many(strided_case)

    def tconv_case(r):
        B, cin, cout, T = r.integers(1, 3), r.integers(1, 4), r.integers(1, 4), r.integers(1, 5)
        return check(lambda x, w, b: F.conv_transpose1d(x, w, b),
                     [r.standard_normal((B, cin, T)), r.standard_normal((cin, cout, 4)),
                      r.standard_normal(cout)], r)
    out["conv_transpose1d"] = many(tconv_case)

    def linear_case(r):
        lead = tuple(r.integers(1, 4, size=r.integers(1, 3)))
        fin, fout = r.integers(1, 5), r.integers(1, 5)
        return check(F.linear, [r.standard_normal(lead + (fin,)), r.standard_normal((fout, fin)),
                                r.standard_normal(fout)], r)
    out["linear"] = many(linear_case)

    def relu_case(r):
        x = r.standard_normal((3, 4))
        x[np.abs(x) < 1e-3] = 0.5
        return check(F.relu, [x], r)
    out["relu"] = many(relu_case)

    def dropout_case(r):
        seed = int(r.integers(0, 2**32))
        return check(lambda x: F.dropout(x, 0.4, seed, True), [r.standard_normal((2, 3, 4))], r)
    out["dropout"] = many(dropout_case)

    def bn_case(r):
        shape = (int(r.integers(2, 5)), int(r.integers(1, 4))) + ((int(r.integers(1, 5)),) if r.random() < 0.7 else ())
        C = shape[1]
        return check(lambda x, g, b: F.batch_norm(x, g, b, np.zeros(C), np.ones(C), True),
                     [r.standard_normal(shape) * 2 + 1, r.standard_normal(C), r.standard_normal(C)], r)
    out["batch_norm"] = many(bn_case)

    def bn_eval_case(r):
        C = int(r.integers(1, 4))
        rm, rv = r.standard_normal(C), r.random(C) + 0.5
        return check(lambda x, g, b: F.batch_norm(x, g, b, rm, rv, False),
                     [r.standard_normal((3, C, 4)), r.standard_normal(C), r.standard_normal(C)], r)
    out["batch_norm_eval"] = many(bn_eval_case)

    def ln_case(r):
        D = int(r.integers(2, 6))
        return check(F.layer_norm, [r.standard_normal((2, 3, D)), r.standard_normal(D),
                                    r.standard_normal(D)], r)
    out["layer_norm"] = many(ln_case)

    def pool_case(r):
        x = r.permutation(24).reshape(2, 3, 4) * 0.1 + r.standard_normal((2, 3, 4)) * 0.01
        return check(F.max_pool1d, [x], r)
    out["max_pool1d"] = many(pool_case)

    out["global_avg_pool"] = many(lambda r: check(F.global_avg_pool, [r.standard_normal((2, 3, 5))], r))

    def mha_case(r):
        heads = int(r.choice([1, 2]))
        D = heads * int(r.integers(1, 4))
        T = int(r.integers(1, 6))
        arrays = [r.standard_normal((2, T, D))] + [a for a in _mha_weights(r, D)]
        return check(lambda x, *w: F.multi_head_attention(x, heads, *w), arrays, r)
    out["multi_head_attention"] = many(mha_case)

    def misc_case(r):
        return check(lambda a, b: F.mean(F.concat([F.transpose(a, (1, 0)), F.reshape(b, (3, 2))], axis=1) ** 2.0, axis=0),
                     [r.standard_normal((2, 3)), r.standard_normal(6)], r)
    out["shape_ops"] = many(misc_case)

    def take_case(r):
        idx = r.integers(0, 3, size=7)
        return check(lambda x: F.take_rows(x, idx), [r.standard_normal((3, 2))], r)
    out["take_rows"] = many(take_case)

    def mse_case(r):
        target = r.standard_normal(5)
        return check(lambda p: F.mse_loss(p, target), [r.standard_normal(5)], r)
    out["mse_loss"] = many(mse_case)

    def composite_case(r):
        B, T = 2, 6
        x = r.standard_normal((B, 2, T))
        target = r.standard_normal(B)

        def fn(w, b, lw, lb):
            h = F.relu(F.conv1d(t(x), w, b))
            return F.mse_loss(F.linear(F.reshape(h, (B, -1)), lw, lb), target)
        return check(fn, [r.standard_normal((3, 2, 3)), r.standard_normal(3),
                          r.standard_normal((1, 3 * T)), r.standard_normal(1)], r)
    out["conv_relu_linear_mse"] = many(composite_case)

    def transformer_block_case(r):
        heads = int(r.choice([1, 2]))
        D = 2 * heads
        T = int(r.integers(2, 5))
        block = TransformerBlock(D, heads, 3)
        initialize(block, int(r.integers(0, 2**31)))
        pe = F.sinusoidal_positional_encoding(T, D)

        class Wrapped(Module):
            def __init__(self):
                self.block = block

            def forward(self, x):
                return self.block(x + pe)
        return check_module(Wrapped(), r.standard_normal((2, T, D)), r)
    out["transformer_block_pe"] = many(transformer_block_case)
    return out


def test_gradients_match_central_differences():
    cases = gradcheck_cases()
    for name, errs in cases.items():
        assert len(errs) >= N_INSTANCES
        assert max(errs) < TOL, (name, max(errs))


def test_against_torch_forward():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 3, 8))
    w = rng.standard_normal((4, 3, 5))
    b = rng.standard_normal(4)
    ours = F.conv1d(t(x), t(w), t(b)).data
    ref = torch.nn.functional.conv1d(torch.tensor(x), torch.tensor(w), torch.tensor(b), padding=2).numpy()
    assert np.allclose(ours, ref, atol=1e-12)
    wt = rng.standard_normal((3, 2, 4))
    y = rng.standard_normal((2, 3, 5))
    ours = F.conv_transpose1d(t(y), t(wt)).data
    ref = torch.nn.functional.conv_transpose1d(torch.tensor(y), torch.tensor(wt), stride=2, padding=1).numpy()
    assert np.allclose(ours, ref, atol=1e-12)
    D, h = 6, 2
    xs = rng.standard_normal((2, 4, D))
    ws = _mha_weights(rng, D)
    mha = torch.nn.MultiheadAttention(D, h, batch_first=True, dtype=torch.float64)
    with torch.no_grad():
        mha.in_proj_weight.copy_(torch.tensor(np.concatenate([ws[0], ws[2], ws[4]])))
        mha.in_proj_bias.copy_(torch.tensor(np.concatenate([ws[1], ws[3], ws[5]])))
        mha.out_proj.weight.copy_(torch.tensor(ws[6]))
        mha.out_proj.bias.copy_(torch.tensor(ws[7]))
        xt = torch.tensor(xs)
        ref = mha(xt, xt, xt, need_weights=False)[0].numpy()
    ours = F.multi_head_attention(t(xs), h, *[t(a) for a in ws]).data
    assert np.allclose(ours, ref, atol=1e-12)


def test_initialize_is_keyed_by_path():
    a, b = Conv1d(2, 3, 5), Conv1d(2, 3, 5)
    initialize(a, 1)
    initialize(b, 1)
    assert np.array_equal(a.weight.data, b.weight.data)
    bound = math.sqrt(6 / 10)
    assert np.all(np.abs(a.weight.data) <= bound) and not a.bias.data.any()
