"""Engine correctness: every primitive against the finite-difference oracle
at 64-bit precision, plus the closed-form examples and graph semantics."""
import numpy as np
import pytest

from usdlab import autodiff as ad
from usdlab.errors import DimensionError, NumericError

from conftest import fd_gradient, make_rng, relative_error

RTOL = 1e-3
H = 1e-5


def check_op(op, arrays, wrap=None):
    """Compare engine gradients of mean(op(...)) with central differences
    for every input."""
    tensors = [ad.Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = op(*tensors)
    loss = ad.mean(out) if out.data.size > 1 else out
    loss.backward()

    def scalar_fn(arr_list):
        ts = [ad.Tensor(a) for a in arr_list]
        o = op(*ts)
        return float(o.data.mean()) if o.data.size > 1 else o.data.item()

    for i, t in enumerate(tensors):
        fd = fd_gradient(scalar_fn, arrays, i, h=H)
        # mean() divides the upstream seed for multi-element outputs
        assert t.grad is not None, f"missing grad for input {i}"
        err = relative_error(t.grad, fd)
        assert err < RTOL, f"input {i}: rel err {err:.2e}"


# ---------------------------------------------------------------------------
# finite-difference checks, one per primitive, including size-1 edge shapes
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("shapes", [((3, 4), (3, 4)), ((3, 4), (4,)), ((3, 1), (1, 4)),
                                    ((1,), (1,)), ((2, 1, 3), (4, 3))])
def test_fd_add_sub_mul(shapes, rng):
    a = rng.normal(size=shapes[0])
    b = rng.normal(size=shapes[1])
    check_op(ad.add, [a, b])
    check_op(ad.subtract, [a, b])
    check_op(ad.multiply, [a, b])


@pytest.mark.parametrize("sa,sb", [((3, 4), (4, 5)), ((4,), (4, 5)), ((3, 4), (4,)),
                                   ((2, 3, 4), (2, 4, 5)), ((2, 3, 4), (4, 5)),
                                   ((2, 2, 3, 4), (2, 2, 4, 5)), ((1, 4), (4, 1))])
def test_fd_matmul(sa, sb, rng):
    a = rng.normal(size=sa)
    b = rng.normal(size=sb)
    check_op(ad.matmul, [a, b])


def test_fd_absolute_value(rng):
    x = rng.normal(size=(4, 5))
    x = np.where(np.abs(x) < 0.05, 0.5, x)   # keep clear of the kink
    check_op(ad.absolute_value, [x])


def test_fd_selu(rng):
    x = rng.normal(size=(4, 5)) * 2
    x = np.where(np.abs(x) < 0.05, 0.5, x)
    check_op(ad.selu, [x])


def test_fd_sigmoid(rng):
    check_op(ad.sigmoid, [rng.normal(size=(6,)) * 3])


@pytest.mark.parametrize("axis", [0, 1, -1])
def test_fd_softmax(axis, rng):
    check_op(lambda t: ad.softmax(t, axis=axis), [rng.normal(size=(3, 5))])


@pytest.mark.parametrize("axis", [-1, 1])
def test_fd_layer_norm(axis, rng):
    check_op(lambda t: ad.layer_norm(t, axis=axis), [rng.normal(size=(3, 6))])


@pytest.mark.parametrize("axis", [None, 0, 1, (0, 1)])
def test_fd_mean(axis, rng):
    check_op(lambda t: ad.mean(t, axis=axis), [rng.normal(size=(3, 4))])


@pytest.mark.parametrize("axis", [0, 1])
def test_fd_concatenate(axis, rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    check_op(lambda x, y: ad.concatenate([x, y], axis=axis), [a, b])


def test_fd_reshape_transpose(rng):
    x = rng.normal(size=(2, 6))
    check_op(lambda t: ad.reshape(t, (3, 4)), [x])
    check_op(lambda t: ad.transpose(t, (1, 0)), [x])
    y = rng.normal(size=(2, 3, 4, 5))
    check_op(lambda t: ad.transpose(t, (0, 2, 1, 3)), [y])


def test_fd_cospi(rng):
    check_op(ad.cospi, [rng.normal(size=(4, 3)) * 2])


def test_fd_losses(rng):
    pred = rng.uniform(0.05, 0.95, size=(3, 4))
    target = rng.uniform(0, 1, size=(3, 4))
    check_op(ad.loss_mse, [pred, target])
    check_op(ad.loss_bce, [pred, target])


def test_fd_composite_mlp_layer(rng):
    # gradient of mse(sigmoid(W x + b), t) per the module contract
    W = rng.normal(size=(4, 3))
    x = rng.normal(size=(5, 4))
    b = rng.normal(size=(3,))
    t = rng.uniform(0, 1, size=(5, 3))

    def net(Wt, xt, bt, tt):
        return ad.loss_mse(ad.sigmoid(ad.add(ad.matmul(xt, Wt), bt)), tt)

    check_op(net, [W, x, b, t])


# ---------------------------------------------------------------------------
# fused blocks: finite differences plus equivalence with the granular graph
# ---------------------------------------------------------------------------

def test_fd_layer_norm_affine(rng):
    x = rng.normal(size=(3, 5, 6))
    gain = rng.normal(size=(6,))
    bias = rng.normal(size=(6,))
    check_op(ad.layer_norm_affine, [x, gain, bias])


def test_fd_self_attention(rng):
    B, L, D, heads = 2, 5, 8, 2
    x = rng.normal(size=(B, L, D))
    wqkv = rng.normal(size=(D, 3 * D)) * 0.4
    bqkv = rng.normal(size=(3 * D,)) * 0.1
    wo = rng.normal(size=(D, D)) * 0.4
    bo = rng.normal(size=(D,)) * 0.1
    check_op(lambda *ts: ad.self_attention(*ts, heads), [x, wqkv, bqkv, wo, bo])


def test_fd_ff_block(rng):
    B, L, D, F = 2, 4, 6, 9
    x = rng.normal(size=(B, L, D))
    w1 = rng.normal(size=(D, F)) * 0.5
    b1 = rng.normal(size=(F,)) * 0.1
    w2 = rng.normal(size=(F, D)) * 0.5
    b2 = rng.normal(size=(D,)) * 0.1
    check_op(ad.ff_block, [x, w1, b1, w2, b2])


def test_fd_binary_token_embed(rng):
    B, L, D = 3, 4, 5
    m = ad.Tensor(make_rng(0).integers(0, 2, size=(B, L)).astype(np.float64))
    params = [ad.Tensor(rng.normal(size=(D,)), requires_grad=True),
              ad.Tensor(rng.normal(size=(D,)), requires_grad=True),
              ad.Tensor(rng.normal(size=(L, D)), requires_grad=True)]
    out = ad.binary_token_embed(m, *params)
    ad.mean(out).backward()
    arrays = [p.data.copy() for p in params]

    def scalar_fn(arr_list):
        ts = [ad.Tensor(a) for a in arr_list]
        return float(ad.binary_token_embed(m, *ts).data.mean())

    for i, p in enumerate(params):
        fd = fd_gradient(scalar_fn, arrays, i, h=H)
        assert relative_error(p.grad, fd) < RTOL


def test_binary_token_embed_rejects_grad_tokens(rng):
    m = ad.Tensor(np.zeros((2, 3)), requires_grad=True)
    params = [ad.Tensor(np.zeros(4)), ad.Tensor(np.zeros(4)), ad.Tensor(np.zeros((3, 4)))]
    from usdlab.errors import ValidationError
    with pytest.raises(ValidationError):
        ad.binary_token_embed(m, *params)


def test_fused_blocks_match_granular_graph(rng):
    """Forward values and every parameter gradient agree with the same
    computation spelled out in primitives."""
    B, L, D, heads, F = 2, 4, 8, 2, 12
    dh = D // heads
    arrays = {
        "x": rng.normal(size=(B, L, D)),
        "wqkv": rng.normal(size=(D, 3 * D)) * 0.4,
        "bqkv": rng.normal(size=(3 * D,)) * 0.1,
        "wo": rng.normal(size=(D, D)) * 0.4,
        "bo": rng.normal(size=(D,)) * 0.1,
        "gain": rng.normal(size=(D,)),
        "bias": rng.normal(size=(D,)),
        "w1": rng.normal(size=(D, F)) * 0.4,
        "b1": rng.normal(size=(F,)) * 0.1,
        "w2": rng.normal(size=(F, D)) * 0.4,
        "b2": rng.normal(size=(D,)) * 0.1,
    }

    def tensors():
        return {k: ad.Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}

    def fused(t):
        attn = ad.self_attention(t["x"], t["wqkv"], t["bqkv"], t["wo"], t["bo"], heads)
        h = ad.layer_norm_affine(t["x"] + attn, t["gain"], t["bias"])
        return ad.ff_block(h, t["w1"], t["b1"], t["w2"], t["b2"])

    # the granular graph carries the q/k/v projections as separate tensors
    # sharing the fused array's columns
    tg = tensors()
    split = {}
    for i, name in enumerate(("q", "k", "v")):
        split[f"w{name}"] = ad.Tensor(arrays["wqkv"][:, i * D:(i + 1) * D].copy(),
                                      requires_grad=True)
        split[f"b{name}"] = ad.Tensor(arrays["bqkv"][i * D:(i + 1) * D].copy(),
                                      requires_grad=True)

    def head_split(t2):
        return ad.transpose(ad.reshape(t2, (B, L, heads, dh)), (0, 2, 1, 3))

    def granular(t):
        x2 = ad.reshape(t["x"], (B * L, D))
        q = head_split(ad.linear(x2, split["wq"], split["bq"]))
        k = head_split(ad.linear(x2, split["wk"], split["bk"]))
        v = head_split(ad.linear(x2, split["wv"], split["bv"]))
        scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        ctx = ad.transpose(ad.matmul(ad.softmax(scores, axis=-1), v), (0, 2, 1, 3))
        attn = ad.reshape(ad.linear(ad.reshape(ctx, (B * L, D)), t["wo"], t["bo"]),
                          (B, L, D))
        h = ad.layer_norm(t["x"] + attn, axis=-1) * t["gain"] + t["bias"]
        h2 = ad.reshape(h, (B * L, D))
        ff = ad.linear(ad.selu(ad.linear(h2, t["w1"], t["b1"])), t["w2"], t["b2"])
        return ad.reshape(ff, (B, L, D))

    tf = tensors()
    out_f, out_g = fused(tf), granular(tg)
    assert np.allclose(out_f.data, out_g.data, rtol=1e-12, atol=1e-12)
    ad.mean(out_f * out_f).backward()
    ad.mean(out_g * out_g).backward()
    grad_wqkv = np.concatenate([split["wq"].grad, split["wk"].grad, split["wv"].grad],
                               axis=1)
    grad_bqkv = np.concatenate([split["bq"].grad, split["bk"].grad, split["bv"].grad])
    assert np.allclose(tf["wqkv"].grad, grad_wqkv, rtol=1e-9, atol=1e-12)
    assert np.allclose(tf["bqkv"].grad, grad_bqkv, rtol=1e-9, atol=1e-12)
    for name in ("x", "wo", "bo", "gain", "bias", "w1", "b1", "w2", "b2"):
        assert np.allclose(tf[name].grad, tg[name].grad, rtol=1e-9, atol=1e-12), name


# ---------------------------------------------------------------------------
# closed-form examples
# ---------------------------------------------------------------------------

def test_pointwise_values():
    assert ad.sigmoid(ad.Tensor(0.0)).item() == 0.5
    assert ad.selu(ad.Tensor(0.0)).item() == 0.0
    sm = ad.softmax(ad.Tensor(np.full(5, 1.7)), axis=-1)
    assert np.allclose(sm.data, 0.2)


def test_loss_values():
    t = ad.Tensor
    assert ad.loss_mse(t(np.ones(3)), t(np.ones(3))).item() == 0.0
    assert ad.loss_mse(t(1.0), t(0.0)).item() == 1.0
    assert ad.loss_mse(t([0.0, 1.0]), t([1.0, 1.0])).item() == 0.5
    assert abs(ad.loss_bce(t(0.5), t(0.5)).item() - np.log(2)) < 1e-12
    assert abs(ad.loss_bce(t(0.9), t(1.0)).item() + np.log(0.9)) < 1e-12
    # saturated prediction stays finite through the clamp
    v = ad.loss_bce(t(np.zeros(4)), t(np.ones(4))).item()
    assert np.isfinite(v) and v <= -np.log(ad.BCE_EPS) + 1e-6
    with pytest.raises(NumericError):
        ad.loss_bce(t(np.array([np.nan])), t(np.array([1.0])))


def test_square_gradient_at_three():
    x = ad.Tensor(3.0, requires_grad=True)
    y = ad.multiply(x, x)
    y.backward()
    assert float(x.grad) == 6.0


def test_accumulation_doubles_without_zeroing():
    x = ad.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    loss = ad.mean(ad.multiply(x, x))
    loss.backward()
    first = x.grad.copy()
    loss.backward()
    assert np.array_equal(x.grad, 2 * first)
    x.zero_grad()
    assert x.grad is None


def test_backward_rejects_non_scalar():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(DimensionError):
        ad.add(x, x).backward()


def test_shape_mismatch_reports_both_shapes():
    a = ad.Tensor(np.ones((2, 3)))
    b = ad.Tensor(np.ones((4, 2)))
    with pytest.raises(DimensionError, match=r"2, 3"):
        ad.matmul(a, b)


# ---------------------------------------------------------------------------
# graph and mode semantics
# ---------------------------------------------------------------------------

def test_no_grad_blocks_recording():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.multiply(x, x)
    assert not y.requires_grad and y._vjp is None


def test_ops_do_not_mutate_inputs(rng):
    a = rng.normal(size=(3, 4))
    keep = a.copy()
    t = ad.Tensor(a, requires_grad=True)
    out = ad.mean(ad.selu(ad.multiply(t, t)))
    out.backward()
    assert np.array_equal(t.data, keep)


def test_dtype_follows_inputs(rng):
    x64 = ad.Tensor(rng.normal(size=(3,)).astype(np.float64))
    x32 = ad.Tensor(rng.normal(size=(3,)).astype(np.float32))
    assert ad.selu(x64).dtype == np.float64
    assert ad.selu(x32).dtype == np.float32
    assert ad.sigmoid(x32).dtype == np.float32
    assert ad.cospi(x32).dtype == np.float32


def test_graph_topological_order_visits_once():
    x = ad.Tensor(2.0, requires_grad=True)
    y = ad.multiply(x, x)
    z = ad.add(y, y)
    graph = ad.topological_order(z)
    ids = [id(n) for n in graph.nodes]
    assert len(ids) == len(set(ids))
    assert ids.index(id(x)) < ids.index(id(y)) < ids.index(id(z))


def test_cospi_exact_on_integers():
    vals = ad.cospi_array(np.array([-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 7.0]))
    assert np.array_equal(vals, np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]))
    sins = ad.sinpi_array(np.arange(-5.0, 6.0))
    assert np.all(sins == 0.0)


def test_deterministic_forward(rng):
    x = rng.normal(size=(8, 8))
    a = ad.layer_norm(ad.Tensor(x), axis=-1).data
    b = ad.layer_norm(ad.Tensor(x), axis=-1).data
    assert np.array_equal(a, b)
