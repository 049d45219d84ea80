import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fskgc.diffcore import (
    AdamState,
    CorruptCheckpoint,
    NonFiniteLoss,
    ParameterSet,
    ShapeMismatch,
    Tensor,
    adam_step,
    concat,
    conv1d,
    cosine_rows,
    embedding,
    finite_difference_check,
    instance_norm,
    max_pool,
    read_checkpoint,
    save_checkpoint,
    stack,
    value_and_grad,
    xavier_init,
)


def _ps(**arrays):
    return ParameterSet({k: np.asarray(v, dtype=float) for k, v in arrays.items()})


# xavier ---------------------------------------------------------------------

def test_xavier_bound():
    x = xavier_init((100, 100), np.random.default_rng(0))
    b = np.sqrt(6 / 200)
    assert abs(b - 0.17321) < 1e-5
    assert np.abs(x).max() <= b


def test_xavier_mean_clt_bound():
    x = xavier_init((100, 100), np.random.default_rng(1))
    b = np.sqrt(6 / 200)
    assert abs(x.mean()) < 4 * b / np.sqrt(12 * 10**4)


def test_xavier_deterministic():
    a = xavier_init((7, 3), np.random.default_rng(3))
    b = xavier_init((7, 3), np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_xavier_rejects_empty_dim():
    with pytest.raises(ValueError):
        xavier_init((0, 3), np.random.default_rng(0))


# parameter set ----------------------------------------------------------------

def test_snapshot_restore_bit_exact():
    rng = np.random.default_rng(0)
    p = _ps(a=rng.normal(size=(3, 4)), b=rng.normal(size=5))
    snap = p.snapshot()
    p["a"][...] += 1.0
    p.assign("b", np.zeros(5))
    p.restore(snap)
    assert p.array_equal(snap)
    assert p["a"].tobytes() == snap["a"].tobytes()


def test_assign_rejects_shape_change():
    p = _ps(a=np.zeros(3))
    with pytest.raises(ShapeMismatch):
        p.assign("a", np.zeros(4))


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, (3, 2), elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, (3, 2), elements=st.floats(-1e3, 1e3)),
)
def test_interpolation_endpoint(w, m):
    W, M = _ps(x=w), _ps(x=m)
    out = W + (M - W).scale(1.0)
    np.testing.assert_allclose(out["x"], m, rtol=0, atol=1e-12)


def test_arithmetic_does_not_alias():
    W = _ps(x=np.ones(3))
    out = W + W
    out["x"][0] = 99
    assert W["x"][0] == 1


# adam -------------------------------------------------------------------------

def test_adam_first_step_is_minus_lr_sign():
    p = _ps(w=[0.0])
    st_ = AdamState.fresh(p)
    adam_step(p, _ps(w=[5.0]), st_, 0.001)
    assert abs(p["w"][0] - (-0.001)) < 1e-9
    assert st_.t == 1


def test_adam_zero_gradient():
    p = _ps(w=[1.5, -2.0])
    st_ = AdamState.fresh(p)
    adam_step(p, _ps(w=[0.0, 0.0]), st_, 0.1)
    assert np.array_equal(p["w"], [1.5, -2.0])
    assert st_.t == 1


def test_adam_converges_on_quadratic():
    p = _ps(w=[0.0])
    st_ = AdamState.fresh(p)
    for _ in range(5000):
        adam_step(p, _ps(w=2 * (p["w"] - 3.0)), st_, 0.01)
    assert abs(p["w"][0] - 3.0) < 0.01


def test_adam_shape_mismatch():
    p = _ps(w=[0.0])
    with pytest.raises(ShapeMismatch):
        adam_step(p, _ps(w=[0.0, 1.0]), AdamState.fresh(p), 0.1)


# finite differences -----------------------------------------------------------

def test_fd_quadratic_exact():
    rep = finite_difference_check(lambda p: (p["w"] * p["w"]).sum(), _ps(w=[3.0]), h=1e-4)
    assert rep.max_rel_error["w"] < 1e-6
    assert rep.ok


def test_fd_flags_abs_at_zero():
    rep = finite_difference_check(lambda p: p["w"].abs().sum(), _ps(w=[0.0]), h=1e-4)
    assert not rep.ok
    assert rep.kinks == [("w", 0)]


def test_fd_non_finite():
    with pytest.raises(NonFiniteLoss):
        finite_difference_check(lambda p: p["w"].log().sum(), _ps(w=[-1.0]))


# primitive op gradients --------------------------------------------------------

RNG = np.random.default_rng(42)


def _check(fn, **arrays):
    rep = finite_difference_check(fn, _ps(**arrays), h=1e-5, tol=1e-6)
    assert rep.worst < 1e-6, rep.max_rel_error


def test_grad_elementwise_chain():
    _check(
        lambda p: ((p["a"] * p["b"]).tanh() / (p["b"].exp() + 1.0) - p["a"] ** 2).sum(),
        a=RNG.normal(size=(3, 4)),
        b=RNG.normal(size=(4,)),
    )


def test_grad_matmul_batched():
    _check(lambda p: ((p["x"] @ p["w"]).tanh()).sum(), x=RNG.normal(size=(2, 3, 4)), w=RNG.normal(size=(4, 5)))


def test_grad_matmul_vector():
    _check(lambda p: (p["v"] @ p["w"]).tanh().sum(), v=RNG.normal(size=4), w=RNG.normal(size=(4, 3)))


def test_grad_softmax():
    wts = RNG.normal(size=(2, 5))
    _check(lambda p: (p["x"].softmax(axis=-1) * wts).sum(), x=RNG.normal(size=(2, 5)))


def test_grad_conv1d_same_and_valid():
    x = RNG.normal(size=(6, 3))
    _check(lambda p: conv1d(p["x"], p["w"], p["b"], 3, 1).tanh().sum(), x=x, w=RNG.normal(size=(9, 4)), b=RNG.normal(size=4))
    _check(lambda p: conv1d(p["x"], p["w"], p["b"], 2, 0).tanh().sum(), x=x, w=RNG.normal(size=(6, 4)), b=RNG.normal(size=4))


def test_grad_instance_norm():
    wts = RNG.normal(size=(7, 3))
    _check(lambda p: (instance_norm(p["x"]) * wts).sum(), x=RNG.normal(size=(7, 3)))


def test_grad_max_pool_ceil_mode():
    wts = RNG.normal(size=(4, 3))
    _check(lambda p: (max_pool(p["x"], 2) * wts).sum(), x=RNG.normal(size=(7, 3)))


def test_grad_cosine_embedding_concat_stack():
    ids = np.array([1, 3, 1, 0])

    def f(p):
        e = embedding(p["t"], ids)
        c = cosine_rows(p["v"], e)
        s = stack([c, c * 2.0])
        return concat([s.reshape(-1), p["v"]], axis=0).tanh().sum()

    _check(f, t=RNG.normal(size=(5, 3)), v=RNG.normal(size=3))


def test_grad_clip_and_indexing():
    _check(lambda p: (p["x"].clip(-0.5, 0.5)[1:, ::2] * 3.0).sum(), x=RNG.normal(size=(3, 4)))


def test_value_and_grad_unused_parameter_zero():
    val, g = value_and_grad(lambda p: (p["a"] * 2.0).sum(), _ps(a=[1.0, 2.0], b=[5.0]))
    assert val == 6.0
    assert np.array_equal(g["b"], [0.0])
    assert np.array_equal(g["a"], [2.0, 2.0])


def test_max_pool_shapes():
    y = max_pool(Tensor(np.arange(14.0).reshape(7, 2)), 2)
    assert y.shape == (4, 2)
    assert np.array_equal(y.data[-1], [12.0, 13.0])


# checkpoints ------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    p = _ps(a=rng.normal(size=(2, 3)), b=rng.normal(size=4))
    st_ = AdamState.fresh(p)
    adam_step(p, p.scale(0.5), st_, 0.01)
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, p, st_, {"note": "x"})
    q, st2, meta = read_checkpoint(path)
    assert q.array_equal(p)
    assert st2.t == 1 and st2.m.array_equal(st_.m) and st2.v.array_equal(st_.v)
    assert meta == {"note": "x"}


def test_checkpoint_bytes_deterministic(tmp_path):
    p = _ps(a=np.arange(6.0).reshape(2, 3))
    save_checkpoint(tmp_path / "1.ckpt", p)
    save_checkpoint(tmp_path / "2.ckpt", p.copy())
    assert (tmp_path / "1.ckpt").read_bytes() == (tmp_path / "2.ckpt").read_bytes()


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, _ps(a=np.ones(10)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CorruptCheckpoint):
        read_checkpoint(path)
    path.write_bytes(b"nonsense")
    with pytest.raises(CorruptCheckpoint):
        read_checkpoint(path)
