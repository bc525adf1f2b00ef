"""Layers, losses, optimizers and checkpoint round-trips."""
import numpy as np
import pytest

from aeg import nn
from aeg.autodiff import Tensor, softmax
from aeg.errors import (CheckpointError, DimensionError, EmptyInputError,
                        NotBackpropagatedError)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_parameter_init_range(rng):
    p = nn.Parameter("p", (200, 30), rng)
    assert p.values.min() >= -nn.INIT_RANGE
    assert p.values.max() <= nn.INIT_RANGE
    # not degenerate
    assert p.values.std() > 0.01


def test_parameter_set_values_shape_guard(rng):
    p = nn.Parameter("p", (3,), rng)
    with pytest.raises(DimensionError):
        p.set_values(np.zeros(4))


def test_module_parameters_recurse_through_lists(rng):
    class Inner(nn.Module):
        def __init__(self):
            self.w = nn.Parameter("inner.w", (2,), rng)

    class Outer(nn.Module):
        def __init__(self):
            self.a = nn.Parameter("outer.a", (2,), rng)
            self.block = Inner()
            self.many = [nn.Parameter("outer.l0", (1,), rng), Inner()]
            self.hidden = {"not": nn.Parameter("outer.hidden", (1,), rng)}

    names = {p.name for p in Outer().parameters()}
    assert names == {"outer.a", "inner.w", "outer.l0"}


def test_dense_applies_activation(rng):
    d = nn.Dense("d", 3, 2, rng, activation="tanh")
    x = np.array([0.5, -0.3, 0.8])
    expected = np.tanh(x @ d.weight.values + d.bias.values)
    np.testing.assert_allclose(d(Tensor(x)).values, expected)
    with pytest.raises(ValueError):
        nn.Dense("bad", 3, 2, rng, activation="swish")
    with pytest.raises(DimensionError):
        d(Tensor(np.ones(4)))


def test_gru_zero_parameters_halve_state(rng):
    cell = nn.GruCell("g", 3, 4, rng)
    for p in cell.parameters():
        p.set_values(np.zeros_like(p.values))
    h = Tensor(np.array([1.0, -2.0, 0.5, 4.0]))
    out = cell.step(Tensor(np.zeros(3)), h)
    np.testing.assert_allclose(out.values, 0.5 * h.values)


def test_gru_shape_guards(rng):
    cell = nn.GruCell("g", 3, 4, rng)
    with pytest.raises(DimensionError):
        cell.step(Tensor(np.zeros(2)), cell.zero_state())
    with pytest.raises(DimensionError):
        cell.step(Tensor(np.zeros(3)), Tensor(np.zeros(5)))


def test_bigru_is_sum_of_directions(rng):
    fwd = nn.GruCell("f", 2, 3, rng)
    bwd = nn.GruCell("b", 2, 3, rng)
    xs = [Tensor(rng.uniform(size=2)) for _ in range(4)]
    states = nn.bigru_encode(fwd, bwd, xs)
    assert len(states) == 4
    # manual forward pass
    h = fwd.zero_state()
    for i, x in enumerate(xs):
        h = fwd.step(x, h)
    hb = bwd.zero_state()
    hb = bwd.step(xs[-1], hb)
    np.testing.assert_allclose(states[-1].values, (h + hb).values)
    with pytest.raises(EmptyInputError):
        nn.bigru_encode(fwd, bwd, [])


def test_attention_weights_form_distribution(rng):
    layer = nn.AttentionLayer("a", 3, 3, 5, rng)
    query = Tensor(rng.uniform(size=3))
    keys = [Tensor(rng.uniform(size=3)) for _ in range(6)]
    context, weights = nn.attend(layer, query, keys)
    assert context.shape == (3,)
    assert weights.shape == (6,)
    assert weights.values.min() >= 0
    assert weights.values.sum() == pytest.approx(1.0)


def test_attention_separate_values(rng):
    layer = nn.AttentionLayer("a", 2, 2, 4, rng)
    keys = [Tensor(rng.uniform(size=2)) for _ in range(3)]
    values = [Tensor(rng.uniform(size=5)) for _ in range(3)]
    context, weights = nn.attend(layer, Tensor(rng.uniform(size=2)), keys, values)
    assert context.shape == (5,)
    manual = sum(w * v.values for w, v in zip(weights.values, values))
    np.testing.assert_allclose(context.values, manual)


def test_attention_empty_and_mismatched(rng):
    layer = nn.AttentionLayer("a", 2, 2, 4, rng)
    with pytest.raises(EmptyInputError):
        nn.attend(layer, Tensor(np.ones(2)), [])
    with pytest.raises(DimensionError):
        nn.attend(layer, Tensor(np.ones(2)),
                  [Tensor(np.ones(2))], [Tensor(np.ones(3)), Tensor(np.ones(3))])


def test_cross_entropy_value_and_range_guard():
    p = softmax(Tensor(np.array([2.0, 0.0, -1.0])))
    loss = nn.cross_entropy(p, 0)
    assert loss.item() == pytest.approx(-np.log(p.values[0]))
    with pytest.raises(IndexError):
        nn.cross_entropy(p, 3)
    with pytest.raises(IndexError):
        nn.cross_entropy(p, -1)


def test_kl_divergence_zero_for_identical_and_positive_otherwise():
    p = np.array([0.2, 0.5, 0.3])
    assert nn.kl_divergence(p, Tensor(p)).item() == pytest.approx(0.0, abs=1e-12)
    q = np.array([0.6, 0.2, 0.2])
    kl = nn.kl_divergence(p, Tensor(q)).item()
    assert kl == pytest.approx(float(np.sum(p * np.log(p / q))))
    assert kl > 0
    # 0 * log 0 = 0 on the constant side
    assert np.isfinite(nn.kl_divergence(np.array([0.0, 1.0]),
                                        Tensor(np.array([0.5, 0.5]))).item())


def test_sgd_step_is_plain_descent(rng):
    p = nn.Parameter("p", (3,), rng)
    start = p.values.copy()
    p.tensor.grad = np.array([1.0, -2.0, 0.0])
    opt = nn.Optimizer("sgd", 0.1)
    opt.apply([p])
    np.testing.assert_allclose(p.values, start - 0.1 * np.array([1.0, -2.0, 0.0]))
    assert opt.step_count == 1
    assert p.tensor.grad is None  # fresh leaf after apply


def test_adam_first_step_magnitude(rng):
    # with bias correction the first Adam step is ~lr * sign(g)
    p = nn.Parameter("p", (2,), rng)
    start = p.values.copy()
    p.tensor.grad = np.array([0.5, -3.0])
    nn.Optimizer("adam", 0.01).apply([p])
    np.testing.assert_allclose(p.values, start - 0.01 * np.sign([0.5, -3.0]),
                               atol=1e-6)


def test_optimizer_requires_gradients(rng):
    p = nn.Parameter("p", (2,), rng)
    with pytest.raises(NotBackpropagatedError):
        nn.Optimizer("sgd", 0.1).apply([p])
    with pytest.raises(ValueError):
        nn.Optimizer("rmsprop", 0.1)


def test_clip_gradients_global_norm(rng):
    a = nn.Parameter("a", (2,), rng)
    b = nn.Parameter("b", (2,), rng)
    a.tensor.grad = np.array([3.0, 0.0])
    b.tensor.grad = np.array([0.0, 4.0])
    total = nn.clip_gradients([a, b], max_norm=2.5)
    assert total == pytest.approx(5.0)
    clipped = np.sqrt(np.sum(a.tensor.grad ** 2) + np.sum(b.tensor.grad ** 2))
    assert clipped == pytest.approx(2.5)
    # below the threshold nothing changes
    a.tensor.grad = np.array([0.1, 0.0])
    b.tensor.grad = np.array([0.0, 0.1])
    nn.clip_gradients([a, b], max_norm=2.5)
    np.testing.assert_allclose(a.tensor.grad, [0.1, 0.0])


def test_grad_check_passes_on_correct_gradient(rng):
    x = Tensor(rng.uniform(size=3), requires_grad=True)
    report = nn.grad_check(lambda: (x * x).sum(), [x])
    assert report["passed"]
    assert report["max_rel_error"] < 1e-6


def test_grad_check_catches_wrong_gradient():
    x = Tensor(np.array([0.7, -0.4]), requires_grad=True)

    def broken():
        # deliberately wrong backward: claims d/dx (sum 2x) = 1
        out = Tensor(2.0 * x.values, requires_grad=True,
                     _links=((x, lambda g: g),))
        return out.sum()
    report = nn.grad_check(broken, [x])
    assert not report["passed"]


def test_checkpoint_round_trip(tmp_path, rng):
    path = tmp_path / "model.ckpt"
    arrays = {"w": rng.uniform(size=(3, 2)), "b": rng.uniform(size=(4,)),
              "scalar": np.array(2.5)}
    nn.save_checkpoint(str(path), arrays)
    with open(path, "rb") as fh:
        assert fh.read(len(nn.CKPT_MAGIC)) == nn.CKPT_MAGIC
    loaded = nn.load_checkpoint(str(path))
    assert set(loaded) == set(arrays)
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])


def test_checkpoint_bad_magic_and_truncation(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOT-A-CKPT\n" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        nn.load_checkpoint(str(bad))
    good = tmp_path / "good.ckpt"
    nn.save_checkpoint(str(good), {"w": np.ones((4, 4))})
    data = good.read_bytes()
    (tmp_path / "trunc.ckpt").write_bytes(data[:-8])
    with pytest.raises(CheckpointError):
        nn.load_checkpoint(str(tmp_path / "trunc.ckpt"))


def test_module_save_load_round_trip(tmp_path, rng):
    d1 = nn.Dense("d", 3, 2, rng)
    d2 = nn.Dense("d", 3, 2, np.random.default_rng(99))
    assert not np.allclose(d1.weight.values, d2.weight.values)
    nn.save_module(str(tmp_path / "d.ckpt"), d1)
    nn.load_module(str(tmp_path / "d.ckpt"), d2)
    np.testing.assert_array_equal(d1.weight.values, d2.weight.values)
    np.testing.assert_array_equal(d1.bias.values, d2.bias.values)


def test_load_module_missing_parameter(tmp_path, rng):
    d = nn.Dense("d", 2, 2, rng)
    nn.save_checkpoint(str(tmp_path / "partial.ckpt"), {"d.weight": np.ones((2, 2))})
    with pytest.raises(CheckpointError):
        nn.load_module(str(tmp_path / "partial.ckpt"), d)
