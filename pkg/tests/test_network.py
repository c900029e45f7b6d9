import numpy as np
import pytest

from voxedit.losses import loss_and_grad
from voxedit.network import (
    EVAL,
    TRAIN,
    ArchConfig,
    backward,
    forward,
    init_model,
    layer_specs,
    load_params,
    save_params,
)
from voxedit.tensorops import SeededRng, Shape3D, Volume

from conftest import random_labels, random_volume


def test_init_deterministic(tiny_arch):
    a = init_model(tiny_arch, SeededRng(3))
    b = init_model(tiny_arch, SeededRng(3))
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name])


def test_init_biases_zero(tiny_params):
    for name, t in tiny_params.tensors.items():
        if name.endswith(".b"):
            assert not t.any()


def test_init_weight_stats():
    # >= 10^4 weights: sample mean within 3 standard errors of 0
    cfg = ArchConfig(in_channels=4, num_classes=3, base_width=8, levels=3)
    params = init_model(cfg, SeededRng(11))
    checked = 0
    for name, t in params.tensors.items():
        if not name.endswith(".w") or t.size < 10_000:
            continue
        se = t.std() / np.sqrt(t.size)
        assert abs(t.mean()) < 3 * se + 1e-6, name
        checked += 1
    assert checked >= 1


def test_forward_shape_contract(tiny_params, shape8):
    x = random_volume(0, 3, shape8)
    logits, _ = forward(tiny_params, x, EVAL)
    assert logits.channels == 2
    assert logits.shape == shape8


def test_forward_shape_contract_16(tiny_params):
    x = random_volume(0, 3, Shape3D(16, 16, 16))
    logits, _ = forward(tiny_params, x, EVAL)
    assert tuple(logits.shape) == (16, 16, 16)


def test_forward_eval_deterministic(tiny_params, shape8):
    x = random_volume(1, 3, shape8)
    a, _ = forward(tiny_params, x, EVAL)
    b, _ = forward(tiny_params, x, EVAL)
    assert np.array_equal(a.data, b.data)


def test_forward_dropout_zero_train_equals_eval(shape8):
    cfg = ArchConfig(in_channels=3, num_classes=2, base_width=4, levels=2, dropout_rate=0.0)
    params = init_model(cfg, SeededRng(0))
    x = random_volume(1, 3, shape8)
    a, _ = forward(params, x, TRAIN, SeededRng(1))
    b, _ = forward(params, x, EVAL)
    assert np.array_equal(a.data, b.data)


def test_forward_dropout_varies_in_train_mode(tiny_params, shape8):
    x = random_volume(1, 3, shape8)
    a, _ = forward(tiny_params, x, TRAIN, SeededRng(1))
    b, _ = forward(tiny_params, x, TRAIN, SeededRng(2))
    assert not np.array_equal(a.data, b.data)


def test_forward_channel_mismatch(tiny_params, shape8):
    with pytest.raises(ValueError, match="channels"):
        forward(tiny_params, random_volume(0, 5, shape8), EVAL)


def test_forward_divisibility(tiny_params):
    with pytest.raises(ValueError, match="divisible"):
        forward(tiny_params, random_volume(0, 3, Shape3D(7, 8, 8)), EVAL)


def _loss_of(params, x, gt, drop_seed=123):
    logits, cache = forward(params, x, TRAIN, SeededRng(drop_seed))
    loss, dlogits = loss_and_grad(logits, gt)
    return loss, cache, dlogits


def fd_check(params, x, gt, n_samples, seed, h=1e-2, rtol=1e-2, atol=1e-5):
    """Central finite differences vs analytic gradients on sampled parameters.

    atol is the measurement floor: a float32 loss evaluation carries ~1 ulp
    (~6e-8) of rounding noise, which the difference quotient amplifies to
    ~6e-6 at step 1e-2; disagreements below atol are indistinguishable from
    that noise.
    """
    loss, cache, dlogits = _loss_of(params, x, gt)
    grads = backward(params, cache, dlogits)
    sampler = np.random.default_rng(seed)
    names = list(params.tensors)
    ok = total = 0
    for _ in range(n_samples):
        name = names[sampler.integers(len(names))]
        t = params.tensors[name]
        i = int(sampler.integers(t.size))
        orig = t.flat[i]
        t.flat[i] = orig + h
        lp, _, _ = _loss_of(params, x, gt)
        t.flat[i] = orig - h
        lm, _, _ = _loss_of(params, x, gt)
        t.flat[i] = orig
        fd = (lp - lm) / (2 * h)
        an = float(grads[name].flat[i])
        total += 1
        if abs(fd - an) <= atol or abs(fd - an) <= rtol * max(abs(fd), abs(an)):
            ok += 1
    return ok, total


@pytest.mark.parametrize("levels", [2, 3])
def test_full_network_gradient_check(levels):
    cfg = ArchConfig(in_channels=3, num_classes=2, base_width=4, levels=levels, dropout_rate=0.1)
    params = init_model(cfg, SeededRng(0))
    shape = Shape3D(8, 8, 8)
    x = random_volume(100 + levels, 3, shape)
    gt = random_labels(200 + levels, shape, 1)
    ok, total = fd_check(params, x, gt, n_samples=200, seed=levels)
    assert ok / total >= 0.95, f"levels={levels}: {ok}/{total}"


def test_backward_zero_dlogits(tiny_params, shape8):
    x = random_volume(2, 3, shape8)
    _, cache = forward(tiny_params, x, TRAIN, SeededRng(5))
    zeros = Volume.zeros(2, shape8)
    grads = backward(tiny_params, cache, zeros)
    for g in grads.values():
        assert not g.any()


def test_backward_linear_in_dlogits(tiny_params, shape8):
    x = random_volume(2, 3, shape8)
    logits, cache = forward(tiny_params, x, TRAIN, SeededRng(5))
    d = Volume(shape8, np.random.default_rng(0).normal(size=logits.data.shape).astype(np.float32))
    g1 = backward(tiny_params, cache, d)
    g2 = backward(tiny_params, cache, Volume(shape8, 2.0 * d.data))
    for name in g1:
        assert np.allclose(2.0 * g1[name], g2[name], rtol=1e-5, atol=1e-7)


def test_backward_requires_train_cache(tiny_params, shape8):
    x = random_volume(2, 3, shape8)
    logits, cache = forward(tiny_params, x, EVAL)
    with pytest.raises(ValueError, match="train-mode"):
        backward(tiny_params, cache, logits)


def test_params_round_trip(tiny_params, tmp_path, shape8):
    path = tmp_path / "m.par"
    save_params(tiny_params, path)
    back = load_params(path)
    for name in tiny_params.tensors:
        assert np.array_equal(back.tensors[name], tiny_params.tensors[name])
    x = random_volume(3, 3, shape8)
    a, _ = forward(tiny_params, x, EVAL)
    b, _ = forward(back, x, EVAL)
    assert np.array_equal(a.data, b.data)


def test_params_config_mismatch(tiny_params, tiny_arch, tmp_path):
    path = tmp_path / "m.par"
    save_params(tiny_params, path)
    other = ArchConfig(in_channels=3, num_classes=4, base_width=4, levels=2)
    with pytest.raises(ValueError, match="does not match"):
        load_params(path, expect=other)


def test_params_truncated_file(tiny_params, tmp_path):
    path = tmp_path / "m.par"
    save_params(tiny_params, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(ValueError, match="truncated"):
        load_params(path)


def test_layer_specs_channel_consistency():
    cfg = ArchConfig(in_channels=4, num_classes=3, base_width=8, levels=3)
    specs = {name: (k, cin, cout) for name, k, cin, cout in layer_specs(cfg)}
    assert specs["enc0.conv1"] == (3, 4, 8)
    assert specs["down1"] == (2, 16, 32)
    assert specs["dec1.conv1"] == (3, 32, 16)  # concat halves meet
    assert specs["head"] == (1, 8, 3)
