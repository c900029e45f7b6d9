import numpy as np
import pytest

from voxedit.network import init_model
from voxedit.optim import EPS, AdamState, adam_step
from voxedit.tensorops import SeededRng


def zero_grads(params):
    return {n: np.zeros_like(t) for n, t in params.tensors.items()}


def test_zero_grads_leave_params(tiny_params):
    state = AdamState.for_params(tiny_params)
    before = {n: t.copy() for n, t in tiny_params.tensors.items()}
    _, state = adam_step(tiny_params, zero_grads(tiny_params), state)
    assert state.t == 1
    for n, t in tiny_params.tensors.items():
        assert np.array_equal(t, before[n])


def test_first_step_closed_form(tiny_params):
    state = AdamState.for_params(tiny_params)
    grads = zero_grads(tiny_params)
    name = "head.b"
    grads[name][0] = 1.0
    before = float(tiny_params.tensors[name][0])
    adam_step(tiny_params, grads, state, lr=1e-4)
    after = float(tiny_params.tensors[name][0])
    # bias-corrected first step: lr * 1 / (1 + eps)
    assert before - after == pytest.approx(1e-4 / (1.0 + EPS), abs=1e-7)


def test_adam_deterministic(tiny_arch):
    results = []
    for _ in range(2):
        params = init_model(tiny_arch, SeededRng(0))
        state = AdamState.for_params(params)
        gen = np.random.default_rng(1)
        for _step in range(3):
            grads = {n: gen.normal(size=t.shape).astype(np.float32) for n, t in params.tensors.items()}
            adam_step(params, grads, state, lr=1e-3)
        results.append({n: t.copy() for n, t in params.tensors.items()})
    for n in results[0]:
        assert np.array_equal(results[0][n], results[1][n])


def test_rejects_nonfinite_grads(tiny_params):
    state = AdamState.for_params(tiny_params)
    grads = zero_grads(tiny_params)
    grads["head.w"][0, 0] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        adam_step(tiny_params, grads, state)


def test_rejects_mismatched_keys(tiny_params):
    state = AdamState.for_params(tiny_params)
    grads = zero_grads(tiny_params)
    grads.pop("head.w")
    with pytest.raises(ValueError, match="keys"):
        adam_step(tiny_params, grads, state)
