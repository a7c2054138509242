import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thunder.checkpoint import CheckpointError, MAGIC, load_checkpoint, read_tensors, save_checkpoint, write_tensors
from thunder.optim import AdamState, adam_step, clip_grad_norm, lr_at

from oracles import adam_reference


def test_zero_gradient_leaves_params(rng):
    p = {"w": rng.standard_normal((3, 3))}
    before = p["w"].copy()
    adam_step(p, {"w": np.zeros((3, 3))}, AdamState(), 1e-3)
    assert np.array_equal(p["w"], before)


def test_first_step_is_lr_times_sign(rng):
    g = rng.standard_normal((4, 5))
    p = {"w": np.zeros((4, 5))}
    adam_step(p, {"w": g}, AdamState(), 1e-3)
    np.testing.assert_allclose(p["w"], -1e-3 * np.sign(g), atol=1e-6)


def test_matches_scalar_recurrence_over_100_steps():
    grads = np.random.default_rng(0).standard_normal(100)
    p = {"w": np.array([0.3])}
    state = AdamState()
    for g in grads:
        adam_step(p, {"w": np.array([g])}, state, 1e-2)
    expected = adam_reference(list(grads), 1e-2, theta0=0.3)[-1]
    assert abs(p["w"][0] - expected) <= 1e-10
    assert state.t == 100


def test_missing_gradient_counts_as_zero_and_shape_checked():
    p = {"a": np.ones(2), "b": np.ones(3)}
    adam_step(p, {"a": np.ones(2)}, AdamState(), 0.1)
    assert np.array_equal(p["b"], np.ones(3))
    with pytest.raises(ValueError, match="shape"):
        adam_step(p, {"a": np.ones(3)}, AdamState(), 0.1)


def test_lr_schedule_examples():
    assert lr_at(0, 2e-4, 50_000) == 2e-4
    assert lr_at(50_000, 2e-4, 50_000) == pytest.approx(1e-4)
    assert lr_at(100_000, 2e-4, 50_000) == pytest.approx(5e-5)
    assert lr_at(49_999, 2e-4, 50_000) == 2e-4
    assert lr_at(10**6, 2e-4, 0) == 2e-4


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 10**5))
def test_lr_non_increasing(a, b, every):
    lo, hi = sorted((a, b))
    assert lr_at(hi, 2e-4, every) <= lr_at(lo, 2e-4, every)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == pytest.approx(5.0)
    assert np.sqrt(grads["a"] ** 2 + grads["b"] ** 2)[0] == pytest.approx(1.0)
    small = {"a": np.array([0.1])}
    clip_grad_norm(small, 1.0)
    assert small["a"][0] == 0.1


# ---------------------------------------------------------------- checkpoint


def _params(rng):
    return {"conv.weight": rng.standard_normal((4, 3, 3, 3)).astype(np.float32), "conv.bias": np.zeros(4, np.float32)}


def test_save_load_save_byte_identical(tmp_path, rng):
    params = _params(rng)
    state = AdamState()
    adam_step({k: v.copy() for k, v in params.items()}, {k: rng.standard_normal(v.shape).astype(np.float32) for k, v in params.items()}, state, 1e-3)
    a, b = tmp_path / "a.thdr", tmp_path / "b.thdr"
    save_checkpoint(params, state, a, meta={"step": 7, "K": 2})
    loaded, optim, meta = load_checkpoint(a)
    assert meta == {"step": 7.0, "K": 2.0} and optim.t == 1
    for k in params:
        assert np.array_equal(loaded[k], params[k]) and loaded[k].dtype == np.float32
        assert np.array_equal(optim.m[k], state.m[k])
    save_checkpoint(loaded, optim, b, meta=meta)
    assert a.read_bytes() == b.read_bytes()


def test_empty_model_is_header_only(tmp_path):
    path = tmp_path / "e.thdr"
    save_checkpoint({}, None, path)
    assert path.read_bytes() == MAGIC + struct.pack("<II", 1, 0)
    assert load_checkpoint(path) == ({}, None, {})


def test_layout_of_one_tensor(tmp_path):
    path = tmp_path / "one.thdr"
    write_tensors(path, {"w": np.arange(6, dtype=np.float32).reshape(2, 3)})
    raw = path.read_bytes()
    expected = MAGIC + struct.pack("<IIH", 1, 1, 1) + b"w" + struct.pack("<BB2I", 0, 2, 2, 3)
    assert raw[: len(expected)] == expected
    assert raw[len(expected) :] == np.arange(6, dtype="<f4").tobytes()


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:-3], "truncated"),
        (lambda b: b[:14], "truncated"),
        (lambda b: b + b"\0", "trailing"),
        (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "version"),
    ],
)
def test_corrupt_files_rejected(tmp_path, rng, mutate, message):
    path = tmp_path / "c.thdr"
    save_checkpoint(_params(rng), None, path)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(CheckpointError, match=message):
        read_tensors(path)


def test_unsupported_dtype(tmp_path):
    with pytest.raises(CheckpointError, match="dtype"):
        write_tensors(tmp_path / "x.thdr", {"w": np.zeros(2, np.int32)})


def test_unknown_entry_rejected(tmp_path):
    path = tmp_path / "u.thdr"
    write_tensors(path, {"mystery": np.zeros(1, np.float32)})
    with pytest.raises(CheckpointError, match="mystery"):
        load_checkpoint(path)
