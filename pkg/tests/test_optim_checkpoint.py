import numpy as np
import pytest

from tempkg import _kernels
from tempkg.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from tempkg.optim import AdamState


class TestAdam:
    def test_zero_gradient_leaves_params_but_decays_moments(self):
        p = {"w": np.array([1.0, -2.0, 3.0])}
        adam = AdamState(lr=0.01)
        adam.step(p, {"w": np.ones(3)})
        m_before = adam.m["w"].copy()
        w_before = p["w"].copy()
        adam.step(p, {"w": np.zeros(3)})
        np.testing.assert_allclose(adam.m["w"], 0.9 * m_before)
        # zero grad still moves params through the decayed moment, but the
        # moment shrinks; with m == 0 from the start params stay put
        q = {"w": np.array([1.0, 2.0])}
        a2 = AdamState(lr=0.01)
        a2.step(q, {"w": np.zeros(2)})
        np.testing.assert_array_equal(q["w"], [1.0, 2.0])
        assert not np.array_equal(p["w"], w_before)

    def test_constant_gradient_update_approaches_lr_sign(self):
        # Adam fixed point under constant gradient g: step -> lr * g/(|g| + eps)
        lr = 0.003
        g = np.array([0.5, -2.0, 7.0])
        p = {"w": np.zeros(3)}
        adam = AdamState(lr=lr)
        prev = p["w"].copy()
        for _ in range(400):
            prev = p["w"].copy()
            adam.step(p, {"w": g})
        delta = p["w"] - prev
        expected = -lr * g / (np.abs(g) + adam.eps)
        np.testing.assert_allclose(delta, expected, rtol=1e-3)
        np.testing.assert_allclose(np.abs(delta), lr, rtol=1e-3)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        w0 = rng.normal(size=(4, 4))
        gs = [rng.normal(size=(4, 4)) for _ in range(10)]

        def run():
            p = {"w": w0.copy()}
            adam = AdamState(lr=0.01)
            for g in gs:
                adam.step(p, {"w": g})
            return p["w"]

        assert np.array_equal(run(), run())

    def test_missing_gradient_is_an_error(self):
        adam = AdamState()
        with pytest.raises(KeyError):
            adam.step({"w": np.zeros(2), "b": np.zeros(1)}, {"w": np.zeros(2)})

    def test_bias_correction_first_step(self):
        # after one step with gradient g, update is exactly -lr * g/(|g| + eps')
        p = {"w": np.array([10.0])}
        adam = AdamState(lr=0.1)
        adam.step(p, {"w": np.array([4.0])})
        mhat = 4.0  # (0.1*4)/(1-0.9)
        vhat = 16.0
        np.testing.assert_allclose(p["w"], 10.0 - 0.1 * mhat / (np.sqrt(vhat) + adam.eps))


class TestKernelBackends:
    def test_scatter_add_paths_agree(self):
        rng = np.random.default_rng(5)
        idx = rng.integers(0, 7, size=40)
        src = rng.normal(size=(40, 3))
        a = _kernels.scatter_add_rows_numpy(np.zeros((7, 3)), idx, src)
        if _kernels.scatter_add_rows_numba is not None:
            b = _kernels.scatter_add_rows_numba(np.zeros((7, 3)), idx, src)
            np.testing.assert_array_equal(a, b)

    def test_decay_accumulate_paths_agree(self):
        rng = np.random.default_rng(6)
        ents = rng.integers(0, 9, size=50)
        times = rng.integers(0, 30, size=50)
        a = _kernels.decay_accumulate_numpy(np.zeros(9), ents, times, 17, 0.3)
        if _kernels.decay_accumulate_numba is not None:
            b = _kernels.decay_accumulate_numba(np.zeros(9), ents, times, 17, 0.3)
            np.testing.assert_allclose(a, b, rtol=1e-14)

    def test_adam_update_paths_agree(self):
        rng = np.random.default_rng(7)
        p1 = rng.normal(size=(6, 2))
        g = rng.normal(size=(6, 2))
        m1, v1 = np.zeros((6, 2)), np.zeros((6, 2))
        p2, m2, v2 = p1.copy(), m1.copy(), v1.copy()
        _kernels.adam_update_numpy(p1, g, m1, v1, 0.01, 0.9, 0.999, 1e-8, 0.1, 0.001)
        if _kernels.adam_update_numba is not None:
            _kernels.adam_update_numba(p2, g, m2, v2, 0.01, 0.9, 0.999, 1e-8, 0.1, 0.001)
            np.testing.assert_array_equal(p1, p2)
            np.testing.assert_array_equal(m1, m2)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        tensors = {
            "entity.base": rng.normal(size=(5, 3)),
            "w": rng.normal(size=(2, 2, 2)),
            "bias": rng.normal(size=(4,)),
            "scalar": np.array(3.14159),
        }
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tensors)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(tensors)
        for name, arr in tensors.items():
            assert loaded[name].shape == arr.shape
            assert loaded[name].tobytes() == arr.tobytes()

    def test_save_is_deterministic(self, tmp_path):
        tensors = {"b": np.arange(3.0), "a": np.ones((2, 2))}
        save_checkpoint(tmp_path / "x1.ckpt", tensors)
        save_checkpoint(tmp_path / "x2.ckpt", tensors)
        assert (tmp_path / "x1.ckpt").read_bytes() == (tmp_path / "x2.ckpt").read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {"w": np.ones((4, 4))})
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
