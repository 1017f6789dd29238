"""Full model assembly, prediction rules, and checkpoint persistence."""

import json

import numpy as np
import pytest

from sleepstager.autodiff import Tensor, grad_check, sum_all, take_per_row, scale
from sleepstager.blocks import FeatureExtractorConfig
from sleepstager.errors import ConfigError, CorruptCheckpoint, ShapeError
from sleepstager.model import (
    StagerConfig,
    build_stager_params,
    checkpoint_load,
    checkpoint_save,
    forward_batch,
    forward_window,
    predict,
)


def tiny_config(window_size=3, seed=0, depth=2, hidden=8):
    return StagerConfig(
        window_size=window_size,
        stride_train=1,
        extractor=FeatureExtractorConfig.create(
            "se_resnet_18", width_multiplier=0.125, reduction_ratio=8
        ),
        lstm_hidden=hidden,
        lstm_depth=depth,
        sample_rate=10.0,  # 300-sample epochs keep tests quick
        seed=seed,
    ).validate()


@pytest.fixture(scope="module")
def tiny_model():
    cfg = tiny_config()
    params = build_stager_params(cfg)
    return cfg, params


class TestConfig:
    def test_even_window_rejected(self):
        with pytest.raises(ConfigError):
            tiny_config(window_size=4)

    def test_head_must_end_in_five(self):
        cfg = tiny_config()
        cfg.head_widths = (8, 3)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_dict_roundtrip(self):
        cfg = tiny_config(window_size=5, seed=3)
        assert StagerConfig.from_dict(cfg.to_dict()) == cfg

    def test_middle_index(self):
        assert tiny_config(window_size=9).middle_index == 4
        assert tiny_config(window_size=1).middle_index == 0


class TestForward:
    def test_window_size_one_degenerates(self, tiny_model):
        _, _ = tiny_model
        cfg = tiny_config(window_size=1, seed=1)
        params = build_stager_params(cfg)
        rng = np.random.default_rng(0)
        window = rng.normal(size=(1, cfg.epoch_len))
        log_probs, acts = forward_window(window, params, cfg, mode="train")
        assert log_probs.data.shape == (5,)
        assert acts.data.shape[0] == cfg.extractor.feature_dim

    def test_log_probs_normalized(self, tiny_model):
        cfg, params = tiny_model
        rng = np.random.default_rng(1)
        for _ in range(5):
            window = rng.normal(size=(cfg.window_size, cfg.epoch_len))
            log_probs, _ = forward_window(window, params, cfg, mode="train")
            assert abs(np.exp(log_probs.data).sum() - 1.0) < 1e-12

    def test_wrong_window_or_length_rejected(self, tiny_model):
        cfg, params = tiny_model
        rng = np.random.default_rng(2)
        with pytest.raises(ShapeError):
            forward_window(rng.normal(size=(5, cfg.epoch_len)), params, cfg, "train")
        with pytest.raises(ShapeError):
            forward_window(rng.normal(size=(3, 123)), params, cfg, "train")

    def test_batch_equivariance(self, tiny_model):
        cfg, params = tiny_model
        rng = np.random.default_rng(3)
        # initialize batchnorm running stats, then eval mode is pure
        warm = rng.normal(size=(2, cfg.window_size, cfg.epoch_len))
        forward_batch(warm, params, cfg, "train")
        w1 = rng.normal(size=(cfg.window_size, cfg.epoch_len))
        w2 = rng.normal(size=(cfg.window_size, cfg.epoch_len))
        a = forward_batch(np.stack([w1, w2]), params, cfg, "eval").log_probs.data
        b = forward_batch(np.stack([w2, w1]), params, cfg, "eval").log_probs.data
        np.testing.assert_array_equal(a[0], b[1])
        np.testing.assert_array_equal(a[1], b[0])

    def test_eval_forward_is_pure(self, tiny_model):
        cfg, params = tiny_model
        rng = np.random.default_rng(4)
        forward_batch(
            rng.normal(size=(2, cfg.window_size, cfg.epoch_len)), params, cfg, "train"
        )
        window = rng.normal(size=(cfg.window_size, cfg.epoch_len))
        a, _ = forward_window(window, params, cfg, mode="eval")
        b, _ = forward_window(window, params, cfg, mode="eval")
        assert np.array_equal(a.data, b.data)

    def test_composite_gradient_sampled(self):
        cfg = tiny_config(seed=5, depth=1)
        params = build_stager_params(cfg)
        rng = np.random.default_rng(5)
        for t in params.registry.values():
            t.data += rng.uniform(0.02, 0.1, size=t.data.shape) * rng.choice(
                [-1.0, 1.0], size=t.data.shape
            )
        window = rng.normal(size=(cfg.window_size, cfg.epoch_len))
        target = np.array([2])
        tensors = list(params.registry.values())
        entries = []
        for _ in range(12):
            i = int(rng.integers(len(tensors)))
            entries.append((i, int(rng.integers(tensors[i].data.size))))

        def fn(*ts):
            out = forward_batch(window[None], params, cfg, "train")
            return scale(sum_all(take_per_row(out.log_probs, target)), -1.0)

        assert grad_check(fn, tensors, entries=entries) < 1e-4


class TestPredict:
    def test_argmax_and_tie_rule(self, tiny_model):
        cfg, params = tiny_model
        rng = np.random.default_rng(6)
        forward_batch(
            rng.normal(size=(2, cfg.window_size, cfg.epoch_len)), params, cfg, "train"
        )
        w, b = params.head[-1]
        saved_w, saved_b = w.data.copy(), b.data.copy()
        try:
            w.data[:] = 0.0
            b.data[:] = [1.0, 0.0, 0.5, 0.0, 1.0]  # exact tie between 0 and 4
            window = rng.normal(size=(cfg.window_size, cfg.epoch_len))
            assert predict(window, params, cfg) == 0
            b.data[:] = [0.0, 0.0, 1.0, 0.0, 0.0]  # unique max at N2
            assert predict(window, params, cfg) == 2
        finally:
            w.data, b.data = saved_w, saved_b

    def test_predict_matches_forward_argmax(self, tiny_model):
        cfg, params = tiny_model
        rng = np.random.default_rng(7)
        forward_batch(
            rng.normal(size=(2, cfg.window_size, cfg.epoch_len)), params, cfg, "train"
        )
        for _ in range(100):
            window = rng.normal(size=(cfg.window_size, cfg.epoch_len))
            log_probs, _ = forward_window(window, params, cfg, mode="eval")
            assert predict(window, params, cfg) == int(np.argmax(log_probs.data))


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        cfg = tiny_config(seed=8)
        params = build_stager_params(cfg)
        rng = np.random.default_rng(8)
        forward_batch(
            rng.normal(size=(2, cfg.window_size, cfg.epoch_len)), params, cfg, "train"
        )
        path = tmp_path / "model.sstg"
        checkpoint_save(params, cfg, path)
        loaded, cfg2 = checkpoint_load(path)
        assert cfg2 == cfg
        for name, t in params.registry.items():
            assert np.array_equal(loaded.registry[name].data, t.data), name
        for name, st in params.states.items():
            assert np.array_equal(loaded.states[name].running_mean, st.running_mean)
            assert np.array_equal(loaded.states[name].running_var, st.running_var)
            assert loaded.states[name].initialized == st.initialized

    def test_truncated_payload(self, tmp_path):
        cfg = tiny_config(seed=9)
        params = build_stager_params(cfg)
        path = tmp_path / "model.sstg"
        checkpoint_save(params, cfg, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 100])
        with pytest.raises(CorruptCheckpoint):
            checkpoint_load(path)

    def test_bad_magic_and_version(self, tmp_path):
        cfg = tiny_config(seed=10)
        params = build_stager_params(cfg)
        path = tmp_path / "model.sstg"
        checkpoint_save(params, cfg, path)
        blob = bytearray(path.read_bytes())
        bad = tmp_path / "bad.sstg"
        bad.write_bytes(b"XXXX" + bytes(blob[4:]))
        with pytest.raises(CorruptCheckpoint) as e:
            checkpoint_load(bad)
        assert e.value.field == "magic"
        blob[4] = 99
        bad.write_bytes(bytes(blob))
        with pytest.raises(CorruptCheckpoint) as e:
            checkpoint_load(bad)
        assert e.value.field == "version"

    def test_shape_mismatch_names_tensor(self, tmp_path):
        cfg = tiny_config(seed=11)
        params = build_stager_params(cfg)
        path = tmp_path / "model.sstg"
        checkpoint_save(params, cfg, path)
        blob = path.read_bytes()
        mlen = int(np.frombuffer(blob[8:16], dtype="<u8")[0])
        manifest = json.loads(blob[16 : 16 + mlen])
        manifest["tensors"][0]["shape"][0] += 1  # lie about the first tensor
        first_name = manifest["tensors"][0]["name"]
        raw = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        patched = (
            blob[:8] + np.uint64(len(raw)).tobytes() + raw + blob[16 + mlen :]
        )
        bad = tmp_path / "bad.sstg"
        bad.write_bytes(patched)
        with pytest.raises(CorruptCheckpoint) as e:
            checkpoint_load(bad)
        assert e.value.field == first_name
