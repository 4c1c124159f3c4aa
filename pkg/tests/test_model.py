import numpy as np
import pytest

import fttgru.nn as nn_mod
from fttgru.model import (
    ModelConfig,
    build_model,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
)
from fttgru.nn import mse_loss
from fttgru.numerics import NumericsError

SMALL = dict(seq_len=8, n_features=5, d_model=8, n_layers=2, n_heads=2,
             gru_units=6, ffn_width=12)


def small_config(variant="hybrid", **kw):
    return ModelConfig(variant=variant, **{**SMALL, **kw})


def hand_param_count(cfg):
    """Independent tally from the documented layer dimensions."""
    d, f, u, w = cfg.d_model, cfg.n_features, cfg.gru_units, cfg.ffn_width
    k = cfg.seq_len // 2 + 1
    total = f * d + d  # input projection
    if cfg.variant in ("hybrid", "ftt_only"):
        per_layer = (2 * d) + (2 * cfg.n_heads * k) + (d * d + d) + (2 * d) \
            + (d * w + w) + (w * d + d)
        total += cfg.n_layers * per_layer
    if cfg.variant in ("hybrid", "gru_only"):
        total += 3 * (d * u) + 3 * (u * u) + 3 * u
    head_in = u if cfg.variant in ("hybrid", "gru_only") else d
    total += head_in + 1
    return total


class TestBuild:
    def test_same_seed_bit_identical(self):
        a = build_model(small_config(), 123)
        b = build_model(small_config(), 123)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert pa.name == pb.name
            assert np.array_equal(pa.value, pb.value)

    def test_different_seed_differs(self):
        a = build_model(small_config(), 1)
        b = build_model(small_config(), 2)
        assert any(not np.array_equal(pa.value, pb.value)
                   for pa, pb in zip(a.parameters(), b.parameters()))

    @pytest.mark.parametrize("variant", ["hybrid", "gru_only", "ftt_only"])
    def test_param_count_matches_hand_tally(self, variant):
        cfg = ModelConfig(variant=variant)  # paper-scale defaults
        state = build_model(cfg, 0)
        assert state.param_count() == hand_param_count(cfg)

    def test_default_hybrid_count_is_pinned(self):
        # frozen from the hand tally: 1600 + 2*21120 + 24768 + 65
        assert build_model(ModelConfig(), 0).param_count() == 68673

    def test_gru_only_smaller_than_hybrid(self):
        hybrid = build_model(ModelConfig(variant="hybrid"), 0)
        gru = build_model(ModelConfig(variant="gru_only"), 0)
        assert gru.param_count() < hybrid.param_count()

    def test_invalid_config_rejected(self):
        from fttgru.model import ConfigError
        with pytest.raises(ConfigError):
            ModelConfig(variant="lstm").validate()
        with pytest.raises(ConfigError):
            ModelConfig(d_model=30, n_heads=4).validate()


class TestForward:
    @pytest.mark.parametrize("variant", ["hybrid", "gru_only", "ftt_only"])
    def test_shape_contract_and_finite(self, variant):
        cfg = small_config(variant)
        state = build_model(cfg, 0)
        x = np.random.default_rng(0).uniform(0, 1, (3, cfg.seq_len, cfg.n_features))
        pred, caches = model_forward(state, x)
        assert pred.shape == (3,)
        assert np.all(np.isfinite(pred))
        if variant != "gru_only":
            assert caches.encoder_out.shape == (3, cfg.seq_len, cfg.d_model)
        if variant != "ftt_only":
            assert caches.gru_out.shape == (3, cfg.seq_len, cfg.gru_units)
            assert caches.last_hidden.shape == (3, cfg.gru_units)

    def test_duplicate_rows_identical_outputs(self):
        state = build_model(small_config(), 1)
        rng = np.random.default_rng(1)
        one = rng.uniform(0, 1, (1, 8, 5))
        batch = np.concatenate([one, rng.uniform(0, 1, (2, 8, 5)), one])
        pred, _ = model_forward(state, batch)
        assert pred[0] == pred[3]

    def test_batch_permutation_equivariance(self):
        state = build_model(small_config(), 2)
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, (6, 8, 5))
        perm = rng.permutation(6)
        pred, _ = model_forward(state, x)
        pred_p, _ = model_forward(state, x[perm])
        assert np.allclose(pred_p, pred[perm], atol=1e-12)

    @pytest.mark.parametrize("variant", ["hybrid", "gru_only", "ftt_only"])
    def test_zero_parameters_zero_output(self, variant):
        state = build_model(small_config(variant), 3)
        for p in state.parameters():
            p.value[...] = 0.0
        x = np.random.default_rng(3).uniform(0, 1, (4, 8, 5))
        pred, _ = model_forward(state, x)
        assert np.array_equal(pred, np.zeros(4))

    def test_wrong_shape_rejected(self):
        state = build_model(small_config(), 0)
        with pytest.raises(NumericsError):
            model_forward(state, np.zeros((2, 9, 5)))

    def test_nonfinite_input_rejected(self):
        state = build_model(small_config(), 0)
        x = np.zeros((1, 8, 5))
        x[0, 0, 0] = np.nan
        with pytest.raises(NumericsError):
            model_forward(state, x)

    def test_identity_filters_equal_identity_mixing_model(self, monkeypatch):
        """At init (filters 1+0i) the hybrid forward must match a twin whose
        mixing step is the identity map feeding the same projection."""
        cfg = small_config("hybrid")
        state = build_model(cfg, 7)
        x = np.random.default_rng(7).uniform(0, 1, (4, 8, 5))
        pred, _ = model_forward(state, x)

        real_mix = nn_mod.fourier_mix_forward

        def identity_mix(u, fre, fim, pw, pb, heads, fnet_mode=False):
            b, t, d = u.shape
            y_flat, cache = nn_mod.dense_forward(u.reshape(b * t, d), pw, pb)
            return y_flat.reshape(b, t, d), cache

        monkeypatch.setattr(nn_mod, "fourier_mix_forward", identity_mix)
        pred_identity, _ = model_forward(state, x)
        monkeypatch.setattr(nn_mod, "fourier_mix_forward", real_mix)
        assert np.max(np.abs(pred - pred_identity)) < 1e-8

    def test_output_scale_multiplies_head(self):
        import dataclasses
        cfg = small_config("gru_only")
        a = build_model(cfg, 5)
        b = build_model(dataclasses.replace(cfg, output_scale=10.0), 5)
        x = np.random.default_rng(5).uniform(0, 1, (2, 8, 5))
        pa, _ = model_forward(a, x)
        pb, _ = model_forward(b, x)
        assert np.allclose(pb, 10.0 * pa, atol=1e-12)


class TestBackward:
    @pytest.mark.parametrize("variant", ["hybrid", "gru_only", "ftt_only"])
    def test_zero_upstream_zero_grads(self, variant):
        state = build_model(small_config(variant), 4)
        x = np.random.default_rng(4).uniform(0, 1, (3, 8, 5))
        _, caches = model_forward(state, x)
        model_backward(state, np.zeros(3), caches)
        for p in state.parameters():
            assert not p.grad.any(), p.name

    def test_grads_accumulate_additively(self):
        state = build_model(small_config(), 5)
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 1, (3, 8, 5))
        dpred = rng.normal(size=3)
        _, caches = model_forward(state, x)
        model_backward(state, dpred, caches)
        once = [p.grad.copy() for p in state.parameters()]
        _, caches = model_forward(state, x)
        model_backward(state, dpred, caches)
        for p, g1 in zip(state.parameters(), once):
            assert np.allclose(p.grad, 2 * g1, atol=1e-12), p.name

    @pytest.mark.parametrize("variant", ["hybrid", "gru_only", "ftt_only"])
    def test_loss_gradient_matches_finite_differences(self, variant):
        cfg = small_config(variant, output_scale=25.0)
        state = build_model(cfg, 6)
        rng = np.random.default_rng(6)
        x = rng.uniform(0, 1, (4, 8, 5))
        y = rng.uniform(0, 50, 4)
        pred, caches = model_forward(state, x)
        _, dpred = mse_loss(pred, y)
        model_backward(state, dpred, caches)

        params = state.parameters()
        picks = []
        for p in params:
            picks.append((p, 0))
            if p.value.size > 3:
                picks.append((p, p.value.size - 1))
        eps = 1e-6
        for p, idx in picks:
            analytic = p.grad.flat[idx]
            orig = p.value.flat[idx]
            p.value.flat[idx] = orig + eps
            lp, _ = mse_loss(model_forward(state, x)[0], y)
            p.value.flat[idx] = orig - eps
            lm, _ = mse_loss(model_forward(state, x)[0], y)
            p.value.flat[idx] = orig
            numeric = (lp - lm) / (2 * eps)
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-4, (p.name, idx)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        state = build_model(small_config(), 9)
        # make values non-trivial
        for p in state.parameters():
            p.value += 0.001
        path = tmp_path / "m.ckpt"
        save_checkpoint(state, path)
        loaded = load_checkpoint(path)
        assert loaded.config == state.config
        for pa, pb in zip(state.parameters(), loaded.parameters()):
            assert pa.name == pb.name
            assert np.array_equal(pa.value, pb.value)

    def test_save_is_deterministic_bytes(self, tmp_path):
        state = build_model(small_config(), 10)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(state, p1)
        save_checkpoint(state, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_prediction_survives_round_trip(self, tmp_path):
        state = build_model(small_config("ftt_only"), 11)
        x = np.random.default_rng(11).uniform(0, 1, (2, 8, 5))
        pred, _ = model_forward(state, x)
        save_checkpoint(state, tmp_path / "m.ckpt")
        pred2, _ = model_forward(load_checkpoint(tmp_path / "m.ckpt"), x)
        assert np.array_equal(pred, pred2)

    def test_garbage_file_rejected(self, tmp_path):
        from fttgru.model import ConfigError
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ConfigError):
            load_checkpoint(path)
