import numpy as np
import pytest

from oracles import central_difference, gradients_close
from topoae import ConfigError, ValidationError
from topoae import checkpoint
from topoae.nn import (
    AdamState,
    TrainConfig,
    adam_step,
    forward,
    init_model,
    loss_and_grads,
    seed_running_stats,
    train,
)
from topoae.datasets import DatasetSplit


def _param_fd_check(model, x, lam, rtol):
    base = loss_and_grads(model, x, lam)
    px, pz = base.pairing_x, base.pairing_z
    for name, p in model.params.items():
        def total(values, name=name):
            saved = model.params[name]
            model.params[name] = values
            try:
                return loss_and_grads(model, x, lam, px, pz).total
            finally:
                model.params[name] = saved

        numeric = central_difference(total, p)
        if not gradients_close(base.grads[name], numeric, rtol=rtol, atol=1e-8):
            return False
    return True


def test_zero_model_zero_input():
    model = init_model([3, 4, 2, 4, 3], seed=0, output_activation="tanh")
    for p in model.params.values():
        if p.ndim == 2:
            p[...] = 0.0
    _, recon, _ = forward(model, np.zeros((5, 3)), "eval")
    np.testing.assert_array_equal(recon, np.tanh(np.zeros((5, 3))))


def test_train_eval_agree_with_seeded_stats():
    rng = np.random.default_rng(0)
    model = init_model([6, 8, 8, 2, 8, 8, 6], seed=1)
    x = rng.normal(size=(16, 6))
    seed_running_stats(model, x)
    z_train, r_train, _ = forward(model, x, "train")
    z_eval, r_eval, _ = forward(model, x, "eval")
    np.testing.assert_allclose(z_train, z_eval, atol=1e-6)
    np.testing.assert_allclose(r_train, r_eval, atol=1e-6)


def test_shapes_and_width_check():
    model = init_model([101, 32, 32, 2, 32, 32, 101], seed=0)
    latent, recon, _ = forward(model, np.random.default_rng(0).normal(size=(10, 101)))
    assert latent.shape == (10, 2) and recon.shape == (10, 101)
    assert np.all(np.isfinite(recon))
    assert model.activation_tags == ["relu", "relu", "linear", "relu", "relu", "identity"]
    with pytest.raises(ValidationError):
        forward(model, np.zeros((3, 100)))


def test_lambda_zero_is_plain_reconstruction():
    rng = np.random.default_rng(1)
    model = init_model([5, 6, 2, 6, 5], seed=2)
    out = loss_and_grads(model, rng.normal(size=(8, 5)), 0.0)
    assert out.total == out.recon
    assert out.topo == 0.0 and out.pairing_x is None


def test_isometric_latent_has_no_topological_gradient():
    # Encoder is the identity on 2-D data, so latent and input distances coincide.
    rng = np.random.default_rng(2)
    model = init_model([2, 2, 2], seed=3, batch_norm=False, latent_index=1)
    model.params["W0"] = np.eye(2)
    model.params["b0"] = np.zeros(2)
    x = rng.normal(size=(10, 2))
    plain = loss_and_grads(model, x, 0.0)
    topo = loss_and_grads(model, x, 1.0)
    assert topo.topo == 0.0
    for name in plain.grads:
        np.testing.assert_array_equal(plain.grads[name], topo.grads[name])


def test_lambda_needs_two_points():
    model = init_model([3, 2, 3], seed=0, batch_norm=False)
    with pytest.raises(ConfigError):
        loss_and_grads(model, np.zeros((1, 3)), 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_full_gradient_no_batchnorm(seed):
    rng = np.random.default_rng(seed)
    model = init_model([3, 4, 2, 4, 3], seed=seed, batch_norm=False)
    for name, p in model.params.items():
        if name.startswith("b"):
            p[...] = rng.normal(scale=0.1, size=p.shape)
    assert _param_fd_check(model, rng.normal(size=(8, 3)), 1.0, rtol=1e-4)


@pytest.mark.parametrize("seed", range(3))
def test_full_gradient_with_batchnorm(seed):
    rng = np.random.default_rng(10 + seed)
    model = init_model([4, 5, 5, 2, 5, 4], seed=seed, batch_norm=True)
    for name, p in model.params.items():
        if name.startswith(("gamma", "beta")):
            p[...] += rng.normal(scale=0.2, size=p.shape)
    assert _param_fd_check(model, rng.normal(size=(10, 4)), 0.5, rtol=1e-3)


def test_tanh_output_gradient():
    rng = np.random.default_rng(4)
    model = init_model([3, 4, 2, 4, 3], seed=4, batch_norm=False, output_activation="tanh")
    assert _param_fd_check(model, rng.uniform(-1, 1, size=(6, 3)), 0.3, rtol=1e-4)


def test_adam_zero_gradient_no_decay():
    params = {"W0": np.array([[1.0, -2.0]]), "b0": np.array([0.5])}
    before = {k: v.copy() for k, v in params.items()}
    adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, AdamState(), 0.1, 0.0)
    for k in params:
        np.testing.assert_array_equal(params[k], before[k])


def test_adam_first_step():
    params = {"w": np.array([0.0])}
    adam_step(params, {"w": np.array([1.0])}, AdamState(), 0.1)
    # m_hat = v_hat = 1 after bias correction: step = lr * 1 / (1 + eps)
    assert params["w"][0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)


def test_adam_weight_decay_only():
    params = {"W0": np.array([[2.0]]), "b0": np.array([2.0])}
    zero = {k: np.zeros_like(v) for k, v in params.items()}
    adam_step(params, zero, AdamState(), 0.01, 0.1)
    assert params["W0"][0, 0] == pytest.approx(2.0 - 0.01 * 0.1 * 2.0, abs=1e-15)
    assert params["b0"][0] == 2.0


def _toy_split(seed=0, n=200):
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(n, 2))
    x = latent @ rng.normal(size=(2, 5))
    return DatasetSplit(x[:150], x[150:180], x[180:])


def test_max_epochs_zero():
    model = init_model([5, 8, 2, 8, 5], seed=0)
    trained, history = train(model, _toy_split(), TrainConfig(max_epochs=0))
    assert history == []
    for k in model.params:
        np.testing.assert_array_equal(model.params[k], trained.params[k])


def test_training_reduces_reconstruction_error():
    split = _toy_split()
    cfg = TrainConfig(learning_rate=1e-2, batch_size=16, lam=0.0, max_epochs=30, patience=30, seed=0)
    model = init_model([5, 16, 2, 16, 5], seed=0)
    trained, history = train(model, split, cfg)
    first = history[0]["train_recon"]
    best_so_far = np.minimum.accumulate([h["val_recon"] for h in history])
    assert best_so_far[-1] < first
    assert len(history) <= cfg.max_epochs


def test_training_is_deterministic():
    split = _toy_split(1)
    cfg = TrainConfig(learning_rate=5e-3, batch_size=16, lam=0.5, max_epochs=5, seed=3)
    model = init_model([5, 8, 2, 8, 5], seed=3)
    _, h1 = train(model, split, cfg)
    _, h2 = train(model, split, cfg)
    assert h1 == h2


def test_early_stopping_returns_best_model():
    split = _toy_split(2)
    cfg = TrainConfig(learning_rate=5e-2, batch_size=16, lam=0.5, max_epochs=40, patience=3, seed=1)
    model = init_model([5, 8, 2, 8, 5], seed=1)
    best, history = train(model, split, cfg)
    assert len(history) <= cfg.max_epochs
    from topoae.nn import _validation_loss

    val = _validation_loss(best, np.asarray(split.validation), cfg)[0]
    assert val == pytest.approx(min(h["val_loss"] for h in history), rel=1e-12)


def test_empty_split_rejected():
    model = init_model([5, 8, 2, 8, 5], seed=0)
    with pytest.raises(ValidationError):
        train(model, DatasetSplit(np.zeros((0, 5)), np.zeros((0, 5)), np.zeros((0, 5))), TrainConfig())


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1)
    with pytest.raises(ConfigError):
        TrainConfig(lam=-1.0)


def test_checkpoint_round_trip(tmp_path):
    split = _toy_split(3)
    cfg = TrainConfig(learning_rate=5e-3, batch_size=16, lam=0.5, max_epochs=2, seed=0)
    model, _ = train(init_model([5, 8, 2, 8, 5], seed=0), split, cfg)
    path = tmp_path / "model.ckpt"
    checkpoint.save(path, model, cfg.to_dict())
    loaded, config = checkpoint.load(path)
    assert config == cfg.to_dict()
    assert loaded.layer_sizes == model.layer_sizes
    assert loaded.optimizer.step == model.optimizer.step
    for group in ("params", "buffers"):
        for k, v in getattr(model, group).items():
            assert getattr(loaded, group)[k].tobytes() == v.tobytes()
    for k, v in model.optimizer.m.items():
        assert loaded.optimizer.m[k].tobytes() == v.tobytes()
    assert checkpoint.dumps(loaded, config) == path.read_bytes()


def test_corrupt_checkpoint(tmp_path):
    model = init_model([3, 2, 3], seed=0)
    blob = bytearray(checkpoint.dumps(model))
    blob[-40] ^= 0xFF
    with pytest.raises(checkpoint.ParseError, match="offset"):
        checkpoint.loads(bytes(blob))
    with pytest.raises(checkpoint.ParseError, match="magic"):
        checkpoint.loads(b"NOTACKPT" + bytes(blob[8:]))
    with pytest.raises(checkpoint.ParseError, match="truncated"):
        checkpoint.loads(b"")
