"""Feed-forward autoencoder with hand-written backpropagation.

Hidden layers are ``Linear -> BatchNorm -> ReLU``; the bottleneck layer and
the output layer are plain affine maps (the output optionally followed by
``tanh``). All arrays are float64.

Parameters live in a flat, insertion-ordered ``dict`` keyed ``W{k}``,
``b{k}``, ``gamma{k}``, ``beta{k}``; batch-norm running statistics live in
``buffers`` as ``running_mean{k}`` / ``running_var{k}``.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from topoae.exceptions import ConfigError, ValidationError
from topoae.persistence import PointCloud, pairwise_distances, vr_persistence0
from topoae.topo_loss import topo_loss_grad

logger = logging.getLogger(__name__)

SPHERES_ARCH = [101, 32, 32, 2, 32, 32, 101]
DEEP_AE_ARCH = [784, 1000, 500, 250, 2, 250, 500, 1000, 784]

__all__ = [
    "MlpModel",
    "TrainConfig",
    "AdamState",
    "LossBreakdown",
    "init_model",
    "forward",
    "backward",
    "loss_and_grads",
    "adam_step",
    "train",
    "encode",
    "reconstruct",
    "seed_running_stats",
    "SPHERES_ARCH",
    "DEEP_AE_ARCH",
]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    lam: float = 1.0
    max_epochs: int = 100
    patience: int = 10
    weight_decay: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_epochs < 0 or self.patience < 1:
            raise ConfigError("max_epochs must be >= 0 and patience >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class MlpModel:
    layer_sizes: list
    params: dict
    buffers: dict
    latent_index: int
    batch_norm: bool = True
    output_activation: str = "identity"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    optimizer: AdamState = field(default_factory=AdamState)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def latent_dim(self) -> int:
        return self.layer_sizes[self.latent_index]

    def is_hidden(self, k: int) -> bool:
        """Whether affine layer ``k`` is followed by batch norm and ReLU."""
        return k + 1 != self.latent_index and k != self.n_layers - 1

    @property
    def activation_tags(self) -> list:
        tags = ["relu" if self.is_hidden(k) else "linear" for k in range(self.n_layers)]
        tags[-1] = self.output_activation
        return tags

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


def init_model(
    layer_sizes,
    seed: int = 0,
    batch_norm: bool = True,
    output_activation: str = "identity",
    latent_index: Optional[int] = None,
) -> MlpModel:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases, identity batch norm."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3 or min(sizes) < 1:
        raise ConfigError(f"need at least input, latent and output widths, got {sizes}")
    if output_activation not in ("identity", "tanh"):
        raise ConfigError(f"unknown output activation {output_activation!r}")
    if latent_index is None:
        latent_index = int(np.argmin(sizes[1:-1])) + 1
    if not 0 < latent_index < len(sizes) - 1:
        raise ConfigError("latent layer must be strictly inside the network")

    rng = np.random.default_rng(seed)
    params, buffers = {}, {}
    model = MlpModel(sizes, params, buffers, latent_index, batch_norm, output_activation)
    for k in range(model.n_layers):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        bound = np.sqrt(6.0 / fan_in)
        params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{k}"] = np.zeros(fan_out)
        if batch_norm and model.is_hidden(k):
            params[f"gamma{k}"] = np.ones(fan_out)
            params[f"beta{k}"] = np.zeros(fan_out)
            buffers[f"running_mean{k}"] = np.zeros(fan_out)
            buffers[f"running_var{k}"] = np.ones(fan_out)
    return model


def _as_array(batch) -> np.ndarray:
    if isinstance(batch, PointCloud):
        return batch.data
    return np.asarray(batch, dtype=np.float64)


def _layer_forward(model, k, h, mode, cache):
    W, b = model.params[f"W{k}"], model.params[f"b{k}"]
    a = h @ W + b
    cache[f"in{k}"] = h
    if model.is_hidden(k):
        if model.batch_norm:
            gamma, beta = model.params[f"gamma{k}"], model.params[f"beta{k}"]
            if mode == "train":
                mean = a.mean(axis=0)
                var = a.var(axis=0)
                cache[f"stats{k}"] = (mean, var)
            else:
                mean = model.buffers[f"running_mean{k}"]
                var = model.buffers[f"running_var{k}"]
            inv_std = 1.0 / np.sqrt(var + model.bn_eps)
            xhat = (a - mean) * inv_std
            cache[f"xhat{k}"], cache[f"inv_std{k}"] = xhat, inv_std
            a = gamma * xhat + beta
        cache[f"pre{k}"] = a
        return np.maximum(a, 0.0)
    if k == model.n_layers - 1 and model.output_activation == "tanh":
        out = np.tanh(a)
        cache[f"tanh{k}"] = out
        return out
    return a


def forward(model: MlpModel, batch, mode: str = "train"):
    """Return ``(latent, reconstruction, cache)``.

    In ``"train"`` mode batch norm uses batch statistics (stored in the cache,
    see :func:`update_running_stats`); in ``"eval"`` mode the running ones.
    """
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _as_array(batch)
    if x.ndim != 2 or x.shape[1] != model.layer_sizes[0]:
        raise ValidationError(f"expected batch of width {model.layer_sizes[0]}, got shape {x.shape}")
    cache = {"mode": mode}
    h = x
    latent = None
    for k in range(model.n_layers):
        h = _layer_forward(model, k, h, mode, cache)
        if k + 1 == model.latent_index:
            latent = h
    return latent, h, cache


def encode(model: MlpModel, data, batch_size: int = 1024) -> np.ndarray:
    x = _as_array(data)
    chunks = [forward(model, x[s:s + batch_size], "eval")[0] for s in range(0, len(x), batch_size)]
    return np.concatenate(chunks)


def reconstruct(model: MlpModel, data, batch_size: int = 1024) -> np.ndarray:
    x = _as_array(data)
    chunks = [forward(model, x[s:s + batch_size], "eval")[1] for s in range(0, len(x), batch_size)]
    return np.concatenate(chunks)


def update_running_stats(model: MlpModel, cache: dict) -> None:
    mom = model.bn_momentum
    for k in range(model.n_layers):
        stats = cache.get(f"stats{k}")
        if stats is None:
            continue
        mean, var = stats
        rm, rv = model.buffers[f"running_mean{k}"], model.buffers[f"running_var{k}"]
        rm *= 1.0 - mom
        rm += mom * mean
        rv *= 1.0 - mom
        rv += mom * var


def seed_running_stats(model: MlpModel, batch) -> None:
    """Overwrite running statistics with those of ``batch`` (train then eval then agree)."""
    _, _, cache = forward(model, batch, "train")
    for k in range(model.n_layers):
        stats = cache.get(f"stats{k}")
        if stats is not None:
            model.buffers[f"running_mean{k}"] = stats[0].copy()
            model.buffers[f"running_var{k}"] = stats[1].copy()


def backward(model: MlpModel, cache: dict, grad_output: np.ndarray, grad_latent=None) -> dict:
    """Backpropagate through a train-mode forward pass.

    ``grad_latent`` is an extra gradient added at the bottleneck, so it only
    reaches encoder parameters.
    """
    grads = {}
    g = grad_output
    for k in reversed(range(model.n_layers)):
        if k + 1 == model.latent_index and grad_latent is not None:
            g = g + grad_latent
        if k == model.n_layers - 1 and model.output_activation == "tanh":
            out = cache[f"tanh{k}"]
            g = g * (1.0 - out * out)
        if model.is_hidden(k):
            g = g * (cache[f"pre{k}"] > 0)
            if model.batch_norm:
                xhat, inv_std = cache[f"xhat{k}"], cache[f"inv_std{k}"]
                grads[f"gamma{k}"] = np.sum(g * xhat, axis=0)
                grads[f"beta{k}"] = np.sum(g, axis=0)
                dxhat = g * model.params[f"gamma{k}"]
                n = dxhat.shape[0]
                g = (inv_std / n) * (
                    n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
                )
        h = cache[f"in{k}"]
        grads[f"W{k}"] = h.T @ g
        grads[f"b{k}"] = g.sum(axis=0)
        g = g @ model.params[f"W{k}"].T
    return {name: grads[name] for name in model.params}


@dataclass
class LossBreakdown:
    total: float
    recon: float
    topo: float
    grads: dict
    pairing_x: Optional[np.ndarray] = None
    pairing_z: Optional[np.ndarray] = None
    cache: Optional[dict] = None
    degenerate_edges: int = 0


def _topo_pieces(x, latent, dist_x, pairing_x, pairing_z):
    if dist_x is None:
        dist_x = pairwise_distances(x).values
    dist_z = pairwise_distances(latent).values
    if pairing_x is None:
        pairing_x = vr_persistence0(dist_x).pairing
    if pairing_z is None:
        pairing_z = vr_persistence0(dist_z).pairing
    return topo_loss_grad(latent, dist_x, dist_z, pairing_x, pairing_z), pairing_x, pairing_z


def loss_and_grads(
    model: MlpModel,
    batch,
    lam: float,
    pairing_x=None,
    pairing_z=None,
    dist_x=None,
) -> LossBreakdown:
    """Total loss ``mse + lam * topo / m`` and its parameter gradients.

    Pairings may be supplied to freeze them (finite-difference checks);
    otherwise they are recomputed from the current batch.
    """
    x = _as_array(batch)
    m = x.shape[0]
    if lam > 0 and m < 2:
        raise ConfigError("the topological term needs at least two points per batch")
    latent, recon, cache = forward(model, x, "train")
    diff = recon - x
    mse = float(np.mean(diff * diff))
    grad_out = 2.0 * diff / diff.size

    topo = 0.0
    grad_latent = None
    degenerate = 0
    if lam > 0:
        res, pairing_x, pairing_z = _topo_pieces(x, latent, dist_x, pairing_x, pairing_z)
        topo = res.total / m
        grad_latent = (lam / m) * res.grad_latent
        degenerate = res.degenerate_edges
    grads = backward(model, cache, grad_out, grad_latent)
    return LossBreakdown(mse + lam * topo, mse, topo, grads, pairing_x, pairing_z, cache, degenerate)


def evaluate_loss(model: MlpModel, batch, lam: float) -> tuple:
    """Eval-mode ``(total, recon, topo)`` for one batch."""
    x = _as_array(batch)
    latent, recon, _ = forward(model, x, "eval")
    mse = float(np.mean((recon - x) ** 2))
    topo = 0.0
    if lam > 0 and x.shape[0] >= 2:
        res, _, _ = _topo_pieces(x, latent, None, None, None)
        topo = res.total / x.shape[0]
    return mse + lam * topo, mse, topo


def _decays(name: str) -> bool:
    return name.startswith("W")


def adam_step(params: dict, grads: dict, state: AdamState, learning_rate: float, weight_decay: float = 0.0):
    """One Adam update with decoupled weight decay on weight matrices (``W*``) only.

    Updates ``params`` and ``state`` in place and returns them.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay and _decays(name):
            p -= learning_rate * weight_decay * p
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def _validation_loss(model, data, config):
    totals = np.zeros(3)
    count = 0
    for s in range(0, len(data), config.batch_size):
        chunk = data[s:s + config.batch_size]
        if len(chunk) < 2:
            continue
        totals += np.asarray(evaluate_loss(model, chunk, config.lam)) * len(chunk)
        count += len(chunk)
    if count == 0:
        raise ValidationError("validation split needs at least two points")
    return totals / count


def train(model: MlpModel, dataset, config: TrainConfig):
    """Mini-batch training with early stopping on the validation total loss.

    ``dataset`` needs ``train`` and ``validation`` attributes (point clouds or
    arrays). Returns ``(best_model, history)``; ``history`` holds one dict per
    completed epoch. Incomplete trailing batches are dropped.
    """
    if dataset.train is None or dataset.validation is None:
        raise ValidationError("train and validation splits must be non-empty")
    x_train = _as_array(dataset.train)
    x_val = _as_array(dataset.validation)
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValidationError("train and validation splits must be non-empty")
    if config.max_epochs == 0:
        return model.copy(), []
    n_batches = len(x_train) // config.batch_size
    if n_batches == 0:
        raise ConfigError(
            f"batch_size {config.batch_size} exceeds the {len(x_train)} training points"
        )

    model = model.copy()
    rng = np.random.default_rng([config.seed, 1])
    best_loss = np.inf
    best_model = model.copy()
    stale = 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x_train))
        sums = np.zeros(3)
        for b in range(n_batches):
            batch = x_train[order[b * config.batch_size:(b + 1) * config.batch_size]]
            out = loss_and_grads(model, batch, config.lam)
            update_running_stats(model, out.cache)
            adam_step(model.params, out.grads, model.optimizer, config.learning_rate, config.weight_decay)
            sums += (out.total, out.recon, out.topo)
        train_total, train_recon, train_topo = sums / n_batches
        val_total, val_recon, val_topo = _validation_loss(model, x_val, config)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(train_total),
                "train_recon": float(train_recon),
                "train_topo": float(train_topo),
                "val_loss": float(val_total),
                "val_recon": float(val_recon),
                "val_topo": float(val_topo),
            }
        )
        logger.debug("epoch %d train %.6g val %.6g", epoch, train_total, val_total)
        if val_total < best_loss:
            best_loss = val_total
            best_model = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best_model, history
