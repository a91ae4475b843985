"""Plain minibatch SGD for MLP classifiers and noisy fine-tuning.

Stands in for the large pre-trained classifiers: the mechanisms only need a
layered model, so small MLPs trained here are enough to measure utility.
"""
from __future__ import annotations

import dataclasses
import math
import statistics
from collections.abc import Sequence
from typing import Any, Optional

import numpy as np

from infpriv.data import Dataset, accuracy
from infpriv.model import Layer, LayeredModel, forward_trace, predict
from infpriv.rng import RandomSource

# Noise draws averaged when scoring a model under input noise.
EVAL_DRAWS = 15


class TrainingDiverged(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    noise_sigma: float = 0.0
    sigma_grid: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0 or math.isnan(self.learning_rate):
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        if any(s < 0 for s in self.sigma_grid):
            raise ValueError("sigma_grid entries must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["sigma_grid"] = list(self.sigma_grid)
        return d


def init_model(input_dim: int, widths: Sequence[int], activations: Sequence[str],
               seed: int) -> LayeredModel:
    """Weights and biases uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    if len(widths) != len(activations):
        raise ValueError("need one activation per layer")
    layers = []
    fan_in = input_dim
    for i, (width, act) in enumerate(zip(widths, activations)):
        bound = 1.0 / math.sqrt(fan_in)
        u = RandomSource.for_trial(seed, i, "init").uniforms(width * fan_in + width)
        vals = (2.0 * u - 1.0) * bound
        layers.append(Layer(vals[: width * fan_in].reshape(width, fan_in), vals[width * fan_in:], act))
        fan_in = width
    return LayeredModel(tuple(layers), input_dim)


def mlp_arch(hidden: Sequence[int], classes: int) -> tuple[list[int], list[str]]:
    return list(hidden) + [classes], ["relu"] * len(hidden) + ["identity"]


def loss_and_grads(model: LayeredModel, x: np.ndarray,
                   y: np.ndarray) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean softmax cross-entropy and its gradient for every (W, b)."""
    pre, acts = forward_trace(model, x)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    n = x.shape[0]
    loss = float(np.mean(log_z - shifted[np.arange(n), y]))
    delta = np.exp(shifted - log_z[:, None])
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            delta = delta * (pre[i] > 0)
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i:
            delta = delta @ layer.weight
    return loss, grads


def _sgd_step(model: LayeredModel, grads, lr: float) -> LayeredModel:
    layers = tuple(
        Layer(layer.weight - lr * gw, layer.bias - lr * gb, layer.activation)
        for layer, (gw, gb) in zip(model.layers, grads)
    )
    return dataclasses.replace(model, layers=layers, declared_lipschitz={})


def fit(model: LayeredModel, x: np.ndarray, y: np.ndarray, config: TrainConfig,
        purpose: str = "train") -> tuple[LayeredModel, list[float]]:
    """Runs ``config.epochs`` of minibatch SGD starting from ``model``.

    With ``noise_sigma > 0`` every epoch sees a fresh Gaussian perturbation
    of each training input.
    """
    history = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = RandomSource.for_trial(config.seed, epoch, f"{purpose}/shuffle").generator().permutation(n)
        xe = x
        if config.noise_sigma > 0:
            noise = RandomSource.for_trial(config.seed, epoch, f"{purpose}/noise").gaussian(x.size, config.noise_sigma)
            xe = x + noise.reshape(x.shape)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model, xe[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}")
            total += loss * len(idx)
            if config.learning_rate:
                model = _sgd_step(model, grads, config.learning_rate)
        if not all(np.all(np.isfinite(layer.weight)) for layer in model.layers):
            raise TrainingDiverged(f"non-finite weights after epoch {epoch}")
        history.append(total / n)
    return model, history


def train(dataset: Dataset, hidden: Sequence[int], config: TrainConfig) -> LayeredModel:
    """Trains a fresh relu MLP with the given hidden widths on the train split."""
    x, y = dataset.split("train")
    widths, acts = mlp_arch(hidden, dataset.classes)
    model = init_model(dataset.dim, widths, acts, config.seed)
    model, _ = fit(model, x, y, config)
    return model


def noisy_accuracy(model: LayeredModel, x: np.ndarray, y: np.ndarray, sigma: float,
                   seed: int, draws: int = EVAL_DRAWS, purpose: str = "eval") -> np.ndarray:
    """Accuracy under Gaussian input noise, one value per draw.

    Draw ``t`` uses the stream ``(seed, t, purpose)`` so that different models
    scored with the same arguments see exactly the same noise.
    """
    if sigma == 0:
        acc = accuracy(predict(model, x), y)
        return np.full(draws, acc)
    out = np.empty(draws)
    for t in range(draws):
        z = RandomSource.for_trial(seed, t, purpose).gaussian(x.size, sigma).reshape(x.shape)
        out[t] = accuracy(predict(model, x + z), y)
    return out


def finetune_noisy(model: LayeredModel, dataset: Dataset, config: TrainConfig,
                   target_sigma: float,
                   draws: int = EVAL_DRAWS) -> tuple[LayeredModel, dict[str, Any]]:
    """Grid search over training-noise levels for a known inference noise.

    Each sigma in ``config.sigma_grid`` fine-tunes a copy of ``model`` with
    input noise of that sigma; candidates are scored by validation accuracy
    under input noise ``target_sigma`` averaged over ``draws`` draws. The best
    mean wins, ties going to the smaller sigma.

    Returns:
      The selected model and a report with one entry per candidate.
    """
    if not config.sigma_grid:
        raise ValueError("sigma_grid must not be empty")
    if target_sigma < 0:
        raise ValueError(f"target_sigma must be >= 0, got {target_sigma}")
    x_train, y_train = dataset.split("train")
    x_val, y_val = dataset.split("val")
    candidates = []
    best = None
    for sigma in sorted(set(config.sigma_grid)):
        cfg = dataclasses.replace(config, noise_sigma=sigma)
        tuned, history = fit(model, x_train, y_train, cfg, purpose="finetune")
        accs = noisy_accuracy(tuned, x_val, y_val, target_sigma, config.seed, draws, "finetune/eval")
        entry = {
            "sigma": sigma,
            "mean_acc": statistics.fmean(accs.tolist()),
            "std_acc": statistics.stdev(accs.tolist()) if draws > 1 else 0.0,
            "accs": accs.tolist(),
            "final_loss": history[-1],
        }
        candidates.append(entry)
        if best is None or entry["mean_acc"] > best[0]["mean_acc"]:
            best = (entry, tuned)
    report = {
        "target_sigma": float(target_sigma),
        "draws": draws,
        "config": config.to_dict(),
        "candidates": candidates,
        "selected_sigma": best[0]["sigma"],
        "selected_mean_acc": best[0]["mean_acc"],
    }
    return best[1], report
