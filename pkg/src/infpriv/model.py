"""Layered feedforward models: affine maps interleaved with activations."""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

ACTIVATIONS = ("identity", "relu")


def _frozen(a: Any, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Layer:
    """``act(W @ x + b)`` with ``W`` of shape (out, in)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        w = _frozen(self.weight, 2, "weight")
        b = _frozen(self.bias, 1, "bias")
        if w.size == 0:
            raise ValueError("weight matrix is empty")
        if b.shape[0] != w.shape[0]:
            raise ValueError(f"bias length {b.shape[0]} does not match {w.shape[0]} weight rows")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class LayeredModel:
    """A pre-trained function ``C: R^n -> R^k``.

    ``declared_lipschitz`` maps a norm (1 or 2) to an externally certified
    global Lipschitz constant; it is trusted and overrides computed bounds.
    """

    layers: tuple[Layer, ...]
    input_dim: int
    declared_lipschitz: dict[int, float] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a model needs at least one layer")
        width = self.input_dim
        for i, layer in enumerate(layers):
            if layer.in_dim != width:
                raise ValueError(f"layer {i} expects {layer.in_dim} inputs but receives {width}")
            width = layer.out_dim
        declared = {}
        for p, value in dict(self.declared_lipschitz).items():
            p = int(p)
            if p not in (1, 2):
                raise ValueError(f"declared Lipschitz constants are only accepted for p in (1, 2), got {p}")
            value = float(value)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"declared Lipschitz constant must be positive and finite, got {value}")
            declared[p] = value
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "declared_lipschitz", declared)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def equals(self, other: LayeredModel) -> bool:
        if self.input_dim != other.input_dim or len(self.layers) != len(other.layers):
            return False
        if self.declared_lipschitz != other.declared_lipschitz:
            return False
        return all(
            a.activation == b.activation
            and np.array_equal(a.weight, b.weight)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "layers": [
                {
                    "rows": layer.out_dim,
                    "cols": layer.in_dim,
                    "weights": layer.weight.ravel().tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation,
                }
                for layer in self.layers
            ],
            "declared_lipschitz": {str(p): v for p, v in sorted(self.declared_lipschitz.items())},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LayeredModel:
        layers = []
        for i, spec in enumerate(data["layers"]):
            rows, cols = int(spec["rows"]), int(spec["cols"])
            weights = list(spec["weights"])
            if len(weights) != rows * cols:
                raise ValueError(f"layer {i}: {len(weights)} weights for a {rows}x{cols} matrix")
            layers.append(Layer(np.reshape(weights, (rows, cols)), spec["bias"],
                                spec.get("activation", "identity")))
        declared = {int(k): v for k, v in (data.get("declared_lipschitz") or {}).items() if v is not None}
        return cls(tuple(layers), int(data["input_dim"]), declared)


def linear_model(weight: Any, bias: Any = None, activation: str = "identity", **kwargs) -> LayeredModel:
    w = np.asarray(weight, dtype=float)
    b = np.zeros(w.shape[0]) if bias is None else bias
    return LayeredModel((Layer(w, b, activation),), w.shape[1], **kwargs)


def save_model(model: LayeredModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def load_model(path: Union[str, Path]) -> LayeredModel:
    return LayeredModel.from_dict(json.loads(Path(path).read_text()))


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def forward(model: LayeredModel, x: Any) -> np.ndarray:
    """Un-normalised outputs of the model for one input or a batch of rows."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1:] != (model.input_dim,) or h.ndim > 2:
        raise ValueError(f"model expects inputs of dimension {model.input_dim}, got shape {h.shape}")
    for layer in model.layers:
        h = _activate(h @ layer.weight.T + layer.bias, layer.activation)
    return h


def predict(model: LayeredModel, x: Any) -> Union[int, np.ndarray]:
    """Argmax class; ties go to the lowest index."""
    logits = forward(model, x)
    labels = np.argmax(logits, axis=-1)
    return int(labels) if logits.ndim == 1 else labels


def forward_trace(model: LayeredModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activations and activations of every layer (inputs first)."""
    acts = [np.asarray(x, dtype=np.float64)]
    pre = []
    for layer in model.layers:
        z = acts[-1] @ layer.weight.T + layer.bias
        pre.append(z)
        acts.append(_activate(z, layer.activation))
    return pre, acts


def with_declared(model: LayeredModel, declared: Optional[dict[int, float]]) -> LayeredModel:
    return dataclasses.replace(model, declared_lipschitz=dict(declared or {}))
