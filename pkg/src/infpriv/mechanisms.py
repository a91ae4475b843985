"""Calibration and application of Lap-Output, Gauss-Output and Gauss-Input.

Lap-Output:    ``M(x) = C(x) + Z``,  ``Z_i ~ Lap(mu_1 alpha / eps)``
Gauss-Output:  ``M(x) = C(x) + Z``,  ``Z_i ~ N(0, s^2)``,
               ``s = sqrt(2 ln(1.25 / delta)) alpha mu_2 / eps``
Gauss-Input:   ``M(x) = C(x + Z)``,  same ``s`` with ``mu = 1``
"""
from __future__ import annotations

import dataclasses
import math
from decimal import Decimal
from typing import Any, Optional

import numpy as np

from infpriv.budget import PrivacyBudget
from infpriv.model import LayeredModel, forward
from infpriv.rng import RandomSource

FAMILIES = ("laplace", "gaussian")
PLACEMENTS = ("input", "output")
MECHANISMS = ("lap-output", "gauss-output", "gauss-input")

CLASSICAL_REGIME_WARNING = "classical-regime: eps > 1, gaussian constant unproven; audit required"


class CalibrationError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    """Calibrated additive noise plus the inputs it was calibrated from."""

    family: str
    scale: float
    dim: int
    placement: str
    budget: PrivacyBudget
    mu: float = 1.0
    warning: Optional[str] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"noise scale must be positive and finite, got {self.scale}")
        if self.dim < 1:
            raise ValueError(f"noise dimension must be positive, got {self.dim}")

    @property
    def mechanism(self) -> str:
        if self.family == "laplace":
            return "lap-output"
        return "gauss-output" if self.placement == "output" else "gauss-input"

    @property
    def sensitivity(self) -> float:
        """The l_p output shift the noise is calibrated against: ``mu * alpha``."""
        return self.mu * self.budget.alpha

    def with_scale(self, scale: float) -> NoiseSpec:
        return dataclasses.replace(self, scale=scale)

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "mechanism": self.mechanism,
            "scale": self.scale,
            "dim": self.dim,
            "placement": self.placement,
            "provenance": {"budget": self.budget.to_dict(), "mu": self.mu},
            "warning": self.warning,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NoiseSpec:
        prov = data["provenance"]
        return cls(data["family"], float(data["scale"]), int(data["dim"]), data["placement"],
                   PrivacyBudget.from_dict(prov["budget"]), float(prov["mu"]), data.get("warning"))


def radius_over_budget(alpha: float, epsilon: float) -> float:
    """``alpha / epsilon`` evaluated on the shortest decimal forms.

    Pairs such as (0.01, 0.1) and (0.1, 1) then give bit-identical ratios,
    which plain float division does not.
    """
    return float(Decimal(repr(float(alpha))) / Decimal(repr(float(epsilon))))


def gaussian_constant(delta: float) -> float:
    return math.sqrt(2.0 * math.log(1.25 / delta))


def _check_common(budget: PrivacyBudget, mu: float):
    if budget.vacuous:
        raise CalibrationError("cannot calibrate noise for a vacuous budget")
    if budget.alpha == 0:
        raise CalibrationError("degenerate radius: alpha = 0 would release exact outputs")
    if not (mu > 0 and math.isfinite(mu)):
        raise CalibrationError(f"Lipschitz constant must be positive and finite, got {mu}")


def calibrate_laplace_output(budget: PrivacyBudget, mu1: float, dim: int = 1) -> NoiseSpec:
    """Lap-Output noise with scale ``mu1 * alpha / eps`` for a pure l_1 budget."""
    if budget.delta != 0:
        raise CalibrationError("Lap-Output provides pure IP only; delta must be 0")
    if budget.p != 1:
        raise CalibrationError(f"Lap-Output needs an l_1 budget, got p={budget.p}")
    _check_common(budget, mu1)
    scale = mu1 * radius_over_budget(budget.alpha, budget.epsilon)
    return NoiseSpec("laplace", scale, dim, "output", budget, float(mu1))


def _gaussian(budget: PrivacyBudget, mu: float, dim: int, placement: str) -> NoiseSpec:
    if not 0 < budget.delta < 1:
        raise CalibrationError(f"Gaussian mechanisms need delta in (0, 1), got {budget.delta}")
    if budget.p != 2:
        raise CalibrationError(f"Gaussian mechanisms need an l_2 budget, got p={budget.p}")
    _check_common(budget, mu)
    scale = gaussian_constant(budget.delta) * radius_over_budget(budget.alpha, budget.epsilon) * mu
    warning = CLASSICAL_REGIME_WARNING if budget.epsilon > 1 else None
    return NoiseSpec("gaussian", scale, dim, placement, budget, float(mu), warning)


def calibrate_gauss_output(budget: PrivacyBudget, mu2: float, dim: int = 1) -> NoiseSpec:
    return _gaussian(budget, mu2, dim, "output")


def calibrate_gauss_input(budget: PrivacyBudget, input_dim: int) -> NoiseSpec:
    """Gauss-Input noise: the identity map is 1-Lipschitz, so ``mu = 1``."""
    return _gaussian(budget, 1.0, input_dim, "input")


def calibrate(mechanism: str, budget: PrivacyBudget, model: Optional[LayeredModel] = None,
              mu: Optional[float] = None, dim: Optional[int] = None) -> NoiseSpec:
    """Dispatches on mechanism name; mu comes from ``model`` when not given."""
    from infpriv.lipschitz import model_lipschitz

    if mechanism == "gauss-input":
        if dim is None:
            if model is None:
                raise CalibrationError("gauss-input needs a model or an input dimension")
            dim = model.input_dim
        return calibrate_gauss_input(budget, dim)
    if mechanism not in MECHANISMS:
        raise CalibrationError(f"unknown mechanism {mechanism!r}")
    p = 1 if mechanism == "lap-output" else 2
    if mu is None:
        if model is None:
            raise CalibrationError(f"{mechanism} needs a model or an explicit Lipschitz constant")
        mu = model_lipschitz(model, p).value
    if dim is None:
        dim = model.output_dim if model is not None else 1
    if mechanism == "lap-output":
        return calibrate_laplace_output(budget, mu, dim)
    return calibrate_gauss_output(budget, mu, dim)


def recalibrate(spec: NoiseSpec) -> NoiseSpec:
    """Recomputes a spec from its recorded provenance."""
    if spec.family == "laplace":
        return calibrate_laplace_output(spec.budget, spec.mu, spec.dim)
    if spec.placement == "input":
        return calibrate_gauss_input(spec.budget, spec.dim)
    return calibrate_gauss_output(spec.budget, spec.mu, spec.dim)


def sample_noise(spec: NoiseSpec, rng: RandomSource, n: Optional[int] = None) -> np.ndarray:
    """i.i.d. noise of shape ``(dim,)``, or ``(n, dim)`` when ``n`` is given."""
    count = spec.dim if n is None else n * spec.dim
    if spec.family == "laplace":
        z = rng.laplace(count, spec.scale)
    else:
        z = rng.gaussian(count, spec.scale)
    return z if n is None else z.reshape(n, spec.dim)


def apply_mechanism(model: LayeredModel, x: Any, spec: NoiseSpec, rng: RandomSource) -> np.ndarray:
    """One private release: a single noise draw added at the noise spec's placement.

    A batch of rows gets one independent draw per row from the same stream.
    """
    x = np.asarray(x, dtype=np.float64)
    n = None if x.ndim == 1 else x.shape[0]
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"input dimension {x.shape[-1]} does not match model input {model.input_dim}")
    expected = model.input_dim if spec.placement == "input" else model.output_dim
    if spec.dim != expected:
        raise ValueError(f"{spec.placement} noise of dimension {spec.dim} does not fit a model "
                         f"with {spec.placement} dimension {expected}")
    noise = sample_noise(spec, rng, n)
    if spec.placement == "input":
        return forward(model, x + noise)
    return forward(model, x) + noise


def log_density_ratio(spec: NoiseSpec, y: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """``log p(y) - log p(y - shift)`` for the noise spec's density, row-wise."""
    y = np.atleast_2d(y)
    shift = np.asarray(shift, dtype=np.float64)
    if spec.family == "laplace":
        return (np.abs(y - shift) - np.abs(y)).sum(axis=1) / spec.scale
    return ((y - shift) ** 2 - y**2).sum(axis=1) / (2.0 * spec.scale**2)
