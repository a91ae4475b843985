"""Utility-versus-privacy sweeps over the radius or the budget."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import platform
import statistics
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from infpriv import __version__
from infpriv.auditor import audit_calibration
from infpriv.budget import PrivacyBudget
from infpriv.data import Dataset, accuracy, load_dataset
from infpriv.lipschitz import model_lipschitz
from infpriv.mechanisms import MECHANISMS, NoiseSpec, calibrate, sample_noise
from infpriv.model import LayeredModel, forward, load_model, predict
from infpriv.rng import RandomSource

CSV_COLUMNS = ("mechanism", "variable", "value", "epsilon", "delta", "alpha", "p", "scale",
               "warning", "mean_acc", "std_acc", "trials")
BASELINE = "baseline: alpha=0, evaluated without noise"


@dataclasses.dataclass(frozen=True)
class SweepConfig:
    variable: str
    values: tuple[float, ...]
    fixed: dict[str, float]
    mechanisms: tuple[str, ...] = ("gauss-input",)
    model: Optional[str] = None
    models: dict[str, str] = dataclasses.field(default_factory=dict)
    dataset: Optional[str] = None
    repeats: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.variable not in ("alpha", "epsilon"):
            raise ValueError(f"sweep variable must be 'alpha' or 'epsilon', got {self.variable!r}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("sweep values must not be empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for m in self.mechanisms:
            if m not in MECHANISMS:
                raise ValueError(f"unknown mechanism {m!r}; expected one of {MECHANISMS}")
        fixed = {"delta": 1e-5, **{k: float(v) for k, v in self.fixed.items()}}
        other = "epsilon" if self.variable == "alpha" else "alpha"
        if other not in fixed:
            raise ValueError(f"fixed.{other} is required when sweeping {self.variable}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "fixed", fixed)
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SweepConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["values"] = list(self.values)
        d["mechanisms"] = list(self.mechanisms)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclasses.dataclass
class SweepRow:
    mechanism: str
    variable: str
    value: float
    epsilon: float
    delta: float
    alpha: float
    p: int
    scale: float = 0.0
    warning: str = ""
    mean_acc: float = math.nan
    std_acc: float = math.nan
    accs: list[float] = dataclasses.field(default_factory=list)
    failed: bool = False

    def csv_fields(self) -> list[str]:
        def num(x):
            return "" if isinstance(x, float) and math.isnan(x) else repr(x)
        return [self.mechanism, self.variable, num(self.value), num(self.epsilon), num(self.delta),
                num(self.alpha), str(self.p), num(self.scale), self.warning,
                num(self.mean_acc), num(self.std_acc), str(len(self.accs))]


def _budget_for(mechanism: str, config: SweepConfig, value: float) -> dict[str, Any]:
    params = dict(config.fixed)
    params[config.variable] = value
    if mechanism == "lap-output":
        params["delta"], params["p"] = 0.0, 1
    else:
        params["p"] = 2
    return params


def _summarise(accs: np.ndarray) -> tuple[float, float]:
    # statistics works in exact arithmetic: identical repeats give std 0.0
    values = accs.tolist()
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return statistics.fmean(values), std


def evaluate_under_noise(model: LayeredModel, x: np.ndarray, y: np.ndarray,
                         spec: Optional[NoiseSpec], repeats: int, seed: int,
                         purpose: str) -> np.ndarray:
    """Test accuracy per repeat; one fresh mechanism draw per test input.

    Repeat ``t`` always reads the stream ``(seed, t, purpose)``, so rows that
    calibrate to the same scale see the same noise.
    """
    if spec is None:
        return np.full(repeats, accuracy(predict(model, x), y))
    clean = forward(model, x) if spec.placement == "output" else None
    accs = np.empty(repeats)
    for t in range(repeats):
        z = sample_noise(spec, RandomSource.for_trial(seed, t, purpose), x.shape[0])
        if spec.placement == "input":
            pred = predict(model, x + z)
        else:
            pred = np.argmax(clean + z, axis=1)
        accs[t] = accuracy(pred, y)
    return accs


def run_sweep(config: SweepConfig, models: Optional[dict[str, LayeredModel]] = None,
              dataset: Optional[Dataset] = None,
              base_dir: Union[str, Path, None] = None) -> list[SweepRow]:
    """One row per (mechanism, value), in config order then increasing value.

    Calibration failures mark the row failed and the sweep carries on.
    Gaussian rows with eps > 1 are audited analytically and the verdict is
    written into the warning column.
    """
    base = Path(base_dir or ".")
    if dataset is None:
        if config.dataset is None:
            raise ValueError("sweep config needs a dataset")
        dataset = load_dataset(base / config.dataset)
    models = dict(models or {})
    x, y = dataset.split("test")
    rows = []
    for mechanism in config.mechanisms:
        model = models.get(mechanism)
        if model is None:
            path = config.models.get(mechanism, config.model)
            if path is None:
                raise ValueError(f"no model configured for {mechanism}")
            model = load_model(base / path)
            models[mechanism] = model
        for value in config.values:
            params = _budget_for(mechanism, config, value)
            row = SweepRow(mechanism, config.variable, value, params["epsilon"], params["delta"],
                           params["alpha"], params["p"])
            rows.append(row)
            try:
                if params["alpha"] == 0:
                    row.warning = BASELINE
                    accs = evaluate_under_noise(model, x, y, None, config.repeats, config.seed, "")
                else:
                    budget = PrivacyBudget(params["epsilon"], params["delta"], params["alpha"], params["p"])
                    spec = calibrate(mechanism, budget, model)
                    row.scale = spec.scale
                    if spec.warning:
                        report = audit_calibration(spec)
                        row.warning = (f"{spec.warning}; analytic audit {report.verdict} "
                                       f"(delta={report.delta_hat:.3e})")
                    accs = evaluate_under_noise(model, x, y, spec, config.repeats, config.seed,
                                                f"sweep/{mechanism}")
            except ValueError as exc:
                row.failed = True
                row.warning = f"failed: {exc}"
                continue
            row.accs = accs.tolist()
            row.mean_acc, row.std_acc = _summarise(accs)
    return rows


def scaling_law_violations(rows: list[SweepRow], models: dict[str, LayeredModel]) -> list[str]:
    """Checks every calibrated row: doubling alpha doubles the scale, doubling eps halves it."""
    problems = []
    for row in rows:
        if row.failed or row.scale == 0:
            continue
        model = models[row.mechanism]
        mu = None
        if row.mechanism != "gauss-input":
            mu = model_lipschitz(model, row.p).value
        def scale(eps, alpha):
            b = PrivacyBudget(eps, row.delta, alpha, row.p)
            return calibrate(row.mechanism, b, model, mu=mu).scale
        base = scale(row.epsilon, row.alpha)
        if not math.isclose(scale(row.epsilon, 2 * row.alpha), 2 * base, rel_tol=1e-12):
            problems.append(f"{row.mechanism} @ {row.value}: scale(2 alpha) != 2 scale(alpha)")
        if not math.isclose(scale(2 * row.epsilon, row.alpha), base / 2, rel_tol=1e-12):
            problems.append(f"{row.mechanism} @ {row.value}: scale(2 eps) != scale(eps) / 2")
        if base != row.scale:
            problems.append(f"{row.mechanism} @ {row.value}: recalibration changed the scale")
    return problems


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def manifest(config: SweepConfig, rows: list[SweepRow]) -> dict[str, Any]:
    return {
        "config": config.to_dict(),
        "config_sha256": config.digest(),
        "versions": {"infpriv": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "warnings": sorted({r.warning for r in rows if r.warning}),
        "rows": [
            {"mechanism": r.mechanism, "value": r.value, "scale": r.scale, "accs": r.accs,
             "failed": r.failed}
            for r in rows
        ],
    }


def write_sweep(rows: list[SweepRow], config: SweepConfig, out: Union[str, Path]) -> Path:
    """Writes the CSV and a JSON manifest next to it; returns the manifest path."""
    out = Path(out)
    out.write_text(rows_to_csv(rows))
    manifest_path = out.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(manifest(config, rows), indent=1, sort_keys=True))
    return manifest_path
