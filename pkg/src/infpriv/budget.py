"""Privacy budgets, the l_p input metric and the accounting algebra.

A budget ``{(epsilon, delta), alpha}`` promises that any two inputs within
l_p distance ``alpha`` produce output distributions that are
``(epsilon, delta)``-indistinguishable. Everything here is a pure function on
immutable values.
"""
from __future__ import annotations

import dataclasses
import json
import math
from collections.abc import Iterable, Sequence
from typing import Any, Union

import numpy as np

Norm = Union[int, float]

# Below this epsilon the chaining factor is replaced by its limit h.
_EPS_LIMIT = 1e-12
# Above this h*epsilon the chaining factor is evaluated in log space.
_LOG_SPACE_FROM = 30.0
# Slack in ceil(beta / alpha) so exact multiples do not round up.
_CEIL_SLACK = 1e-12


def parse_norm(p: Any) -> Norm:
    """Normalises a norm selector to 1, 2 or math.inf."""
    if isinstance(p, str):
        key = p.strip().lower()
        if key in ("inf", "infinity", "max"):
            return math.inf
        try:
            p = float(key)
        except ValueError:
            raise ValueError(f"unknown norm selector {p!r}") from None
    if p == 1:
        return 1
    if p == 2:
        return 2
    if p == math.inf:
        return math.inf
    raise ValueError(f"norm selector must be 1, 2 or inf, got {p!r}")


def norm_label(p: Norm) -> Union[int, str]:
    return "inf" if p == math.inf else int(p)


@dataclasses.dataclass(frozen=True)
class PrivacyBudget:
    """An ``{(epsilon, delta), alpha}`` inference-privacy guarantee in l_p.

    Attributes:
      epsilon: Multiplicative slack, strictly positive.
      delta: Additive slack. Must be below 1 unless the budget is vacuous.
      alpha: Privacy radius in input units.
      p: The l_p norm (1, 2 or math.inf) that measures the radius.
      vacuous: Set by accounting operations whose result guarantees nothing
        (for example when composed or chained delta reaches 1).
    """

    epsilon: float
    delta: float = 0.0
    alpha: float = 0.0
    p: Norm = 2
    vacuous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "p", parse_norm(self.p))
        for name in ("epsilon", "delta", "alpha"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise TypeError(f"{name} must be a real number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not math.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not self.delta >= 0 or math.isnan(self.delta):
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.delta >= 1 and not self.vacuous:
            raise ValueError(f"delta must be < 1, got {self.delta}")
        if not self.alpha >= 0 or math.isnan(self.alpha):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def is_pure(self) -> bool:
        return self.delta == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "alpha": self.alpha,
            "p": norm_label(self.p),
            "vacuous": self.vacuous,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PrivacyBudget:
        return cls(
            epsilon=float(data["epsilon"]),
            delta=float(data.get("delta", 0.0)),
            alpha=float(data.get("alpha", 0.0)),
            p=parse_norm(data.get("p", 2)),
            vacuous=bool(data.get("vacuous", False)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> PrivacyBudget:
        return cls.from_dict(json.loads(text))


def _make(epsilon: float, delta: float, alpha: float, p: Norm,
          vacuous: bool = False) -> PrivacyBudget:
    return PrivacyBudget(epsilon, delta, alpha, p,
                         vacuous=vacuous or delta >= 1 or math.isinf(epsilon))


@dataclasses.dataclass(frozen=True)
class Partition:
    """Disjoint coordinate blocks covering ``{0, ..., n - 1}`` exactly."""

    index_sets: tuple[tuple[int, ...], ...]
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"partition dimension must be positive, got {self.n}")
        blocks = tuple(tuple(sorted(int(i) for i in block)) for block in self.index_sets)
        if not blocks or any(len(b) == 0 for b in blocks):
            raise ValueError("partition blocks must be nonempty")
        seen = bytearray(self.n)
        for block in blocks:
            for i in block:
                if not 0 <= i < self.n:
                    raise ValueError(f"index {i} outside [0, {self.n})")
                if seen[i]:
                    raise ValueError(f"index {i} appears in more than one block")
                seen[i] = 1
        if not all(seen):
            missing = [i for i in range(self.n) if not seen[i]]
            raise ValueError(f"partition does not cover indices {missing[:10]}")
        object.__setattr__(self, "index_sets", blocks)

    def __len__(self) -> int:
        return len(self.index_sets)


def distance(x: Sequence[float], y: Sequence[float], p: Any = 2) -> float:
    """Returns ``||x - y||_p`` for p in {1, 2, inf}."""
    p = parse_norm(p)
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape:
        raise ValueError(f"dimension mismatch: {xa.shape} vs {ya.shape}")
    diff = np.abs(xa - ya).ravel()
    if diff.size == 0:
        return 0.0
    if p == 1:
        return float(math.fsum(diff))
    if p == 2:
        return float(np.linalg.norm(diff))
    return float(diff.max())


def _shared_norm(budgets: Sequence[PrivacyBudget]) -> Norm:
    norms = {b.p for b in budgets}
    if len(norms) != 1:
        raise ValueError(f"cannot compose budgets measured in different norms: {sorted(map(str, norms))}")
    return norms.pop()


def compose_basic(budgets: Iterable[PrivacyBudget]) -> PrivacyBudget:
    """Basic composition of independent mechanisms run on the same input.

    Epsilons and deltas add, the guaranteed radius is the smallest one.
    """
    budgets = list(budgets)
    if not budgets:
        raise ValueError("compose_basic needs at least one budget")
    p = _shared_norm(budgets)
    return _make(
        math.fsum(b.epsilon for b in budgets),
        math.fsum(b.delta for b in budgets),
        min(b.alpha for b in budgets),
        p,
        vacuous=any(b.vacuous for b in budgets),
    )


def compose_parallel(parts: Sequence[tuple[Iterable[int], PrivacyBudget]],
                     partition: Partition) -> PrivacyBudget:
    """Composition of mechanisms applied to disjoint input blocks.

    Unlike parallel composition for datasets, the budgets sum: every block
    of the two neighbouring inputs may differ.

    Args:
      parts: One ``(index_set, budget)`` pair per block of ``partition``.
      partition: The validated partition of the input coordinates.

    Returns:
      ``(sum eps_i, sum delta_i, min alpha_i)`` in the shared norm.
    """
    if len(parts) != len(partition):
        raise ValueError(f"{len(parts)} budgets for {len(partition)} partition blocks")
    blocks = set(partition.index_sets)
    used = set()
    for indices, _ in parts:
        key = tuple(sorted(int(i) for i in indices))
        if key not in blocks:
            raise ValueError(f"index set {list(key)} is not a block of the partition")
        if key in used:
            raise ValueError(f"block {list(key)} assigned twice")
        used.add(key)
    return compose_basic([budget for _, budget in parts])


def chain_hops(alpha: float, beta: float) -> int:
    """Number of radius-alpha hops needed to cover distance beta."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if alpha <= 0:
        if beta > 0:
            raise ValueError("cannot chain a zero-radius budget to a positive radius")
        return 1
    return max(1, math.ceil(beta / alpha - _CEIL_SLACK))


def chain_delta_factor_log(epsilon: float, hops: int) -> float:
    """log of ``(e^{h eps} - 1) / (e^eps - 1)``, stable for all eps > 0."""
    if hops == 1:
        return 0.0
    if epsilon < _EPS_LIMIT:
        return math.log(hops)
    total = hops * epsilon
    if total <= _LOG_SPACE_FROM:
        return math.log(math.expm1(total) / math.expm1(epsilon))
    # e^{he} - 1 = e^{he} (1 - e^{-he})
    return total + math.log1p(-math.exp(-total)) - math.log(math.expm1(epsilon))


def chain(budget: PrivacyBudget, beta: float) -> PrivacyBudget:
    """Extends a guarantee from radius alpha to radius beta along geodesics.

    With ``h = ceil(beta / alpha)`` the result is
    ``(h eps, (e^{h eps} - 1) / (e^eps - 1) * delta, beta)``. Only meaningful
    for l_p budgets, where straight segments are geodesics.
    """
    beta = float(beta)
    hops = chain_hops(budget.alpha, beta)
    if hops == 1:
        return dataclasses.replace(budget, alpha=beta)
    epsilon = hops * budget.epsilon
    if budget.delta == 0:
        delta = 0.0
    else:
        log_delta = math.log(budget.delta) + chain_delta_factor_log(budget.epsilon, hops)
        delta = math.exp(log_delta) if log_delta < 709.0 else 1.0
    return _make(epsilon, delta, beta, budget.p, vacuous=budget.vacuous)


def post_process(budget: PrivacyBudget) -> PrivacyBudget:
    """Accounting step for a data-independent map applied to a private output.

    Such a map costs nothing, so the budget comes back unchanged; calling
    this keeps the step visible in a pipeline's ledger.
    """
    return budget
