"""Empirical and analytic checks that a calibrated mechanism keeps its promise.

A mechanism satisfies ``(eps, delta)`` on a pair of inputs iff for every
measurable set S, ``P_a(S) - e^eps P_b(S) <= delta``. The set maximising the
left side is the likelihood-ratio super-level set ``{log p_a/p_b > eps}``;
the audits below estimate ``P_a`` and ``P_b`` on that set (or on a family
of threshold sets when the densities are unknown) with Clopper-Pearson
confidence bounds.

Why a single pair suffices for additive noise: the output difference of the
two hypotheses is a pure shift. For Gaussian noise only the shift's l_2
length matters (rotation invariance). For Laplace noise the privacy loss
is bounded by ``||shift||_1 / b`` and a single-coordinate shift attains
that bound on a set of positive mass. ``worst_case_pair`` therefore uses
``length * e_1``.
"""
from __future__ import annotations

import dataclasses
import math
from collections.abc import Callable
from typing import Any, Optional

import numpy as np
import scipy.special
import scipy.stats

from infpriv.budget import PrivacyBudget, distance
from infpriv.mechanisms import NoiseSpec, apply_mechanism, log_density_ratio, sample_noise
from infpriv.model import LayeredModel, forward
from infpriv.rng import RandomSource

CONFIDENCE = 0.99
DEFAULT_TRIALS = 1_000_000
MIN_TRIALS = 10_000
# Pure (delta = 0) mechanisms cannot be certified by sampling; they are
# audited against this small delta instead.
PURE_DELTA_GATE = 1e-4
_CHUNK = 1 << 17

VERDICTS = ("pass", "fail", "inconclusive")


@dataclasses.dataclass(frozen=True)
class AuditReport:
    epsilon_target: float
    delta_target: float
    delta_hat: float
    delta_upper_conf: float
    trials: int
    method: str  # analytic-gaussian | mc-likelihood-ratio | mc-threshold-sets
    verdict: str
    pair_description: str
    details: dict[str, Any] = dataclasses.field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AuditReport:
        return cls(**data)


def verdict_for(delta_hat: float, delta_upper: float, delta_target: float) -> str:
    if delta_upper <= delta_target:
        return "pass"
    if delta_hat > delta_target:
        return "fail"
    return "inconclusive"


def clopper_pearson_upper(k: Any, n: int, alpha: float) -> Any:
    """One-sided upper bound, level ``1 - alpha``, on a binomial proportion."""
    k = np.asarray(k, dtype=float)
    upper = scipy.stats.beta.ppf(1 - alpha, k + 1, n - k)
    return np.where(k >= n, 1.0, upper)


def clopper_pearson_lower(k: Any, n: int, alpha: float) -> Any:
    k = np.asarray(k, dtype=float)
    lower = scipy.stats.beta.ppf(alpha, k, n - k + 1)
    return np.where(k <= 0, 0.0, lower)


def _log_sub_exp(x: float, y: float) -> float:
    if y >= x:
        return -math.inf
    return x + math.log1p(-math.exp(y - x))


def gauss_tradeoff_probs(sigma: float, sensitivity: float, epsilon: float) -> tuple[float, float]:
    """Probabilities of the optimal rejection set under both hypotheses."""
    ratio = sensitivity / sigma
    a = ratio / 2 - epsilon / ratio
    b = -ratio / 2 - epsilon / ratio
    return float(scipy.special.ndtr(a)), float(scipy.special.ndtr(b))


def analytic_gauss_delta(sigma: float, sensitivity: float, epsilon: float) -> float:
    """Exact smallest delta for a Gaussian mechanism at a given epsilon.

    ``delta(eps) = Phi(s/(2 sigma) - eps sigma/s) - e^eps Phi(-s/(2 sigma) - eps sigma/s)``
    with ``s`` the l_2 sensitivity. Evaluated in log space.
    """
    if not (sigma > 0 and sensitivity > 0 and epsilon >= 0):
        raise ValueError("sigma and sensitivity must be positive, epsilon non-negative")
    ratio = sensitivity / sigma
    x = float(scipy.special.log_ndtr(ratio / 2 - epsilon / ratio))
    y = epsilon + float(scipy.special.log_ndtr(-ratio / 2 - epsilon / ratio))
    return math.exp(_log_sub_exp(x, y)) if y < x else 0.0


def audit_calibration(spec: NoiseSpec, epsilon: Optional[float] = None,
                      delta_target: Optional[float] = None) -> AuditReport:
    """Analytic audit of a Gaussian spec against its own (or a given) target."""
    if spec.family != "gaussian":
        raise ValueError("analytic audits are available for Gaussian noise only")
    epsilon = spec.budget.epsilon if epsilon is None else float(epsilon)
    delta_target = spec.budget.delta if delta_target is None else float(delta_target)
    delta = analytic_gauss_delta(spec.scale, spec.sensitivity, epsilon)
    return AuditReport(
        epsilon_target=epsilon,
        delta_target=delta_target,
        delta_hat=delta,
        delta_upper_conf=delta,
        trials=0,
        method="analytic-gaussian",
        verdict="pass" if delta <= delta_target else "fail",
        pair_description=f"shift of l2 length {spec.sensitivity!r} (mu * alpha)",
        details={"sigma": spec.scale, "sensitivity": spec.sensitivity},
    )


@dataclasses.dataclass(frozen=True)
class WorstCasePair:
    x_a: np.ndarray
    x_b: np.ndarray
    shift: np.ndarray
    description: str


def worst_case_pair(budget: PrivacyBudget, placement: str, dim: int, mu: float = 1.0,
                    x_a: Optional[np.ndarray] = None) -> WorstCasePair:
    """The pair (or output shift) an additive-noise audit should test.

    Input placement: ``x_b = x_a + alpha e_1``. Output placement: the shift
    ``mu alpha e_1`` in output space, which dominates every realisable
    output difference by the Lipschitz bound.
    """
    if placement not in ("input", "output"):
        raise ValueError(f"unknown placement {placement!r}")
    length = budget.alpha if placement == "input" else mu * budget.alpha
    shift = np.zeros(dim)
    shift[0] = length
    if placement == "input":
        xa = np.zeros(dim) if x_a is None else np.asarray(x_a, dtype=float)
        desc = f"input pair x_b = x_a + {budget.alpha!r} e_1 (l{budget.p} distance alpha)"
        return WorstCasePair(xa, xa + shift, shift, desc)
    desc = f"output shift {length!r} e_1 (mu={mu!r} times alpha={budget.alpha!r})"
    return WorstCasePair(np.zeros(dim), shift.copy(), shift, desc)


def _count_exceed(spec: NoiseSpec, rng: RandomSource, shift: np.ndarray, offset: np.ndarray,
                  threshold: float, trials: int) -> int:
    count = 0
    done = 0
    chunk_index = 0
    while done < trials:
        m = min(_CHUNK, trials - done)
        z = sample_noise(spec, rng.child(chunk_index, "audit/chunk"), m)
        count += int(np.count_nonzero(log_density_ratio(spec, z + offset, shift) > threshold))
        done += m
        chunk_index += 1
    return count


def audit_additive_mc(spec: NoiseSpec, shift: Any, epsilon: float, trials: int = DEFAULT_TRIALS,
                      rng: Optional[RandomSource] = None, delta_target: Optional[float] = None,
                      confidence: float = CONFIDENCE,
                      pair_description: str = "") -> AuditReport:
    """Monte Carlo audit of additive noise against a fixed shift.

    Hypothesis a is the noise itself, hypothesis b the noise plus ``shift``.
    The rejection set is ``{log p_a/p_b > eps}`` (its boundary contributes
    nothing to ``P_a - e^eps P_b``, so it is excluded with a tiny margin to
    keep rounding from creating spurious mass). Each probability gets its own
    ``confidence``-level one-sided Clopper-Pearson bound.
    """
    rng = rng or RandomSource(0)
    shift = np.asarray(shift, dtype=np.float64)
    if shift.shape != (spec.dim,):
        raise ValueError(f"shift must have dimension {spec.dim}, got shape {shift.shape}")
    if delta_target is None:
        delta_target = spec.budget.delta if spec.budget.delta > 0 else PURE_DELTA_GATE
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be positive")
    threshold = epsilon + 1e-12 * max(1.0, epsilon)
    zero = np.zeros(spec.dim)
    k_a = _count_exceed(spec, rng.child(0, "audit/a"), shift, zero, threshold, trials)
    k_b = _count_exceed(spec, rng.child(1, "audit/b"), shift, shift, threshold, trials)
    p_a, p_b = k_a / trials, k_b / trials
    alpha = 1 - confidence
    e = math.exp(epsilon)
    delta_hat = max(0.0, p_a - e * p_b)
    upper = float(clopper_pearson_upper(k_a, trials, alpha)) - e * float(clopper_pearson_lower(k_b, trials, alpha))
    upper = max(delta_hat, upper)
    verdict = verdict_for(delta_hat, upper, delta_target)
    if trials < MIN_TRIALS:
        verdict = "inconclusive"
    return AuditReport(
        epsilon_target=float(epsilon),
        delta_target=float(delta_target),
        delta_hat=delta_hat,
        delta_upper_conf=upper,
        trials=trials,
        method="mc-likelihood-ratio",
        verdict=verdict,
        pair_description=pair_description or f"additive shift of l2 length {float(np.linalg.norm(shift))!r}",
        details={"k_a": k_a, "k_b": k_b, "p_a": p_a, "p_b": p_b, "family": spec.family,
                 "scale": spec.scale},
    )


def _mechanism_outputs(model: LayeredModel, x: np.ndarray, spec: NoiseSpec, rng: RandomSource,
                       trials: int,
                       postprocess: Optional[Callable[[np.ndarray], np.ndarray]]) -> np.ndarray:
    out = []
    done = 0
    chunk_index = 0
    while done < trials:
        m = min(_CHUNK, trials - done)
        y = apply_mechanism(model, np.tile(x, (m, 1)), spec, rng.child(chunk_index, "e2e/chunk"))
        if postprocess is not None:
            y = np.asarray(postprocess(y))
        out.append(y.reshape(m, -1))
        done += m
        chunk_index += 1
    return np.vstack(out)


def threshold_scan(t_a: np.ndarray, t_b: np.ndarray, epsilon: float, bins: int,
                   two_sided: bool, confidence: float = CONFIDENCE) -> dict[str, Any]:
    """Scans upward-closed sets ``{T >= t}`` over pooled-quantile thresholds.

    Returns the best point estimate, the best Bonferroni-corrected lower
    bound and the largest upper bound of ``P_a(S) - e^eps P_b(S)``.
    """
    n_a, n_b = t_a.size, t_b.size
    stats = [(np.sort(t_a), np.sort(t_b))]
    if two_sided:
        stats.append((np.sort(-t_a), np.sort(-t_b)))
    candidates = []
    for sa, sb in stats:
        pooled = np.concatenate([sa, sb])
        levels = np.arange(1, bins) / bins
        thresholds = np.unique(np.quantile(pooled, levels, method="lower"))
        k_a = n_a - np.searchsorted(sa, thresholds, side="left")
        k_b = n_b - np.searchsorted(sb, thresholds, side="left")
        candidates.append((k_a, k_b))
    k_a = np.concatenate([c[0] for c in candidates])
    k_b = np.concatenate([c[1] for c in candidates])
    m = max(1, k_a.size)
    alpha = (1 - confidence) / m
    e = math.exp(epsilon)
    point = k_a / n_a - e * k_b / n_b
    lower = clopper_pearson_lower(k_a, n_a, alpha) - e * clopper_pearson_upper(k_b, n_b, alpha)
    upper = clopper_pearson_upper(k_a, n_a, alpha) - e * clopper_pearson_lower(k_b, n_b, alpha)
    best = int(np.argmax(point)) if point.size else 0
    p_a = k_a[best] / n_a if point.size else 0.0
    p_b = k_b[best] / n_b if point.size else 0.0
    std_error = math.sqrt(p_a * (1 - p_a) / n_a + e * e * p_b * (1 - p_b) / n_b)
    return {
        "delta_point": max(0.0, float(point.max())) if point.size else 0.0,
        "delta_lower": max(0.0, float(lower.max())) if lower.size else 0.0,
        "delta_upper": max(0.0, float(upper.max())) if upper.size else 0.0,
        "sets": int(m),
        "std_error": std_error,
        "k_a": k_a,
        "k_b": k_b,
    }


def audit_end_to_end(model: LayeredModel, spec: NoiseSpec, budget: PrivacyBudget,
                     x_a: Any, x_b: Any, epsilon: Optional[float] = None,
                     trials: int = DEFAULT_TRIALS, bins: int = 100,
                     rng: Optional[RandomSource] = None,
                     delta_target: Optional[float] = None,
                     postprocess: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                     confidence: float = CONFIDENCE) -> AuditReport:
    """Runs the whole mechanism on two inputs and tests threshold sets.

    The scalar statistic is the log-likelihood ratio when it is known
    (output placement, no post-processing); otherwise the first coordinate
    of the (post-processed) output, scanned in both directions. Only a
    family of sets is tested, so the result lower-bounds the true delta:
    ``delta_hat`` is the best Bonferroni-corrected lower confidence bound,
    making "fail" a sound verdict, while "pass" means no violation was
    detected among the tested sets.
    """
    rng = rng or RandomSource(0)
    x_a = np.asarray(x_a, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    epsilon = budget.epsilon if epsilon is None else float(epsilon)
    if delta_target is None:
        delta_target = budget.delta if budget.delta > 0 else PURE_DELTA_GATE
    d = distance(x_a, x_b, budget.p)
    if d > budget.alpha * (1 + 1e-12):
        raise ValueError(f"pair is {d!r} apart in l{budget.p}, outside radius {budget.alpha!r}")
    y_a = _mechanism_outputs(model, x_a, spec, rng.child(0, "e2e/a"), trials, postprocess)
    y_b = _mechanism_outputs(model, x_b, spec, rng.child(1, "e2e/b"), trials, postprocess)
    if postprocess is None and spec.placement == "output":
        c_a, c_b = forward(model, x_a), forward(model, x_b)
        # log p_a(y) - log p_b(y) with p_a centred at C(x_a), p_b at C(x_b)
        t_a = log_density_ratio(spec, y_a - c_a, c_b - c_a)
        t_b = log_density_ratio(spec, y_b - c_a, c_b - c_a)
        statistic, two_sided = "log-likelihood ratio", False
    else:
        t_a, t_b = y_a[:, 0], y_b[:, 0]
        statistic, two_sided = "first output coordinate", True
    scan = threshold_scan(t_a, t_b, epsilon, bins, two_sided, confidence)
    delta_hat = scan["delta_lower"]
    upper = max(delta_hat, scan["delta_upper"])
    return AuditReport(
        epsilon_target=epsilon,
        delta_target=float(delta_target),
        delta_hat=delta_hat,
        delta_upper_conf=upper,
        trials=int(trials),
        method="mc-threshold-sets",
        verdict=verdict_for(delta_hat, upper, delta_target),
        pair_description=f"given pair at l{budget.p} distance {d!r}; statistic: {statistic}",
        details={"delta_point": scan["delta_point"], "std_error": scan["std_error"],
                 "sets": scan["sets"], "placement": spec.placement, "scale": spec.scale},
    )
