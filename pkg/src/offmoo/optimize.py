"""Hypervolume maximization over sets of softmax policies.

Two optimizers: greedy selection from a finite candidate pool, and joint
policy gradient ascent on the concatenated parameters of K policies with
Adam. The objective is the hypervolume of per-policy value vectors under
the true value function, the clamped IPS estimate (meanHVI), the clamped
lower confidence bound (pessHVI) or a bootstrap average of IPS
hypervolumes (EHVI).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MethodError, NumericError
from .estimators import (
    ConfidenceConfig,
    OfflineData,
    importance_ratios,
    mean_ips_jacobian,
    pessimistic_jacobian,
    true_value_jacobian,
)
from .hypervolume import (
    HypervolumeMethod,
    hv_exact_2d_grad,
    hv_inclusion_exclusion_grad,
    hv_scalarized_grad,
    hypervolume,
    sample_directions,
)
from .logged_data import bootstrap_counts
from .policy import PolicySet, mean_features

log = logging.getLogger(__name__)

OBJECTIVES = ("true", "mean", "pess", "ehvi")
INCOMPARABLE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Greedy selection
# ---------------------------------------------------------------------------


def greedy_select_values(values, k: int, hv: HypervolumeMethod | str = "exact2d") -> list[int]:
    """Greedily pick ``k`` rows of ``values`` maximizing the hypervolume.

    Each step adds the candidate with the largest hypervolume after adding it;
    gains within ``1e-12`` of the best are tied and go to the lowest index.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < k:
        raise ConfigurationError(f"pool of {len(values)} candidates is smaller than K={k}")
    if k < 1:
        raise ConfigurationError("K must be at least 1")
    chosen: list[int] = []
    for _ in range(k):
        rest = [i for i in range(len(values)) if i not in chosen]
        scores = np.array([hypervolume(values[chosen + [i]], hv) for i in rest])
        best = np.flatnonzero(scores >= scores.max() - INCOMPARABLE_TOL)[0]
        chosen.append(rest[best])
    return chosen


def greedy_select(candidates, k: int, value_fn, hv: HypervolumeMethod | str = "exact2d"):
    """Greedy hypervolume maximization over a candidate pool.

    ``candidates`` is a :class:`PolicySet` (returned as a :class:`PolicySet`)
    or any sequence (returned as a list). ``value_fn`` maps one candidate to
    its value vector.
    """
    items = list(candidates)
    values = np.array([np.atleast_1d(value_fn(c)) for c in items])
    idx = greedy_select_values(values, k, hv)
    if isinstance(candidates, PolicySet):
        return PolicySet(candidates.thetas[idx])
    return [items[i] for i in idx]


# ---------------------------------------------------------------------------
# Differentiable objectives
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Objective:
    """Hypervolume of K policies under one value estimate.

    Attributes:
        kind: ``true``, ``mean``, ``pess`` or ``ehvi``.
        data: logged data and cached tensors.
        confidence: width configuration for ``pess``.
        hv: hypervolume method; ``scalarized`` uses ``directions`` fixed at
            construction so the objective is a deterministic function.
        bootstrap: ``(N, n)`` record multiplicities for ``ehvi``.
    """

    kind: str
    data: OfflineData
    confidence: ConfidenceConfig = field(default_factory=ConfidenceConfig)
    hv: HypervolumeMethod | None = None
    bootstrap: np.ndarray | None = None
    directions: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise ConfigurationError(f"unknown objective {self.kind!r}; expected one of {', '.join(OBJECTIVES)}")
        m = self.data.dataset.m
        if self.hv is None:
            self.hv = HypervolumeMethod.default_for(m)
        if self.hv.variant == "monte_carlo":
            raise MethodError("monte-carlo hypervolume is not differentiable; use exact2d, incl-excl or scalarized")
        if self.hv.variant == "exact2d" and m != 2:
            raise MethodError("exact2d needs m = 2")
        if self.hv.variant == "scalarized" and self.directions is None:
            self.directions = sample_directions(m, self.hv.samples, np.random.default_rng(0))
        if self.kind == "ehvi" and (self.bootstrap is None or len(self.bootstrap) < 1):
            raise ConfigurationError("ehvi needs at least one bootstrap resample")
        if self.kind == "true" and self.data.mean_rewards is None:
            raise ConfigurationError("true objective needs exact mean rewards")

    @classmethod
    def make(
        cls,
        spec: str,
        data: OfflineData,
        confidence: ConfidenceConfig | None = None,
        hv: HypervolumeMethod | None = None,
        rng: np.random.Generator | None = None,
    ) -> "Objective":
        """Build from ``true``, ``mean``, ``pess`` or ``ehvi:<N>``."""
        name, _, count = spec.partition(":")
        confidence = ConfidenceConfig() if confidence is None else confidence
        boot = None
        if name == "ehvi":
            rng = np.random.default_rng(0) if rng is None else rng
            boot = bootstrap_counts(data.n, int(count) if count else 32, rng)
        return cls(name, data, confidence, hv, boot)

    # value vectors -------------------------------------------------------

    def point_values(self, thetas) -> np.ndarray:
        """Per-policy value vectors ``(K, m)`` (``(N, K, m)`` for ehvi)."""
        return self._points_and_jacobian(np.atleast_2d(thetas))[0]

    def _points_and_jacobian(self, thetas):
        if self.kind == "true":
            return true_value_jacobian(self.data, thetas)
        if self.kind == "mean":
            return mean_ips_jacobian(self.data, thetas)
        if self.kind == "pess":
            return pessimistic_jacobian(self.data, thetas, self.confidence)
        return self._bootstrap_points(thetas)

    def _bootstrap_points(self, thetas):
        ds = self.data.dataset
        w = importance_ratios(self.data, self.data.probs(thetas))  # (K, n)
        raw = np.einsum("jt,kt,ti->jki", self.bootstrap, w, ds.rewards) / ds.n
        return np.clip(raw, 0.0, 1.0), None

    # hypervolume ---------------------------------------------------------

    def _hv_grad(self, points: np.ndarray) -> tuple[float, np.ndarray]:
        if self.hv.variant == "exact2d":
            return hv_exact_2d_grad(points)
        if self.hv.variant == "inclusion_exclusion":
            return hv_inclusion_exclusion_grad(points)
        return hv_scalarized_grad(points, self.directions)

    def value(self, thetas) -> float:
        return self.value_and_grad(thetas, need_grad=False)[0]

    def value_and_grad(self, thetas, need_grad: bool = True) -> tuple[float, np.ndarray | None]:
        """Objective value and its gradient with respect to ``(K, p)`` parameters."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.kind == "ehvi":
            return self._ehvi_value_and_grad(thetas, need_grad)
        points, jac = self._points_and_jacobian(thetas)
        value, dpoints = self._hv_grad(points)
        if not need_grad:
            return value, None
        return value, np.einsum("ki,kip->kp", dpoints, jac)

    def _ehvi_value_and_grad(self, thetas, need_grad):
        ds = self.data.dataset
        probs = self.data.probs(thetas)
        w = importance_ratios(self.data, probs)
        raw = np.einsum("jt,kt,ti->jki", self.bootstrap, w, ds.rewards) / ds.n  # (N, K, m)
        points = np.clip(raw, 0.0, 1.0)
        inside = (raw > 0.0) & (raw < 1.0)
        values, dpts = zip(*(self._hv_grad(p) for p in points))
        value = float(np.mean(values))
        if not need_grad:
            return value, None
        g = np.stack(dpts) * inside / len(points)  # dHV/draw, (N, K, m)
        # raw_jki = (1/n) Σ_t count_jt w_kt Y_ti, d w_kt / dθ_k = w_kt score_kt
        coef = np.einsum("jki,jt,ti->kt", g, self.bootstrap, ds.rewards) * w / ds.n  # (K, n)
        phi_logged = self.data.features[np.arange(ds.n), ds.actions]
        score = phi_logged[None] - mean_features(probs, self.data.features)
        return value, np.einsum("kt,ktp->kp", coef, score)


def hv_gradient(policies: PolicySet | np.ndarray, objective: Objective) -> np.ndarray:
    """Gradient of the objective with respect to every policy's parameters, ``(K, p)``."""
    thetas = policies.thetas if isinstance(policies, PolicySet) else np.atleast_2d(policies)
    return objective.value_and_grad(thetas)[1]


def ehvi_objective(policies: PolicySet | np.ndarray, data: OfflineData, bootstrap: np.ndarray, hv=None) -> float:
    """Mean over bootstrap resamples of the hypervolume under each resample's IPS estimate."""
    thetas = policies.thetas if isinstance(policies, PolicySet) else np.atleast_2d(policies)
    return Objective("ehvi", data, hv=hv, bootstrap=np.atleast_2d(bootstrap)).value(thetas)


# ---------------------------------------------------------------------------
# Adam ascent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientConfig:
    iterations: int = 500
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    restarts: int = 3
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.restarts < 1:
            raise ConfigurationError("restarts must be at least 1")


@dataclass(eq=False)
class AscentResult:
    policies: PolicySet
    value: float
    values: list[float]
    best_so_far: list[float]
    restart: int = 0


class Adam:
    """Adam for gradient ascent on a parameter array of any shape."""

    def __init__(self, shape, lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def policy_gradient_ascent(init: PolicySet | np.ndarray, objective: Objective, config: GradientConfig) -> AscentResult:
    """Run Adam on the concatenated parameters and return the best iterate seen."""
    thetas = np.array(init.thetas if isinstance(init, PolicySet) else np.atleast_2d(init), dtype=float)
    adam = Adam(thetas.shape, config.learning_rate, config.beta1, config.beta2, config.eps)
    best_value, best_thetas = -np.inf, thetas.copy()
    values, trace = [], []
    for it in range(config.iterations + 1):
        value, grad = objective.value_and_grad(thetas)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite objective or gradient at iteration {it}")
        values.append(value)
        if value > best_value:
            best_value, best_thetas = value, thetas.copy()
        trace.append(best_value)
        if it < config.iterations:
            thetas = adam.step(thetas, grad)
    return AscentResult(PolicySet(best_thetas), best_value, values, trace)


def optimize_policies(objective: Objective, k: int, config: GradientConfig) -> AscentResult:
    """Adam ascent from ``config.restarts`` small random initializations; keep the best.

    Ties between restarts go to the lowest restart index.
    """
    rng = np.random.default_rng(config.seed)
    p = objective.data.features.shape[-1]
    best = None
    for r in range(config.restarts):
        init = config.init_scale * rng.standard_normal((k, p))
        result = policy_gradient_ascent(init, objective, config)
        result.restart = r
        log.debug("restart %d: objective %.6f", r, result.value)
        if best is None or result.value > best.value:
            best = result
    return best


def random_policy_baseline(k: int, dim: int, rng: np.random.Generator) -> PolicySet:
    """``k`` parameter vectors drawn uniformly from the unit ball in ``R^dim``."""
    if k < 1:
        raise ConfigurationError("K must be at least 1")
    g = rng.standard_normal((k, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.uniform(size=(k, 1)) ** (1.0 / dim)
    return PolicySet(g * radius)
