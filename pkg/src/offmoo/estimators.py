"""Per-objective off-policy value estimators.

All estimators accept either a single parameter vector ``(p,)`` (returning
an ``(m,)`` vector) or a stack ``(K, p)`` (returning ``(K, m)``). They work
on an :class:`OfflineData` bundle, which caches the feature tensor of the
logged contexts and the full logging distribution needed by the
confidence widths.

The ``*_jacobian`` functions return ``(values, jac)`` with ``jac`` of shape
``(K, m, p)``: the derivative of every value with respect to the parameters
of its own policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .benchmarks import BenchmarkProblem
from .errors import DataError
from .logged_data import LoggedDataset
from .policy import (
    LoggingPolicy,
    logging_probabilities_from_flags,
    mean_features,
    pareto_flags,
    policy_probabilities,
)

KINDS = ("true", "ips", "clipped_ips", "pessimistic", "dm", "dr", "snips")


@dataclass(frozen=True)
class ConfidenceConfig:
    """Width scale ``β`` and reward noise ``σ`` of ``c_i(π) = β σ M_π / n``."""

    beta: float = 0.2
    sigma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and np.isfinite(self.sigma)):
            raise ValueError("beta and sigma must be finite")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @classmethod
    def from_delta(cls, delta: float, sigma: float = 1.0) -> "ConfidenceConfig":
        """Width that holds with probability ``1 - δ`` per objective and policy."""
        return cls(beta=float(np.sqrt(2.0 * np.log(2.0 / delta))), sigma=sigma)


@dataclass(frozen=True, eq=False)
class ValueEstimate:
    values: np.ndarray
    widths: np.ndarray
    kind: str


@dataclass(frozen=True, eq=False)
class OfflineData:
    """A logged dataset plus the tensors every estimator needs.

    Attributes:
        dataset: the logged records.
        features: ``(n, A, p)`` features of every logged context and action.
        logging_probs: ``(n, A)`` logging distribution in every logged context.
        mean_rewards: ``(n, A, m)`` exact mean rewards (only used by ``true_value``
            and evaluation, never by the estimators).
    """

    dataset: LoggedDataset
    features: np.ndarray
    logging_probs: np.ndarray
    mean_rewards: np.ndarray | None = None

    @classmethod
    def build(
        cls, dataset: LoggedDataset, problem: BenchmarkProblem | None = None, logging: LoggingPolicy | None = None
    ) -> "OfflineData":
        problem = dataset.rebuild_problem() if problem is None else problem
        logging = LoggingPolicy(problem, dataset.epsilon) if logging is None else logging
        rewards = problem.reward_tensor(dataset.contexts)
        probs = logging_probabilities_from_flags(pareto_flags(rewards), logging.epsilon)
        logged = probs[np.arange(dataset.n), dataset.actions]
        if not np.allclose(logged, dataset.propensities, rtol=1e-9, atol=1e-12):
            raise DataError("stored propensities disagree with the logging policy")
        return cls(dataset, problem.feature_tensor(dataset.contexts), probs, rewards)

    @property
    def n(self) -> int:
        return self.dataset.n

    def probs(self, thetas) -> np.ndarray:
        return policy_probabilities(np.atleast_2d(thetas), self.features)


def _out(values: np.ndarray, thetas) -> np.ndarray:
    return values[0] if np.ndim(thetas) == 1 else values


def _check_propensities(ds: LoggedDataset) -> None:
    if np.any(ds.propensities <= 0):
        raise DataError("zero propensity in logged data")


def importance_ratios(data: OfflineData, probs: np.ndarray) -> np.ndarray:
    """Importance ratios ``π(A_t|x_t) / π₀(A_t|x_t)``, shape ``(K, n)``."""
    ds = data.dataset
    _check_propensities(ds)
    return probs[:, np.arange(ds.n), ds.actions] / ds.propensities


# ---------------------------------------------------------------------------
# True value
# ---------------------------------------------------------------------------


def true_value_from_tensors(probs: np.ndarray, mean_rewards: np.ndarray) -> np.ndarray:
    """``V_i = (1/n) Σ_t Σ_a π(a|x_t) r_i(x_t, a)`` for ``(K, n, A)`` probabilities."""
    return np.einsum("kna,nai->ki", probs, mean_rewards) / probs.shape[1]


def true_value(problem: BenchmarkProblem, thetas, contexts) -> np.ndarray:
    """Exact policy value on a sequence of contexts."""
    contexts = np.atleast_2d(contexts)
    if len(contexts) == 0:
        raise ValueError("need at least one context")
    probs = policy_probabilities(np.atleast_2d(thetas), problem.feature_tensor(contexts))
    return _out(true_value_from_tensors(probs, problem.reward_tensor(contexts)), thetas)


def true_value_jacobian(data: OfflineData, thetas) -> tuple[np.ndarray, np.ndarray]:
    probs = data.probs(thetas)
    r = data.mean_rewards
    n = data.n
    phibar = mean_features(probs, data.features)
    weighted = probs[:, :, :, None] * r[None]  # (K, n, A, m)
    values = weighted.sum(axis=(1, 2)) / n
    jac = np.einsum("knai,nap->kip", weighted, data.features) - np.einsum(
        "kni,knp->kip", weighted.sum(axis=2), phibar
    )
    return values, jac / n


# ---------------------------------------------------------------------------
# IPS family
# ---------------------------------------------------------------------------


def ips_raw(data: OfflineData, thetas, clip: float = np.inf) -> np.ndarray:
    """Unclamped clipped-IPS estimate ``(1/n) Σ_t min{w_t, M} Y_t``."""
    if clip < 0:
        raise ValueError("clipping parameter must be non-negative")
    w = np.minimum(importance_ratios(data, data.probs(thetas)), clip)
    return _out(w @ data.dataset.rewards / data.n, thetas)


def ips(data: OfflineData, thetas, clip: float = np.inf) -> np.ndarray:
    """Clipped IPS estimate, clamped to ``[0, 1]``."""
    return np.clip(ips_raw(data, thetas, clip), 0.0, 1.0)


def ips_raw_jacobian(data: OfflineData, thetas) -> tuple[np.ndarray, np.ndarray]:
    """Unclipped (``M = ∞``) IPS values and Jacobian."""
    probs = data.probs(thetas)
    return _ips_raw_jacobian(data, probs, mean_features(probs, data.features))


def _ips_raw_jacobian(data: OfflineData, probs: np.ndarray, phibar: np.ndarray):
    ds = data.dataset
    w = importance_ratios(data, probs)  # (K, n)
    phi_logged = data.features[np.arange(ds.n), ds.actions]  # (n, p)
    score = phi_logged[None] - phibar  # (K, n, p)
    values = w @ ds.rewards / ds.n
    jac = np.einsum("kn,ni,knp->kip", w, ds.rewards, score) / ds.n
    return values, jac


def max_ratios(data: OfflineData, probs: np.ndarray) -> np.ndarray:
    """``M_{t,π} = max_a π(a|x_t) / π₀(a|x_t)`` over the full action set, ``(K, n)``."""
    if np.any(data.logging_probs <= 0):
        raise DataError("logging policy has zero probability on some action")
    return (probs / data.logging_probs[None]).max(axis=-1)


def confidence_width(data: OfflineData, thetas, cfg: ConfidenceConfig) -> np.ndarray:
    """``c_i(π) = β σ M_π / n`` with ``M_π² = Σ_t M_{t,π}²``; equal across objectives."""
    mt = max_ratios(data, data.probs(thetas))
    c = cfg.beta * cfg.sigma * np.sqrt(np.sum(mt**2, axis=1)) / data.n  # (K,)
    m = data.dataset.m
    return _out(np.repeat(c[:, None], m, axis=1), thetas)


def confidence_width_jacobian(data: OfflineData, thetas, cfg: ConfidenceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Widths and their gradient; the max over actions uses the lowest-index maximizer."""
    probs = data.probs(thetas)
    return _width_jacobian(data, probs, mean_features(probs, data.features), cfg)


def _width_jacobian(data: OfflineData, probs: np.ndarray, phibar: np.ndarray, cfg: ConfidenceConfig):
    ratio = probs / data.logging_probs[None]
    best = ratio.argmax(axis=-1)  # (K, n)
    k_idx, t_idx = np.indices(best.shape)
    mt = ratio[k_idx, t_idx, best]
    m_pi = np.sqrt(np.sum(mt**2, axis=1))  # (K,)
    c = cfg.beta * cfg.sigma * m_pi / data.n
    score = data.features[t_idx, best] - phibar  # (K, n, p)
    grad = cfg.beta * cfg.sigma / data.n * np.einsum("kn,knp->kp", mt**2, score) / m_pi[:, None]
    m = data.dataset.m
    return np.repeat(c[:, None], m, axis=1), np.repeat(grad[:, None, :], m, axis=1)


def pessimistic(data: OfflineData, thetas, cfg: ConfidenceConfig) -> np.ndarray:
    """Lower confidence bound ``clamp(V̂ - c, 0, 1)`` with the unclamped IPS inside."""
    raw = ips_raw(data, thetas)
    return np.clip(raw - confidence_width(data, thetas, cfg), 0.0, 1.0)


def clamp_jacobian(values: np.ndarray, jac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp values to ``[0, 1]``; the Jacobian is zero where the clamp is flat."""
    inside = (values > 0.0) & (values < 1.0)
    return np.clip(values, 0.0, 1.0), jac * inside[..., None]


def mean_ips_jacobian(data: OfflineData, thetas) -> tuple[np.ndarray, np.ndarray]:
    return clamp_jacobian(*ips_raw_jacobian(data, thetas))


def pessimistic_jacobian(data: OfflineData, thetas, cfg: ConfidenceConfig) -> tuple[np.ndarray, np.ndarray]:
    probs = data.probs(thetas)
    phibar = mean_features(probs, data.features)  # shared by both terms
    v, jv = _ips_raw_jacobian(data, probs, phibar)
    c, jc = _width_jacobian(data, probs, phibar, cfg)
    return clamp_jacobian(v - c, jv - jc)


# ---------------------------------------------------------------------------
# Model-based and self-normalized estimators
# ---------------------------------------------------------------------------


def fit_reward_model(ds: LoggedDataset) -> np.ndarray:
    """Context-free reward model: per-(action, objective) empirical means, ``(A, m)``.

    Actions that were never logged fall back to the overall mean of the objective.
    """
    sums = np.zeros((ds.num_actions, ds.m))
    np.add.at(sums, ds.actions, ds.rewards)
    counts = np.bincount(ds.actions, minlength=ds.num_actions)[:, None]
    overall = ds.rewards.mean(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), overall)


def _model_tensor(data: OfflineData, reward_model) -> np.ndarray:
    return np.broadcast_to(np.asarray(reward_model, dtype=float), (data.n, data.dataset.num_actions, data.dataset.m))


def dm(data: OfflineData, thetas, reward_model) -> np.ndarray:
    """Direct method ``(1/n) Σ_t Σ_a π(a|x_t) r̂(x_t, a)``, clamped to ``[0, 1]``.

    ``reward_model`` is any array broadcastable to ``(n, A, m)``.
    """
    probs = data.probs(thetas)
    values = true_value_from_tensors(probs, _model_tensor(data, reward_model))
    return _out(np.clip(values, 0.0, 1.0), thetas)


def dr(data: OfflineData, thetas, reward_model) -> np.ndarray:
    """Doubly robust: IPS on the model residuals plus the direct-method term."""
    ds = data.dataset
    probs = data.probs(thetas)
    w = importance_ratios(data, probs)
    rhat = _model_tensor(data, reward_model)
    residual = ds.rewards - rhat[np.arange(ds.n), ds.actions]
    values = w @ residual / ds.n + true_value_from_tensors(probs, rhat)
    return _out(np.clip(values, 0.0, 1.0), thetas)


def snips(data: OfflineData, thetas) -> np.ndarray:
    """Self-normalized IPS ``Σ_t w_t Y_t / Σ_t w_t``."""
    w = importance_ratios(data, data.probs(thetas))
    total = w.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise DataError("all importance ratios are zero")
    return _out(w @ data.dataset.rewards / total, thetas)


def estimate(
    data: OfflineData,
    thetas,
    kind: str,
    cfg: ConfidenceConfig | None = None,
    clip: float = np.inf,
    reward_model=None,
) -> ValueEstimate:
    """Dispatch to one estimator and attach confidence widths."""
    cfg = ConfidenceConfig() if cfg is None else cfg
    widths = confidence_width(data, thetas, cfg)
    if kind == "true":
        if data.mean_rewards is None:
            raise ValueError("true value needs the exact mean rewards")
        values = _out(true_value_from_tensors(data.probs(thetas), data.mean_rewards), thetas)
        widths = np.zeros_like(values)
    elif kind == "ips":
        values = ips(data, thetas)
    elif kind == "clipped_ips":
        values = ips(data, thetas, clip)
    elif kind == "pessimistic":
        values = pessimistic(data, thetas, cfg)
    elif kind in ("dm", "dr"):
        model = fit_reward_model(data.dataset) if reward_model is None else reward_model
        values = (dm if kind == "dm" else dr)(data, thetas, model)
    elif kind == "snips":
        values = snips(data, thetas)
    else:
        raise ValueError(f"unknown estimator {kind!r}; expected one of {', '.join(KINDS)}")
    return ValueEstimate(values, widths, kind)
