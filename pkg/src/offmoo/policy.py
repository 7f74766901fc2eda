"""Softmax policies over discrete actions and the Pareto-front logging policy."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmarks import BenchmarkProblem, features
from .errors import ConfigurationError, NumericError, ParseError, ValidationError


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-subtracted)."""
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    e = logits - logits.max(axis=axis, keepdims=True)
    np.exp(e, out=e)
    e /= e.sum(axis=axis, keepdims=True)
    return e


def policy_probabilities(thetas: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Action probabilities of K softmax policies on a feature tensor.

    Args:
        thetas: ``(K, p)`` parameters.
        feats: ``(n, A, p)`` features of every context/action pair.

    Returns:
        ``(K, n, A)`` probabilities.
    """
    thetas = np.atleast_2d(thetas)
    n, num, p = feats.shape
    logits = (thetas @ feats.reshape(n * num, p).T).reshape(len(thetas), n, num)
    return softmax(logits, axis=-1)


def mean_features(probs: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Policy-averaged features ``Σ_a π(a|x_t) φ(x_t, a)``, shape ``(K, n, p)``."""
    return np.matmul(probs[:, :, None, :], feats[None])[:, :, 0, :]


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """``π(a|x; θ) ∝ exp(φ(x, a)ᵀ θ)``."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).ravel())

    @property
    def dim(self) -> int:
        return self.theta.size

    def logits(self, x, actions) -> np.ndarray:
        return features(np.asarray(x, dtype=float)[None, :], np.asarray(actions, dtype=float)) @ self.theta

    def action_probabilities(self, x, actions) -> np.ndarray:
        if len(actions) == 0:
            raise ValueError("empty action list")
        return softmax(self.logits(x, actions))

    def log_prob_gradient(self, x, actions, a_index: int) -> np.ndarray:
        """``∇_θ log π(a|x; θ) = φ(x, a) - Σ_b π(b|x) φ(x, b)``."""
        phi = features(np.asarray(x, dtype=float)[None, :], np.asarray(actions, dtype=float))
        probs = softmax(phi @ self.theta)
        return phi[a_index] - probs @ phi


def action_probabilities(policy: SoftmaxPolicy, x, actions) -> np.ndarray:
    return policy.action_probabilities(x, actions)


def log_prob_gradient(policy: SoftmaxPolicy, x, actions, a_index: int) -> np.ndarray:
    return policy.log_prob_gradient(x, actions, a_index)


@dataclass(frozen=True, eq=False)
class PolicySet:
    """K softmax policies sharing one parameter dimension, stored as ``(K, p)``."""

    thetas: np.ndarray

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if thetas.ndim != 2 or len(thetas) < 1:
            raise ConfigurationError("a policy set needs at least one parameter vector")
        object.__setattr__(self, "thetas", thetas)

    @classmethod
    def from_policies(cls, policies) -> "PolicySet":
        return cls(np.stack([p.theta for p in policies]))

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def __len__(self) -> int:
        return len(self.thetas)

    def __iter__(self):
        return (SoftmaxPolicy(t) for t in self.thetas)

    def __getitem__(self, k) -> SoftmaxPolicy:
        return SoftmaxPolicy(self.thetas[k])


def save_policies(policies: PolicySet, path) -> None:
    """One policy per line, comma-separated θ, after a ``# softmax dim=<p>`` header."""
    lines = [f"# softmax dim={policies.dim}"]
    lines += [",".join(repr(float(v)) for v in theta) for theta in policies.thetas]
    Path(path).write_text("\n".join(lines) + "\n")


def load_policies(path) -> PolicySet:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# softmax dim="):
        raise ParseError("missing '# softmax dim=<n>' header", 1)
    try:
        dim = int(lines[0].split("=", 1)[1])
    except ValueError:
        raise ParseError("bad dimension in header", 1) from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise ParseError("non-numeric parameter", lineno) from None
        if len(row) != dim:
            raise ParseError(f"expected {dim} parameters, got {len(row)}", lineno)
        rows.append(row)
    if not rows:
        raise ValidationError("policy file contains no policies")
    return PolicySet(np.array(rows))


# ---------------------------------------------------------------------------
# Logging policy
# ---------------------------------------------------------------------------


def pareto_flags(rewards) -> np.ndarray:
    """Flag vectors that no other vector dominates (rewards are maximized).

    ``rewards`` has shape ``(..., A, m)``; flags have shape ``(..., A)``.
    Equal vectors do not dominate each other, so duplicates share a flag.
    """
    r = np.asarray(rewards, dtype=float)
    other = r[..., None, :, :]  # (..., 1, A, m): candidate dominators b
    this = r[..., :, None, :]  # (..., A, 1, m): dominated candidate a
    dominated = np.all(other >= this, axis=-1) & np.any(other > this, axis=-1)
    return ~np.any(dominated, axis=-1)


@dataclass(frozen=True, eq=False)
class LoggingPolicy:
    """Uniform with probability ε, otherwise uniform over the Pareto-front actions."""

    problem: BenchmarkProblem
    epsilon: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigurationError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    def probabilities(self, x) -> np.ndarray:
        return self.probability_matrix(np.asarray(x, dtype=float)[None, :])[0]

    def probability_matrix(self, contexts: np.ndarray) -> np.ndarray:
        """``(n, A)`` logging probabilities for a batch of contexts."""
        return logging_probabilities_from_flags(
            pareto_flags(self.problem.reward_tensor(contexts)), self.epsilon
        )


def logging_probabilities_from_flags(flags: np.ndarray, epsilon: float) -> np.ndarray:
    flags = np.asarray(flags, dtype=float)
    num = flags.shape[-1]
    counts = flags.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("every context needs at least one Pareto-front action")
    mass = epsilon / num + (1.0 - epsilon) * flags / counts
    # the mass already sums to one; renormalize against rounding
    return mass / mass.sum(axis=-1, keepdims=True)


def logging_probabilities(lp: LoggingPolicy, x) -> np.ndarray:
    return lp.probabilities(x)
