"""ZDT and DTLZ test functions and their adaptation to contextual bandits.

Every test function is evaluated on the unit box ``[0, 1]^d``; functions
whose native domain is different (ZDT4) rescale internally. Objectives
follow the minimization convention of the original suites. A
:class:`BenchmarkProblem` splits the input into a context half and an
action half, discretizes the action half and turns objectives into
rewards in ``[0, 1]`` (higher is better).

References:
    Zitzler, E., Deb, K., & Thiele, L. (2000). Comparison of multiobjective
    evolutionary algorithms: Empirical results. Evolutionary Computation, 8(2).
    Deb, K., Thiele, L., Laumanns, M., & Zitzler, E. (2005). Scalable test
    problems for evolutionary multiobjective optimization.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

ZDT_NAMES = ("ZDT1", "ZDT2", "ZDT3", "ZDT4", "ZDT6")
DTLZ_NAMES = tuple(f"DTLZ{i}" for i in range(1, 8))
NAMES = ZDT_NAMES + DTLZ_NAMES

NORMALIZATION_SAMPLES = 100_000


# ---------------------------------------------------------------------------
# ZDT
# ---------------------------------------------------------------------------


def _zdt_g(z: np.ndarray) -> np.ndarray:
    return 1.0 + 9.0 * np.sum(z[..., 1:], axis=-1) / (z.shape[-1] - 1)


def zdt1(z: np.ndarray) -> np.ndarray:
    f1 = z[..., 0]
    g = _zdt_g(z)
    return np.stack([f1, g * (1.0 - np.sqrt(f1 / g))], axis=-1)


def zdt2(z: np.ndarray) -> np.ndarray:
    f1 = z[..., 0]
    g = _zdt_g(z)
    return np.stack([f1, g * (1.0 - (f1 / g) ** 2)], axis=-1)


def zdt3(z: np.ndarray) -> np.ndarray:
    f1 = z[..., 0]
    g = _zdt_g(z)
    h = 1.0 - np.sqrt(f1 / g) - (f1 / g) * np.sin(10.0 * np.pi * f1)
    return np.stack([f1, g * h], axis=-1)


def zdt4(z: np.ndarray) -> np.ndarray:
    """ZDT4 with x_1 in [0, 1] and x_i = -5 + 10 z_i in [-5, 5] otherwise."""
    f1 = z[..., 0]
    x = -5.0 + 10.0 * z[..., 1:]
    g = 1.0 + 10.0 * x.shape[-1] + np.sum(x**2 - 10.0 * np.cos(4.0 * np.pi * x), axis=-1)
    return np.stack([f1, g * (1.0 - np.sqrt(f1 / g))], axis=-1)


def zdt6(z: np.ndarray) -> np.ndarray:
    x1 = z[..., 0]
    f1 = 1.0 - np.exp(-4.0 * x1) * np.sin(6.0 * np.pi * x1) ** 6
    g = 1.0 + 9.0 * (np.sum(z[..., 1:], axis=-1) / (z.shape[-1] - 1)) ** 0.25
    return np.stack([f1, g * (1.0 - (f1 / g) ** 2)], axis=-1)


# ---------------------------------------------------------------------------
# DTLZ
# ---------------------------------------------------------------------------


def _sphere_objectives(angles: np.ndarray, radius: np.ndarray, m: int) -> np.ndarray:
    # angles: (..., m - 1) in radians
    cos, sin = np.cos(angles), np.sin(angles)
    out = []
    for i in range(m):
        f = radius * np.prod(cos[..., : m - 1 - i], axis=-1)
        if i > 0:
            f = f * sin[..., m - 1 - i]
        out.append(f)
    return np.stack(out, axis=-1)


def _g_multimodal(xm: np.ndarray) -> np.ndarray:
    k = xm.shape[-1]
    return 100.0 * (k + np.sum((xm - 0.5) ** 2 - np.cos(20.0 * np.pi * (xm - 0.5)), axis=-1))


def _g_sphere(xm: np.ndarray) -> np.ndarray:
    return np.sum((xm - 0.5) ** 2, axis=-1)


def dtlz1(z: np.ndarray, m: int) -> np.ndarray:
    x, xm = z[..., : m - 1], z[..., m - 1 :]
    g = _g_multimodal(xm)
    out = []
    for i in range(m):
        f = 0.5 * (1.0 + g) * np.prod(x[..., : m - 1 - i], axis=-1)
        if i > 0:
            f = f * (1.0 - x[..., m - 1 - i])
        out.append(f)
    return np.stack(out, axis=-1)


def dtlz2(z: np.ndarray, m: int) -> np.ndarray:
    x, xm = z[..., : m - 1], z[..., m - 1 :]
    return _sphere_objectives(x * np.pi / 2.0, 1.0 + _g_sphere(xm), m)


def dtlz3(z: np.ndarray, m: int) -> np.ndarray:
    x, xm = z[..., : m - 1], z[..., m - 1 :]
    return _sphere_objectives(x * np.pi / 2.0, 1.0 + _g_multimodal(xm), m)


def dtlz4(z: np.ndarray, m: int, alpha: float = 100.0) -> np.ndarray:
    x, xm = z[..., : m - 1], z[..., m - 1 :]
    return _sphere_objectives(x**alpha * np.pi / 2.0, 1.0 + _g_sphere(xm), m)


def _dtlz5_angles(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    angles = np.empty_like(x)
    angles[..., 0] = x[..., 0] * np.pi / 2.0
    if x.shape[-1] > 1:
        t = (np.pi / (4.0 * (1.0 + g)))[..., None]
        angles[..., 1:] = t * (1.0 + 2.0 * g[..., None] * x[..., 1:])
    return angles


def dtlz5(z: np.ndarray, m: int) -> np.ndarray:
    x, xm = z[..., : m - 1], z[..., m - 1 :]
    g = _g_sphere(xm)
    return _sphere_objectives(_dtlz5_angles(x, g), 1.0 + g, m)


def dtlz6(z: np.ndarray, m: int) -> np.ndarray:
    x, xm = z[..., : m - 1], z[..., m - 1 :]
    g = np.sum(xm**0.1, axis=-1)
    return _sphere_objectives(_dtlz5_angles(x, g), 1.0 + g, m)


def dtlz7(z: np.ndarray, m: int) -> np.ndarray:
    x, xm = z[..., : m - 1], z[..., m - 1 :]
    g = 1.0 + 9.0 / xm.shape[-1] * np.sum(xm, axis=-1)
    h = m - np.sum(x / (1.0 + g[..., None]) * (1.0 + np.sin(3.0 * np.pi * x)), axis=-1)
    return np.concatenate([x, ((1.0 + g) * h)[..., None]], axis=-1)


_ZDT = {"ZDT1": zdt1, "ZDT2": zdt2, "ZDT3": zdt3, "ZDT4": zdt4, "ZDT6": zdt6}
_DTLZ = {
    "DTLZ1": dtlz1,
    "DTLZ2": dtlz2,
    "DTLZ3": dtlz3,
    "DTLZ4": dtlz4,
    "DTLZ5": dtlz5,
    "DTLZ6": dtlz6,
    "DTLZ7": dtlz7,
}


@dataclass(frozen=True)
class TestFunction:
    """A deterministic map from ``[0, 1]^d`` to ``R^m`` (to be minimized)."""

    __test__ = False  # not a pytest class

    name: str
    d: int
    m: int
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def eval(self, z) -> np.ndarray:
        """Evaluate on one point ``(d,)`` or a batch ``(..., d)``."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.d:
            raise ValueError(f"{self.name} expects inputs of dimension {self.d}, got {z.shape[-1]}")
        return self.fn(z)

    __call__ = eval


def make_test_function(name: str, d: int, m: int = 2) -> TestFunction:
    """Build one of ZDT1-4, ZDT6 or DTLZ1-7 on ``[0, 1]^d``.

    Raises:
        ConfigurationError: unknown name or incompatible ``(d, m)``.
    """
    key = name.upper()
    if key not in NAMES:
        raise ConfigurationError(f"unknown test function {name!r}; expected one of {', '.join(NAMES)}")
    if d < 2 or d % 2:
        raise ConfigurationError(f"d must be even and at least 2, got {d}")
    if key in _ZDT:
        if m != 2:
            raise ConfigurationError(f"{key} has exactly 2 objectives, got m={m}")
        return TestFunction(key, d, 2, _ZDT[key])
    if m < 2 or d < m:
        raise ConfigurationError(f"{key} needs m >= 2 and d >= m, got d={d}, m={m}")
    fn = _DTLZ[key]
    return TestFunction(key, d, m, lambda z: fn(z, m))


# ---------------------------------------------------------------------------
# Bandit adaptation
# ---------------------------------------------------------------------------


def features(x, a) -> np.ndarray:
    """Feature map ``x ⊕ a ⊕ vec(x aᵀ) ⊕ (1)``.

    Works on single vectors or on broadcastable batches ``(..., d/2)``. The
    outer product is flattened row-major.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    x, a = np.broadcast_arrays(x[..., :, None], a[..., None, :])
    # after broadcasting x is constant along the last axis and a along the second to last
    xv = x[..., :, 0]
    av = a[..., 0, :]
    cross = (x * a).reshape(*x.shape[:-2], -1)
    one = np.ones(xv.shape[:-1] + (1,))
    return np.concatenate([xv, av, cross, one], axis=-1)


def feature_dim(context_dim: int, action_dim: int | None = None) -> int:
    action_dim = context_dim if action_dim is None else action_dim
    return context_dim + action_dim + context_dim * action_dim + 1


def discretize_actions(action_dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. uniform action vectors in ``[0, 1]^action_dim``."""
    if count < 2:
        raise ConfigurationError(f"need at least 2 actions, got {count}")
    return rng.uniform(0.0, 1.0, size=(count, action_dim))


def estimate_bounds(
    fn: TestFunction, samples: int = NORMALIZATION_SAMPLES, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Per-objective (min, max) of ``fn`` over uniform samples of the unit box."""
    rng = np.random.default_rng(seed)
    values = fn.eval(rng.uniform(0.0, 1.0, size=(samples, fn.d)))
    return values.min(axis=0), values.max(axis=0)


@dataclass(frozen=True, eq=False)
class BenchmarkProblem:
    """A test function split into contexts and a discrete action set.

    Attributes:
        fn: the underlying test function.
        actions: ``(num_actions, d/2)`` action vectors.
        lo, hi: per-objective bounds of the objective-to-reward transform.
        seed: seed that produced ``actions`` (kept so the problem can be rebuilt).
    """

    fn: TestFunction
    actions: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.fn.d % 2:
            raise ConfigurationError("d must be even")
        if self.actions.ndim != 2 or self.actions.shape[1] != self.action_dim:
            raise ConfigurationError(f"actions must have shape (|A|, {self.action_dim})")
        if len(self.actions) < 2:
            raise ConfigurationError("need at least 2 actions")
        if np.any(np.asarray(self.lo) >= np.asarray(self.hi)):
            raise ConfigurationError("normalization requires lo < hi for every objective")

    @property
    def name(self) -> str:
        return self.fn.name

    @property
    def d(self) -> int:
        return self.fn.d

    @property
    def m(self) -> int:
        return self.fn.m

    @property
    def context_dim(self) -> int:
        return self.fn.d // 2

    @property
    def action_dim(self) -> int:
        return self.fn.d // 2

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    @property
    def feature_dim(self) -> int:
        return feature_dim(self.context_dim, self.action_dim)

    def to_reward(self, f: np.ndarray) -> np.ndarray:
        """Map objective values to rewards: ``clamp((hi - f) / (hi - lo), 0, 1)``."""
        return np.clip((self.hi - f) / (self.hi - self.lo), 0.0, 1.0)

    def mean_reward(self, x, a) -> np.ndarray:
        """Mean reward ``r(x, a)`` of action vector ``a`` in context ``x``."""
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        return self.to_reward(self.fn.eval(np.concatenate([x, a], axis=-1)))

    def sample_contexts(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=(n, self.context_dim))

    def reward_tensor(self, contexts: np.ndarray) -> np.ndarray:
        """Mean rewards of every action in every context, shape ``(n, |A|, m)``."""
        contexts = np.atleast_2d(contexts)
        n, num = len(contexts), self.num_actions
        z = np.concatenate(
            [
                np.broadcast_to(contexts[:, None, :], (n, num, self.context_dim)),
                np.broadcast_to(self.actions[None, :, :], (n, num, self.action_dim)),
            ],
            axis=-1,
        )
        return self.to_reward(self.fn.eval(z))

    def feature_tensor(self, contexts: np.ndarray) -> np.ndarray:
        """Features of every (context, action) pair, shape ``(n, |A|, p)``."""
        contexts = np.atleast_2d(contexts)
        return features(contexts[:, None, :], self.actions[None, :, :])


def make_problem(
    name: str,
    d: int = 6,
    m: int = 2,
    num_actions: int = 20,
    seed: int = 0,
    bounds: tuple | None = None,
    normalization_samples: int = NORMALIZATION_SAMPLES,
) -> BenchmarkProblem:
    """Build a contextual-bandit problem from a named test function.

    Args:
        name: test function name (ZDT1-4, ZDT6, DTLZ1-7).
        d: input dimension of the test function (even).
        m: number of objectives.
        num_actions: size of the discretized action set.
        seed: seed of the action discretization.
        bounds: explicit ``(lo, hi)`` reward normalization; ``None`` estimates
            them from uniform samples with a fixed seed, so every problem built
            from the same function shares one normalization.
        normalization_samples: sample count for the automatic bounds.
    """
    fn = make_test_function(name, d, m)
    if bounds is None:
        lo, hi = estimate_bounds(fn, normalization_samples)
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (fn.m,)).copy() for b in bounds)
    actions = discretize_actions(d // 2, num_actions, np.random.default_rng(seed))
    return BenchmarkProblem(fn, actions, lo, hi, seed)
