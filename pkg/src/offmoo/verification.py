"""Brute-force oracles and statistical checks for the approximation bounds.

The discrete checks work on a finite pool of policies whose true values
``V``, estimates ``Ṽ`` and widths ``c`` are given directly, so the exact
hypervolume maximizer can be found by enumeration. On the good event
``|V_i - Ṽ_i| <= c_i``:

* maximizing the estimated hypervolume loses at most ``c(S*) + c(Ŝ)``;
* maximizing the pessimistic hypervolume loses at most ``2 c(S*)``;
* the hypervolume of a fixed set moves by at most ``c(S)``;

where ``c(S) = Σ_{π∈S} Σ_i c_i(π)``. Coverage of the IPS confidence width is
checked by simulation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .benchmarks import BenchmarkProblem, make_problem
from .errors import ConfigurationError
from .estimators import ConfidenceConfig, OfflineData, true_value_from_tensors
from .hypervolume import hv_exact_2d, hv_inclusion_exclusion
from .logged_data import generate
from .optimize import Objective, greedy_select_values, random_policy_baseline
from .policy import LoggingPolicy, policy_probabilities

TOL = 1e-12
MAX_SUBSETS = 1_000_000


def _hv(points: np.ndarray) -> float:
    points = np.atleast_2d(points)
    if points.shape[1] == 2:
        return hv_exact_2d(points)
    return hv_inclusion_exclusion(points)


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    """A finite policy pool with true values, estimates and widths.

    Attributes:
        values: ``(P, m)`` true values ``V``.
        estimates: ``(P, m)`` estimated values ``Ṽ``.
        widths: ``(P, m)`` confidence widths ``c``.
        k: size of the policy set to select.
    """

    values: np.ndarray
    estimates: np.ndarray
    widths: np.ndarray
    k: int

    def __post_init__(self):
        for name in ("values", "estimates", "widths"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.values.shape == self.estimates.shape == self.widths.shape):
            raise ConfigurationError("values, estimates and widths must share one shape")
        if not 1 <= self.k <= len(self.values):
            raise ConfigurationError(f"K={self.k} must lie in [1, pool size {len(self.values)}]")
        if np.any(self.widths < 0):
            raise ConfigurationError("widths must be non-negative")

    @property
    def pool_size(self) -> int:
        return len(self.values)

    def good_event(self) -> bool:
        return bool(np.all(np.abs(self.values - self.estimates) <= self.widths + TOL))

    def lower_bounds(self) -> np.ndarray:
        return np.clip(self.estimates - self.widths, 0.0, 1.0)

    def width_sum(self, subset) -> float:
        return float(self.widths[list(subset)].sum())

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "estimates": self.estimates.tolist(),
            "widths": self.widths.tolist(),
            "k": self.k,
        }


def random_instance(
    rng: np.random.Generator, pool_size: int, k: int, m: int = 2, max_width: float = 0.3
) -> DiscreteInstance:
    """Values uniform in ``[0,1]^m``, widths uniform in ``[0, max_width]``, ``Ṽ = clamp(V + U(-c, c))``."""
    values = rng.uniform(size=(pool_size, m))
    widths = rng.uniform(0.0, max_width, size=(pool_size, m))
    estimates = np.clip(values + rng.uniform(-1.0, 1.0, size=(pool_size, m)) * widths, 0.0, 1.0)
    return DiscreteInstance(values, estimates, widths, k)


def brute_force_best_subset(values, k: int) -> tuple[tuple[int, ...], float]:
    """Exact hypervolume maximizer over all ``k``-subsets of the rows of ``values``.

    Subsets are enumerated in lexicographic index order and a later subset
    replaces the incumbent only if it is better by more than ``1e-12``.

    Raises:
        ConfigurationError: more than ``10^6`` subsets.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if not 1 <= k <= len(values):
        raise ConfigurationError(f"K={k} must lie in [1, pool size {len(values)}]")
    count = math.comb(len(values), k)
    if count > MAX_SUBSETS:
        raise ConfigurationError(f"{count} subsets exceed the brute-force limit of {MAX_SUBSETS}")
    best, best_hv = None, -np.inf
    for subset in itertools.combinations(range(len(values)), k):
        hv = _hv(values[list(subset)])
        if hv > best_hv + TOL:
            best, best_hv = subset, hv
    return best, best_hv


@dataclass(eq=False)
class CheckResult:
    """Outcome of one bound check; truthy when the bound holds."""

    name: str
    passed: bool
    lhs: float
    rhs: float
    instance: DiscreteInstance | None = None
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed


def check_mean_bound(instance: DiscreteInstance) -> CheckResult:
    """``vol(Ŝ, V) >= vol(S*, V) - c(S*) - c(Ŝ)`` with ``Ŝ`` maximizing the hypervolume under ``Ṽ``."""
    star, hv_star = brute_force_best_subset(instance.values, instance.k)
    hat, _ = brute_force_best_subset(instance.estimates, instance.k)
    lhs = _hv(instance.values[list(hat)])
    rhs = hv_star - instance.width_sum(star) - instance.width_sum(hat)
    return CheckResult(
        "mean", lhs >= rhs - TOL, lhs, rhs, instance, {"optimal": star, "selected": hat, "optimum": hv_star}
    )


def check_pessimism_bound(instance: DiscreteInstance) -> CheckResult:
    """``vol(Ŝ, V) >= vol(S*, V) - 2 c(S*)`` with ``Ŝ`` maximizing the hypervolume under ``clamp(Ṽ - c)``."""
    star, hv_star = brute_force_best_subset(instance.values, instance.k)
    hat, _ = brute_force_best_subset(instance.lower_bounds(), instance.k)
    lhs = _hv(instance.values[list(hat)])
    rhs = hv_star - 2.0 * instance.width_sum(star)
    return CheckResult(
        "pessimism", lhs >= rhs - TOL, lhs, rhs, instance, {"optimal": star, "selected": hat, "optimum": hv_star}
    )


def check_hv_error_bound(values, estimates, widths) -> CheckResult:
    """``|vol(S, V) - vol(S, Ṽ)| <= Σ_{π∈S} Σ_i c_i(π)`` for a fixed set ``S``."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    widths = np.atleast_2d(np.asarray(widths, dtype=float))
    if np.any(np.abs(values - estimates) > widths + TOL):
        raise ConfigurationError("estimates violate the width precondition")
    lhs = abs(_hv(values) - _hv(estimates))
    rhs = float(widths.sum())
    return CheckResult("hv_error", lhs <= rhs + TOL, lhs, rhs)


# ---------------------------------------------------------------------------
# Adversarial constructions
# ---------------------------------------------------------------------------


def overestimated_instance() -> DiscreteInstance:
    """One poor policy whose estimate is wildly optimistic and whose width is large.

    Mean-estimate maximization selects the impostor, so its loss is only
    covered by the ``c(Ŝ)`` term; the pessimistic bound discounts it.
    """
    values = np.array([[0.9, 0.2], [0.2, 0.9], [0.6, 0.6], [0.1, 0.1]])
    estimates = values.copy()
    estimates[3] = [1.0, 1.0]
    widths = np.zeros_like(values)
    widths[3] = [0.9, 0.9]
    return DiscreteInstance(values, estimates, widths, k=1)


def separation_instance(rng: np.random.Generator, pool_size: int = 8, k: int = 2, m: int = 2) -> DiscreteInstance:
    """Exact widths on the optimal set and unit widths with arbitrary estimates elsewhere.

    The pessimistic maximizer recovers the optimum exactly here, while the
    mean maximizer can be arbitrarily misled.
    """
    values = rng.uniform(size=(pool_size, m))
    star, _ = brute_force_best_subset(values, k)
    widths = np.ones_like(values)
    widths[list(star)] = 0.0
    estimates = rng.uniform(size=values.shape)
    estimates[list(star)] = values[list(star)]
    return DiscreteInstance(values, estimates, widths, k)


# ---------------------------------------------------------------------------
# Coverage of the IPS confidence width
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class IPSSimulation:
    """Repeated IPS estimates on fixed contexts.

    Attributes:
        estimates: ``(K, T, m)`` unclamped IPS estimates, one per trial.
        targets: ``(K, T, m)`` values each estimate is centred on.
        widths: ``(K,)`` confidence widths ``β σ M_π / n``.
    """

    estimates: np.ndarray
    targets: np.ndarray
    widths: np.ndarray


def simulate_ips(
    problem: BenchmarkProblem,
    thetas,
    contexts: np.ndarray,
    trials: int,
    sigma: float,
    epsilon: float,
    rng: np.random.Generator,
    beta: float = 3.0,
    resample_actions: bool = True,
    chunk: int = 250,
) -> IPSSimulation:
    """Regenerate logged data on fixed contexts and record IPS estimates.

    With ``resample_actions`` each trial draws fresh actions and noise and the
    target is the true value on the contexts. Otherwise actions are drawn once
    and only noise is redrawn; the target is then the conditional mean
    ``(1/n) Σ_t w_t r(x_t, A_t)``.
    """
    thetas = np.atleast_2d(thetas)
    n = len(contexts)
    rewards = problem.reward_tensor(contexts)  # (n, A, m)
    logging = LoggingPolicy(problem, epsilon).probability_matrix(contexts)  # (n, A)
    probs = policy_probabilities(thetas, problem.feature_tensor(contexts))  # (K, n, A)
    true = true_value_from_tensors(probs, rewards)  # (K, m)
    mt = (probs / logging[None]).max(axis=-1)
    widths = beta * sigma * np.sqrt(np.sum(mt**2, axis=1)) / n
    cdf = np.cumsum(logging, axis=1)
    rows = np.arange(n)

    def draw_actions(count):
        u = rng.uniform(size=(count, n, 1)) * cdf[None, :, -1:]
        return np.minimum((cdf[None] <= u).sum(axis=-1), problem.num_actions - 1)

    fixed = None if resample_actions else draw_actions(1)
    estimates, targets = [], []
    for start in range(0, trials, chunk):
        size = min(chunk, trials - start)
        actions = draw_actions(size) if fixed is None else np.repeat(fixed, size, axis=0)  # (T, n)
        means = rewards[rows, actions]  # (T, n, m)
        ys = means + sigma * rng.standard_normal(means.shape)
        w = probs[:, rows, actions] / logging[rows, actions][None]  # (K, T, n)
        estimates.append(np.einsum("ktn,tni->kti", w, ys) / n)
        if fixed is None:
            targets.append(np.broadcast_to(true[:, None, :], (len(thetas), size, true.shape[1])))
        else:
            targets.append(np.einsum("ktn,tni->kti", w, means) / n)
    return IPSSimulation(np.concatenate(estimates, axis=1), np.concatenate(targets, axis=1), widths)


@dataclass(eq=False)
class CoverageResult:
    """Per-(policy, objective) failure rates of ``|V̂_i - V_i| <= c_i``."""

    rates: np.ndarray
    trials: int
    beta: float

    @property
    def bound(self) -> float:
        return min(1.0, 2.0 * math.exp(-self.beta**2 / 2.0))

    @property
    def stderr(self) -> float:
        p = self.bound
        return math.sqrt(p * (1.0 - p) / self.trials)

    def passed(self, num_stderr: float = 3.0) -> bool:
        return bool(np.all(self.rates <= self.bound + num_stderr * self.stderr))


def coverage_simulation(
    problem: BenchmarkProblem,
    thetas,
    beta: float,
    trials: int,
    n: int = 200,
    sigma: float = 1.0,
    epsilon: float = 0.1,
    rng: np.random.Generator | None = None,
    resample_actions: bool = True,
) -> CoverageResult:
    """Empirical failure rate of the confidence width over regenerated datasets."""
    if trials < 1000:
        raise ConfigurationError("coverage needs at least 1000 trials")
    rng = np.random.default_rng(0) if rng is None else rng
    contexts = problem.sample_contexts(n, rng)
    sim = simulate_ips(problem, thetas, contexts, trials, sigma, epsilon, rng, beta, resample_actions)
    fail = np.abs(sim.estimates - sim.targets) > sim.widths[:, None, None]
    return CoverageResult(fail.mean(axis=1), trials, beta)


# ---------------------------------------------------------------------------
# Width scaling
# ---------------------------------------------------------------------------


def width_sum(logging_probs: np.ndarray, policy_probs: np.ndarray, m: int, beta: float, sigma: float) -> float:
    """``c(S) = Σ_{π∈S} Σ_i c_i(π)`` for ``(K, n, A)`` policy probabilities."""
    mt = (policy_probs / logging_probs[None]).max(axis=-1)
    n = logging_probs.shape[0]
    return float(m * np.sum(beta * sigma * np.sqrt(np.sum(mt**2, axis=1)) / n))


@dataclass(eq=False)
class ScalingResult:
    """Normalized width ``c(S) √n / (K m)`` on each grid point; constant under proportionality."""

    factor: str
    grid: tuple
    normalized: np.ndarray

    @property
    def spread(self) -> float:
        return float(self.normalized.max() / self.normalized.min() - 1.0)

    def passed(self, tolerance: float = 0.1) -> bool:
        return self.spread <= tolerance


def width_scaling(
    make,
    ns=(100, 400, 1600),
    ks=(2, 5, 10),
    ms=(2, 3, 4),
    beta: float = 0.2,
    sigma: float = 1.0,
    epsilon: float = 0.1,
    init_scale: float = 0.01,
    seed: int = 0,
) -> list[ScalingResult]:
    """Check that ``c(S)`` is proportional to ``K``, ``m`` and ``1/√n`` for near-uniform policies.

    Args:
        make: callable ``m -> BenchmarkProblem``.
    """
    base_n, base_k, base_m = ns[len(ns) // 2], ks[len(ks) // 2], ms[0]

    def normalized(n, k, m):
        rng = np.random.default_rng(seed)
        problem = make(m)
        contexts = problem.sample_contexts(n, rng)
        logging = LoggingPolicy(problem, epsilon).probability_matrix(contexts)
        thetas = init_scale * rng.standard_normal((k, problem.feature_dim))
        probs = policy_probabilities(thetas, problem.feature_tensor(contexts))
        return width_sum(logging, probs, m, beta, sigma) * math.sqrt(n) / (k * m)

    return [
        ScalingResult("n", tuple(ns), np.array([normalized(n, base_k, base_m) for n in ns])),
        ScalingResult("K", tuple(ks), np.array([normalized(base_n, k, base_m) for k in ks])),
        ScalingResult("m", tuple(ms), np.array([normalized(base_n, base_k, m) for m in ms])),
    ]


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------


def random_suite(check, count: int, seed: int = 0, max_pool: int = 8, max_k: int = 3, m: int = 2):
    """Run ``check`` on ``count`` random instances; returns the list of failures."""
    rng = np.random.default_rng(seed)
    failures = []
    for _ in range(count):
        k = int(rng.integers(1, max_k + 1))
        pool = int(rng.integers(max(k, 2), max_pool + 1))
        result = check(random_instance(rng, pool, k, m))
        if not result:
            failures.append(result)
    return failures


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------


def finite_difference_gradient(fn, thetas: np.ndarray, h: float = 1e-5) -> tuple[np.ndarray, bool]:
    """Central differences of a scalar function and a kink flag.

    The flag is set when the forward and backward differences disagree by more
    than ``1e-3`` of the gradient scale on any coordinate, i.e. when ``thetas``
    sits within about ``h`` of a tie or a clamp.
    """
    thetas = np.asarray(thetas, dtype=float)
    f0 = fn(thetas)
    central = np.zeros_like(thetas)
    gap = np.zeros_like(thetas)
    for idx in np.ndindex(thetas.shape):
        up, down = thetas.copy(), thetas.copy()
        up[idx] += h
        down[idx] -= h
        fu, fd = fn(up), fn(down)
        central[idx] = (fu - fd) / (2 * h)
        gap[idx] = abs((fu - f0) - (f0 - fd)) / h
    scale = max(float(np.abs(central).max()), 1e-8)
    return central, bool(np.any(gap > 1e-3 * scale))


def check_gradient(objective, thetas: np.ndarray, rtol: float = 1e-4, h: float = 1e-5) -> CheckResult:
    """Compare ``objective.value_and_grad`` with central differences.

    The relative error is ``max|g - g_fd| / max|g_fd|``. ``details['degenerate']``
    marks points next to a kink, where the comparison is not meaningful.
    """
    _, grad = objective.value_and_grad(thetas)
    fd, kink = finite_difference_gradient(objective.value, thetas, h)
    err = float(np.abs(grad - fd).max() / max(float(np.abs(fd).max()), 1e-12))
    return CheckResult("gradient", err <= rtol, err, rtol, details={"degenerate": kink})


# ---------------------------------------------------------------------------
# Full suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteRow:
    name: str
    passed: bool
    detail: str


def random_front(rng: np.random.Generator, k: int, m: int) -> np.ndarray:
    return rng.uniform(size=(k, m))


def greedy_ratio_failures(count: int, seed: int = 0, max_pool: int = 12, max_k: int = 4) -> int:
    """Instances where greedy falls below ``(1 - 1/e)`` of the brute-force optimum."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(count):
        k = int(rng.integers(1, max_k + 1))
        values = rng.uniform(size=(int(rng.integers(k, max_pool + 1)), 2))
        greedy = _hv(values[greedy_select_values(values, k)])
        _, best = brute_force_best_subset(values, k)
        bad += greedy < (1.0 - 1.0 / math.e) * best - TOL
    return bad


def run_suite(scale: float = 1.0, seed: int = 0) -> list[SuiteRow]:
    """Run every randomized check; ``scale`` multiplies the instance counts."""
    def count(base):
        return max(1, int(round(base * scale)))

    rng = np.random.default_rng(seed)
    rows = []

    worst = 0.0
    for _ in range(count(1000)):
        pts = random_front(rng, int(rng.integers(1, 13)), 2)
        worst = max(worst, abs(hv_exact_2d(pts) - hv_inclusion_exclusion(pts)))
    rows.append(SuiteRow("hv exact2d = inclusion-exclusion", worst <= 1e-12, f"max diff {worst:.1e}"))

    bad = 0
    for _ in range(count(1000)):
        m = int(rng.integers(2, 4))
        k = int(rng.integers(1, 7))
        values = rng.uniform(size=(k, m))
        widths = rng.uniform(0.0, 0.3, size=(k, m))
        estimates = np.clip(values + rng.uniform(-1, 1, size=(k, m)) * widths, 0.0, 1.0)
        bad += not check_hv_error_bound(values, estimates, widths)
    rows.append(SuiteRow("hv error bound", bad == 0, f"{bad} violations"))

    for name, check in (("mean-estimate bound", check_mean_bound), ("pessimism bound", check_pessimism_bound)):
        failures = random_suite(check, count(500), seed=int(rng.integers(2**31)))
        rows.append(SuiteRow(name, not failures, f"{len(failures)} violations"))

    adv = overestimated_instance()
    mean_res, pess_res = check_mean_bound(adv), check_pessimism_bound(adv)
    ok = bool(mean_res) and bool(pess_res) and pess_res.lhs == pess_res.details["optimum"]
    rows.append(SuiteRow("overestimated impostor", ok, f"mean picks {mean_res.details['selected']}, "
                         f"pessimism picks {pess_res.details['selected']}"))

    gaps = []
    for _ in range(count(100)):
        res = check_pessimism_bound(separation_instance(rng))
        gaps.append(res.details["optimum"] - res.lhs)
    rows.append(SuiteRow("pessimism separation", max(gaps) <= TOL, f"max gap {max(gaps):.1e}"))

    bad = greedy_ratio_failures(count(200), seed=int(rng.integers(2**31)))
    rows.append(SuiteRow("greedy (1-1/e) guarantee", bad == 0, f"{bad} violations"))

    problem = make_problem("ZDT1")
    thetas = random_policy_baseline(5, problem.feature_dim, rng).thetas
    cov = coverage_simulation(problem, thetas, 3.0, max(1000, count(5000)), rng=rng)
    rows.append(SuiteRow("confidence width coverage", cov.passed(),
                         f"max rate {cov.rates.max():.4f} vs {cov.bound:.4f} + 3 stderr"))

    scaling = width_scaling(lambda m: make_problem("DTLZ2", m=m))
    rows.append(SuiteRow("width scaling", all(s.passed() for s in scaling),
                         ", ".join(f"{s.factor} spread {s.spread:.3f}" for s in scaling)))

    data_rng = np.random.default_rng(int(rng.integers(2**31)))
    ds = generate(problem, LoggingPolicy(problem, 0.1), 200, 1.0, data_rng)
    data = OfflineData.build(ds, problem)
    worst, checked = 0.0, 0
    for spec in ("mean", "pess", "ehvi:8"):
        objective = Objective.make(spec, data, ConfidenceConfig(0.2, 1.0), rng=data_rng)
        for _ in range(count(5)):
            res = check_gradient(objective, rng.normal(scale=0.5, size=(3, problem.feature_dim)))
            if not res.details["degenerate"]:
                worst, checked = max(worst, res.lhs), checked + 1
    rows.append(SuiteRow("gradient vs finite differences", worst <= 1e-4,
                         f"max rel. error {worst:.1e} over {checked} points"))
    return rows
