"""Logged bandit datasets: generation under a logging policy and CSV persistence.

File layout::

    # offmoo-dataset n=3 m=2 d=6 sigma=1.0 epsilon=0.1 problem=ZDT1 seed=7 num_actions=20 problem_seed=0
    x0,x1,x2,a_index,propensity,y0,y1
    <one row per record>

Floats are written with ``repr`` so that a load/save round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmarks import BenchmarkProblem, make_problem
from .errors import DataError, ParseError, ValidationError
from .policy import LoggingPolicy

MAGIC = "# offmoo-dataset"
_META_KEYS = ("n", "m", "d", "sigma", "epsilon", "problem", "seed", "num_actions", "problem_seed")


@dataclass(frozen=True, eq=False)
class LoggedRecord:
    x: np.ndarray
    a_index: int
    y: np.ndarray
    propensity: float


@dataclass(frozen=True, eq=False)
class LoggedDataset:
    """Column-oriented logged data ``{(x_t, A_t, Y_t, π₀(A_t|x_t))}``.

    Attributes:
        contexts: ``(n, d/2)`` contexts.
        actions: ``(n,)`` logged action indices.
        rewards: ``(n, m)`` noisy reward vectors.
        propensities: ``(n,)`` logging probabilities of the logged actions.
    """

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray
    sigma: float
    epsilon: float
    problem: str
    seed: int
    d: int
    num_actions: int
    problem_seed: int = 0

    def __post_init__(self):
        n = len(self.actions)
        if n < 1:
            raise ValidationError("a dataset needs at least one record")
        if not (len(self.contexts) == len(self.rewards) == len(self.propensities) == n):
            raise ValidationError("column lengths disagree")
        if self.contexts.shape[1] != self.d // 2:
            raise ValidationError(f"contexts have dimension {self.contexts.shape[1]}, expected {self.d // 2}")
        if np.any((self.actions < 0) | (self.actions >= self.num_actions)):
            raise ValidationError("action index out of range")

    @property
    def n(self) -> int:
        return len(self.actions)

    @property
    def m(self) -> int:
        return self.rewards.shape[1]

    def records(self):
        for t in range(self.n):
            yield LoggedRecord(self.contexts[t], int(self.actions[t]), self.rewards[t], float(self.propensities[t]))

    def metadata(self) -> dict:
        return {k: getattr(self, k) for k in _META_KEYS}

    def __eq__(self, other) -> bool:
        if not isinstance(other, LoggedDataset):
            return NotImplemented
        return (
            self.metadata() == other.metadata()
            and np.array_equal(self.contexts, other.contexts)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.propensities, other.propensities)
        )

    def rebuild_problem(self) -> BenchmarkProblem:
        """Reconstruct the benchmark problem the data was logged on."""
        return make_problem(self.problem, self.d, self.m, self.num_actions, self.problem_seed)


def generate(
    problem: BenchmarkProblem,
    logging: LoggingPolicy,
    n: int,
    sigma: float,
    rng: np.random.Generator | int,
) -> LoggedDataset:
    """Log ``n`` interactions of ``logging`` with Gaussian reward noise of scale ``sigma``.

    Contexts are uniform on ``[0, 1]^{d/2}``. Noisy rewards are not clipped.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    contexts = problem.sample_contexts(n, rng)
    probs = logging.probability_matrix(contexts)
    actions = _sample_rows(probs, rng)
    means = problem.reward_tensor(contexts)[np.arange(n), actions]
    rewards = means + sigma * rng.standard_normal(means.shape)
    return LoggedDataset(
        contexts=contexts,
        actions=actions,
        rewards=rewards,
        propensities=probs[np.arange(n), actions],
        sigma=float(sigma),
        epsilon=float(logging.epsilon),
        problem=problem.name,
        seed=-1 if seed is None else int(seed),
        d=problem.d,
        num_actions=problem.num_actions,
        problem_seed=problem.seed,
    )


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of a row-stochastic matrix by inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.uniform(size=(len(probs), 1)) * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=1), probs.shape[1] - 1)


def save(ds: LoggedDataset, path) -> None:
    meta = " ".join(f"{k}={v}" for k, v in ds.metadata().items())
    dx, m = ds.contexts.shape[1], ds.m
    header = [f"x{i}" for i in range(dx)] + ["a_index", "propensity"] + [f"y{i}" for i in range(m)]
    lines = [f"{MAGIC} {meta}", ",".join(header)]
    for t in range(ds.n):
        row = [repr(float(v)) for v in ds.contexts[t]]
        row += [str(int(ds.actions[t])), repr(float(ds.propensities[t]))]
        row += [repr(float(v)) for v in ds.rewards[t]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_meta(line: str) -> dict:
    if not line.startswith(MAGIC):
        raise ParseError("missing dataset header", 1)
    meta = {}
    for item in line[len(MAGIC) :].split():
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"bad metadata item {item!r}", 1)
        meta[key] = value
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise ParseError(f"metadata missing {', '.join(missing)}", 1)
    try:
        return {
            "n": int(meta["n"]),
            "m": int(meta["m"]),
            "d": int(meta["d"]),
            "sigma": float(meta["sigma"]),
            "epsilon": float(meta["epsilon"]),
            "problem": meta["problem"],
            "seed": int(meta["seed"]),
            "num_actions": int(meta["num_actions"]),
            "problem_seed": int(meta["problem_seed"]),
        }
    except ValueError as exc:
        raise ParseError(f"bad metadata value: {exc}", 1) from None


def load(path) -> LoggedDataset:
    """Read a dataset written by :func:`save`.

    Raises:
        ParseError: malformed header or rows (with the offending line number).
        ValidationError: empty file or metadata that disagrees with the rows.
    """
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValidationError("empty dataset file (n must be at least 1)")
    meta = _parse_meta(lines[0])
    dx, m = meta["d"] // 2, meta["m"]
    expected = [f"x{i}" for i in range(dx)] + ["a_index", "propensity"] + [f"y{i}" for i in range(m)]
    if len(lines) < 2 or lines[1].split(",") != expected:
        raise ParseError(f"expected column header {','.join(expected)}", 2)
    contexts, actions, props, rewards = [], [], [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(expected):
            raise ParseError(f"expected {len(expected)} columns, got {len(cells)}", lineno)
        try:
            contexts.append([float(c) for c in cells[:dx]])
            actions.append(int(cells[dx]))
            props.append(float(cells[dx + 1]))
            rewards.append([float(c) for c in cells[dx + 2 :]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if not actions:
        raise ValidationError("dataset has no records (n must be at least 1)")
    if len(actions) != meta["n"]:
        raise ValidationError(f"header says n={meta['n']} but file has {len(actions)} records")
    props_arr = np.array(props)
    if np.any(props_arr <= 0) or np.any(props_arr > 1):
        raise DataError("propensities must lie in (0, 1]")
    return LoggedDataset(
        contexts=np.array(contexts, dtype=float).reshape(-1, dx),
        actions=np.array(actions, dtype=int),
        rewards=np.array(rewards, dtype=float).reshape(-1, m),
        propensities=props_arr,
        sigma=meta["sigma"],
        epsilon=meta["epsilon"],
        problem=meta["problem"],
        seed=meta["seed"],
        d=meta["d"],
        num_actions=meta["num_actions"],
        problem_seed=meta["problem_seed"],
    )


def bootstrap_counts(n: int, resamples: int, rng: np.random.Generator) -> np.ndarray:
    """Multiplicity of each record in ``resamples`` with-replacement resamples, ``(N, n)``."""
    idx = rng.integers(0, n, size=(resamples, n))
    counts = np.zeros((resamples, n))
    np.add.at(counts, (np.repeat(np.arange(resamples), n), idx.ravel()), 1.0)
    return counts
