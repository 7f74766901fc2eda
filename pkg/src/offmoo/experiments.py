"""Experiment harness: recovered-hypervolume sweeps over n, K and ε, plus SVG plots.

A sweep is the full factorial over (n, ε, run, K, method). Every run owns
one benchmark problem (its own random action set), one evaluation context
sample and one reference hypervolume; every (n, ε, run) owns one logged
dataset shared by all methods and K values. All seeds are derived from the
config seed with :class:`numpy.random.SeedSequence`, so each cell can be
recomputed in isolation.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .benchmarks import BenchmarkProblem, make_problem
from .errors import ConfigurationError, DataError
from .estimators import ConfidenceConfig, OfflineData, true_value_from_tensors
from .hypervolume import HypervolumeMethod, hypervolume
from .logged_data import generate
from .optimize import GradientConfig, Objective, optimize_policies, random_policy_baseline
from .policy import LoggingPolicy, PolicySet, policy_probabilities

log = logging.getLogger(__name__)

METHODS = ("random", "meanHVI", "pessHVI", "ehvi")
CSV_COLUMNS = ("method", "n", "K", "epsilon", "run", "recovered_hv", "seconds", "status")
_OBJECTIVE = {"meanHVI": "mean", "pessHVI": "pess"}

# stream tags for SeedSequence
_PROBLEM, _EVAL, _REFERENCE, _DATA, _METHOD = range(5)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _names(text: str) -> tuple[str, ...]:
    return tuple(v for v in str(text).replace(" ", "").split(",") if v)


_SECTIONS = {
    "problem": ("problem", "d", "m", "num_actions"),
    "experiment": (
        "n_values",
        "k_values",
        "epsilons",
        "sigma",
        "beta",
        "methods",
        "runs",
        "seed",
        "hv",
        "reference_pool",
        "eval_contexts",
        "ehvi_resamples",
        "record_time",
        "output_dir",
    ),
    "optimizer": ("iterations", "learning_rate", "restarts", "init_scale"),
}
_PARSERS = {
    "d": int,
    "m": int,
    "num_actions": int,
    "n_values": _ints,
    "k_values": _ints,
    "epsilons": _floats,
    "sigma": float,
    "beta": float,
    "methods": _names,
    "runs": int,
    "seed": int,
    "reference_pool": int,
    "eval_contexts": int,
    "ehvi_resamples": int,
    "iterations": int,
    "learning_rate": float,
    "restarts": int,
    "init_scale": float,
}


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep configuration; defaults are the desk-scale protocol.

    Attributes:
        reference_pool: random policies whose true hypervolume is the denominator
            of the recovered hypervolume.
        eval_contexts: contexts on which true values are computed.
        hv: hypervolume method name; ``auto`` picks exact2d for m=2 and
            scalarized otherwise.
        record_time: write wall time per cell; disable for byte-identical reruns.
    """

    problem: str = "DTLZ2"
    d: int = 6
    m: int = 2
    num_actions: int = 20
    n_values: tuple = (100, 500, 2000)
    k_values: tuple = (2, 5, 10)
    epsilons: tuple = (0.1,)
    sigma: float = 1.0
    beta: float = 0.2
    methods: tuple = ("random", "meanHVI", "pessHVI")
    runs: int = 10
    seed: int = 0
    hv: str = "auto"
    reference_pool: int = 2000
    eval_contexts: int = 1000
    ehvi_resamples: int = 32
    record_time: bool = True
    output_dir: str = "results"
    iterations: int = 500
    learning_rate: float = 0.05
    restarts: int = 3
    init_scale: float = 0.01

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigurationError("runs must be at least 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; expected a subset of {', '.join(METHODS)}")
        if not (self.methods and self.n_values and self.k_values and self.epsilons):
            raise ConfigurationError("methods, n_values, k_values and epsilons must be non-empty")
        if min(self.n_values) < 1 or min(self.k_values) < 1:
            raise ConfigurationError("n and K values must be positive")
        if any(not 0.0 < e <= 1.0 for e in self.epsilons):
            raise ConfigurationError("epsilons must lie in (0, 1]")
        if self.reference_pool < 1 or self.eval_contexts < 1:
            raise ConfigurationError("reference_pool and eval_contexts must be positive")
        self.hv_method()

    def hv_method(self) -> HypervolumeMethod:
        return HypervolumeMethod.default_for(self.m) if self.hv == "auto" else HypervolumeMethod.parse(self.hv)

    def gradient_config(self, seed: int) -> GradientConfig:
        return GradientConfig(
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            restarts=self.restarts,
            init_scale=self.init_scale,
            seed=seed,
        )

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            if key == "record_time":
                kwargs[key] = _parse_bool(raw)
            elif isinstance(raw, str):
                try:
                    kwargs[key] = _PARSERS.get(key, str)(raw)
                except ValueError as exc:
                    raise ConfigurationError(f"bad value for {key}: {exc}") from None
            else:
                kwargs[key] = tuple(raw) if isinstance(raw, list) else raw
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read ``key = value`` entries from any section of an INI-style file."""
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        values = {}
        for section in parser.sections():
            values.update(parser[section])
        return cls.from_mapping(values)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Replace fields; ``None`` values are ignored and strings are parsed as in a config file."""
        current = asdict(self)
        current.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_mapping(current)

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        values = asdict(self)
        for section, keys in _SECTIONS.items():
            parser[section] = {
                k: ",".join(str(v) for v in values[k]) if isinstance(values[k], tuple) else str(values[k]) for k in keys
            }
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()


# ---------------------------------------------------------------------------
# Seeds and per-run objects
# ---------------------------------------------------------------------------


def _seed(config: ExperimentConfig, *key: int) -> int:
    """Deterministic 32-bit seed for a stream identified by integers."""
    return int(np.random.SeedSequence([config.seed, *key]).generate_state(1)[0])


def _eps_key(epsilon: float) -> int:
    return int(round(epsilon * 1_000_000))


@lru_cache(maxsize=64)
def _problem(name: str, d: int, m: int, num_actions: int, seed: int) -> BenchmarkProblem:
    return make_problem(name, d, m, num_actions, seed)


def run_problem(config: ExperimentConfig, run: int) -> BenchmarkProblem:
    return _problem(config.problem, config.d, config.m, config.num_actions, _seed(config, _PROBLEM, run))


def eval_contexts(config: ExperimentConfig, run: int) -> np.ndarray:
    problem = run_problem(config, run)
    return problem.sample_contexts(config.eval_contexts, np.random.default_rng(_seed(config, _EVAL, run)))


def true_values(problem: BenchmarkProblem, thetas, contexts: np.ndarray, chunk: int = 250) -> np.ndarray:
    """True value vectors ``(K, m)`` of many policies, evaluated in chunks."""
    thetas = np.atleast_2d(thetas)
    feats = problem.feature_tensor(contexts)
    rewards = problem.reward_tensor(contexts)
    return np.concatenate(
        [true_value_from_tensors(policy_probabilities(thetas[i : i + chunk], feats), rewards) for i in range(0, len(thetas), chunk)]
    )


_REFERENCE_CACHE: dict = {}


def reference_hypervolume(
    problem: BenchmarkProblem,
    num_random_policies: int,
    contexts: np.ndarray,
    rng: np.random.Generator | int,
    hv: HypervolumeMethod | str | None = None,
) -> float:
    """True hypervolume of ``num_random_policies`` unit-ball random policies.

    Results are cached when ``rng`` is an integer seed.
    """
    if num_random_policies < 1:
        raise ConfigurationError("need at least one reference policy")
    hv = HypervolumeMethod.default_for(problem.m) if hv is None else hv
    key = None
    if isinstance(rng, (int, np.integer)):
        digest = hashlib.sha1(np.ascontiguousarray(contexts).tobytes()).hexdigest()
        key = (problem.name, problem.d, problem.m, problem.seed, num_random_policies, int(rng), str(hv), digest)
        if key in _REFERENCE_CACHE:
            return _REFERENCE_CACHE[key]
    gen = np.random.default_rng(rng)
    pool = random_policy_baseline(num_random_policies, problem.feature_dim, gen)
    value = hypervolume(true_values(problem, pool.thetas, contexts), hv, np.random.default_rng(0))
    if key is not None:
        _REFERENCE_CACHE[key] = value
    return value


def recovered_hypervolume(
    solution: PolicySet,
    problem: BenchmarkProblem,
    contexts: np.ndarray,
    reference: float,
    hv: HypervolumeMethod | str | None = None,
) -> float:
    """True hypervolume of ``solution`` divided by ``reference``; may exceed 1.

    Raises:
        DataError: the reference hypervolume is zero.
    """
    if not reference > 0:
        raise DataError("reference hypervolume is zero; the problem is degenerate")
    hv = HypervolumeMethod.default_for(problem.m) if hv is None else hv
    return hypervolume(true_values(problem, solution.thetas, contexts), hv, np.random.default_rng(0)) / reference


# ---------------------------------------------------------------------------
# Cells and sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    method: str
    n: int
    K: int
    epsilon: float
    run: int
    recovered_hv: float
    seconds: float
    status: str = "ok"

    def as_csv(self) -> list[str]:
        return [
            self.method,
            str(self.n),
            str(self.K),
            repr(float(self.epsilon)),
            str(self.run),
            repr(float(self.recovered_hv)),
            f"{self.seconds:.3f}",
            self.status,
        ]


@lru_cache(maxsize=16)
def _offline_data(config: ExperimentConfig, n: int, epsilon: float, run: int) -> OfflineData:
    problem = run_problem(config, run)
    logging_policy = LoggingPolicy(problem, epsilon)
    ds = generate(problem, logging_policy, n, config.sigma, _seed(config, _DATA, run, n, _eps_key(epsilon)))
    return OfflineData.build(ds, problem, logging_policy)


def solve(config: ExperimentConfig, method: str, data: OfflineData, k: int, seed: int) -> PolicySet:
    """Policies returned by one method on one dataset."""
    if method == "random":
        return random_policy_baseline(k, data.features.shape[-1], np.random.default_rng(seed))
    confidence = ConfidenceConfig(config.beta, config.sigma)
    spec = f"ehvi:{config.ehvi_resamples}" if method == "ehvi" else _OBJECTIVE[method]
    hv = config.hv_method()
    objective = Objective.make(spec, data, confidence, hv, np.random.default_rng(seed))
    return optimize_policies(objective, k, config.gradient_config(seed)).policies


def run_cell(config: ExperimentConfig, method: str, n: int, k: int, epsilon: float, run: int) -> ResultRow:
    """Generate (or reuse) data, optimize and evaluate one cell; failures become an error row."""
    start = time.perf_counter()
    try:
        problem = run_problem(config, run)
        contexts = eval_contexts(config, run)
        hv = config.hv_method()
        reference = reference_hypervolume(problem, config.reference_pool, contexts, _seed(config, _REFERENCE, run), hv)
        data = _offline_data(config, n, epsilon, run)
        seed = _seed(config, _METHOD, run, n, _eps_key(epsilon), k, METHODS.index(method))
        solution = solve(config, method, data, k, seed)
        value, status = recovered_hypervolume(solution, problem, contexts, reference, hv), "ok"
    except Exception as exc:  # recorded in the CSV, the sweep continues
        log.warning("cell %s n=%d K=%d eps=%g run=%d failed: %s", method, n, k, epsilon, run, exc)
        value, status = math.nan, f"error:{type(exc).__name__}:{str(exc).replace(',', ';')}"
    seconds = time.perf_counter() - start if config.record_time else 0.0
    return ResultRow(method, n, k, epsilon, run, value, seconds, status)


def cells(config: ExperimentConfig) -> list[tuple]:
    """All (method, n, K, ε, run) cells in the fixed sweep order."""
    return [
        (method, n, k, eps, run)
        for n in config.n_values
        for eps in config.epsilons
        for run in range(config.runs)
        for k in config.k_values
        for method in config.methods
    ]


def _run_cell_args(args) -> ResultRow:
    return run_cell(*args)


def run_sweep(config: ExperimentConfig, csv_path=None, workers: int = 1) -> list[ResultRow]:
    """Run every cell, appending each row to ``csv_path`` as soon as it is ready.

    Rows are written in cell order regardless of ``workers``.
    """
    jobs = [(config, *cell) for cell in cells(config)]
    rows: list[ResultRow] = []
    fh = None
    if csv_path is not None:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(csv_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = pool.map(_run_cell_args, jobs)
                for row in results:
                    rows.append(row)
                    if fh:
                        writer.writerow(row.as_csv())
                        fh.flush()
        else:
            for job in jobs:
                row = _run_cell_args(job)
                rows.append(row)
                if fh:
                    writer.writerow(row.as_csv())
                    fh.flush()
    finally:
        if fh:
            fh.close()
    return rows


def read_results(csv_path) -> list[ResultRow]:
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise DataError(f"{csv_path}: expected columns {','.join(CSV_COLUMNS)}")
        return [
            ResultRow(
                r["method"],
                int(r["n"]),
                int(r["K"]),
                float(r["epsilon"]),
                int(r["run"]),
                float(r["recovered_hv"]),
                float(r["seconds"]),
                r["status"],
            )
            for r in reader
        ]


def summarize(rows, x_axis: str) -> dict[str, list[tuple[float, float, float, int]]]:
    """Per method: sorted ``(x, mean, stderr, count)`` over successful rows."""
    if x_axis not in ("n", "K", "epsilon"):
        raise ConfigurationError("x axis must be n, K or epsilon")
    groups: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        if row.status != "ok":
            continue
        groups.setdefault(row.method, {}).setdefault(getattr(row, x_axis), []).append(row.recovered_hv)
    out = {}
    for method, by_x in groups.items():
        series = []
        for x in sorted(by_x):
            vals = np.array(by_x[x])
            se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
            series.append((x, float(vals.mean()), se, len(vals)))
        out[method] = series
    return out


# ---------------------------------------------------------------------------
# SVG plot
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 150, 30, 60


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:g}"


def emit_plot(csv_path, x_axis: str, out_svg) -> Path:
    """Line chart of mean recovered hypervolume with stderr whiskers, one series per method.

    The x positions are the distinct x values, evenly spaced. A series with a
    single point is drawn as a marker without a line.

    Raises:
        DataError: the CSV has no successful rows.
    """
    series = summarize(read_results(csv_path), x_axis)
    if not series:
        raise DataError(f"{csv_path}: no successful rows to plot")
    xs = sorted({x for pts in series.values() for x, *_ in pts})
    lows = [mean - se for pts in series.values() for _, mean, se, _ in pts]
    highs = [mean + se for pts in series.values() for _, mean, se, _ in pts]
    y_lo, y_hi = min(lows), max(highs)
    pad = 0.05 * (y_hi - y_lo) if y_hi > y_lo else 0.05
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w, plot_h = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(x):
        i = xs.index(x)
        return _LEFT + (plot_w * (i + 0.5) / len(xs))

    def py(y):
        return _TOP + plot_h * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line class="axis" x1="{_LEFT}" y1="{_TOP + plot_h}" x2="{_LEFT + plot_w}" y2="{_TOP + plot_h}" stroke="black"/>',
        f'<line class="axis" x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + plot_h}" stroke="black"/>',
    ]
    for x in xs:
        parts.append(
            f'<text x="{_fmt(px(x))}" y="{_TOP + plot_h + 18}" text-anchor="middle" font-size="12">{_label(x)}</text>'
        )
    for j in range(5):
        y = y_lo + (y_hi - y_lo) * j / 4
        parts.append(
            f'<text x="{_LEFT - 6}" y="{_fmt(py(y) + 4)}" text-anchor="end" font-size="11">{y:.3f}</text>'
        )
    parts.append(
        f'<text x="{_LEFT + plot_w / 2:.1f}" y="{_H - 15}" text-anchor="middle" font-size="13">{x_axis}</text>'
    )
    parts.append(
        f'<text x="18" y="{_TOP + plot_h / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {_TOP + plot_h / 2:.1f})">recovered hypervolume</text>'
    )
    for i, method in enumerate(sorted(series)):
        color = _PALETTE[i % len(_PALETTE)]
        pts = series[method]
        if len(pts) > 1:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(mean))}" for x, mean, _, _ in pts)
            parts.append(f'<polyline class="series" points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, mean, se, _ in pts:
            parts.append(
                f'<line class="whisker" x1="{_fmt(px(x))}" y1="{_fmt(py(mean - se))}" '
                f'x2="{_fmt(px(x))}" y2="{_fmt(py(mean + se))}" stroke="{color}"/>'
            )
            parts.append(f'<circle class="marker" cx="{_fmt(px(x))}" cy="{_fmt(py(mean))}" r="3.5" fill="{color}"/>')
        ly = _TOP + 20 * i + 10
        parts.append(f'<rect x="{_W - _RIGHT + 15}" y="{ly - 8}" width="12" height="12" fill="{color}"/>')
        parts.append(f'<text x="{_W - _RIGHT + 33}" y="{ly + 2}" font-size="12">{method}</text>')
    parts.append("</svg>")
    out = Path(out_svg)
    out.write_text("\n".join(parts) + "\n")
    return out
