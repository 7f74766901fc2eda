"""Acceptance criteria 1-9, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s``; a summary of PASS/FAIL lines
is also printed at the end of every session that collects this module.
"""

import math
import time

import numpy as np
import pytest

from offmoo.benchmarks import make_problem
from offmoo.estimators import ConfidenceConfig, OfflineData
from offmoo.experiments import ExperimentConfig, run_sweep, summarize
from offmoo.hypervolume import hv_exact_2d, hv_inclusion_exclusion, hv_monte_carlo
from offmoo.logged_data import generate
from offmoo.optimize import Objective, greedy_select, random_policy_baseline
from offmoo.policy import LoggingPolicy
from offmoo.verification import (
    brute_force_best_subset,
    check_gradient,
    check_hv_error_bound,
    check_mean_bound,
    check_pessimism_bound,
    coverage_simulation,
    greedy_ratio_failures,
    overestimated_instance,
    random_suite,
)


def pooled(a, b):
    """Difference of two (mean, stderr) summaries and its pooled standard error."""
    return a[0] - b[0], math.hypot(a[1], b[1])


def sweep_stats(config, x_axis="n"):
    return {m: {x: (mean, se) for x, mean, se, _ in pts} for m, pts in summarize(run_sweep(config), x_axis).items()}


class TestCriterion1HypervolumeAgreement:
    def test_exact_and_monte_carlo_agree(self, report):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(1000):
            pts = rng.uniform(size=(int(rng.integers(1, 13)), 2))
            worst = max(worst, abs(hv_exact_2d(pts) - hv_inclusion_exclusion(pts)))
        samples, worst_z = 10**6, 0.0
        for _ in range(20):
            pts = rng.uniform(size=(int(rng.integers(1, 13)), 2))
            exact = hv_exact_2d(pts)
            stderr = math.sqrt(exact * (1 - exact) / samples)
            worst_z = max(worst_z, abs(hv_monte_carlo(pts, samples, rng) - exact) / stderr)
        report(1, worst <= 1e-12 and worst_z <= 3.0, f"max |exact - IE| {worst:.1e}, max MC z {worst_z:.2f}")


class TestCriterion2HypervolumeErrorBound:
    def test_no_violations(self, report):
        rng = np.random.default_rng(202)
        bad = 0
        for i in range(1000):
            m = 2 + i % 2
            k = int(rng.integers(1, 7))
            values = rng.uniform(size=(k, m))
            widths = rng.uniform(0.0, 0.3, size=(k, m))
            estimates = np.clip(values + rng.uniform(-1, 1, size=(k, m)) * widths, 0.0, 1.0)
            bad += not check_hv_error_bound(values, estimates, widths)
        report(2, bad == 0, f"{bad} violations in 1000 instances, m in {{2, 3}}")


class TestCriterion3Coverage:
    def test_failure_rate(self, report):
        rng = np.random.default_rng(303)
        problem = make_problem("ZDT1")
        thetas = random_policy_baseline(5, problem.feature_dim, rng).thetas
        cov = coverage_simulation(problem, thetas, beta=3.0, trials=5000, rng=rng)
        limit = cov.bound + 3 * cov.stderr
        report(3, cov.passed(3.0), f"max failure rate {cov.rates.max():.4f} <= {limit:.4f}")


class TestCriterion4ApproximationBounds:
    def test_random_and_adversarial(self, report):
        mean_fail = random_suite(check_mean_bound, 500, seed=401)
        pess_fail = random_suite(check_pessimism_bound, 500, seed=402)
        adv = overestimated_instance()
        mean_res, pess_res = check_mean_bound(adv), check_pessimism_bound(adv)
        penalty = adv.width_sum(mean_res.details["selected"])
        adversarial = (
            bool(mean_res) and bool(pess_res)
            and pess_res.lhs >= pess_res.details["optimum"] - 1e-12
            and penalty >= 1.0
            and mean_res.lhs < mean_res.details["optimum"] - 0.3
        )
        report(
            4,
            not mean_fail and not pess_fail and adversarial,
            f"{len(mean_fail)}+{len(pess_fail)} violations; adversarial: mean HV {mean_res.lhs:.2f} "
            f"(c(S_hat)={penalty:.1f}), pessimistic HV {pess_res.lhs:.2f} = optimum",
        )


class TestCriterion5Greedy:
    def test_no_violations(self, report):
        bad = greedy_ratio_failures(200, seed=501)
        report(5, bad == 0, f"{bad} of 200 instances below (1 - 1/e) of brute force")


class TestCriterion6Gradients:
    def test_finite_differences(self, report):
        problem = make_problem("ZDT1")
        logging = LoggingPolicy(problem, 0.1)
        data = OfflineData.build(generate(problem, logging, 200, 1.0, 601), problem, logging)
        rng = np.random.default_rng(602)
        summary, ok = [], True
        for spec in ("mean", "pess", "ehvi:16"):
            objective = Objective.make(spec, data, ConfidenceConfig(0.2, 1.0), rng=np.random.default_rng(603))
            checked = failed = worst = 0
            attempts = 0
            while checked < 50 and attempts < 500:
                attempts += 1
                res = check_gradient(objective, rng.normal(scale=0.5, size=(3, problem.feature_dim)))
                if res.details["degenerate"]:
                    continue
                checked += 1
                failed += not res
                worst = max(worst, res.lhs)
            ok &= checked == 50 and failed == 0
            summary.append(f"{spec.split(':')[0]} {checked} pts max rel err {worst:.1e}")
        report(6, ok, "; ".join(summary))


@pytest.mark.slow
class TestCriterion7PessimismTrend:
    def test_ordering(self, report):
        start = time.perf_counter()
        parts, ok = [], True
        for problem in ("ZDT1", "DTLZ2"):
            cfg = ExperimentConfig(problem=problem, n_values=(500,), k_values=(10,), epsilons=(0.1,),
                                   methods=("random", "meanHVI", "pessHVI"), runs=10, record_time=False)
            stats = {m: s[500] for m, s in sweep_stats(cfg).items()}
            gap_mean, se_mean = pooled(stats["pessHVI"], stats["meanHVI"])
            gap_rand, se_rand = pooled(stats["pessHVI"], stats["random"])
            ok &= gap_mean >= se_mean and gap_rand >= se_rand
            parts.append(
                f"{problem}: random {stats['random'][0]:.4f} mean {stats['meanHVI'][0]:.4f} "
                f"pess {stats['pessHVI'][0]:.4f}; pess-mean {gap_mean:+.4f} (se {se_mean:.4f}), "
                f"pess-random {gap_rand:+.4f} (se {se_rand:.4f})"
            )
        elapsed = time.perf_counter() - start
        report(7, ok and elapsed < 900, " | ".join(parts) + f" | {elapsed:.0f}s")


@pytest.mark.slow
class TestCriterion8UniformLogging:
    def test_gap_shrinks(self, report):
        start = time.perf_counter()
        cfg = ExperimentConfig(problem="DTLZ2", n_values=(2000,), k_values=(10,), epsilons=(0.1, 1.0),
                               methods=("meanHVI", "pessHVI"), runs=10, record_time=False)
        stats = sweep_stats(cfg, "epsilon")
        gaps = {eps: stats["pessHVI"][eps][0] - stats["meanHVI"][eps][0] for eps in (0.1, 1.0)}
        elapsed = time.perf_counter() - start
        report(8, gaps[0.1] > gaps[1.0] and elapsed < 1200,
               f"gap at eps=0.1 {gaps[0.1]:+.4f}, at eps=1.0 {gaps[1.0]:+.4f} | {elapsed:.0f}s")


class TestCriterion9SingleObjective:
    def test_greedy_returns_argmax(self, report):
        problem = make_problem("ZDT1")
        logging = LoggingPolicy(problem, 0.1)
        data = OfflineData.build(generate(problem, logging, 300, 1.0, 901), problem, logging)
        pool = random_policy_baseline(30, problem.feature_dim, np.random.default_rng(902))
        truth = Objective("true", data)
        values = truth.point_values(pool.thetas)[:, 1:]  # the second objective; the first ignores the action
        chosen = greedy_select(list(range(len(pool))), 1, lambda i: values[i], hv="incl-excl")
        best, _ = brute_force_best_subset(values, 1)
        expected = int(np.argmax(values[:, 0]))
        report(9, chosen == [expected] and best == (expected,),
               f"greedy picks policy {chosen[0]}, argmax V is policy {expected} "
               f"(V spread {np.ptp(values):.3f})")
