import numpy as np
import pytest

from offmoo.benchmarks import make_problem
from offmoo.errors import ConfigurationError
from offmoo.hypervolume import hv_inclusion_exclusion
from offmoo.verification import (
    DiscreteInstance,
    brute_force_best_subset,
    check_hv_error_bound,
    check_mean_bound,
    check_pessimism_bound,
    overestimated_instance,
    random_instance,
    random_suite,
    run_suite,
    separation_instance,
    width_scaling,
)

POOL = np.array([[0.9, 0.1], [0.1, 0.9], [0.6, 0.6]])


class TestBruteForce:
    def test_whole_pool(self):
        assert brute_force_best_subset(POOL[:2], 2)[0] == (0, 1)

    def test_best_pair_matches_inclusion_exclusion(self):
        best, value = brute_force_best_subset(POOL, 2)
        assert best == (0, 2)
        assert value == pytest.approx(hv_inclusion_exclusion(POOL[list(best)]))
        assert value == pytest.approx(0.39)

    def test_single_best_rectangle(self):
        assert brute_force_best_subset(POOL, 1) == ((2,), pytest.approx(0.36))

    def test_lexicographic_ties(self):
        assert brute_force_best_subset(np.full((4, 2), 0.5), 2)[0] == (0, 1)

    def test_guard(self):
        with pytest.raises(ConfigurationError):
            brute_force_best_subset(np.random.default_rng(0).uniform(size=(40, 2)), 10)


class TestInstances:
    def test_random_instance_is_on_good_event(self, rng):
        for _ in range(50):
            inst = random_instance(rng, 6, 2)
            assert inst.good_event()
            assert np.all((inst.widths >= 0) & (inst.widths <= 0.3))

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            DiscreteInstance(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2)), 1)


class TestBounds:
    def test_zero_width_mean_is_exact(self, rng):
        v = rng.uniform(size=(6, 2))
        res = check_mean_bound(DiscreteInstance(v, v, np.zeros_like(v), 2))
        assert res and res.lhs == pytest.approx(res.details["optimum"])

    def test_zero_width_pessimism_is_exact(self, rng):
        v = rng.uniform(size=(6, 2))
        res = check_pessimism_bound(DiscreteInstance(v, v, np.zeros_like(v), 2))
        assert res and res.lhs == pytest.approx(res.details["optimum"])

    def test_mean_random_suite(self):
        assert random_suite(check_mean_bound, 500, seed=1) == []

    def test_pessimism_random_suite(self):
        assert random_suite(check_pessimism_bound, 500, seed=2) == []

    def test_overestimated_policy(self):
        inst = overestimated_instance()
        mean, pess = check_mean_bound(inst), check_pessimism_bound(inst)
        assert inst.good_event()
        assert mean and mean.details["selected"] == (3,)
        assert inst.width_sum(mean.details["selected"]) >= 1.0  # the loss is paid by c(Ŝ)
        assert pess and pess.details["selected"] == (2,)

    def test_separation(self, rng):
        for _ in range(50):
            inst = separation_instance(rng)
            assert inst.good_event()
            res = check_pessimism_bound(inst)
            assert res and res.lhs >= res.details["optimum"] - 1e-12


class TestHVError:
    def test_no_perturbation(self, rng):
        v = rng.uniform(size=(3, 2))
        res = check_hv_error_bound(v, v, np.full_like(v, 0.1))
        assert res and res.lhs == 0.0

    def test_tight_single_point(self):
        res = check_hv_error_bound([[1.0, 0.7]], [[1.0, 0.6]], [[0.0, 0.1]])
        assert res.lhs == pytest.approx(0.1) and res.rhs == pytest.approx(0.1)

    @pytest.mark.parametrize("m", [2, 3])
    def test_random(self, m):
        rng = np.random.default_rng(m)
        for _ in range(500):
            k = int(rng.integers(1, 6))
            v = rng.uniform(size=(k, m))
            c = rng.uniform(0, 0.3, size=(k, m))
            assert check_hv_error_bound(v, np.clip(v + rng.uniform(-1, 1, (k, m)) * c, 0, 1), c)

    def test_precondition(self):
        with pytest.raises(ConfigurationError):
            check_hv_error_bound([[0.5, 0.5]], [[0.9, 0.5]], [[0.1, 0.1]])


class TestWidthScaling:
    def test_proportional(self):
        for res in width_scaling(lambda m: make_problem("DTLZ2", m=m)):
            assert res.passed(), (res.factor, res.normalized)


class TestSuite:
    def test_quick_suite_passes(self):
        rows = run_suite(scale=0.1, seed=3)
        assert all(r.passed for r in rows), [r for r in rows if not r.passed]
