import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import gamma
from scipy.stats import norm, qmc

from offmoo.errors import MethodError
from offmoo.hypervolume import (
    SCALARIZATION_CONSTANTS,
    HypervolumeMethod,
    calibrate_scalarization_constant,
    hv_exact_2d,
    hv_exact_2d_grad,
    hv_inclusion_exclusion,
    hv_inclusion_exclusion_grad,
    hv_monte_carlo,
    hv_of_policies,
    hv_scalarized,
    hv_scalarized_grad,
    hv_scalarized_with,
    hypervolume,
)


def fronts(m=2, max_k=8):
    return st.integers(1, max_k).flatmap(
        lambda k: arrays(np.float64, (k, m), elements=st.floats(0, 1, allow_nan=False))
    )


class TestExact2D:
    def test_single_rectangle(self):
        assert hv_exact_2d([[0.5, 0.5]]) == 0.25

    def test_two_rectangles(self):
        assert hv_exact_2d([[1, 0.5], [0.5, 1]]) == pytest.approx(0.75, abs=1e-15)

    def test_dominated_point(self):
        assert hv_exact_2d([[0.5, 0.5], [0.4, 0.4]]) == 0.25

    def test_requires_two_objectives(self):
        with pytest.raises(MethodError):
            hv_exact_2d([[0.5, 0.5, 0.5]])

    def test_duplicates_and_ties(self):
        assert hv_exact_2d([[0.5, 0.2], [0.5, 0.6], [0.5, 0.6]]) == pytest.approx(0.3)

    def test_empty(self):
        assert hv_exact_2d(np.zeros((0, 2))) == 0.0

    def test_reference_point(self):
        assert hv_exact_2d([[0.5, 0.5]], reference=[0.25, 0.25]) == pytest.approx(0.0625)


class TestInclusionExclusion:
    def test_two_rectangles(self):
        assert hv_inclusion_exclusion([[1, 0.5], [0.5, 1]]) == pytest.approx(0.75)

    def test_unit_cube(self):
        assert hv_inclusion_exclusion([[1, 1, 1]]) == 1.0

    def test_guard(self):
        with pytest.raises(MethodError):
            hv_inclusion_exclusion(np.full((21, 2), 0.5))

    @settings(max_examples=200)
    @given(fronts(max_k=12))
    def test_matches_exact_2d(self, pts):
        assert abs(hv_inclusion_exclusion(pts) - hv_exact_2d(pts)) <= 1e-12

    @settings(max_examples=50)
    @given(fronts(m=3, max_k=6))
    def test_matches_pymoo_m3(self, pts):
        hv_mod = pytest.importorskip("pymoo.indicators.hv")
        ref = hv_mod.HV(ref_point=np.zeros(3))(-pts)  # pymoo minimizes
        assert hv_inclusion_exclusion(pts) == pytest.approx(ref, abs=1e-12)

    @settings(max_examples=50)
    @given(fronts(max_k=6))
    def test_matches_pymoo_m2(self, pts):
        hv_mod = pytest.importorskip("pymoo.indicators.hv")
        assert hv_exact_2d(pts) == pytest.approx(hv_mod.HV(ref_point=np.zeros(2))(-pts), abs=1e-12)


class TestProperties:
    @settings(max_examples=100)
    @given(fronts(), arrays(np.float64, 2, elements=st.floats(0, 1)))
    def test_adding_a_point_never_decreases(self, pts, z):
        assert hv_exact_2d(np.vstack([pts, z])) >= hv_exact_2d(pts) - 1e-15

    @settings(max_examples=100)
    @given(fronts(), st.integers(0, 100), st.integers(0, 1), st.floats(0, 1))
    def test_raising_a_coordinate_never_decreases(self, pts, row, col, amount):
        raised = pts.copy()
        r = row % len(pts)
        raised[r, col] = min(1.0, raised[r, col] + amount)
        assert hv_exact_2d(raised) >= hv_exact_2d(pts) - 1e-15

    def test_submodular(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            q = rng.uniform(size=(int(rng.integers(1, 7)), 2))
            p = q[rng.uniform(size=len(q)) < 0.5]
            z = rng.uniform(size=(1, 2))
            gain_p = hv_exact_2d(np.vstack([p, z])) - hv_exact_2d(p)
            gain_q = hv_exact_2d(np.vstack([q, z])) - hv_exact_2d(q)
            assert gain_p >= gain_q - 1e-12


class TestScalarized:
    def test_calibration_anchor(self):
        # the stored constant turns the calibration quadrature into an exact unit volume
        for m in (2, 3, 4):
            u = qmc.Sobol(d=m, scramble=True, seed=0).random_base2(20)
            g = np.abs(norm.ppf(np.clip(u, 1e-12, 1 - 1e-12)))
            lam = g / np.linalg.norm(g, axis=1, keepdims=True)
            assert hv_scalarized_with(np.ones((1, m)), lam) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
    def test_constants_match_ball_volume_fraction(self, m):
        closed_form = math.pi ** (m / 2) / (2**m * gamma(m / 2 + 1))
        assert SCALARIZATION_CONSTANTS[m] == pytest.approx(closed_form, rel=1e-4)

    def test_constant_reproducible(self):
        assert calibrate_scalarization_constant(2, log2_samples=16) == pytest.approx(SCALARIZATION_CONSTANTS[2], rel=1e-4)

    def test_unit_singleton_random_directions(self, rng):
        assert hv_scalarized(np.ones((1, 2)), 10_000, rng) == pytest.approx(1.0, abs=0.02)

    def test_quarter_square(self, rng):
        assert hv_scalarized([[0.5, 0.5]], 100_000, rng) == pytest.approx(0.25, abs=0.01)

    def test_empty_mass(self, rng):
        assert hv_scalarized([[0.0, 0.0]], 1000, rng) == 0.0

    def test_converges_to_exact(self):
        pts = np.random.default_rng(1).uniform(size=(5, 2))
        errs = [abs(hv_scalarized(pts, s, np.random.default_rng(2)) - hv_exact_2d(pts)) for s in (1000, 100_000)]
        assert errs[1] < 0.01 and errs[1] < errs[0] + 0.002


class TestMonteCarlo:
    def test_unit(self, rng):
        assert hv_monte_carlo(np.ones((1, 3)), 1000, rng) == 1.0

    def test_quarter_square(self, rng):
        n = 10**6
        assert abs(hv_monte_carlo([[0.5, 0.5]], n, rng) - 0.25) <= 0.002

    def test_empty(self, rng):
        assert hv_monte_carlo(np.zeros((0, 2)), 100, rng) == 0.0


class TestGradients:
    def _fd(self, fn, pts, h=1e-7):
        g = np.zeros_like(pts)
        for idx in np.ndindex(pts.shape):
            up, down = pts.copy(), pts.copy()
            up[idx] += h
            down[idx] -= h
            g[idx] = (fn(up) - fn(down)) / (2 * h)
        return g

    def test_exact2d(self, rng):
        pts = rng.uniform(0.05, 0.95, size=(6, 2))
        np.testing.assert_allclose(hv_exact_2d_grad(pts)[1], self._fd(hv_exact_2d, pts), atol=1e-7)

    def test_inclusion_exclusion(self, rng):
        pts = rng.uniform(0.05, 0.95, size=(5, 3))
        np.testing.assert_allclose(hv_inclusion_exclusion_grad(pts)[1], self._fd(hv_inclusion_exclusion, pts), atol=1e-7)

    def test_scalarized(self, rng):
        pts = rng.uniform(0.05, 0.95, size=(4, 2))
        lam = np.abs(rng.standard_normal((200, 2)))
        lam /= np.linalg.norm(lam, axis=1, keepdims=True)
        np.testing.assert_allclose(
            hv_scalarized_grad(pts, lam)[1], self._fd(lambda p: hv_scalarized_with(p, lam), pts), atol=1e-6
        )

    def test_dominated_point_has_zero_gradient(self):
        _, g = hv_exact_2d_grad([[0.8, 0.8], [0.3, 0.2]])
        np.testing.assert_array_equal(g[1], 0.0)


class TestDispatch:
    @pytest.mark.parametrize("text,variant,samples", [
        ("exact2d", "exact2d", None), ("incl-excl", "inclusion_exclusion", None),
        ("scalarized:500", "scalarized", 500), ("mc:1000", "monte_carlo", 1000),
    ])
    def test_parse(self, text, variant, samples):
        method = HypervolumeMethod.parse(text)
        assert (method.variant, method.samples) == (variant, samples)
        assert str(method) == text

    def test_sampling_methods_need_samples(self):
        with pytest.raises(ValueError):
            HypervolumeMethod.parse("scalarized")

    def test_hv_of_policies(self):
        assert hv_of_policies([0], lambda _: (0.5, 0.5)) == 0.25
        assert hv_of_policies([0, 0], lambda _: (0.5, 0.5)) == 0.25

    def test_pessimistic_below_mean(self, rng):
        mean = rng.uniform(size=(5, 2))
        pess = mean - rng.uniform(0, 0.2, size=(5, 2)).clip(max=mean)
        assert hypervolume(pess) <= hypervolume(mean)
