"""Hypervolume indicator of a finite set of value vectors.

The hypervolume of points ``P ⊂ [0, 1]^m`` with respect to a reference point
``a`` is the Lebesgue measure of ``∪_{p ∈ P} [a, p]``. Four algorithms:

* ``exact2d``: O(K log K) sweep for two objectives;
* ``inclusion_exclusion``: exact for any ``m``, O(2^K);
* ``scalarized``: random hypervolume scalarization, O(K · samples);
* ``monte_carlo``: fraction of uniform points in ``[0, 1]^m`` that are dominated.

The differentiable variants also return the gradient with respect to every
point coordinate (a subgradient at ties).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import norm, qmc

from .errors import MethodError

MAX_INCLUSION_EXCLUSION = 20

# ĉ_m such that the scalarized estimate of the unit singleton {(1, ..., 1)} is 1,
# from 2**20 scrambled Sobol directions; reproduce with calibrate_scalarization_constant(m).
SCALARIZATION_CONSTANTS = {
    1: 1.0,
    2: 0.7853980194853193,
    3: 0.5235989245628749,
    4: 0.308426829611593,
    5: 0.1644957332257023,
    6: 0.08075098975380313,
}


def _as_points(points, reference=0.0) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
    pts = np.atleast_2d(pts)
    return np.maximum(pts - np.asarray(reference, dtype=float), 0.0)


# ---------------------------------------------------------------------------
# Exact methods
# ---------------------------------------------------------------------------


def _sweep_order(pts: np.ndarray) -> np.ndarray:
    # ascending first coordinate, ties by descending second, then input index
    return np.lexsort((np.arange(len(pts)), -pts[:, 1], pts[:, 0]))


def hv_exact_2d(points, reference=0.0) -> float:
    """Exact two-objective hypervolume by integrating along the first objective."""
    return hv_exact_2d_grad(points, reference)[0]


def hv_exact_2d_grad(points, reference=0.0) -> tuple[float, np.ndarray]:
    """Two-objective hypervolume and its gradient with respect to the points.

    With points sorted by the first coordinate ``x_1 ≤ ... ≤ x_K`` and suffix
    maxima ``Y_k = max_{l ≥ k} y_l``, the volume is
    ``x_1 Y_1 + Σ_k (x_{k+1} - x_k) Y_{k+1}``. Dominated points get zero gradient.
    """
    pts = _as_points(points, reference)
    if pts.shape[0] == 0:
        return 0.0, np.zeros_like(pts)
    if pts.shape[1] != 2:
        raise MethodError(f"exact2d needs m = 2, got m = {pts.shape[1]}")
    order = _sweep_order(pts)
    x, y = pts[order, 0], pts[order, 1]
    k = len(x)
    # suffix argmax of y, preferring the earliest sorted position on ties
    suffix_arg = np.empty(k, dtype=int)
    best = k - 1
    for j in range(k - 1, -1, -1):
        if y[j] >= y[best]:
            best = j
        suffix_arg[j] = best
    ymax = y[suffix_arg]
    widths = np.diff(x, prepend=0.0)
    volume = float(np.sum(widths * ymax))

    grad_sorted = np.zeros((k, 2))
    grad_sorted[:, 0] = ymax - np.append(ymax[1:], 0.0)
    np.add.at(grad_sorted[:, 1], suffix_arg, widths)
    grad = np.zeros_like(pts)
    grad[order] = grad_sorted
    # clamped below the reference: flat
    raw = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(reference, dtype=float)
    grad[raw <= 0] = 0.0
    return volume, grad


def _subset_minima(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinate-wise minima of all nonempty subsets, their signs and sizes.

    Subsets are built incrementally: each new point is intersected with every
    subset seen so far, so row ``j`` corresponds to the bitmask ``j + 1``.
    """
    m = pts.shape[1]
    mins = np.empty((0, m))
    sizes = np.empty(0, dtype=int)
    for p in pts:
        new = np.minimum(mins, p)
        mins = np.concatenate([mins, p[None], new])
        sizes = np.concatenate([sizes, [1], sizes + 1])
    signs = np.where(sizes % 2 == 1, 1.0, -1.0)
    return mins, signs, sizes


def hv_inclusion_exclusion(points, reference=0.0) -> float:
    """Exact hypervolume by inclusion-exclusion over all nonempty subsets."""
    pts = _as_points(points, reference)
    if pts.shape[0] == 0:
        return 0.0
    if pts.shape[0] > MAX_INCLUSION_EXCLUSION:
        raise MethodError(f"inclusion-exclusion is limited to K <= {MAX_INCLUSION_EXCLUSION}, got {len(pts)}")
    mins, signs, _ = _subset_minima(pts)
    return float(np.sum(signs * np.prod(mins, axis=1)))


def hv_inclusion_exclusion_grad(points, reference=0.0) -> tuple[float, np.ndarray]:
    """Inclusion-exclusion hypervolume and its gradient.

    The derivative of a subset term with respect to coordinate ``i`` flows to
    the lowest-index member attaining that subset's minimum.
    """
    pts = _as_points(points, reference)
    k, m = pts.shape
    if k == 0:
        return 0.0, np.zeros_like(pts)
    if k > MAX_INCLUSION_EXCLUSION:
        raise MethodError(f"inclusion-exclusion is limited to K <= {MAX_INCLUSION_EXCLUSION}, got {k}")
    masks = np.arange(1, 2**k)
    members = ((masks[:, None] >> np.arange(k)) & 1).astype(bool)  # (2^k - 1, k)
    signs = np.where(members.sum(axis=1) % 2 == 1, 1.0, -1.0)
    masked = np.where(members[:, :, None], pts[None], np.inf)  # (S, k, m)
    arg = masked.argmin(axis=1)  # (S, m)
    mins = np.take_along_axis(masked, arg[:, None, :], axis=1)[:, 0, :]
    terms = signs * np.prod(mins, axis=1)
    grad = np.zeros_like(pts)
    for i in range(m):
        others = np.prod(np.delete(mins, i, axis=1), axis=1)
        np.add.at(grad[:, i], arg[:, i], signs * others)
    raw = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(reference, dtype=float)
    grad[raw <= 0] = 0.0
    return float(np.sum(terms)), grad


# ---------------------------------------------------------------------------
# Randomized methods
# ---------------------------------------------------------------------------


def sample_directions(m: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Directions uniform on the positive orthant of the unit sphere, ``(samples, m)``."""
    g = np.abs(rng.standard_normal((samples, m)))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def calibrate_scalarization_constant(m: int, log2_samples: int = 20, seed: int = 0) -> float:
    """Quasi-Monte-Carlo value of ``1 / E[(max_i λ_i)^{-m}]``.

    For the unit singleton ``s_λ((1, ..., 1)) = (max_i λ_i)^{-m}``, so this is
    the constant that makes its scalarized hypervolume equal 1.
    """
    if m == 1:
        return 1.0
    u = qmc.Sobol(d=m, scramble=True, seed=seed).random_base2(log2_samples)
    g = np.abs(norm.ppf(np.clip(u, 1e-12, 1 - 1e-12)))
    lam = g / np.linalg.norm(g, axis=1, keepdims=True)
    return float(1.0 / np.mean(lam.max(axis=1) ** (-m)))


@lru_cache(maxsize=None)
def scalarization_constant(m: int) -> float:
    if m in SCALARIZATION_CONSTANTS:
        return SCALARIZATION_CONSTANTS[m]
    return calibrate_scalarization_constant(m)


def _scalarizations(pts: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """``s_λ(y) = min_i max{0, y_i / λ_i}^m`` for every direction and point, ``(J, K)``."""
    m = pts.shape[1]
    ratios = np.maximum(pts[None, :, :] / lambdas[:, None, :], 0.0)
    return ratios.min(axis=2) ** m


def hv_scalarized_with(points, lambdas: np.ndarray, reference=0.0) -> float:
    """Scalarized hypervolume with a fixed set of directions."""
    return hv_scalarized_grad(points, lambdas, reference)[0]


def hv_scalarized(points, samples: int, rng: np.random.Generator, reference=0.0) -> float:
    """Random hypervolume scalarization with ``samples`` fresh directions."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    pts = _as_points(points, reference)
    if pts.shape[0] == 0:
        return 0.0
    return hv_scalarized_with(pts, sample_directions(pts.shape[1], samples, rng))


def hv_scalarized_grad(points, lambdas: np.ndarray, reference=0.0) -> tuple[float, np.ndarray]:
    pts = _as_points(points, reference)
    if pts.shape[0] == 0:
        return 0.0, np.zeros_like(pts)
    j, m = lambdas.shape
    const = scalarization_constant(m)
    ratios = np.maximum(pts[None, :, :] / lambdas[:, None, :], 0.0)  # (J, K, m)
    coord = ratios.argmin(axis=2)  # (J, K)
    s = np.take_along_axis(ratios, coord[:, :, None], axis=2)[:, :, 0] ** m
    best = s.argmax(axis=1)  # (J,)
    rows = np.arange(j)
    value = const * float(np.mean(s[rows, best]))
    i_star = coord[rows, best]
    r_star = ratios[rows, best, i_star]
    dval = const / j * m * r_star ** (m - 1) / lambdas[rows, i_star]
    grad = np.zeros_like(pts)
    np.add.at(grad, (best, i_star), dval)
    raw = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(reference, dtype=float)
    grad[raw <= 0] = 0.0
    return value, grad


def hv_monte_carlo(points, samples: int, rng: np.random.Generator, reference=0.0, batch: int = 200_000) -> float:
    """Fraction of uniform samples of ``[0, 1]^m`` dominated by at least one point."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return 0.0
    ref = np.broadcast_to(np.asarray(reference, dtype=float), (pts.shape[1],))
    hits = 0
    remaining = samples
    while remaining:
        b = min(batch, remaining)
        y = ref + rng.uniform(size=(b, pts.shape[1])) * (1.0 - ref)
        dominated = np.zeros(b, dtype=bool)
        for p in pts:
            dominated |= np.all(y <= p, axis=1)
        hits += int(dominated.sum())
        remaining -= b
    return hits / samples * float(np.prod(1.0 - ref))


# ---------------------------------------------------------------------------
# Method selection
# ---------------------------------------------------------------------------

VARIANTS = ("exact2d", "inclusion_exclusion", "scalarized", "monte_carlo")
_ALIASES = {"incl-excl": "inclusion_exclusion", "mc": "monte_carlo", "ie": "inclusion_exclusion"}


@dataclass(frozen=True)
class HypervolumeMethod:
    """A hypervolume algorithm and, for the randomized ones, its sample count."""

    variant: str = "exact2d"
    samples: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown hypervolume method {self.variant!r}")
        if self.variant in ("scalarized", "monte_carlo"):
            if self.samples is None or self.samples < 1:
                raise ValueError(f"{self.variant} needs samples >= 1")

    @classmethod
    def parse(cls, text: str) -> "HypervolumeMethod":
        """Parse ``exact2d``, ``incl-excl``, ``scalarized:<N>`` or ``mc:<N>``."""
        name, _, count = text.strip().partition(":")
        variant = _ALIASES.get(name, name)
        return cls(variant, int(count) if count else None)

    @classmethod
    def default_for(cls, m: int, samples: int = 2000) -> "HypervolumeMethod":
        return cls("exact2d") if m == 2 else cls("scalarized", samples)

    def __str__(self) -> str:
        short = {"inclusion_exclusion": "incl-excl", "monte_carlo": "mc"}.get(self.variant, self.variant)
        return f"{short}:{self.samples}" if self.samples else short

    def compute(self, points, rng: np.random.Generator | None = None, reference=0.0) -> float:
        if self.variant == "exact2d":
            return hv_exact_2d(points, reference)
        if self.variant == "inclusion_exclusion":
            return hv_inclusion_exclusion(points, reference)
        rng = np.random.default_rng(0) if rng is None else rng
        if self.variant == "scalarized":
            return hv_scalarized(points, self.samples, rng, reference)
        return hv_monte_carlo(points, self.samples, rng, reference)


def hypervolume(points, method: HypervolumeMethod | str = "exact2d", rng=None, reference=0.0) -> float:
    if isinstance(method, str):
        method = HypervolumeMethod.parse(method)
    return method.compute(points, rng, reference)


def hv_of_policies(policies, value_fn, method: HypervolumeMethod | str = "exact2d", rng=None) -> float:
    """Hypervolume of the value vectors ``value_fn(policy)`` of a set of policies."""
    points = np.array([np.asarray(value_fn(p), dtype=float) for p in policies])
    return hypervolume(points, method, rng)

