"""Oscillation norms over a reference measure and correlation decay.

The diagnostics in this module live on a finite grid carrying a
probability measure.  Distance between grid points is measured in mass,
not in length: d(x, y) is the measure of the order interval between x
and y.  Oscillation over mass-balls, the variation norms built from it,
bounded p-variation, and operator-iteration correlation decay all
reduce to window computations against the cumulative masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import NoGapError, SizeError, ValidationError
from .map_core import IntervalMap
from .pressure import SpectralData, collocation_operator

MASS_TOL = 1e-12
MAX_SAMPLES = 2000
FIT_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Probability measure supported on a finite sorted grid.

    The grid stands in for a non-atomic measure, so by default no single
    point may carry more than half the mass; raise ``atomic_cap`` to
    admit heavier atoms deliberately.
    """

    support: np.ndarray
    masses: np.ndarray
    atomic_cap: float = 0.5

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if support.ndim != 1 or support.size < 2:
            raise ValidationError("support must be a 1-d grid with at least 2 points")
        if masses.shape != support.shape:
            raise ValidationError("masses must match the support point for point")
        if not np.all(np.isfinite(support)) or not np.all(np.isfinite(masses)):
            raise ValidationError("support and masses must be finite")
        if np.any(np.diff(support) <= 0):
            raise ValidationError("support must be strictly increasing")
        if np.any(masses < 0):
            raise ValidationError("masses must be nonnegative")
        if abs(float(masses.sum()) - 1.0) > MASS_TOL:
            raise ValidationError(
                f"masses must sum to 1 within {MASS_TOL:g}, got {masses.sum()!r}"
            )
        peak = float(masses.max())
        if peak > self.atomic_cap:
            raise ValidationError(
                f"atom of mass {peak:g} exceeds the non-atomic surrogate cap "
                f"{self.atomic_cap:g}"
            )
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def uniform(cls, support: Sequence[float]) -> "GridMeasure":
        pts = np.asarray(support, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValidationError("support must be a 1-d grid with at least 2 points")
        return cls(pts, np.full(pts.size, 1.0 / pts.size))

    @cached_property
    def mid_cdf(self) -> np.ndarray:
        """Cumulative mass at each point with its own atom split in half.

        Splitting the atoms symmetrically makes d(x, x) = 0, so the mass
        distance below is a true pseudo-distance even though the grid
        carries atoms.
        """
        cum = np.cumsum(self.masses)
        return cum - 0.5 * self.masses

    def distance(self, i: int, j: int) -> float:
        """Mass of the order interval between support points i and j."""
        mc = self.mid_cdf
        return abs(float(mc[i] - mc[j]))


def conformal_grid_measure(m: IntervalMap, spectral: SpectralData) -> GridMeasure:
    """Left-eigenvector masses on the collocation cell midpoints."""
    mu = np.asarray(spectral.left_eigenvector, dtype=float)
    total = float(mu.sum())
    if total <= 0:
        raise ValidationError("left eigenvector carries no mass")
    a, b = m.domain
    n = spectral.grid_size
    mids = a + (np.arange(n) + 0.5) * (b - a) / n
    return GridMeasure(mids, mu / total)


@dataclass(frozen=True)
class KellerNorm:
    alpha: float
    A: float
    l1_part: float
    var_part: float
    total: float


def _ball_windows(m: GridMeasure, eps: float) -> tuple[np.ndarray, np.ndarray]:
    # inclusive index windows of the open mass-balls B(x_i, eps)
    mc = m.mid_cdf
    lo = np.searchsorted(mc, mc - eps, side="right")
    hi = np.searchsorted(mc, mc + eps, side="left") - 1
    return lo, hi


def _as_grid_function(h, n: int) -> np.ndarray:
    vals = np.asarray(h, dtype=float)
    if vals.shape != (n,):
        raise ValidationError(f"grid function must have shape ({n},), got {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValidationError("grid function must be finite")
    return vals


def osc1(h, eps: float, m: GridMeasure) -> float:
    """Mean oscillation of h over mass-balls of radius eps.

    For each support point the oscillation is the spread of h over the
    ball of the mass pseudo-distance, and the result integrates those
    spreads against the measure.  Essential suprema degenerate to plain
    maxima on a finite grid.
    """
    eps = float(eps)
    if not (eps > 0):
        raise ValidationError("eps must be positive")
    vals = _as_grid_function(h, m.support.size)
    lo, hi = _ball_windows(m, eps)
    spread = np.empty(vals.size)
    for i in range(vals.size):
        seg = vals[lo[i] : hi[i] + 1]
        spread[i] = seg.max() - seg.min()
    return float(np.dot(spread, m.masses))


def _default_eps_grid(A: float, m: GridMeasure) -> np.ndarray:
    # halve from A until balls can no longer grow past single points
    positive = m.masses[m.masses > 0]
    floor = float(positive.min()) / 4 if positive.size else A * 2.0**-40
    count = 1
    eps = A
    while eps > floor and count < 48:
        eps /= 2
        count += 1
    return A * np.exp2(-np.arange(count, dtype=float))


def var_alpha1(
    h,
    alpha: float,
    m: GridMeasure,
    A: float = 1.0,
    eps_grid: Sequence[float] | None = None,
) -> KellerNorm:
    """Variation seminorm sup over eps in (0, A] of osc1(h, eps)/eps^alpha.

    The supremum runs over a geometric grid with ratio one half by
    default; the total norm adds the measure integral of |h|.
    """
    alpha = float(alpha)
    A = float(A)
    if not (0 < alpha <= 1):
        raise ValidationError("alpha must lie in (0, 1]")
    if not (A > 0):
        raise ValidationError("scale cap A must be positive")
    if eps_grid is None:
        grid = _default_eps_grid(A, m)
    else:
        grid = np.asarray(eps_grid, dtype=float)
        if grid.size == 0 or np.any(grid <= 0) or np.any(grid > A):
            raise ValidationError("eps_grid entries must lie in (0, A]")
    vals = _as_grid_function(h, m.support.size)
    var = 0.0
    for eps in grid:
        var = max(var, osc1(vals, eps, m) / eps**alpha)
    l1 = float(np.dot(np.abs(vals), m.masses))
    return KellerNorm(alpha=alpha, A=A, l1_part=l1, var_part=var, total=l1 + var)


def p_variation(samples, p: float) -> float:
    """Bounded p-variation of ordered samples, exact by dynamic programming.

    Maximizes (sum |h(x_i) - h(x_{i-1})|^p)^(1/p) over increasing
    subsequences of the sample points.  The table runs over subsequence
    end indices, O(k^2) overall, so the sample count is capped.
    """
    p = float(p)
    if p < 1:
        raise ValidationError("p must be at least 1")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("samples must be an ordered list of (x, h(x)) pairs")
    if arr.shape[0] > MAX_SAMPLES:
        raise SizeError(f"exact p-variation is capped at {MAX_SAMPLES} samples")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("samples must be finite")
    xs, hs = arr[:, 0], arr[:, 1]
    if np.any(np.diff(xs) <= 0):
        raise ValidationError("sample points must be strictly increasing")
    n = hs.size
    if n < 2:
        return 0.0
    best = np.zeros(n)
    for i in range(1, n):
        best[i] = float(np.max(best[:i] + np.abs(hs[i] - hs[:i]) ** p))
    return float(np.max(best)) ** (1.0 / p)


@dataclass(frozen=True, eq=False)
class CorrelationDecay:
    series: np.ndarray
    fitted_rate: float
    gap_ratio: float
    n_fit: int


def _fit_rate(series: np.ndarray, floor_abs: float = 0.0) -> tuple[float, int]:
    scale = float(series.max()) if series.size else 0.0
    if not math.isfinite(scale) or scale <= floor_abs or scale <= 0.0:
        return 0.0, 0
    idx = np.nonzero(series > max(scale * FIT_FLOOR, floor_abs))[0]
    if idx.size < 2:
        # correlations at or below the floor from the first step on
        return 0.0, int(idx.size)
    slope = np.polyfit(idx + 1.0, np.log(series[idx]), 1)[0]
    return float(np.exp(slope)), int(idx.size)


def decay_correlation(
    m: IntervalMap,
    spectral: SpectralData,
    phi,
    psi,
    n_max: int,
    weight: Callable[[np.ndarray], np.ndarray] | None = None,
) -> CorrelationDecay:
    """Correlation series of two observables under the equilibrium state.

    C_n = |int phi o f^n . psi dmu - int phi dmu . int psi dmu| computed
    by iterating the normalized transfer operator on the centered second
    observable; the log-slope fit of the series is reported next to the
    measured subdominant ratio of the operator, which bounds the decay.

    ``spectral`` must be the leading eigendata of the collocation
    operator for ``weight`` (constant one when omitted) at its own grid
    size; the pairing is checked through the eigenvalue residual.
    """
    n_max = int(n_max)
    if n_max < 1:
        raise ValidationError("n_max must be at least 1")
    if spectral.no_gap:
        raise NoGapError(
            f"no usable gap: |lam2|/lam1 = {spectral.second_modulus:.4f}"
        )
    if weight is None:
        weight = lambda y: np.ones(np.shape(y))
    N = spectral.grid_size
    mat = collocation_operator(m, weight, N)
    lam = spectral.leading_eigenvalue
    right = np.asarray(spectral.right_eigenvector, dtype=float)
    resid = float(np.max(np.abs(mat @ right - lam * right)))
    if resid > 1e-6 * max(1.0, lam) * max(1.0, float(np.max(np.abs(right)))):
        raise ValidationError(
            "spectral data does not match the operator for this weight and grid"
        )
    if float(right.min()) <= 0.0:
        raise ValidationError(
            "leading eigenvector vanishes on some cells; "
            "the normalized operator is undefined there"
        )
    mu = np.asarray(spectral.left_eigenvector, dtype=float)
    mu = mu / mu.sum()
    w_eq = right * mu
    w_eq = w_eq / w_eq.sum()

    a, b = m.domain
    mids = a + (np.arange(N) + 0.5) * (b - a) / N
    phi_vals = _as_grid_function(phi(mids) if callable(phi) else phi, N)
    psi_vals = _as_grid_function(psi(mids) if callable(psi) else psi, N)

    v = psi_vals - float(w_eq @ psi_vals)
    # roundoff scale of the pairing; series stuck here is a true zero
    floor_abs = 1e-12 * float(np.max(np.abs(phi_vals)) * max(np.max(np.abs(v)), 1e-300))
    series = np.empty(n_max)
    for k in range(n_max):
        v = (mat @ (right * v)) / (lam * right)
        series[k] = abs(float(w_eq @ (phi_vals * v)))
    rate, n_fit = _fit_rate(series, floor_abs)
    return CorrelationDecay(
        series=series,
        fitted_rate=rate,
        gap_ratio=spectral.second_modulus,
        n_fit=n_fit,
    )
