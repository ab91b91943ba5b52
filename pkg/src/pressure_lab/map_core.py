"""Interval maps with non-flat critical points.

A map here is a continuous self-map of a compact interval [a, b] that is
either polynomial or piecewise linear, cut into finitely many strictly
monotone branches by its interior turning points.  The module provides
evaluation, derivatives, the monotone-branch decomposition, preimage
solving, periodic-orbit enumeration through symbolic-cylinder bisection,
and Birkhoff sums with pole guards.  Everything downstream (finite
postcritical models, transfer operators, preimage trees) is built on
these primitives.

Root-finding policy: bisection to interval width 1e-13, then at most
three Newton polish steps with a divergence guard; pure bisection near
turning points where the derivative degenerates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DomainError,
    ToleranceError,
    UndefinedDerivativeError,
    ValidationError,
)

#: slack allowed when clamping arguments to the domain boundary
DOMAIN_SLACK = 1e-12
#: target bracket width for bisection solves
BISECT_WIDTH = 1e-13
_BISECT_STEPS = 50
_NEWTON_STEPS = 3
#: preimages closer than 10x the solve tolerance are treated as one root
DUPLICATE_FACTOR = 10.0
#: default cap on the symbolic-word length in periodic_points
DEFAULT_N_MAX = 14
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class CriticalPoint:
    """An interior turning point of the map.

    ``local_order`` is the integer l >= 2 such that the map behaves like
    |x - c|**l near c up to a smooth invertible change of coordinates;
    for a polynomial it is one plus the multiplicity of c as a zero of
    the derivative.
    """

    location: float
    local_order: int
    in_julia: bool = True


@dataclass(frozen=True)
class Branch:
    """A maximal interval of strict monotonicity."""

    interval: tuple[float, float]
    direction: str  # "increasing" | "decreasing"
    range: tuple[float, float]


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic orbit together with its least period and multiplier.

    ``multiplier`` is |D(f^period)| at any orbit point (chain rule over
    one cycle); repelling orbits have multiplier > 1.  ``theta`` is an
    optional cached orbit average of a potential, filled in by callers.
    """

    points: tuple[float, ...]
    period: int
    multiplier: float
    theta: float | None = None

    def with_theta(self, value: float) -> "PeriodicOrbit":
        return replace(self, theta=value)


class IntervalMap:
    """A validated interval self-map cut into monotone branches.

    Instances are immutable after construction; the ``_cache`` dict is
    internal memoisation (preimage trees, collocation structures) and
    does not affect observable state.
    """

    def __init__(
        self,
        kind: str,
        domain: tuple[float, float],
        *,
        coeffs=None,
        breakpoints=None,
        values=None,
        name: str | None = None,
        cycle_check_max_period: int = 4,
    ):
        a, b = float(domain[0]), float(domain[1])
        if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
            raise ValidationError(f"domain must be a proper interval, got [{a}, {b}]")
        self.kind = kind
        self.domain = (a, b)
        self.name = name
        self._cache: dict = {}

        if kind == "polynomial":
            c = np.asarray(coeffs, dtype=float)
            if c.ndim != 1 or c.size < 2 or not np.all(np.isfinite(c)):
                raise ValidationError("polynomial needs >= 2 finite coefficients")
            self.coeffs = c
            self.deriv_coeffs = c[1:] * np.arange(1, c.size)
            self.breakpoints = None
            self.values = None
        elif kind == "piecewise_linear":
            bp = np.asarray(breakpoints, dtype=float)
            va = np.asarray(values, dtype=float)
            if bp.size != va.size or bp.size < 2:
                raise ValidationError("breakpoints and values must align, length >= 2")
            if not np.all(np.diff(bp) > 0):
                raise ValidationError("breakpoints must be strictly increasing")
            if bp[0] != a or bp[-1] != b:
                raise ValidationError("breakpoints must span the domain exactly")
            slopes = np.diff(va) / np.diff(bp)
            if np.any(slopes == 0.0):
                raise ValidationError("flat segments are not allowed")
            self.breakpoints = bp
            self.values = va
            self._slopes = slopes
            self.coeffs = None
            self.deriv_coeffs = None
        else:
            raise ValidationError(f"unknown map kind {kind!r}")

        self.critical_points = self._find_critical_points()
        self._turning = tuple(
            cp.location for cp in self.critical_points if cp.local_order % 2 == 0
        )
        self._branch_list = self._build_branches()
        self._check_invariance()
        self._check_repelling_cycles(cycle_check_max_period)
        self.invariance_checked = True

    # ------------------------------------------------------------------
    # evaluation

    def _f(self, x):
        """Vectorised evaluation without domain checks."""
        x = np.asarray(x, dtype=float)
        if self.kind == "polynomial":
            acc = np.zeros_like(x)
            for c in self.coeffs[::-1]:
                acc = acc * x + c
            return acc
        return np.interp(x, self.breakpoints, self.values)

    def _df(self, x):
        """Vectorised derivative; at a piecewise-linear breakpoint the
        left-hand slope is used (measure-zero convention)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "polynomial":
            acc = np.zeros_like(x)
            for c in self.deriv_coeffs[::-1]:
                acc = acc * x + c
            return acc
        idx = np.clip(
            np.searchsorted(self.breakpoints, x, side="left") - 1,
            0,
            self._slopes.size - 1,
        )
        return self._slopes[idx]

    def _clamp(self, x: float) -> float:
        a, b = self.domain
        if x < a - DOMAIN_SLACK or x > b + DOMAIN_SLACK:
            raise DomainError(f"{x!r} outside [{a}, {b}]")
        return min(max(x, a), b)

    def eval(self, x: float) -> float:
        """Evaluate the map at a point of the domain."""
        return float(self._f(self._clamp(float(x))))

    __call__ = eval

    def deriv(self, x: float) -> float:
        """One-sided-safe derivative; breakpoints of piecewise-linear
        maps raise UndefinedDerivativeError rather than averaging."""
        x = self._clamp(float(x))
        if self.kind == "piecewise_linear":
            interior = self.breakpoints[1:-1]
            if interior.size and np.min(np.abs(interior - x)) == 0.0:
                raise UndefinedDerivativeError(f"slope jump at {x}")
        return float(self._df(x))

    def iterate(self, x: float, n: int) -> float:
        for _ in range(n):
            x = self.eval(x)
        return x

    def orbit(self, x: float, n: int) -> list[float]:
        """[x, f(x), ..., f^(n-1)(x)]."""
        out = [float(x)]
        for _ in range(n - 1):
            out.append(self.eval(out[-1]))
        return out

    # ------------------------------------------------------------------
    # structure

    def _find_critical_points(self) -> tuple[CriticalPoint, ...]:
        a, b = self.domain
        if self.kind == "piecewise_linear":
            # Turning points of a piecewise-linear map are slope-sign
            # flips; they carry no smooth local order, so no
            # CriticalPoint records are made for them.
            return ()
        dc = self.deriv_coeffs
        if np.allclose(dc, 0.0):
            raise ValidationError("zero derivative polynomial")
        # roots of Df, greatest degree first for np.roots
        roots = np.roots(dc[::-1]) if dc.size > 1 else np.array([])
        scale = max(abs(a), abs(b), 1.0)
        real = roots[np.abs(roots.imag) < 1e-9 * scale].real
        interior = np.sort(real[(real > a + 1e-12) & (real < b - 1e-12)])
        cps = []
        i = 0
        while i < interior.size:
            j = i
            while j + 1 < interior.size and interior[j + 1] - interior[i] < 1e-8:
                j += 1
            mult = j - i + 1
            loc = self._polish_critical(float(np.mean(interior[i : j + 1])), mult)
            cps.append(CriticalPoint(location=loc, local_order=mult + 1))
            i = j + 1
        return tuple(cps)

    def _polish_critical(self, z: float, mult: int) -> float:
        # Newton on the derivative that has a *simple* zero at the
        # critical point: for a multiplicity-m zero of Df that is
        # d^m f / dx^m.
        coeffs = self.deriv_coeffs
        for _ in range(mult - 1):
            coeffs = coeffs[1:] * np.arange(1, coeffs.size)
        dcoeffs = coeffs[1:] * np.arange(1, coeffs.size)

        def ev(c, x):
            acc = 0.0
            for ck in c[::-1]:
                acc = acc * x + ck
            return acc

        for _ in range(40):
            d = ev(dcoeffs, z)
            if d == 0.0:
                break
            step = ev(coeffs, z) / d
            z -= step
            if abs(step) < 1e-15:
                break
        # Newton stalls one ulp from a representable root when the step
        # underflows the subtraction; take the neighbor minimizing |Df|
        z = float(z)
        for cand in (np.nextafter(z, -np.inf), np.nextafter(z, np.inf)):
            if abs(ev(coeffs, cand)) < abs(ev(coeffs, z)):
                z = float(cand)
        return z

    def _build_branches(self) -> tuple[Branch, ...]:
        a, b = self.domain
        if self.kind == "piecewise_linear":
            cuts = [a]
            for k in range(1, self._slopes.size):
                if self._slopes[k] * self._slopes[k - 1] < 0:
                    cuts.append(float(self.breakpoints[k]))
            cuts.append(b)
        else:
            # a critical point with even multiplicity of Df does not
            # separate monotone pieces; such flat-like behaviour is out
            # of the supported class
            for cp in self.critical_points:
                if cp.local_order % 2 == 1:
                    raise ValidationError(
                        f"derivative zero of even sign-change order at {cp.location}"
                    )
            cuts = [a, *self._turning, b]
        branches = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            flo, fhi = float(self._f(lo)), float(self._f(hi))
            direction = "increasing" if fhi > flo else "decreasing"
            rng = (min(flo, fhi), max(flo, fhi))
            branches.append(Branch(interval=(lo, hi), direction=direction, range=rng))
        return tuple(branches)

    def monotone_branches(self) -> tuple[Branch, ...]:
        """The monotone pieces, left to right; their count is one more
        than the number of turning points and they tile the domain."""
        return self._branch_list

    def _check_invariance(self):
        a, b = self.domain
        xs = np.linspace(a, b, 4097)
        vals = self._f(xs)
        # branch extrema are attained at cut points, checked exactly
        cuts = np.array([a, *self._turning, b])
        extreme = self._f(cuts)
        lo = min(vals.min(), extreme.min())
        hi = max(vals.max(), extreme.max())
        slack = 1e-9 * max(b - a, 1.0)
        if lo < a - slack or hi > b + slack:
            raise ValidationError(
                f"map leaves its domain: values span [{lo}, {hi}] vs [{a}, {b}]"
            )

    def _check_repelling_cycles(self, max_period: int):
        # Attracting or neutral low-period cycles put the map outside
        # the supported class.  This is a necessary check only; cycles
        # beyond max_period are not examined.
        for n in range(1, max_period + 1):
            try:
                orbits = self.periodic_points(n)
            except (ToleranceError, UndefinedDerivativeError):
                continue
            for orb in orbits:
                if orb.multiplier <= 1.0 + 1e-8:
                    raise ValidationError(
                        f"non-repelling cycle {orb.points} (multiplier {orb.multiplier})"
                    )

    # ------------------------------------------------------------------
    # preimages

    def _branch_preimages_array(self, branch: Branch, ys: np.ndarray):
        """Solve f(x) = y on one monotone branch for an array of targets.

        Returns (solutions, ok_mask); entries where ok_mask is False are
        targets outside the branch range.
        """
        lo_end, hi_end = branch.interval
        f_lo = float(self._f(lo_end))
        f_hi = float(self._f(hi_end))
        rng_lo, rng_hi = branch.range
        pad = 1e-12 * max(abs(rng_lo), abs(rng_hi), 1.0)
        ok = (ys >= rng_lo - pad) & (ys <= rng_hi + pad)
        y = np.clip(ys, rng_lo, rng_hi)
        lo = np.full(y.shape, lo_end)
        hi = np.full(y.shape, hi_end)
        increasing = f_hi > f_lo
        for _ in range(_BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            fm = self._f(mid)
            go_left = fm >= y if increasing else fm <= y
            hi = np.where(go_left, mid, hi)
            lo = np.where(go_left, lo, mid)
        x = 0.5 * (lo + hi)
        # Newton polish, skipped where the derivative is degenerate
        for _ in range(2):
            d = self._df(x)
            safe = np.abs(d) > 1e-6
            resid = self._f(x) - y
            step = np.where(safe, resid / np.where(safe, d, 1.0), 0.0)
            x = np.clip(x - step, lo_end, hi_end)
        return x, ok

    def preimages(self, y: float, tol: float = 1e-12) -> list[float]:
        """All solutions of f(x) = y in the domain, sorted.

        Double roots at turning points (where two branch solutions
        coincide) are merged when closer than 10*tol.
        """
        y = float(y)
        scale = max(abs(self.domain[0]), abs(self.domain[1]), 1.0)
        resid_tol = max(tol, 4e-15 * scale)
        # When y is a critical value, bisection can only localise the
        # collapsed root to the rounding plateau around the turning point
        # (width ~eps^(1/order)); snap such solutions onto it exactly.
        snap: list[tuple[float, float]] = []
        for tp in self._turning:
            if abs(float(self._f(tp)) - y) <= resid_tol:
                order = 2
                for cp in self.critical_points:
                    if abs(cp.location - tp) <= 1e-8 * scale:
                        order = cp.local_order
                        break
                snap.append((float(tp), 10.0 * _EPS ** (1.0 / order) * scale))
        found = []
        for br in self._branch_list:
            sol, ok = self._branch_preimages_array(br, np.array([y]))
            if ok[0]:
                x = float(sol[0])
                for tp, radius in snap:
                    if abs(x - tp) <= radius:
                        x = tp
                        break
                if abs(float(self._f(x)) - y) > resid_tol:
                    raise ToleranceError(
                        f"branch {br.interval} claims {y} in range but the "
                        f"solve left residual {float(self._f(x)) - y:g}"
                    )
                found.append(x)
        found.sort()
        merged: list[float] = []
        for x in found:
            if merged and x - merged[-1] < DUPLICATE_FACTOR * tol:
                continue
            merged.append(x)
        return merged

    def preimages_array(self, ys: np.ndarray):
        """Per-branch vectorised preimages: list of (solutions, mask).

        No cross-branch merging is performed; callers that expand trees
        deduplicate shared turning-point roots themselves.
        """
        return [self._branch_preimages_array(br, ys) for br in self._branch_list]

    # ------------------------------------------------------------------
    # periodic orbits

    def _iterate_array(self, x: np.ndarray, n: int) -> np.ndarray:
        for _ in range(n):
            x = self._f(x)
        return x

    def _cylinder_partition(self, n: int) -> np.ndarray:
        """Endpoints of the monotonicity intervals of f^n.

        These are the iterated preimages of the turning points up to
        depth n-1 (equivalently the symbolic-cylinder boundaries), plus
        the domain endpoints.
        """
        a, b = self.domain
        if self.kind == "piecewise_linear":
            seeds = [
                float(self.breakpoints[k])
                for k in range(1, self._slopes.size)
                if self._slopes[k] * self._slopes[k - 1] < 0
            ]
        else:
            seeds = list(self._turning)
        pts = [np.array([a, b]), np.array(seeds, dtype=float)]
        level = np.array(seeds, dtype=float)
        for _ in range(n - 1):
            nxt = []
            for sol, ok in self.preimages_array(level):
                nxt.append(sol[ok])
            level = np.concatenate(nxt) if nxt else np.array([])
            pts.append(level)
        allpts = np.sort(np.concatenate(pts))
        keep = np.concatenate(([True], np.diff(allpts) > 1e-12))
        return allpts[keep]

    def periodic_points(self, n: int, tol: float = 1e-12) -> list[PeriodicOrbit]:
        """Orbits of least period dividing n, found one cylinder at a time.

        f^n is monotone on each cylinder of the refinement, so bisection
        on f^n(x) - x finds at most one fixed point per cylinder; roots
        shared by adjacent cylinders (including domain endpoints) are
        counted once.
        """
        if n < 1:
            raise ValidationError("period must be >= 1")
        if n > DEFAULT_N_MAX:
            raise ValidationError(f"period {n} beyond supported cap {DEFAULT_N_MAX}")
        ends = self._cylinder_partition(n)
        g_ends = self._iterate_array(ends, n) - ends
        scale = max(abs(self.domain[0]), abs(self.domain[1]), 1.0)
        roots: list[float] = []
        # roots sitting exactly on partition points (domain endpoints
        # that are fixed, for instance)
        for e, g in zip(ends, g_ends):
            if abs(g) <= 1e-10 * scale:
                roots.append(float(e))
        lo = ends[:-1].copy()
        hi = ends[1:].copy()
        mask = (g_ends[:-1] * g_ends[1:]) < 0
        lo, hi = lo[mask], hi[mask]
        sign_lo = np.sign(g_ends[:-1][mask])
        for _ in range(_BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            gm = self._iterate_array(mid, n) - mid
            left = np.sign(gm) == sign_lo
            lo = np.where(left, mid, lo)
            hi = np.where(left, hi, mid)
        roots.extend((0.5 * (lo + hi)).tolist())
        if not roots:
            return []
        polished = self._polish_periodic(np.asarray(sorted(roots)), n)
        return self._group_orbits(polished, n, tol)

    def _polish_periodic(self, x: np.ndarray, n: int) -> np.ndarray:
        a, b = self.domain
        for _ in range(_NEWTON_STEPS):
            # chain-rule derivative of f^n along each orbit
            d = np.ones_like(x)
            y = x.copy()
            for _ in range(n):
                d *= self._df(y)
                y = self._f(y)
            denom = d - 1.0
            safe = np.isfinite(denom) & (np.abs(denom) > 1e-9)
            step = np.where(safe, (y - x) / np.where(safe, denom, 1.0), 0.0)
            # divergence guard: keep the bisection root for large steps
            step = np.where(np.abs(step) > 1e-3, 0.0, step)
            x = np.clip(x - step, a, b)
        return x

    def _group_orbits(self, roots: np.ndarray, n: int, tol: float) -> list[PeriodicOrbit]:
        match_tol = max(DUPLICATE_FACTOR * tol, 1e-10)
        k = roots.size
        paths = np.empty((k, n + 1))
        paths[:, 0] = roots
        derivs = np.empty((k, n))
        for j in range(n):
            derivs[:, j] = np.abs(self._df(paths[:, j]))
            paths[:, j + 1] = self._f(paths[:, j])
        genuine = np.abs(paths[:, n] - roots) <= match_tol * 100
        periods = np.full(k, n)
        for d in range(n - 1, 0, -1):
            if n % d == 0:
                periods[np.abs(paths[:, d] - roots) <= 1e-8] = d
        cummult = np.cumprod(derivs, axis=1)
        orbits: list[PeriodicOrbit] = []
        seen: dict[int, float] = {}
        for i in range(k):
            if not genuine[i]:
                continue  # spurious root from a near-tangency
            p = int(periods[i])
            pts = tuple(float(v) for v in paths[i, :p])
            key = min(pts)
            q = int(round(key * 1e8))
            if any(
                qq in seen and abs(seen[qq] - key) <= 1e-8 for qq in (q - 1, q, q + 1)
            ):
                continue
            seen[q] = key
            orbits.append(
                PeriodicOrbit(points=pts, period=p, multiplier=float(cummult[i, p - 1]))
            )
        return orbits


# ----------------------------------------------------------------------
# module-level operation aliases


def eval_map(m: IntervalMap, x: float) -> float:
    return m.eval(x)


def deriv(m: IntervalMap, x: float) -> float:
    return m.deriv(x)


def monotone_branches(m: IntervalMap) -> tuple[Branch, ...]:
    return m.monotone_branches()


def preimages(m: IntervalMap, y: float, tol: float = 1e-12) -> list[float]:
    return m.preimages(y, tol)


def periodic_points(m: IntervalMap, n: int, tol: float = 1e-12) -> list[PeriodicOrbit]:
    return m.periodic_points(n, tol)


def birkhoff_sum(m: IntervalMap, phi, x: float, n: int, pole_guard: float = 1e-13) -> float:
    """Sum of phi along x, f(x), ..., f^(n-1)(x).

    If the orbit comes within ``pole_guard`` of a singularity of phi
    (``phi.pole_locations`` when present), the sum is -inf: a sentinel,
    not an exception, because downstream weights treat such orbits as
    carrying zero mass.
    """
    poles = np.asarray(getattr(phi, "pole_locations", ()), dtype=float)
    total = 0.0
    y = float(x)
    for _ in range(n):
        if poles.size and np.min(np.abs(poles - y)) < pole_guard:
            return float("-inf")
        val = float(phi(y))
        if val == float("-inf") or math.isnan(val):
            return float("-inf")
        total += val
        y = m.eval(y)
    return total


def polynomial_map(coeffs, domain, name: str | None = None) -> IntervalMap:
    """Polynomial map from ascending coefficients on a closed interval."""
    return IntervalMap("polynomial", domain, coeffs=coeffs, name=name)


def piecewise_linear_map(breakpoints, values, name: str | None = None) -> IntervalMap:
    """Piecewise-linear map through the given vertices."""
    return IntervalMap(
        "piecewise_linear",
        (breakpoints[0], breakpoints[-1]),
        breakpoints=breakpoints,
        values=values,
        name=name,
    )
