"""Pressure engines and the two-branch curve assembly.

Two independent routes to the pressure of a weighted system: summing
weights over preimage trees of a generic base point, and the leading
eigenvalue of a collocation transfer operator on a uniform grid.  Both
are exact for constant weights, which is what the transformed potential
of the flagship examples produces, so the engine gap is a meaningful
health signal rather than a tuning knob.

Sign bookkeeping for weights: parameters t are negative, so for a
potential with a positive log-pole coefficient the weight
exp(-t*potential) tends to zero at the pole (-t > 0 and the potential
goes to -inf).  Branches through poles therefore carry zero weight;
birkhoff sums return -inf as that sentinel and exp() finishes the job.

The full curve is the pointwise max of the hidden branch (transformed
weights) and the atomic line -t*theta_max (raw orbit statistics): the
hidden branch uses the transformed potential, the atomic line uses the
original one.  Phase transitions are kinks where the max switches
branch.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .cohomology import CohomologyData, transform_pipeline
from .errors import (
    BasePointError,
    DepthError,
    InconsistentVerdictError,
    InvariantError,
    IterationError,
    NoGapError,
    PoleOnGridError,
    ToleranceError,
    ValidationError,
)
from .map_core import IntervalMap, PeriodicOrbit, birkhoff_sum
from .potentials import UPotential
from .registry import map_info

MAX_TREE_DEPTH = 22
#: refuse trees whose total node count would exceed this
TREE_NODE_BUDGET = 20_000_000
BASE_CLEARANCE = 1e-6
MIN_GRID = 64
POWER_TOL = 1e-10
MAX_SWEEPS = 100_000
NO_GAP_LIMIT = 0.999


@dataclass(frozen=True)
class PressureEstimate:
    value: float
    method: str  # "tree" | "collocation"
    depth_or_size: int
    base_point: float | None
    convergence_series: tuple[float, ...]


@dataclass(frozen=True)
class SpectralData:
    leading_eigenvalue: float
    right_eigenvector: np.ndarray
    left_eigenvector: np.ndarray
    second_modulus: float
    grid_size: int

    @property
    def no_gap(self) -> bool:
        return self.second_modulus > NO_GAP_LIMIT


@dataclass(frozen=True)
class ThetaStats:
    theta_max: float
    witness: PeriodicOrbit | None
    orbits: tuple[PeriodicOrbit, ...]
    exact: bool


@dataclass(frozen=True)
class TransitionVerdict:
    has_transition: bool
    t_c: float | None
    criterion_satisfied: bool
    theta_star: float | None
    slope_proxy: float
    window: float


@dataclass(frozen=True)
class PressureCurve:
    t_grid: tuple[float, ...]
    p_tilde: tuple[float, ...]
    atomic: tuple[float, ...]
    p: tuple[float, ...]
    tree_est_raw: tuple[float, ...]
    engine_gap: tuple[float, ...]
    theta_max: float
    theta_witness: PeriodicOrbit | None
    theta_star: float | None
    exceptional: bool
    warnings: tuple[str, ...] = ()
    transition: TransitionVerdict | None = None

    def with_transition(self, verdict: TransitionVerdict) -> "PressureCurve":
        return replace(self, transition=verdict)


@dataclass(frozen=True)
class HyperbolicityReport:
    sup_avg: float
    pressure: float
    hyperbolic: bool
    margin: float


@dataclass(frozen=True)
class ConformalReport:
    spectral: SpectralData
    conformal_masses: np.ndarray
    equilibrium_density: np.ndarray
    pressure: float
    max_rel_error: float
    cells_checked: int


def thread_count() -> int:
    raw = os.environ.get("PRESSURE_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ----------------------------------------------------------------------
# preimage trees


def _tree_levels(m: IntervalMap, base: float, depth: int):
    """Levels of the preimage tree with parent links, grown lazily."""
    key = ("tree", float(base))
    entry = m._cache.get(key)
    if entry is None:
        entry = {
            "points": [np.array([base])],
            "parents": [np.array([-1], dtype=np.int64)],
        }
        m._cache[key] = entry
    pts, par = entry["points"], entry["parents"]
    branches = len(m.monotone_branches())
    while len(pts) <= depth:
        total = sum(p.size for p in pts) + pts[-1].size * branches
        if total > TREE_NODE_BUDGET:
            raise DepthError(
                f"tree would exceed {TREE_NODE_BUDGET} nodes at depth {len(pts)}"
            )
        cur = pts[-1]
        new_pts, new_par = [], []
        for sol, ok in m.preimages_array(cur):
            new_pts.append(sol[ok])
            new_par.append(np.flatnonzero(ok).astype(np.int64))
        vals = np.concatenate(new_pts)
        parents = np.concatenate(new_par)
        order = np.lexsort((vals, parents))
        vals, parents = vals[order], parents[order]
        # double roots at a shared turning point show up as same-parent
        # near-duplicates from adjacent branches; keep one
        if vals.size > 1:
            dup = (parents[1:] == parents[:-1]) & (np.abs(np.diff(vals)) < 1e-11)
            keep = np.concatenate(([True], ~dup))
            vals, parents = vals[keep], parents[keep]
        pts.append(vals)
        par.append(parents)
    return pts[: depth + 1], par[: depth + 1]


def _tree_birkhoff(m: IntervalMap, u: UPotential, base: float, depth: int):
    """Per-node cumulative sums of u along the branch to the root."""
    key = ("tree_sums", float(base), id(u))
    entry = m._cache.get(key)
    if entry is not None and entry["u"] is u and len(entry["sums"]) > depth:
        return entry["sums"][: depth + 1]
    pts, par = _tree_levels(m, base, depth)
    sums = [np.zeros(1)]
    for level in range(1, depth + 1):
        vals = u(pts[level])
        sums.append(vals + sums[level - 1][par[level]])
    m._cache[key] = {"u": u, "sums": sums}
    return sums


def _check_base(m: IntervalMap, pole_centers, base: float):
    for c in pole_centers:
        x = float(c)
        for _ in range(64):
            if abs(base - x) < BASE_CLEARANCE:
                raise BasePointError(
                    f"base {base} within {BASE_CLEARANCE:g} of the singular "
                    f"orbit point {x}"
                )
            x = m.eval(x)


def pick_base_point(
    m: IntervalMap,
    data: CohomologyData | None = None,
    u: UPotential | None = None,
    seed: int = 0,
    clearance: float = BASE_CLEARANCE,
) -> float:
    """Random base away from singular orbits and their shallow preimages."""
    forbidden: list[float] = []
    if data is not None and data.model is not None:
        forbidden.extend(data.model.embedding)
        forbidden.extend(data.sigma_max)
    centers = list(u.pole_locations) if u is not None else []
    if data is not None:
        centers.extend(data.lambda_u)
    for c in centers:
        x = float(c)
        for _ in range(64):
            forbidden.append(x)
            x = m.eval(x)
    level = list(dict.fromkeys(forbidden))
    fringe = np.array(level, dtype=float)
    for _ in range(6):
        nxt = []
        if fringe.size == 0:
            break
        for sol, ok in m.preimages_array(fringe):
            nxt.append(sol[ok])
        fringe = np.concatenate(nxt) if nxt else np.array([])
        level.extend(fringe.tolist())
    bad = np.array(level, dtype=float) if level else np.array([])
    rng = np.random.default_rng(seed)
    a, b = m.domain
    for _ in range(1000):
        x = float(rng.uniform(a + 0.01 * (b - a), b - 0.01 * (b - a)))
        if bad.size == 0 or np.min(np.abs(bad - x)) >= clearance:
            return x
    raise BasePointError("could not find a base point clear of singular orbits")


def _tree_series(m, u, t, base, depth) -> tuple[float, ...]:
    sums = _tree_birkhoff(m, u, base, depth)
    out = []
    for n in range(1, depth + 1):
        with np.errstate(invalid="ignore"):
            out.append(float(logsumexp(-t * sums[n])) / n)
    return tuple(out)


def tree_pressure(
    m: IntervalMap, u: UPotential, t: float, base: float, depth: int
) -> PressureEstimate:
    """Growth rate of weighted preimage sums at the given depth.

    The per-node weights are exp of the running branch sums of -t*u, so
    the level-n total is the standard n-th preimage sum; the estimate is
    its log divided by n, reported with the whole partial series.
    """
    if depth > MAX_TREE_DEPTH:
        raise DepthError(f"depth {depth} beyond the {MAX_TREE_DEPTH} cap")
    if depth < 3:
        raise ValidationError("depth must be at least 3 for a convergence series")
    _check_base(m, u.pole_locations, float(base))
    series = _tree_series(m, u, float(t), float(base), depth)
    return PressureEstimate(
        value=series[-1],
        method="tree",
        depth_or_size=depth,
        base_point=float(base),
        convergence_series=series,
    )


def hidden_tree_pressure(
    m: IntervalMap,
    u: UPotential,
    h: UPotential,
    t: float,
    base: float,
    depth: int,
) -> PressureEstimate:
    """Tree pressure of the raw potential with the corrector applied at
    the boundary: leaf weights get the corrector at the leaf, the root
    contribution is subtracted once.  Equals the transformed-potential
    tree sum by telescoping; leaves near the exceptional set are damped
    to zero weight by the corrector's poles, which is exactly the
    non-atomic restriction."""
    if depth > MAX_TREE_DEPTH:
        raise DepthError(f"depth {depth} beyond the {MAX_TREE_DEPTH} cap")
    if depth < 3:
        raise ValidationError("depth must be at least 3 for a convergence series")
    centers = tuple(u.pole_locations) + tuple(c for c, _ in h.singular_terms)
    _check_base(m, centers, float(base))
    t = float(t)
    sums = _tree_birkhoff(m, u, float(base), depth)
    pts, _ = _tree_levels(m, float(base), depth)
    h_base = float(h(float(base)))
    series = []
    for n in range(1, depth + 1):
        corr = h(pts[n])
        with np.errstate(invalid="ignore"):
            exponents = -t * sums[n] + t * corr
            exponents = np.where(np.isnan(exponents), -np.inf, exponents)
            series.append((float(logsumexp(exponents)) - t * h_base) / n)
    return PressureEstimate(
        value=series[-1],
        method="tree",
        depth_or_size=depth,
        base_point=float(base),
        convergence_series=tuple(series),
    )


# ----------------------------------------------------------------------
# collocation operator


def _collocation_structure(m: IntervalMap, N: int):
    """Row/column/point structure of the collocation operator.

    Each preimage deposits into the two cells straddling it with linear
    weights (single-cell deposition makes the adjoint eigenvector atomic
    on a sub-lattice, which only converges weakly); the split fractions
    sum to one per preimage, so row sums and the leading eigenvalue for
    constant weights are unaffected.
    """
    key = ("colloc", N)
    cached = m._cache.get(key)
    if cached is not None:
        return cached
    a, b = m.domain
    dx = (b - a) / N
    mids = a + (np.arange(N) + 0.5) * dx
    rows, cols, pts, fracs = [], [], [], []
    for sol, ok in m.preimages_array(mids):
        y = sol[ok]
        r = np.flatnonzero(ok)
        pos = (y - a) / dx - 0.5
        k = np.floor(pos).astype(np.int64)
        f = pos - k
        rows.extend((r, r))
        cols.extend((np.clip(k, 0, N - 1), np.clip(k + 1, 0, N - 1)))
        pts.extend((y, y))
        fracs.extend((1.0 - f, f))
    out = (
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(pts),
        np.concatenate(fracs),
        mids,
    )
    m._cache[key] = out
    return out


def collocation_operator(m: IntervalMap, weight, N: int) -> sparse.csr_matrix:
    """Sparse transfer matrix on N midpoint cells.

    Row i collects weight(y) for each preimage y of midpoint i, in the
    column of y's cell.  Exact for constant weights; midpoint bias for
    strongly varying ones is documented, not corrected.
    """
    if N < MIN_GRID:
        raise ValidationError(f"grid size {N} below the minimum {MIN_GRID}")
    rows, cols, pts, fracs, _ = _collocation_structure(m, N)
    w = np.asarray(weight(pts), dtype=float)
    if np.any(np.isnan(w)) or np.any(np.isposinf(w)):
        raise PoleOnGridError("weight is not finite at a preimage point")
    if np.any(w < 0):
        raise ValidationError("weights must be nonnegative")
    return sparse.csr_matrix((w * fracs, (rows, cols)), shape=(N, N))


def _power_iteration(mat: sparse.csr_matrix):
    n = mat.shape[0]
    v = np.full(n, 1.0)
    lam = 0.0
    for _ in range(MAX_SWEEPS):
        w = mat @ v
        lam = float(np.max(np.abs(w)))
        if lam == 0.0:
            return 0.0, np.zeros(n)
        resid = float(np.max(np.abs(w - lam * v))) / lam
        v = w / lam
        if resid <= POWER_TOL:
            return lam, v
    raise IterationError(f"power iteration exceeded {MAX_SWEEPS} sweeps")


def _second_modulus(mat, lam1, right, left) -> float:
    """Largest eigenvalue modulus of the implicitly deflated operator.

    A single norm-ratio never settles when the subdominant eigenvalues
    are a complex pair, so the estimate comes from fitting the two-term
    recurrence z_{k+2} = a z_{k+1} + b z_k satisfied asymptotically by
    the iterates; the fitted quadratic's largest root is |lam2|, and the
    fit residual is the convergence certificate.
    """
    if lam1 == 0.0:
        return 0.0
    n = mat.shape[0]
    denom = float(left @ right)
    if denom == 0.0:
        return 1.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    x -= right * (left @ x) / denom
    norm = float(np.linalg.norm(x))
    if norm < 1e-300:
        return 0.0

    def step(v):
        y = mat @ v - lam1 * right * ((left @ v) / denom)
        # roundoff re-injects the leading mode; project it back out
        y -= right * ((left @ y) / denom)
        return y, float(np.linalg.norm(y))

    z0 = x / norm
    z1, r1 = step(z0)
    if r1 < 1e-300:
        return 0.0
    z1 /= r1
    cumlog = math.log(r1)
    count = 1
    checkpoint = 64
    last_cesaro = None
    for _ in range(MAX_SWEEPS):
        z2, r2 = step(z1)
        if r2 < 1e-300:
            return 0.0
        z2 /= r2
        cumlog += math.log(r2)
        count += 1
        basis = np.column_stack((z1, z0))
        coef, *_ = np.linalg.lstsq(basis, z2, rcond=None)
        resid = float(np.linalg.norm(z2 - basis @ coef))
        if resid <= POWER_TOL:
            alpha = coef[0] * r2
            beta = coef[1] * r2 * r1
            roots = np.roots([1.0, -alpha, -beta])
            est = float(np.max(np.abs(roots))) if roots.size else 0.0
            return min(1.0, est / lam1)
        if count >= checkpoint:
            # equal-modulus multiplets never satisfy a short recurrence;
            # the geometric-mean growth rate still converges to |lam2|
            cesaro = math.exp(cumlog / count)
            if last_cesaro is not None and abs(cesaro - last_cesaro) <= 2e-4 * lam1:
                return min(1.0, cesaro / lam1)
            last_cesaro = cesaro
            checkpoint *= 2
        z0, z1, r1 = z1, z2, r2
    raise IterationError(f"deflated iteration exceeded {MAX_SWEEPS} sweeps")


def leading_spectrum(mat) -> SpectralData:
    """Leading eigendata of a nonnegative matrix by power iteration."""
    mat = sparse.csr_matrix(mat, dtype=float)
    if mat.nnz and mat.data.min() < 0:
        raise ValidationError("matrix must be nonnegative")
    n = mat.shape[0]
    lam, right = _power_iteration(mat)
    if lam == 0.0:
        return SpectralData(0.0, np.zeros(n), np.zeros(n), 0.0, n)
    lam_left, left = _power_iteration(sparse.csr_matrix(mat.T))
    mass = float(left.sum())
    left = left / mass if mass else left
    peak = float(np.max(np.abs(right)))
    right = right / peak if peak else right
    second = _second_modulus(mat, lam, right, left)
    return SpectralData(
        leading_eigenvalue=lam,
        right_eigenvector=right,
        left_eigenvector=left,
        second_modulus=second,
        grid_size=n,
    )


# ----------------------------------------------------------------------
# orbit statistics


def theta_stats(m: IntervalMap, u: UPotential, max_period: int = 14) -> ThetaStats:
    """Orbit averages of the potential over all short periodic orbits.

    Orbits through poles carry -inf and never win the max.  For named
    maps with exact registry data and the geometric potential, the known
    top value replaces the sampled one (the sample is still required not
    to exceed it).
    """
    if max_period > 14:
        raise ValidationError("periods beyond 14 are not enumerable here")
    orbits: list[PeriodicOrbit] = []
    for n in range(1, max_period + 1):
        for orb in m.periodic_points(n):
            if orb.period != n:
                continue
            total = birkhoff_sum(m, u, orb.points[0], orb.period)
            orbits.append(orb.with_theta(total / orb.period))
    finite = [o for o in orbits if o.theta is not None and math.isfinite(o.theta)]
    witness = max(finite, key=lambda o: o.theta, default=None)
    computed = witness.theta if witness is not None else -math.inf
    info = map_info(m.name) if m.name else None
    if u.kind == "geometric" and info is not None and info.theta_max_geometric is not None:
        exact_value = info.theta_max_geometric
        if computed > exact_value + 1e-9:
            raise InvariantError(
                f"sampled orbit average {computed} exceeds the exact top "
                f"value {exact_value}"
            )
        return ThetaStats(exact_value, witness, tuple(orbits), True)
    return ThetaStats(computed, witness, tuple(orbits), False)


def theta_star(
    m: IntervalMap,
    u: UPotential,
    data: CohomologyData,
    max_period: int = 14,
) -> float | None:
    """Top orbit average over periodic orbits inside the exceptional set."""
    if not data.exceptional:
        return None
    stats = theta_stats(m, u, max_period)
    best = None
    for orb in stats.orbits:
        if all(
            any(abs(p - s) <= 1e-9 for s in data.sigma_max) for p in orb.points
        ):
            if orb.theta is not None and (best is None or orb.theta > best):
                best = orb.theta
    return best


# ----------------------------------------------------------------------
# curve assembly


def _second_divided_differences(t: np.ndarray, p: np.ndarray) -> np.ndarray:
    left = (p[1:-1] - p[:-2]) / (t[1:-1] - t[:-2])
    right = (p[2:] - p[1:-1]) / (t[2:] - t[1:-1])
    return right - left


def pressure_curve(
    m: IntervalMap,
    u: UPotential,
    t_grid,
    *,
    data: CohomologyData | None = None,
    depth: int = 16,
    N: int = 1024,
    max_period: int = 10,
    base: float | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> PressureCurve:
    """Sample the assembled pressure over a negative parameter grid.

    Hidden branch: pressure of -t * (transformed potential) by both
    engines, the collocation value reported and the tree value kept as
    the gap diagnostic.  Atomic branch: -t times the top orbit average
    of the original potential.  The raw-potential tree estimate rides
    along for diagnostics; it has no convergence guarantee below the
    transition and is never used in the assembly.
    """
    t = np.array(sorted(float(x) for x in t_grid), dtype=float)
    if t.size == 0:
        raise ValidationError("empty parameter grid")
    if np.any(t >= 0):
        raise ValidationError("parameter grid must be strictly negative")
    if data is None:
        data = transform_pipeline(m, u)
    G = data.G
    stats = theta_stats(m, u, max_period)
    star = theta_star(m, u, data, max_period)
    if base is None:
        base = pick_base_point(m, data=data, u=u, seed=seed)
    warnings = list(data.warnings)

    rows_g, cols_g, pts_g, fracs_g, _ = _collocation_structure(m, N)
    g_vals = G(pts_g)
    if np.any(np.isposinf(g_vals)):
        raise PoleOnGridError("transformed potential is +inf at a preimage point")

    def colloc_at(tv: float) -> float:
        with np.errstate(over="raise"):
            w = np.exp(-tv * g_vals)
        w = np.where(np.isfinite(w), w, 0.0)
        mat = sparse.csr_matrix((w * fracs_g, (rows_g, cols_g)), shape=(N, N))
        lam, _ = _power_iteration(mat)
        if lam <= 0:
            raise ToleranceError("operator collapsed to zero")
        return math.log(lam)

    def tree_hidden_at(tv: float) -> float:
        return _tree_series(m, G, tv, base, depth)[-1]

    def tree_raw_at(tv: float) -> float:
        return _tree_series(m, u, tv, base, depth)[-1]

    n_threads = thread_count() if threads is None else max(1, threads)

    def eval_point(tv: float):
        try:
            pc = colloc_at(tv)
            pt = tree_hidden_at(tv)
            praw = tree_raw_at(tv)
            return pc, pt, praw, None
        except (
            ToleranceError,
            IterationError,
            PoleOnGridError,
            FloatingPointError,
            DepthError,
        ) as exc:
            return math.nan, math.nan, math.nan, f"t={tv:g}: {exc}"

    # warm the shared caches once before any parallel evaluation
    _tree_birkhoff(m, G, base, depth)
    _tree_birkhoff(m, u, base, depth)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(eval_point, t))
    else:
        results = [eval_point(tv) for tv in t]

    p_tilde = np.array([r[0] for r in results])
    tree_vals = np.array([r[1] for r in results])
    raw_vals = np.array([r[2] for r in results])
    for r in results:
        if r[3]:
            warnings.append(r[3])
    atomic = -t * stats.theta_max
    p = np.maximum(p_tilde, atomic)
    gap = np.abs(p_tilde - tree_vals)

    finite = np.isfinite(p)
    tf, pf = t[finite], p[finite]
    if pf.size >= 3:
        if np.any(np.diff(pf) > 1e-6):
            raise InvariantError("assembled pressure fails to be nonincreasing")
        if np.any(_second_divided_differences(tf, pf) < -1e-6):
            raise InvariantError("assembled pressure fails convexity")

    return PressureCurve(
        t_grid=tuple(t),
        p_tilde=tuple(p_tilde),
        atomic=tuple(atomic),
        p=tuple(p),
        tree_est_raw=tuple(raw_vals),
        engine_gap=tuple(gap),
        theta_max=stats.theta_max,
        theta_witness=stats.witness,
        theta_star=star,
        exceptional=data.exceptional,
        warnings=tuple(warnings),
    )


def detect_phase_transition(curve: PressureCurve, window: float = 0.05) -> TransitionVerdict:
    """Locate the branch switch and evaluate the transition criterion.

    The kink is a sign change of hidden-minus-atomic, refined by linear
    interpolation.  The criterion compares the top orbit average inside
    the exceptional set against the far-end slope of the hidden branch
    (a proxy for the top non-atomic exponent), with a deliberately loose
    ten-percent tolerance.  The two verdicts must agree.
    """
    t = np.array(curve.t_grid)
    if t.size < 20:
        raise ValidationError("transition detection needs at least 20 samples")
    diff = np.array(curve.p_tilde) - np.array(curve.atomic)
    finite = np.isfinite(diff)
    tf, df = t[finite], diff[finite]
    if tf.size < 20:
        raise ValidationError("too many gaps in the curve for a verdict")

    t_c = None
    for i in range(df.size - 1):
        if df[i] == 0.0:
            t_c = float(tf[i])
            break
        if df[i] * df[i + 1] < 0:
            t_c = float(tf[i] - df[i] * (tf[i + 1] - tf[i]) / (df[i + 1] - df[i]))
            break
    has_kink = t_c is not None

    k = min(6, tf.size)
    slope = np.polyfit(tf[:k], np.array(curve.p_tilde)[finite][:k], 1)[0]
    proxy = -float(slope)

    criterion = (
        curve.exceptional
        and curve.theta_star is not None
        and curve.theta_star > proxy - 0.1 * abs(proxy) - 1e-12
    )
    if criterion != has_kink:
        raise InconsistentVerdictError(
            f"criterion says {criterion} but kink search says {has_kink} "
            f"(theta_star={curve.theta_star}, slope proxy={proxy:.6g}, "
            f"t_c={t_c})"
        )
    return TransitionVerdict(
        has_transition=has_kink,
        t_c=t_c,
        criterion_satisfied=criterion,
        theta_star=curve.theta_star,
        slope_proxy=proxy,
        window=window,
    )


# ----------------------------------------------------------------------
# verdicts and measures


def hyperbolicity_check(
    m: IntervalMap,
    u: UPotential,
    t: float,
    n: int = 12,
    grid_size: int = 4096,
    margin: float = 1e-3,
    data: CohomologyData | None = None,
    N: int = 512,
    max_period: int = 10,
) -> HyperbolicityReport:
    """Compare the top n-step average of the weighted potential with the
    pressure; strictly smaller (beyond the margin) means hyperbolic."""
    if n > 20:
        raise ValidationError("averaging depth capped at 20")
    t = float(t)
    if data is None:
        data = transform_pipeline(m, u)
    a, b = m.domain
    xs = np.linspace(a, b, grid_size)
    total = np.zeros_like(xs)
    cur = xs.copy()
    for _ in range(n):
        total = total + u(cur)
        cur = np.clip(m._f(cur), a, b)
    with np.errstate(invalid="ignore"):
        averages = (-t) * total / n
    sup_avg = float(np.max(averages[np.isfinite(averages)]))

    stats = theta_stats(m, u, max_period)
    rows, cols, pts, fracs, _ = _collocation_structure(m, N)
    g_vals = data.G(pts)
    w = np.exp(-t * g_vals)
    w = np.where(np.isfinite(w), w, 0.0)
    lam, _ = _power_iteration(sparse.csr_matrix((w * fracs, (rows, cols)), shape=(N, N)))
    pressure = max(math.log(lam), -t * stats.theta_max)
    return HyperbolicityReport(
        sup_avg=sup_avg,
        pressure=pressure,
        hyperbolic=sup_avg < pressure - margin,
        margin=margin,
    )


@dataclass(frozen=True)
class VariationalRow:
    n: int
    grid_sup: float
    periodic_sup: float
    gap: float


def variational_sup_check(
    m: IntervalMap,
    u: UPotential,
    n_list=(4, 8, 12, 16),
    max_period: int = 10,
    grid_size: int = 4096,
) -> tuple[VariationalRow, ...]:
    """Grid Birkhoff suprema against the periodic-orbit supremum."""
    stats = theta_stats(m, u, max_period)
    a, b = m.domain
    xs = np.linspace(a, b, grid_size)
    rows = []
    for n in n_list:
        total = np.zeros_like(xs)
        cur = xs.copy()
        for _ in range(int(n)):
            total = total + u(cur)
            cur = np.clip(m._f(cur), a, b)
        with np.errstate(invalid="ignore"):
            avg = total / n
        sup = float(np.max(avg[np.isfinite(avg)]))
        rows.append(
            VariationalRow(
                n=int(n),
                grid_sup=sup,
                periodic_sup=stats.theta_max,
                gap=sup - stats.theta_max,
            )
        )
    return tuple(rows)


def conformal_and_equilibrium(
    m: IntervalMap,
    u: UPotential,
    t: float,
    N: int,
    seed: int = 0,
) -> ConformalReport:
    """Adjoint eigendata as a conformal measure, with identity checks.

    The left eigenvector of the collocation operator plays the conformal
    measure, the right-times-left product (mass one) the equilibrium
    density.  The defining identity is validated on 32 random cell-aligned
    subintervals of monotone branches; five percent relative error is the
    acceptance line, and a missing spectral gap is a hard error.

    Subintervals are redrawn until both the interval and its image carry
    at least a quarter of the total mass: the adjoint eigenvector converges
    as a measure, not per cell, so the identity is only resolvable on
    intervals whose mass sits well above the discretization floor.
    """
    t = float(t)
    weight = lambda y: np.exp(-t * u(y))
    mat = collocation_operator(m, weight, N)
    spec = leading_spectrum(mat)
    if spec.no_gap:
        raise NoGapError(f"no usable gap: |lam2|/lam1 = {spec.second_modulus:.4f}")
    pressure = math.log(spec.leading_eigenvalue)
    mu = spec.left_eigenvector.copy()
    mu = mu / mu.sum()
    density = spec.right_eigenvector * mu
    density = density / density.sum()

    a, b = m.domain
    dx = (b - a) / N
    rng = np.random.default_rng(seed)
    cdf = np.concatenate(([0.0], np.cumsum(mu)))

    def measure_interval(lo: float, hi: float) -> float:
        # within-cell-uniform interpolation of the cell masses
        lo_i = np.clip((lo - a) / dx, 0.0, N)
        hi_i = np.clip((hi - a) / dx, 0.0, N)
        def at(z):
            k = int(z)
            if k >= N:
                return float(cdf[N])
            return float(cdf[k] + (z - k) * mu[k])
        return at(hi_i) - at(lo_i)

    max_err = 0.0
    checked = 0
    attempts = 0
    branches = m.monotone_branches()
    while checked < 32 and attempts < 1000:
        attempts += 1
        br = branches[int(rng.integers(0, len(branches)))]
        lo_cell = int(np.ceil((br.interval[0] - a) / dx))
        hi_cell = int(np.floor((br.interval[1] - a) / dx)) - 1
        if hi_cell - lo_cell < 8:
            continue
        span = int(rng.integers(4, max(5, (9 * (hi_cell - lo_cell)) // 10)))
        i0 = int(rng.integers(lo_cell, hi_cell - span))
        i1 = i0 + span
        A_lo, A_hi = a + i0 * dx, a + (i1 + 1) * dx
        fa, fb = m.eval(A_lo), m.eval(A_hi)
        lhs = measure_interval(min(fa, fb), max(fa, fb))
        if float(np.sum(mu[i0 : i1 + 1])) < 0.25 or lhs < 0.25:
            continue
        mids = a + (np.arange(i0, i1 + 1) + 0.5) * dx
        integrand = np.exp(pressure + t * u(mids))
        rhs = float(np.sum(integrand * mu[i0 : i1 + 1]))
        err = abs(lhs - rhs) / max(abs(lhs), 1e-12)
        max_err = max(max_err, err)
        checked += 1
        if err > 0.05:
            raise ToleranceError(
                f"conformality violated on [{A_lo:.6g}, {A_hi:.6g}]: "
                f"measure {lhs:.6g} vs integral {rhs:.6g}"
            )
    return ConformalReport(
        spectral=spec,
        conformal_masses=mu,
        equilibrium_density=density,
        pressure=pressure,
        max_rel_error=max_err,
        cells_checked=checked,
    )
