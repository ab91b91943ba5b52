"""Acceptance gate: one test per headline guarantee, timed.

These are the end-to-end claims the package stands behind, with pinned
tolerances and wall-clock budgets.  Unit-level coverage lives in the
per-module test files; here each test exercises a whole pipeline the way
a user would.
"""

from __future__ import annotations

import math
import time
from itertools import combinations

import numpy as np
import pytest

from pressure_lab.cohomology import transform_pipeline
from pressure_lab.combinatorics import (
    abnormal_set,
    check_tec,
    enumerate_partial_maps,
    exceptional_sets,
    random_finite_dynamics,
)
from pressure_lab.keller import (
    GridMeasure,
    decay_correlation,
    osc1,
    p_variation,
    var_alpha1,
)
from pressure_lab.potentials import geometric_potential
from pressure_lab.pressure import (
    collocation_operator,
    conformal_and_equilibrium,
    detect_phase_transition,
    hyperbolicity_check,
    leading_spectrum,
    pick_base_point,
    pressure_curve,
    tree_pressure,
)
from pressure_lab.registry import named_map

LOG2 = math.log(2.0)
LOG4 = math.log(4.0)
T_GRID = np.linspace(-3.0, -0.05, 60)


def _elapsed_under(t0: float, budget: float) -> None:
    assert time.monotonic() - t0 < budget


def test_1_chebyshev_transform_ground_truth():
    """Degree-2 Chebyshev model: exact orbit structure and constant G."""
    t0 = time.monotonic()
    m = named_map("chebyshev2")
    data = transform_pipeline(m, geometric_potential(m))
    assert sorted(data.sigma_max) == [-1.0, 1.0]
    assert {c: float(a) for c, a in data.alpha.items()} == {-1.0: -0.5, 1.0: -0.5}
    assert float(data.b_coeffs[0.0]) == 0.0
    # transformed potential is log 2 away from the correction poles and
    # their forward coincidences {-1, 0, 1}
    xs = np.linspace(-1.0, 1.0, 4001)
    keep = np.ones(xs.size, dtype=bool)
    for pole in (-1.0, 0.0, 1.0):
        keep &= np.abs(xs - pole) >= 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.asarray(data.G(xs[keep]), dtype=float)
    assert np.all(np.isfinite(g))
    assert float(np.max(np.abs(g - LOG2))) <= 1e-9
    _elapsed_under(t0, 1.0)


def test_2_phase_transition_location_and_curve():
    """Exceptional quadratic model kinks at t = -1 with exact atomic line."""
    t0 = time.monotonic()
    m = named_map("chebyshev2")
    u = geometric_potential(m)
    curve = pressure_curve(m, u, T_GRID, depth=16, N=1024, max_period=10, seed=0)
    t = np.array(curve.t_grid)
    truth = (1.0 - t) * LOG2
    p_tilde = np.array(curve.p_tilde)
    assert float(np.max(np.abs(p_tilde - truth))) <= 0.02
    # the tree engine sits within engine_gap of the collocation value,
    # so this bounds its own deviation from the closed form
    gap = np.array(curve.engine_gap)
    assert float(np.max(np.abs(p_tilde - truth) + gap)) <= 0.03
    assert curve.theta_max == LOG4
    assert np.array_equal(np.array(curve.atomic), -t * LOG4)
    verdict = detect_phase_transition(curve, window=0.05)
    assert verdict.has_transition
    assert verdict.t_c == pytest.approx(-1.0, abs=0.05)
    assert curve.exceptional
    assert verdict.criterion_satisfied
    assert curve.theta_star == pytest.approx(LOG4, abs=1e-9)
    assert verdict.slope_proxy == pytest.approx(LOG2, abs=0.05)
    assert curve.theta_star > verdict.slope_proxy
    _elapsed_under(t0, 60.0)


def test_3_raw_tree_pressure_matches_assembled():
    """Untransformed preimage-tree pressure lands near the assembled curve."""
    t0 = time.monotonic()
    m = named_map("chebyshev2")
    u = geometric_potential(m)
    data = transform_pipeline(m, u)
    base = pick_base_point(m, data=data, u=u, seed=0)
    for t, assembled in ((-2.0, 4.0 * LOG2), (-0.5, 1.5 * LOG2)):
        est = tree_pressure(m, u, t, base, 18)
        assert abs(est.value - assembled) <= 0.1
    _elapsed_under(t0, 120.0)


def test_4_preimage_inequality_exhaustive():
    """Every partial self-map on <= 5 points satisfies the count bound."""
    t0 = time.monotonic()
    per_size: dict[int, int] = {}
    violations = 0
    for pm in enumerate_partial_maps(5):
        per_size[pm.big_size] = per_size.get(pm.big_size, 0) + 1
        if not check_tec(pm).holds:
            violations += 1
    assert violations == 0
    assert per_size == {m: (1 + m) ** m for m in range(1, 6)}
    _elapsed_under(t0, 60.0)


def test_5_exceptional_set_bound_and_oracle_agreement():
    """10^4 random models: dual search paths agree, bound and inclusion hold."""
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        size = int(rng.integers(1, 9))
        fd = random_finite_dynamics(rng, size)
        # exceptional_sets runs the subset brute force alongside the
        # restricted search and raises on any disagreement
        enum = exceptional_sets(fd)
        n = len(fd.critical)
        assert len(enum.sigma_max) <= 3 * n + 4
        assert enum.sigma_max <= abnormal_set(fd, check_bound=False)
    _elapsed_under(t0, 120.0)


def test_6_hyperbolicity_verdicts():
    """Geometric family: hyperbolic at t=-0.5, degenerate at t=-2,
    always hyperbolic after the transform."""
    m = named_map("chebyshev2")
    u = geometric_potential(m)
    data = transform_pipeline(m, u)

    rep = hyperbolicity_check(m, u, -0.5, data=data)
    assert rep.hyperbolic
    assert rep.sup_avg == pytest.approx(LOG2, abs=0.05)
    assert rep.pressure == pytest.approx(1.5 * LOG2, abs=0.05)

    rep = hyperbolicity_check(m, u, -2.0, data=data)
    assert not rep.hyperbolic
    assert rep.sup_avg == pytest.approx(rep.pressure, abs=0.05)
    assert rep.pressure == pytest.approx(4.0 * LOG2, abs=0.05)

    for t in (-3.0, -2.0, -1.0, -0.5, -0.1):
        rep = hyperbolicity_check(m, data.G, t)
        assert rep.hyperbolic, f"transformed potential not hyperbolic at t={t}"


def test_7_spectral_conformal_suite():
    """Tent map, weight 1/2: unit eigenvalue, flat adjoint, conformality,
    and a decay fit consistent with the measured gap."""
    tent = named_map("tent")
    half = lambda y: np.full(np.shape(y), 0.5)
    spectral = leading_spectrum(collocation_operator(tent, half, 1024))
    assert spectral.leading_eigenvalue == pytest.approx(1.0, abs=1e-8)
    left = spectral.left_eigenvector / float(np.sum(spectral.left_eigenvector))
    assert float(np.max(np.abs(left * 1024 - 1.0))) <= 0.02

    rep = conformal_and_equilibrium(tent, geometric_potential(tent), 1.0, N=1024, seed=0)
    assert rep.cells_checked == 32
    assert rep.max_rel_error <= 0.05

    assert spectral.second_modulus < 1.0
    phi = lambda x: x - 0.5
    decay = decay_correlation(tent, spectral, phi, phi, 16, weight=half)
    assert abs(decay.fitted_rate - spectral.second_modulus) <= 0.1


def _brute_p_variation(samples: np.ndarray, p: float) -> float:
    hs = samples[:, 1]
    n = hs.size
    best = 0.0
    interior = range(1, n - 1)
    for k in range(0, n - 1):
        for combo in combinations(interior, k):
            idx = (0, *combo, n - 1)
            acc = 0.0
            for a, b in zip(idx, idx[1:]):
                acc = acc + abs(hs[b] - hs[a]) ** p
            best = max(best, acc)
    return best ** (1.0 / p)


def test_8_oscillation_norm_properties():
    """Norm axioms, exact dynamic-programming agreement, monotone osc."""
    rng = np.random.default_rng(5)
    support = np.sort(rng.uniform(0.0, 1.0, 64))
    masses = rng.uniform(0.1, 1.0, 64)
    gm = GridMeasure(support, masses / masses.sum())

    funcs = [rng.normal(size=64) for _ in range(100)]
    for i in range(0, 100, 2):
        f, g = funcs[i], funcs[i + 1]
        nf = var_alpha1(f, 0.5, gm).var_part
        ng = var_alpha1(g, 0.5, gm).var_part
        nfg = var_alpha1(f + g, 0.5, gm).var_part
        assert nfg <= nf + ng + 1e-10
    for f in funcs:
        c = float(rng.uniform(-3.0, 3.0))
        scaled = var_alpha1(c * f, 0.5, gm).var_part
        base = var_alpha1(f, 0.5, gm).var_part
        assert abs(scaled - abs(c) * base) <= 1e-10 * max(1.0, base)

    # integer-valued samples keep every sum exact, so the dynamic
    # program must agree with exhaustive partition search bitwise; float
    # samples get a 1e-12 relative tolerance (vectorized powers can
    # differ from scalar powers by an ulp for fractional p)
    for n in range(2, 13):
        xs = np.sort(rng.uniform(0.0, 1.0, n))
        xs += np.arange(n) * 1e-9
        for p in (1.0, 2.0):
            hs = rng.integers(-5, 6, n).astype(float)
            samples = np.column_stack([xs, hs])
            assert p_variation(samples, p) == _brute_p_variation(samples, p)
            hs = rng.normal(size=n)
            samples = np.column_stack([xs, hs])
            assert math.isclose(
                p_variation(samples, p),
                _brute_p_variation(samples, p),
                rel_tol=1e-12,
                abs_tol=1e-12,
            )

    h = rng.normal(size=64)
    eps_values = np.geomspace(1e-3, 1.0, 12)
    oscs = [osc1(h, float(e), gm) for e in eps_values]
    assert all(a <= b + 1e-12 for a, b in zip(oscs, oscs[1:]))


def test_9_coboundary_telescoping():
    """S_n of the transformed minus original potential telescopes to the
    correction difference along pole-avoiding orbits."""
    m = named_map("chebyshev2")
    u = geometric_potential(m)
    data = transform_pipeline(m, u)
    G, h = data.G, data.h
    assert h is not None
    rng = np.random.default_rng(17)
    checked = 0
    worst = 0.0
    while checked < 100:
        x = float(rng.uniform(-1.0, 1.0))
        n = int(rng.integers(1, 13))
        orbit = [x]
        for _ in range(n):
            orbit.append(float(m.eval(orbit[-1])))
        if min(abs(p - q) for p in orbit for q in (-1.0, 0.0, 1.0)) < 1e-2:
            continue
        s_G = sum(float(G(p)) for p in orbit[:-1])
        s_u = sum(float(u(p)) for p in orbit[:-1])
        residual = s_G - s_u - float(h(orbit[-1])) + float(h(x))
        worst = max(worst, abs(residual))
        checked += 1
    assert worst <= 1e-8


def _kink_runs(t: np.ndarray, y: np.ndarray, thresh: float = 1.0) -> int:
    sdd = np.abs(np.diff(y, 2) / np.diff(t)[:-1] ** 2)
    hits = sdd > thresh
    return int(np.sum(hits[1:] & ~hits[:-1])) + int(hits[0])


def test_smoothness_no_spurious_kinks():
    """Hidden branch stays smooth; the assembled curve kinks exactly once
    for the exceptional model and never after transforming it away."""
    m = named_map("chebyshev2")
    u = geometric_potential(m)
    curve = pressure_curve(m, u, T_GRID, depth=16, N=1024, max_period=10, seed=0)
    t = np.array(curve.t_grid)
    assert _kink_runs(t, np.array(curve.p_tilde)) == 0
    assert _kink_runs(t, np.array(curve.p)) == 1

    for name in ("tent", "ulam"):
        mm = named_map(name)
        data = transform_pipeline(mm, geometric_potential(mm))
        cc = pressure_curve(mm, data.G, T_GRID, depth=14, N=512, max_period=8, seed=0)
        assert _kink_runs(np.array(cc.t_grid), np.array(cc.p)) == 0
