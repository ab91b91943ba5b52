import math

import numpy as np
import pytest
from scipy import sparse

from pressure_lab import pressure as pr
from pressure_lab.cohomology import transform_pipeline
from pressure_lab.errors import (
    BasePointError,
    DepthError,
    InconsistentVerdictError,
    IterationError,
    PoleOnGridError,
    ToleranceError,
    ValidationError,
)
from pressure_lab.potentials import (
    UPotential,
    geometric_potential,
    zero_potential,
)
from pressure_lab.registry import named_map

LN2 = math.log(2)


@pytest.fixture(scope="module")
def cheb2():
    return named_map("chebyshev2")


@pytest.fixture(scope="module")
def cheb2_u(cheb2):
    return geometric_potential(cheb2)


@pytest.fixture(scope="module")
def cheb2_data(cheb2, cheb2_u):
    return transform_pipeline(cheb2, cheb2_u)


@pytest.fixture(scope="module")
def cheb2_base(cheb2, cheb2_data, cheb2_u):
    return pr.pick_base_point(cheb2, data=cheb2_data, u=cheb2_u, seed=0)


class TestTreePressure:
    @pytest.mark.parametrize("t", [-0.3, -1.0, -2.7])
    def test_exact_on_transformed_potential(self, cheb2, cheb2_data, cheb2_base, t):
        est = pr.tree_pressure(cheb2, cheb2_data.G, t, cheb2_base, depth=10)
        assert est.value == pytest.approx((1 - t) * LN2, abs=1e-10)

    def test_estimate_fields(self, cheb2, cheb2_data, cheb2_base):
        est = pr.tree_pressure(cheb2, cheb2_data.G, -1.0, cheb2_base, depth=8)
        assert est.method == "tree"
        assert est.depth_or_size == 8
        assert est.base_point == cheb2_base
        assert len(est.convergence_series) == 8
        assert est.convergence_series[-1] == est.value

    def test_depth_cap(self, cheb2, cheb2_data, cheb2_base):
        with pytest.raises(DepthError):
            pr.tree_pressure(cheb2, cheb2_data.G, -1.0, cheb2_base, depth=23)

    def test_minimum_depth_for_series(self, cheb2, cheb2_data, cheb2_base):
        with pytest.raises(ValidationError):
            pr.tree_pressure(cheb2, cheb2_data.G, -1.0, cheb2_base, depth=2)

    def test_node_budget(self):
        m = named_map("chebyshev3")
        data = transform_pipeline(m, geometric_potential(m))
        base = pr.pick_base_point(m, data=data, seed=1)
        with pytest.raises(DepthError):
            pr.tree_pressure(m, data.G, -1.0, base, depth=20)

    def test_base_on_singular_orbit_rejected(self, cheb2, cheb2_u):
        with pytest.raises(BasePointError):
            pr.tree_pressure(cheb2, cheb2_u, -1.0, 1.0 - 1e-8, depth=6)
        with pytest.raises(BasePointError):
            pr.tree_pressure(cheb2, cheb2_u, -1.0, 0.0, depth=6)

    def test_zero_potential_counts_preimages(self, cheb2, cheb2_base):
        est = pr.tree_pressure(cheb2, zero_potential(), -1.0, cheb2_base, depth=9)
        assert est.value == pytest.approx(LN2, abs=1e-13)


class TestHiddenTreePressure:
    @pytest.mark.parametrize("t", [-0.4, -1.7])
    def test_matches_transformed_route(self, cheb2, cheb2_u, cheb2_data, cheb2_base, t):
        direct = pr.tree_pressure(cheb2, cheb2_data.G, t, cheb2_base, depth=11)
        corrected = pr.hidden_tree_pressure(
            cheb2, cheb2_u, cheb2_data.h, t, cheb2_base, depth=11
        )
        assert abs(direct.value - corrected.value) <= 1e-9

    def test_base_clearance_includes_corrector_poles(self, cheb2, cheb2_u, cheb2_data):
        with pytest.raises(BasePointError):
            pr.hidden_tree_pressure(
                cheb2, cheb2_u, cheb2_data.h, -1.0, -1.0 + 1e-9, depth=6
            )


class TestPickBasePoint:
    def test_deterministic(self, cheb2, cheb2_data, cheb2_u):
        a = pr.pick_base_point(cheb2, data=cheb2_data, u=cheb2_u, seed=42)
        b = pr.pick_base_point(cheb2, data=cheb2_data, u=cheb2_u, seed=42)
        assert a == b

    def test_clearance_from_model_nodes(self, cheb2, cheb2_data, cheb2_u):
        for seed in range(12):
            base = pr.pick_base_point(cheb2, data=cheb2_data, u=cheb2_u, seed=seed)
            for node in (0.0, -1.0, 1.0):
                assert abs(base - node) >= 1e-6
            # shallow preimages of the nodes are excluded too
            for y in cheb2.preimages(0.0):
                assert abs(base - y) >= 1e-6


class TestCollocation:
    def test_grid_minimum(self, cheb2):
        with pytest.raises(ValidationError):
            pr.collocation_operator(cheb2, lambda y: np.ones_like(y), 32)

    def test_constant_weight_row_sums(self, cheb2):
        mat = pr.collocation_operator(cheb2, lambda y: np.full_like(y, 0.7), 128)
        sums = np.asarray(mat.sum(axis=1)).ravel()
        assert np.max(np.abs(sums - 1.4)) < 1e-12

    def test_leading_eigenvalue_exact_for_constant_weight(self, cheb2):
        mat = pr.collocation_operator(cheb2, lambda y: np.full_like(y, 3.0), 256)
        lam = pr.leading_spectrum(mat).leading_eigenvalue
        assert lam == pytest.approx(6.0, abs=1e-10)

    def test_pole_on_grid(self, cheb2):
        def bad(y):
            out = np.ones_like(y)
            out[y < 0] = np.inf
            return out

        with pytest.raises(PoleOnGridError):
            pr.collocation_operator(cheb2, bad, 128)

    def test_negative_weight_rejected(self, cheb2):
        with pytest.raises(ValidationError):
            pr.collocation_operator(cheb2, lambda y: -np.ones_like(y), 128)


class TestLeadingSpectrum:
    def test_rank_one(self):
        mat = sparse.csr_matrix(np.array([[0.5, 0.5], [0.5, 0.5]]))
        s = pr.leading_spectrum(mat)
        assert s.leading_eigenvalue == pytest.approx(1.0, abs=1e-12)
        assert s.second_modulus == pytest.approx(0.0, abs=1e-10)

    def test_identity_flags_no_gap(self):
        s = pr.leading_spectrum(sparse.identity(16, format="csr"))
        assert s.leading_eigenvalue == pytest.approx(1.0)
        assert s.no_gap

    def test_zero_matrix(self):
        s = pr.leading_spectrum(sparse.csr_matrix((8, 8)))
        assert s.leading_eigenvalue == 0.0
        assert s.second_modulus == 0.0

    def test_negative_matrix_rejected(self):
        with pytest.raises(ValidationError):
            pr.leading_spectrum(sparse.csr_matrix(np.array([[1.0, -0.1], [0.0, 1.0]])))

    def test_tent_half_weight(self):
        tent = named_map("tent")
        mat = pr.collocation_operator(tent, lambda y: np.full_like(y, 0.5), 1024)
        s = pr.leading_spectrum(mat)
        assert abs(s.leading_eigenvalue - 1.0) <= 1e-8
        assert np.max(np.abs(s.left_eigenvector * 1024 - 1.0)) <= 0.02
        assert s.second_modulus < 1.0

    def test_eigenvector_residuals(self):
        rng = np.random.default_rng(5)
        mat = sparse.csr_matrix(rng.uniform(0, 1, (40, 40)))
        s = pr.leading_spectrum(mat)
        lam, v, w = s.leading_eigenvalue, s.right_eigenvector, s.left_eigenvector
        assert np.max(np.abs(mat @ v - lam * v)) <= 1e-8 * lam
        assert np.max(np.abs(mat.T @ w - lam * w)) <= 1e-8 * lam
        assert w.sum() == pytest.approx(1.0)
        assert np.max(np.abs(v)) == pytest.approx(1.0)

    @pytest.mark.parametrize("t", [-0.5, -1.5])
    def test_transformed_weight_gap_regime(self, cheb2, cheb2_data, t):
        mat = pr.collocation_operator(
            cheb2, lambda y: np.exp(-t * cheb2_data.G(y)), 256
        )
        s = pr.leading_spectrum(mat)
        assert s.second_modulus <= 0.95


class TestThetaStats:
    def test_chebyshev2_exact_injection(self, cheb2, cheb2_u):
        stats = pr.theta_stats(cheb2, cheb2_u, max_period=8)
        assert stats.exact
        assert stats.theta_max == math.log(4)
        assert stats.witness.points == pytest.approx((1.0,), abs=1e-12)

    def test_tent_exact_injection(self):
        tent = named_map("tent")
        stats = pr.theta_stats(tent, geometric_potential(tent), max_period=6)
        assert stats.exact
        assert stats.theta_max == math.log(2)

    def test_orbit_averages_attached(self, cheb2, cheb2_u):
        stats = pr.theta_stats(cheb2, cheb2_u, max_period=3)
        periods = sorted(o.period for o in stats.orbits)
        assert periods == [1, 1, 2, 3, 3]
        assert all(o.theta is not None for o in stats.orbits)

    def test_pole_orbit_excluded_from_max(self, cheb2):
        # pole sits on the fixed point -1/2; that orbit carries -inf
        u = UPotential(lambda x: np.zeros(np.shape(x)), ((-0.5, 1.0),))
        stats = pr.theta_stats(cheb2, u, max_period=2)
        assert not stats.exact
        fixed = [o for o in stats.orbits if o.period == 1]
        assert any(o.theta == -math.inf for o in fixed)
        assert stats.witness.theta == pytest.approx(math.log(1.5))

    def test_max_period_cap(self, cheb2, cheb2_u):
        with pytest.raises(ValidationError):
            pr.theta_stats(cheb2, cheb2_u, max_period=15)


class TestThetaStar:
    def test_chebyshev2(self, cheb2, cheb2_u, cheb2_data):
        assert pr.theta_star(cheb2, cheb2_u, cheb2_data) == pytest.approx(
            math.log(4), abs=1e-12
        )

    def test_none_when_not_exceptional(self):
        tent = named_map("tent")
        u = geometric_potential(tent)
        data = transform_pipeline(tent, u)
        assert pr.theta_star(tent, u, data) is None


class TestPressureCurve:
    def test_validation(self, cheb2, cheb2_u):
        with pytest.raises(ValidationError):
            pr.pressure_curve(cheb2, cheb2_u, [])
        with pytest.raises(ValidationError):
            pr.pressure_curve(cheb2, cheb2_u, [-1.0, 0.5])

    def test_chebyshev2_exact_branches(self, cheb2, cheb2_u, cheb2_data):
        grid = np.linspace(-3.0, -0.1, 24)
        curve = pr.pressure_curve(
            cheb2, cheb2_u, grid, data=cheb2_data, depth=8, N=128, max_period=6
        )
        for t, pt, at, p in zip(curve.t_grid, curve.p_tilde, curve.atomic, curve.p):
            assert pt == pytest.approx((1 - t) * LN2, abs=1e-9)
            assert at == -t * math.log(4)
            assert p == max(pt, at)
        assert max(curve.engine_gap) <= 1e-9
        assert curve.theta_star == pytest.approx(math.log(4), abs=1e-12)
        assert curve.exceptional
        assert curve.warnings == ()

    def test_raw_tree_estimate_rides_along(self, cheb2, cheb2_u, cheb2_data):
        # the raw estimate converges slowly near the transition; it is
        # a diagnostic there, accurate only away from the kink
        grid = np.array([-2.5, -2.0, -1.6, -0.5, -0.25])
        curve = pr.pressure_curve(
            cheb2, cheb2_u, grid, data=cheb2_data, depth=12, N=128, max_period=6
        )
        raw = np.array(curve.tree_est_raw)
        assert np.all(np.isfinite(raw))
        assert np.max(np.abs(raw - np.array(curve.p))) <= 0.1

    def test_threads_do_not_change_output(self, cheb2, cheb2_u, cheb2_data):
        grid = np.linspace(-2.0, -0.2, 21)
        one = pr.pressure_curve(
            cheb2, cheb2_u, grid, data=cheb2_data, depth=7, N=128, max_period=4,
            threads=1,
        )
        four = pr.pressure_curve(
            cheb2, cheb2_u, grid, data=cheb2_data, depth=7, N=128, max_period=4,
            threads=4,
        )
        assert one.p_tilde == four.p_tilde
        assert one.tree_est_raw == four.tree_est_raw

    def test_zero_potential_constant_entropy(self, cheb2):
        grid = np.linspace(-2.0, -0.1, 20)
        curve = pr.pressure_curve(
            cheb2, zero_potential(), grid, depth=8, N=128, max_period=4
        )
        assert np.max(np.abs(np.array(curve.p) - LN2)) <= 1e-9
        assert curve.theta_max == 0.0

    def test_tent_no_kink_curve(self):
        tent = named_map("tent")
        u = geometric_potential(tent)
        grid = np.linspace(-3.0, -0.05, 25)
        curve = pr.pressure_curve(tent, u, grid, depth=8, N=128, max_period=4)
        for t, p in zip(curve.t_grid, curve.p):
            assert p == pytest.approx((1 - t) * LN2, abs=1e-9)


@pytest.fixture(scope="module")
def cheb2_curve(cheb2, cheb2_u, cheb2_data):
    grid = np.linspace(-3.0, -0.05, 60)
    return pr.pressure_curve(
        cheb2, cheb2_u, grid, data=cheb2_data, depth=10, N=256, max_period=6
    )


class TestDetectPhaseTransition:

    def test_kink_at_minus_one(self, cheb2_curve):
        verdict = pr.detect_phase_transition(cheb2_curve)
        assert verdict.has_transition
        assert verdict.t_c == pytest.approx(-1.0, abs=0.05)
        assert verdict.criterion_satisfied
        assert verdict.theta_star == pytest.approx(math.log(4), abs=1e-12)
        assert verdict.slope_proxy == pytest.approx(LN2, abs=0.01)

    def test_tent_no_transition(self):
        tent = named_map("tent")
        u = geometric_potential(tent)
        grid = np.linspace(-3.0, -0.05, 30)
        curve = pr.pressure_curve(tent, u, grid, depth=8, N=128, max_period=4)
        verdict = pr.detect_phase_transition(curve)
        assert not verdict.has_transition
        assert verdict.t_c is None
        assert not verdict.criterion_satisfied

    def test_transformed_potential_has_no_transition(self, cheb2, cheb2_data):
        grid = np.linspace(-3.0, -0.05, 30)
        curve = pr.pressure_curve(
            cheb2, cheb2_data.G, grid, depth=8, N=128, max_period=4
        )
        verdict = pr.detect_phase_transition(curve)
        assert not verdict.has_transition

    def test_needs_twenty_points(self, cheb2, cheb2_u, cheb2_data):
        grid = np.linspace(-2.0, -0.2, 12)
        curve = pr.pressure_curve(
            cheb2, cheb2_u, grid, data=cheb2_data, depth=6, N=128, max_period=4
        )
        with pytest.raises(ValidationError):
            pr.detect_phase_transition(curve)

    def test_inconsistent_verdict_raises(self):
        t = tuple(np.linspace(-3.0, -1.0, 21))
        p_tilde = tuple((1 - tv) * LN2 for tv in t)
        atomic = tuple(-0.01 * tv for tv in t)
        curve = pr.PressureCurve(
            t_grid=t,
            p_tilde=p_tilde,
            atomic=atomic,
            p=tuple(max(a, b) for a, b in zip(p_tilde, atomic)),
            tree_est_raw=p_tilde,
            engine_gap=(0.0,) * 21,
            theta_max=0.01,
            theta_witness=None,
            theta_star=100.0,
            exceptional=True,
        )
        with pytest.raises(InconsistentVerdictError):
            pr.detect_phase_transition(curve)


class TestHyperbolicity:
    def test_hyperbolic_at_small_t(self, cheb2, cheb2_u, cheb2_data):
        rep = pr.hyperbolicity_check(cheb2, cheb2_u, -0.5, data=cheb2_data)
        assert rep.hyperbolic
        assert rep.sup_avg == pytest.approx(0.5 * math.log(4), abs=0.05)
        assert rep.pressure == pytest.approx(1.5 * LN2, abs=0.05)

    def test_not_hyperbolic_at_large_t(self, cheb2, cheb2_u, cheb2_data):
        rep = pr.hyperbolicity_check(cheb2, cheb2_u, -2.0, data=cheb2_data)
        assert not rep.hyperbolic
        assert rep.sup_avg == pytest.approx(rep.pressure, abs=0.05)

    @pytest.mark.parametrize("t", [-0.25, -1.0, -2.0, -3.0])
    def test_transformed_potential_always_hyperbolic(self, cheb2, cheb2_data, t):
        rep = pr.hyperbolicity_check(cheb2, cheb2_data.G, t)
        assert rep.hyperbolic

    def test_depth_cap(self, cheb2, cheb2_u):
        with pytest.raises(ValidationError):
            pr.hyperbolicity_check(cheb2, cheb2_u, -1.0, n=25)


class TestVariationalSup:
    def test_chebyshev2_fixed_point_dominates(self, cheb2, cheb2_u):
        rows = pr.variational_sup_check(cheb2, cheb2_u, n_list=(4, 16), max_period=8)
        for row in rows:
            assert row.periodic_sup == math.log(4)
            assert abs(row.gap) <= 0.05

    def test_tent_flat(self):
        tent = named_map("tent")
        rows = pr.variational_sup_check(
            tent, geometric_potential(tent), n_list=(4, 8), max_period=6
        )
        for row in rows:
            assert row.grid_sup == pytest.approx(LN2, abs=1e-12)
            assert row.gap == pytest.approx(0.0, abs=1e-12)


class TestConformal:
    def test_tent_lebesgue(self):
        tent = named_map("tent")
        rep = pr.conformal_and_equilibrium(
            tent, geometric_potential(tent), 1.0, 1024, seed=3
        )
        assert abs(rep.spectral.leading_eigenvalue - 1.0) <= 1e-8
        assert np.max(np.abs(rep.conformal_masses * 1024 - 1.0)) <= 0.02
        assert rep.max_rel_error <= 0.05
        assert rep.cells_checked > 0
        assert rep.spectral.second_modulus < 1.0

    def test_chebyshev2_maximal_entropy_measure(self, cheb2, cheb2_data):
        N = 1024
        rep = pr.conformal_and_equilibrium(cheb2, cheb2_data.G, -1.0, N, seed=3)
        assert rep.spectral.leading_eigenvalue == pytest.approx(4.0, abs=1e-6)
        assert rep.max_rel_error <= 0.05
        edges = np.linspace(-1.0, 1.0, N + 1)
        arcsine = (np.arcsin(edges[1:]) - np.arcsin(edges[:-1])) / math.pi
        cdf_gap = np.max(np.abs(np.cumsum(rep.conformal_masses) - np.cumsum(arcsine)))
        assert cdf_gap <= 0.02

    def test_equilibrium_density_mass_one(self, cheb2, cheb2_data):
        rep = pr.conformal_and_equilibrium(cheb2, cheb2_data.G, -0.5, 1024, seed=1)
        assert rep.equilibrium_density.sum() == pytest.approx(1.0)
        assert np.all(rep.equilibrium_density >= 0)


class TestThreadCount:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("PRESSURE_LAB_THREADS", "4")
        assert pr.thread_count() == 4

    def test_invalid_env_defaults_to_one(self, monkeypatch):
        monkeypatch.setenv("PRESSURE_LAB_THREADS", "lots")
        assert pr.thread_count() == 1
