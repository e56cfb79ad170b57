import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import oracle_gap, random_point_mass_case

from attracta.certifier import find_equilibrium
from attracta.core import (
    INSTANT,
    Box,
    DelaySystem,
    HistoryFunction,
    Kernel,
    Lag,
    Mixture,
    PointMass,
    uniform_distributions,
)
from attracta.errors import (
    DomainExitError,
    InsufficientHistoryError,
    InvalidParameterError,
    StepSizeUnderflowError,
)
from attracta.integrator import (
    IntegratorOptions,
    breaking_points,
    integrate,
    residual_defect,
    rhs_eval,
)
from attracta.trajectory import converged_to, final_error
from attracta.zoo import build_model


def scalar_system(F, dist=INSTANT, rate=1.0, domain=None):
    return DelaySystem(1, (rate,), F, uniform_distributions(1, dist), domain or Box.whole(1))


def decoupled():
    return scalar_system(lambda X: np.full(np.shape(X), 0.5))


class TestRhsEval:
    def test_pure_leakage(self):
        sysm = scalar_system(lambda X: np.zeros(np.shape(X)), PointMass.constant(1.0))
        assert rhs_eval(sysm, 0.0, [2.0], HistoryFunction.constant([7.0])).tolist() == [-2.0]

    def test_example1_equilibrium_is_rest_point(self):
        model = build_model("sqrt_pair", delays=PointMass.constant(1.0))
        out = rhs_eval(model.system, 0.0, [1.0, 1.0], HistoryFunction.constant([1.0, 1.0]))
        np.testing.assert_allclose(out, [0.0, 0.0], atol=1e-15)

    def test_uniform_kernel_average(self):
        sysm = scalar_system(lambda X: np.asarray(X, dtype=float), Kernel.uniform(2.0))
        hist = HistoryFunction.from_callable(lambda t: np.asarray(t, dtype=float)[..., None] if np.ndim(t)
                                             else np.array([t]), 2.0, 0.0, 1)
        assert rhs_eval(sysm, 2.0, [1.0], hist)[0] == pytest.approx(0.0, abs=1e-12)

    def test_missing_history(self):
        sysm = scalar_system(lambda X: np.asarray(X), PointMass.constant(1.0))
        hist = HistoryFunction.constant([1.0], t0=0.0)
        with pytest.raises(InsufficientHistoryError):
            rhs_eval(sysm, 5.0, [1.0], hist)


class TestIntegrate:
    def test_decoupled_closed_form(self):
        tr = integrate(decoupled(), HistoryFunction.constant([1.0]), 5.0)
        assert tr.y[-1, 0] == pytest.approx(0.5 + 0.5 * math.exp(-5.0), abs=1e-7)

    def test_example1_converges(self):
        model = build_model("sqrt_pair", delays=PointMass.constant(1.0))
        tr = integrate(model.system, HistoryFunction.constant([0.2, 3.0]), 60.0)
        assert np.max(np.abs(tr.y[-1] - [1.0, 1.0])) < 1e-3

    def test_two_patch_nicholson_reaches_newton_equilibrium(self):
        model = build_model("nicholson", {"beta": [4, 5], "a": [[0, 0.5], [0.2, 0]]}, PointMass.constant(1.0))
        tr = integrate(model.system, HistoryFunction.constant([1.0, 1.0]), 200.0)
        z = find_equilibrium(model.F, model.system.domain, [3.0, 3.0])
        x, y = z
        assert 0.5 * y + 4 * x * math.exp(-x) == pytest.approx(x, abs=1e-10)
        assert 0.2 * x + 5 * y * math.exp(-y) == pytest.approx(y, abs=1e-10)
        assert np.max(np.abs(tr.y[-1] - z)) < 1e-3

    def test_continuity_at_t0(self):
        hist = HistoryFunction.table([-1.0, 0.0], [[3.0], [0.7]])
        tr = integrate(scalar_system(np.tanh, PointMass.constant(1.0)), hist, 3.0)
        assert tr(0.0)[0] == 0.7
        assert tr.y[0, 0] == 0.7
        assert tr(-0.5)[0] == pytest.approx(1.85)

    def test_deterministic(self):
        model = build_model("bam_root", {"alpha": [[0.5, 0.5], [0.5, 0.5]], "k": 1}, Kernel.uniform(2.0))
        hist = HistoryFunction.constant([2.0, 0.7])
        a = integrate(model.system, hist, 30.0)
        b = integrate(model.system, hist, 30.0)
        assert np.array_equal(a.t, b.t) and np.array_equal(a.y, b.y)
        assert a.to_csv() == b.to_csv()

    def test_empty_interval(self):
        with pytest.raises(InvalidParameterError):
            integrate(decoupled(), HistoryFunction.constant([1.0]), 0.0)

    def test_domain_exit_reports_component_and_time(self):
        sysm = scalar_system(lambda X: np.full(np.shape(X), -1.0), domain=Box.orthant(1))
        with pytest.raises(DomainExitError) as info:
            integrate(sysm, HistoryFunction.constant([1.0]), 5.0)
        assert info.value.component == 0
        assert info.value.t == pytest.approx(math.log(2.0), abs=1e-2)

    def test_blow_up_underflows(self):
        sysm = scalar_system(lambda X: 3.0 * np.asarray(X) ** 2)
        with pytest.raises(StepSizeUnderflowError):
            integrate(sysm, HistoryFunction.constant([2.0]), 5.0)

    def test_step_records_match_interpolant(self):
        model = build_model("sqrt_pair", delays=PointMass.proportional(0.7))
        tr = integrate(model.system, HistoryFunction.constant([4.0, 0.25]), 20.0)
        for rec in tr.steps[::7]:
            assert rec.t_end > rec.t_start
            np.testing.assert_allclose(tr(rec.t_start), rec.y_start, rtol=0, atol=1e-13)
            np.testing.assert_allclose(tr(rec.t_end), rec.y_end, rtol=0, atol=1e-13)

    def test_residual_defect_small(self):
        model = build_model("sqrt_pair", delays=PointMass.constant(1.0))
        tr = integrate(model.system, HistoryFunction.constant([0.2, 3.0]), 10.0)
        assert residual_defect(model.system, tr, per_step=2) < 1e-4

    def test_positivity_clamp_keeps_orthant(self):
        model = build_model("nicholson", {"beta": [4, 5], "a": [[0, 0.5], [0.2, 0]]}, PointMass.constant(1.0))
        tr = integrate(model.system, HistoryFunction.constant([0.5, 4.0]), 20.0, IntegratorOptions(clamp_positive=True))
        assert np.all(tr.y > 0)

    @pytest.mark.parametrize("kw", [dict(rtol=0.0), dict(atol=-1.0), dict(max_steps=0), dict(dense_order=5),
                                    dict(fixed_step=0.0)])
    def test_bad_options(self, kw):
        with pytest.raises(InvalidParameterError):
            IntegratorOptions(**kw)


class TestBreakingPoints:
    def test_constant_lag(self):
        sysm = scalar_system(np.tanh, PointMass.constant(1.0))
        np.testing.assert_allclose(breaking_points(sysm, 0.0, 10.0), [1.0, 2.0, 3.0])

    def test_proportional_lag(self):
        sysm = scalar_system(np.tanh, PointMass.proportional(0.5))
        # h(t) = t/2 pushes t0 = 1 forward to 2, 4, 8
        np.testing.assert_allclose(breaking_points(sysm, 1.0, 100.0), [2.0, 4.0, 8.0])

    def test_mesh_contains_breaking_points(self):
        sysm = scalar_system(np.tanh, PointMass.constant(0.75))
        tr = integrate(sysm, HistoryFunction.constant([1.0]), 4.0)
        for bp in (0.75, 1.5, 2.25):
            assert np.min(np.abs(tr.t - bp)) < 1e-12


class TestOracle:
    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_point_mass_agrees_with_reference(self, seed):
        system, history, ref = random_point_mass_case(np.random.default_rng(seed))
        assert oracle_gap(system, history, ref, 8.0, IntegratorOptions(rtol=1e-11, atol=1e-13)) <= 1e-8

    def test_single_atom_mixture_is_point_mass(self):
        F = lambda X: np.sqrt(np.asarray(X)[::-1])  # noqa: E731
        hist = HistoryFunction.constant([0.2, 3.0])
        point = DelaySystem(2, (1.0, 1.0), F, uniform_distributions(2, PointMass.constant(1.3)), Box.orthant(2))
        mix = DelaySystem(2, (1.0, 1.0), F, uniform_distributions(2, Mixture(((1.0, PointMass.constant(1.3)),))),
                          Box.orthant(2))
        a = integrate(point, hist, 25.0)
        b = integrate(mix, hist, 25.0)
        assert a.t.shape == b.t.shape
        assert np.max(np.abs(a.y - b.y)) <= 1e-12


class TestOrder:
    @staticmethod
    def global_error(h):
        tr = integrate(decoupled(), HistoryFunction.constant([1.0]), 5.0, IntegratorOptions(fixed_step=h))
        return abs(tr.y[-1, 0] - (0.5 + 0.5 * math.exp(-5.0)))

    @pytest.mark.parametrize("h", [0.25, 0.125])
    def test_halving_ratio(self, h):
        ratio = self.global_error(h) / self.global_error(h / 2)
        assert 2 ** 4.5 <= ratio <= 2 ** 5.5


class TestConvergedTo:
    def test_constant_trajectory(self):
        sysm = scalar_system(lambda X: np.full(np.shape(X), 0.3))
        tr = integrate(sysm, HistoryFunction.constant([0.3]), 4.0)
        assert converged_to(tr, [0.3], 1e-15, 1.0)

    def test_decoupled(self):
        tr = integrate(decoupled(), HistoryFunction.constant([1.0]), 10.0)
        assert converged_to(tr, [0.5], 1e-2, 1.0)
        assert final_error(tr, [0.5]) == pytest.approx(0.5 * math.exp(-10.0), abs=1e-8)

    def test_oscillation_not_converged(self):
        # negative delayed feedback x' = -1.5 x(t - 3) - x oscillates about 0 without settling
        sysm = scalar_system(lambda X: -1.5 * np.asarray(X), PointMass.constant(3.0))
        tr = integrate(sysm, HistoryFunction.constant([0.1]), 60.0)
        assert final_error(tr, [0.0], window=10.0) > 0.05
        assert not converged_to(tr, [0.0], 1e-3, 10.0)

    def test_window_longer_than_trajectory(self):
        tr = integrate(decoupled(), HistoryFunction.constant([1.0]), 2.0)
        with pytest.raises(ValueError):
            converged_to(tr, [0.5], 1e-3, 5.0)


@settings(max_examples=15)
@given(st.floats(0.1, 3.0), st.floats(0.2, 3.0), st.floats(-2.0, 2.0))
def test_linear_delay_free_matches_exponential(rate, target, x0):
    sysm = scalar_system(lambda X: np.full(np.shape(X), target), rate=rate)
    tr = integrate(sysm, HistoryFunction.constant([x0]), 3.0, IntegratorOptions(rtol=1e-10, atol=1e-12))
    ts = np.linspace(0, 3, 31)
    exact = target + (x0 - target) * np.exp(-rate * ts)
    np.testing.assert_allclose(tr.values(ts)[:, 0], exact, atol=1e-8)


@settings(max_examples=10)
@given(st.floats(0.2, 0.95), st.floats(0.3, 3.0))
def test_lag_kinds_keep_box(rho, x0):
    # f = tanh maps R into (-1, 1); the box [-max(1,|x0|), max(1,|x0|)] is forward invariant
    dist = PointMass(Lag.proportional(rho))
    tr = integrate(scalar_system(np.tanh, dist), HistoryFunction.constant([x0]), 15.0)
    pts = tr.sample_points()
    assert np.all(np.abs(tr.values(pts)) <= max(1.0, abs(x0)) + 1e-9)
