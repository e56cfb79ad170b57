import math

import numpy as np
import pytest

from attracta.certifier import CERTIFIED, NicholsonParams, certify_m_matrix
from attracta.core import INSTANT, HistoryFunction, Mixture, PointMass
from attracta.errors import InvalidParameterError, UnsupportedModelError
from attracta.integrator import integrate, rhs_eval
from attracta.pipeline import certify_model
from attracta.zoo import (
    MODEL_NAMES,
    build_bam_root,
    build_hopfield,
    build_model,
    build_nicholson,
    build_pair_examples,
    build_section5,
)

REMARK_C = [[0.5, 2.0], [1 / 16, 0.5]]

ALL_MODELS = {
    "hopfield": {"b": [1.0, 2.0], "C": [[0.2, -0.3], [0.1, 0.4]], "activations": "tanh"},
    "bam_root": {"alpha": [[0.5, 0.5], [0.25, 0.75]], "k": [1, 2]},
    "nicholson": {"beta": [4, 5], "a": [[0, 0.5], [0.2, 0]]},
    "sqrt_pair": {},
    "power_pair": {},
    "logistic_patch": {"beta": [2.0, 2.5], "K": [1.0, 2.0], "a": [[0, 0.1], [0.1, 0]]},
    "mackey_glass_patch": {"beta": [2.0], "n": 2},
    "ricker_patch": {"beta": [1.0, 1.5], "K": [1.0, 2.0]},
}


def F_at(model, x):
    return model.F(np.asarray(x, dtype=float).reshape(-1, 1))[:, 0]


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_declared_equilibrium_is_fixed(name):
    model = build_model(name, ALL_MODELS[name], PointMass.constant(1.0))
    z = model.equilibrium
    assert z is not None
    assert np.max(np.abs(F_at(model, z) - z)) <= 1e-12


@pytest.mark.parametrize("name", ["nicholson", "bam_root", "logistic_patch", "mackey_glass_patch",
                                  "ricker_patch"])
def test_positive_histories_stay_positive(name):
    model = build_model(name, ALL_MODELS[name], PointMass.constant(1.0))
    hist = HistoryFunction.constant(np.full(model.dimension, 0.05))
    tr = integrate(model.system, hist, 40.0)
    assert np.all(tr.values(tr.sample_points()) > 0)


class TestHopfield:
    def test_pure_decay(self):
        model = build_hopfield([1.0], [[0.0]], "sin", PointMass.constant(2.0))
        np.testing.assert_array_equal(model.lipschitz.L, [[0.0]])
        assert certify_m_matrix(model.F, model.lipschitz, samples=50).verdict == CERTIFIED

    def test_remark_matrix(self):
        model = build_hopfield([1.0, 1.0], REMARK_C, "identity")
        np.testing.assert_allclose(model.lipschitz.L, REMARK_C)

    def test_rate_scaling(self):
        a = build_hopfield([1.0, 1.0], REMARK_C, "identity").lipschitz.L
        b = build_hopfield([2.0, 2.0], REMARK_C, "identity").lipschitz.L
        np.testing.assert_allclose(b, a / 2)
        assert [r(0.0) for r in build_hopfield([2.0, 2.0], REMARK_C).system.rates] == [2.0, 2.0]

    def test_activation_constant(self):
        model = build_hopfield([1.0, 1.0], [[0, 1.0], [-2.0, 0]], "logistic")
        np.testing.assert_allclose(model.lipschitz.L, [[0, 0.25], [0.5, 0]])

    def test_nonpositive_rate(self):
        with pytest.raises(InvalidParameterError):
            build_hopfield([1.0, 0.0], REMARK_C)

    def test_callable_needs_constant(self):
        with pytest.raises(InvalidParameterError):
            build_hopfield([1.0], [[0.5]], np.arctan)
        model = build_hopfield([1.0], [[0.5]], np.arctan, lipschitz_constants=[1.0])
        assert model.lipschitz.L[0, 0] == 0.5


class TestBam:
    def test_example3(self):
        model = build_bam_root([[0.5, 0.5], [0.5, 0.5]], [1, 1])
        np.testing.assert_array_equal(model.equilibrium, [1.0, 1.0])
        assert model.params["x0"] == 0.5
        assert any("asserted" in n for n in model.notes)

    def test_scalar(self):
        model = build_bam_root([[1.0]], 1)
        assert F_at(model, [4.0])[0] == pytest.approx(2.0)
        assert F_at(model, [1.0])[0] == 1.0

    @pytest.mark.parametrize("k", [[1, 1, 1], [2, 1, 3]])
    def test_ones_fixed(self, k, rng):
        alpha = rng.random((3, 3))
        alpha /= alpha.sum(axis=1, keepdims=True)
        model = build_bam_root(alpha, k)
        np.testing.assert_allclose(F_at(model, np.ones(3)), np.ones(3), rtol=1e-15)

    def test_non_stochastic(self):
        with pytest.raises(InvalidParameterError):
            build_bam_root([[0.5, 0.4], [0.5, 0.5]], 1)

    def test_bad_k(self):
        with pytest.raises(InvalidParameterError):
            build_bam_root([[1.0]], 0)


class TestNicholson:
    def test_example4_structure(self):
        model = build_nicholson(NicholsonParams([4, 5], [[0, 0.5], [0.2, 0]]), PointMass.constant(1.0))
        x, y = 1.3, 0.7
        out = rhs_eval(model.system, 0.0, [x, y], HistoryFunction.constant([2.0, 3.0]))
        # coupling reads the current state, the birth term the delayed one
        assert out[0] == pytest.approx(0.5 * y + 4 * 2.0 * math.exp(-2.0) - x)
        assert out[1] == pytest.approx(0.2 * x + 5 * 3.0 * math.exp(-3.0) - y)

    def test_scalar(self):
        model = build_nicholson(NicholsonParams([4.0], [[0.0]]))
        assert model.equilibrium[0] == pytest.approx(math.log(4.0), abs=1e-12)

    def test_mixture_self_delay(self):
        mix = Mixture(((0.4, PointMass.constant(1.0)), (0.6, PointMass.constant(2.0))))
        model = build_nicholson(NicholsonParams([4.0], [[0.0]]), mix)
        out = rhs_eval(model.system, 0.0, [1.0], HistoryFunction.table([-2.0, 0.0], [[3.0], [1.0]]))
        f = lambda u: 4 * u * math.exp(-u)  # noqa: E731
        assert out[0] == pytest.approx(0.4 * f(2.0) + 0.6 * f(3.0) - 1.0)

    def test_single_atom_mixture_matches_point_mass(self):
        params = NicholsonParams([4, 5], [[0, 0.5], [0.2, 0]])
        hist = HistoryFunction.constant([0.5, 4.0])
        a = integrate(build_nicholson(params, PointMass.constant(1.5)).system, hist, 30.0)
        b = integrate(build_nicholson(params, Mixture(((1.0, PointMass.constant(1.5)),))).system, hist, 30.0)
        assert np.max(np.abs(a.y - b.y)) <= 1e-12

    def test_out_of_range_beta_not_certifiable(self):
        model = build_model("nicholson", {"beta": [9.0], "a": [[0.0]]})
        assert not model.certifiable
        assert model.equilibrium[0] == pytest.approx(math.log(9.0))

    def test_delay_matrix_rejected(self):
        with pytest.raises(InvalidParameterError):
            build_nicholson(NicholsonParams([4.0], [[0.0]]), [[PointMass.constant(1.0)]])


class TestPairs:
    def test_sqrt_pair_rest(self):
        model = build_pair_examples("sqrt_pair", PointMass.constant(1.0))
        out = rhs_eval(model.system, 0.0, [1.0, 1.0], HistoryFunction.constant([1.0, 1.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_power_pair(self):
        model = build_pair_examples("power_pair")
        f1, f2 = model.planar
        assert f1(3.0) == 9.0 and f2(16.0) == pytest.approx(2.0)
        np.testing.assert_array_equal(F_at(model, [1.0, 1.0]), [1.0, 1.0])

    def test_sqrt_pair_initially_decreasing(self):
        model = build_pair_examples("sqrt_pair", PointMass.constant(1.0))
        out = rhs_eval(model.system, 0.0, [4.0, 4.0], HistoryFunction.constant([4.0, 4.0]))
        np.testing.assert_allclose(out, [-2.0, -2.0])

    def test_oscillatory_rates(self):
        model = build_pair_examples("sqrt_pair", rates="oscillatory")
        assert model.system.rates[0](math.pi / 2) == pytest.approx(2.1)

    def test_unknown(self):
        with pytest.raises(InvalidParameterError):
            build_pair_examples("cube_pair")


class TestSection5:
    def test_logistic(self):
        model = build_section5("logistic_patch", {"beta": [2.0], "K": 1.0})
        assert model.equilibrium[0] == pytest.approx(0.5)
        assert not model.certifiable

    def test_mackey_glass(self):
        model = build_section5("mackey_glass_patch", {"beta": [2.0], "n": 2})
        assert F_at(model, [1.0])[0] == 1.0

    def test_ricker(self):
        model = build_section5("ricker_patch", {"beta": [1.0, 1.0], "K": [2.0, 3.0]})
        np.testing.assert_array_equal(F_at(model, [2.0, 3.0]), [2.0, 3.0])

    @pytest.mark.parametrize("name", ["logistic_patch", "mackey_glass_patch", "ricker_patch"])
    def test_certifier_refuses(self, name):
        model = build_model(name, ALL_MODELS[name], INSTANT)
        with pytest.raises(UnsupportedModelError, match="open problem"):
            certify_model(model)

    def test_bad_coupling(self):
        with pytest.raises(InvalidParameterError):
            build_section5("logistic_patch", {"beta": [2.0, 2.0], "a": [[0.1, 0], [0, 0]]})


def test_unknown_model():
    with pytest.raises(InvalidParameterError, match="unknown model"):
        build_model("lotka")
