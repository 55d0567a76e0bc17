import math

import numpy as np
import pytest

from gershlip.activations import (
    InfiniteConstantsError,
    LOOSE_ENVELOPES,
    UnknownActivationError,
    activation_constants,
    activation_eval,
    default_catalog,
    get_activation,
    numeric_constants,
    slope_quadratic_form,
    verify_slope_restriction,
)


class TestEval:
    def test_relu_negative_branch(self):
        assert activation_eval(get_activation("relu"), -1.0) == 0.0

    def test_tanh_origin(self):
        assert activation_eval(get_activation("tanh"), 0.0) == 0.0

    def test_leaky_relu_negative_branch(self):
        spec = get_activation("leaky_relu", {"alpha": 0.01})
        assert activation_eval(spec, -2.0) == pytest.approx(-0.02, abs=1e-15)

    def test_vectorized(self):
        spec = get_activation("relu")
        out = activation_eval(spec, np.array([-1.0, 0.0, 2.5]))
        np.testing.assert_array_equal(out, [0.0, 0.0, 2.5])

    def test_callable_sugar(self):
        assert get_activation("relu")(3.0) == 3.0


class TestConstants:
    def test_relu_row(self):
        assert activation_constants("relu") == (1.0, 0.0, 1.0, 0.0)

    def test_hardswish_row(self):
        assert activation_constants("hardswish") == (1.5, -0.5, 1.0, -0.75)

    def test_leaky_relu_row(self):
        L, m, S, P = activation_constants("leaky_relu", {"alpha": 0.01})
        assert (L, m) == (1.0, 0.01)
        assert S == pytest.approx(1.01) and P == pytest.approx(0.01)

    def test_gelu_row_decimals(self):
        L, m, S, P = activation_constants("gelu")
        assert L == pytest.approx(1.128904145, abs=1e-9)
        assert m == pytest.approx(-0.1289041452, abs=1e-9)
        assert S == pytest.approx(1.0, abs=1e-12)
        assert P == pytest.approx(-0.145520424, abs=1e-9)

    def test_selu_row(self):
        L, m, _, _ = activation_constants("selu")
        assert L == pytest.approx(1.758099341, abs=1e-9)
        assert m == 0.0

    def test_silu_row(self):
        L, m, _, _ = activation_constants("silu")
        assert L == pytest.approx(1.099839320, abs=1e-9)
        assert m == pytest.approx(-0.09983932013, abs=1e-9)

    def test_hardsigmoid_row(self):
        L, m, _, _ = activation_constants("hardsigmoid")
        assert L == pytest.approx(1.0 / 6.0) and m == 0.0

    def test_sp_recomputed_exactly(self):
        for spec in default_catalog():
            assert spec.S == spec.L + spec.m
            assert spec.P == spec.L * spec.m

    def test_hardshrink_rejected(self):
        with pytest.raises(InfiniteConstantsError, match="infinite"):
            activation_constants("hardshrink")

    def test_rrelu_rejected(self):
        with pytest.raises(InfiniteConstantsError, match="infinite"):
            get_activation("rrelu")

    def test_unknown_name_rejected(self):
        with pytest.raises(UnknownActivationError):
            activation_constants("swishish")

    def test_elu_alpha_scaling(self):
        L, m, _, _ = activation_constants("elu", {"alpha": 2.0})
        assert (L, m) == (2.0, 0.0)

    def test_unknown_param_rejected(self):
        with pytest.raises(ValueError, match="does not take"):
            get_activation("relu", {"alpha": 0.5})

    def test_first_layer_flags(self):
        assert not get_activation("leaky_relu").first_layer_ok  # P > 0
        assert not get_activation("prelu").first_layer_ok
        assert get_activation("relu").first_layer_ok
        assert get_activation("hardswish").first_layer_ok

    def test_finite_invariant(self):
        for spec in default_catalog():
            assert math.isfinite(spec.L) and math.isfinite(spec.m)
            assert spec.L >= spec.m


class TestSlopeRestriction:
    def test_relu_quotients(self):
        rep = verify_slope_restriction(get_activation("relu"), 10_000, (-5, 5), seed=0)
        assert rep.violations == 0
        assert rep.min_quotient >= 0.0 and rep.max_quotient <= 1.0

    def test_tanh_quotients(self):
        rep = verify_slope_restriction(get_activation("tanh"), 10_000, (-5, 5), seed=1)
        assert rep.violations == 0
        assert 0.0 <= rep.min_quotient and rep.max_quotient <= 1.0

    def test_sigmoid_quotients_loose_bound(self):
        # sup sigmoid' = 1/4, well under the stored envelope L = 1
        rep = verify_slope_restriction(get_activation("sigmoid"), 20_000, (-5, 5), seed=2)
        assert rep.violations == 0
        assert rep.max_quotient == pytest.approx(0.25, abs=0.01)
        assert rep.max_quotient <= get_activation("sigmoid").L

    @pytest.mark.parametrize("spec", default_catalog(), ids=lambda s: s.name)
    def test_every_activation_slope_restricted(self, spec):
        rep = verify_slope_restriction(spec, 4000, (-8, 8), seed=7)
        assert rep.violations == 0

    @pytest.mark.parametrize("spec", default_catalog(), ids=lambda s: s.name)
    def test_quadratic_form_nonpositive(self, spec):
        rng = np.random.default_rng(11)
        v, vp = rng.uniform(-6, 6, 500), rng.uniform(-6, 6, 500)
        form = slope_quadratic_form(spec, v, vp)
        assert np.all(form <= 1e-12)

    def test_sample_count_validated(self):
        with pytest.raises(ValueError):
            verify_slope_restriction(get_activation("relu"), 1, (-1, 1), seed=0)

    def test_domain_validated(self):
        with pytest.raises(ValueError):
            verify_slope_restriction(get_activation("relu"), 10, (2, 2), seed=0)


class TestDerivatives:
    @pytest.mark.parametrize("spec", default_catalog(), ids=lambda s: s.name)
    def test_derivative_matches_central_differences(self, spec):
        # probe away from kinks (irrational offsets dodge the piecewise joints)
        x = np.linspace(-6.1237, 6.0891, 97)
        h = 1e-6
        fd = (spec(x + h) - spec(x - h)) / (2 * h)
        np.testing.assert_allclose(spec.derivative(x), fd, rtol=1e-5, atol=1e-7)


class TestNumericConstants:
    def test_hardswish(self):
        L_hat, m_hat = numeric_constants(get_activation("hardswish"))
        assert L_hat == pytest.approx(1.5, abs=1e-3)
        assert m_hat == pytest.approx(-0.5, abs=1e-3)

    def test_silu(self):
        L_hat, m_hat = numeric_constants(get_activation("silu"))
        assert L_hat == pytest.approx(1.099839, abs=1e-3)
        assert m_hat == pytest.approx(-0.099839, abs=1e-3)

    def test_relu_exact(self):
        L_hat, m_hat = numeric_constants(get_activation("relu"))
        assert L_hat == pytest.approx(1.0, abs=1e-9)
        assert m_hat == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("spec", default_catalog(), ids=lambda s: s.name)
    def test_containment(self, spec):
        # numeric slope extremes always stay inside the stored envelope
        L_hat, m_hat = numeric_constants(spec)
        assert m_hat >= spec.m - 1e-3
        assert L_hat <= spec.L + 1e-3

    def test_sigmoid_is_loose(self):
        L_hat, _ = numeric_constants(get_activation("sigmoid"))
        assert L_hat == pytest.approx(0.25, abs=1e-3)
        assert "sigmoid" in LOOSE_ENVELOPES

    def test_step_validated(self):
        with pytest.raises(ValueError):
            numeric_constants(get_activation("relu"), step=0.01)
