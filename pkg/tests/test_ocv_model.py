"""Combined+3 model: scaling, regressor, evaluation and the parameter file."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocvkit.battery_model import GENERATIVE_K
from ocvkit.ocv_model import (
    OcvParameters,
    evaluate_ocv,
    evaluate_ocv_derivative,
    format_parameters,
    load_parameters,
    parse_parameters,
    predict_terminal_voltage,
    regressor,
    save_parameters,
    scale_soc,
)

epsilons = st.floats(0.0, 0.499, allow_nan=False)
socs = st.floats(0.0, 1.0, allow_nan=False)


class TestScaleSoc:
    def test_lower_endpoint(self):
        assert scale_soc(0.0, 0.175) == pytest.approx(0.175, abs=1e-15)

    def test_upper_endpoint(self):
        assert scale_soc(1.0, 0.175) == pytest.approx(0.825, abs=1e-15)

    @given(epsilons)
    def test_midpoint_is_fixed(self, eps):
        assert scale_soc(0.5, eps) == pytest.approx(0.5, abs=1e-15)

    @given(socs, socs, epsilons)
    def test_affine_increasing_onto_window(self, a, b, eps):
        sa, sb = scale_soc(a, eps), scale_soc(b, eps)
        assert eps - 1e-15 <= sa <= 1 - eps + 1e-15
        if a < b:
            assert sa < sb or (b - a) * (1 - 2 * eps) < 1e-15

    def test_tolerance_band(self):
        assert scale_soc(-5e-10) == pytest.approx(0.175)
        assert scale_soc(1 + 5e-10) == pytest.approx(0.825)
        with pytest.raises(ValueError):
            scale_soc(-1e-6)
        with pytest.raises(ValueError):
            scale_soc(np.array([0.2, 1.001]))

    def test_epsilon_must_stay_below_half(self):
        with pytest.raises(ValueError):
            scale_soc(0.3, 0.5)


class TestRegressor:
    def test_midpoint_row(self):
        ln_half = math.log(0.5)
        np.testing.assert_allclose(regressor(0.5), [1, 2, 4, 8, 16, 0.5, ln_half, ln_half], rtol=1e-15)

    def test_endpoint_row_finite_and_bounded(self):
        row = regressor(0.175)
        assert np.all(np.isfinite(row))
        assert row[4] == pytest.approx(0.175**-4, rel=1e-15)
        assert round(row[4], 1) == 1066.2
        assert np.max(np.abs(regressor(np.array([0.175, 0.825])))) == row[4]

    @pytest.mark.parametrize("sp", [0.0, 1.0, -0.1, 1.2, float("nan")])
    def test_rejects_unscaled_boundaries(self, sp):
        with pytest.raises(ValueError):
            regressor(sp)

    def test_vector_input_shape(self):
        assert regressor(np.linspace(0.2, 0.8, 5)).shape == (5, 8)


def _straight_line(k, s, eps):
    sp = (1 - 2 * eps) * s + eps
    return (k[0] + k[1] / sp + k[2] / sp**2 + k[3] / sp**3 + k[4] / sp**4
            + k[5] * sp + k[6] * math.log(sp) + k[7] * math.log(1 - sp))


class TestEvaluate:
    @given(socs)
    def test_constant_model(self, s):
        assert evaluate_ocv(OcvParameters(k=[1, 0, 0, 0, 0, 0, 0, 0]), s) == 1.0

    def test_pure_linear_term_without_scaling(self):
        p = OcvParameters(k=[0, 0, 0, 0, 0, 1, 0, 0], epsilon=0.0)
        assert evaluate_ocv(p, 0.3) == pytest.approx(0.3, abs=1e-15)

    @given(socs)
    def test_matches_independent_evaluation(self, s):
        p = OcvParameters(k=GENERATIVE_K)
        assert evaluate_ocv(p, s) == pytest.approx(_straight_line(GENERATIVE_K, s, 0.175), rel=1e-12)

    def test_generative_curve_at_half(self):
        p = OcvParameters(k=GENERATIVE_K)
        assert evaluate_ocv(p, 0.5) == pytest.approx(_straight_line(GENERATIVE_K, 0.5, 0.175), rel=1e-12)

    def test_derivative_matches_central_difference(self):
        rng = np.random.default_rng(0)
        p = OcvParameters(k=GENERATIVE_K)
        h = 1e-6
        for s in rng.uniform(0.01, 0.99, 20):
            fd = (evaluate_ocv(p, s + h) - evaluate_ocv(p, s - h)) / (2 * h)
            assert evaluate_ocv_derivative(p, s) == pytest.approx(fd, rel=1e-6)

    def test_vectorised(self):
        p = OcvParameters(k=GENERATIVE_K)
        s = np.linspace(0, 1, 11)
        np.testing.assert_allclose(evaluate_ocv(p, s), [evaluate_ocv(p, x) for x in s], rtol=1e-14)


class TestPredictTerminalVoltage:
    p = OcvParameters(k=GENERATIVE_K, r0h_Ohm=0.08)

    def test_zero_current_is_ocv(self):
        assert predict_terminal_voltage(self.p, 0.4, 0.0) == evaluate_ocv(self.p, 0.4)

    def test_discharge_drop(self):
        assert predict_terminal_voltage(self.p, 0.4, -0.0625) == pytest.approx(evaluate_ocv(self.p, 0.4) - 0.005, abs=1e-14)

    @given(socs, st.floats(0.001, 5.0))
    def test_charge_discharge_gap(self, s, i):
        gap = predict_terminal_voltage(self.p, s, i) - predict_terminal_voltage(self.p, s, -i)
        assert gap == pytest.approx(2 * i * 0.08, rel=1e-9, abs=1e-12)


class TestParameters:
    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            OcvParameters(k=[1, 0, 0, 0, 0, 0, 0, float("inf")])
        with pytest.raises(ValueError):
            OcvParameters(k=[1] * 7)
        with pytest.raises(ValueError):
            OcvParameters(k=[1] * 8, epsilon=0.5)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=8, max_size=8), st.floats(-1, 1), epsilons)
    def test_text_round_trip_is_bit_exact(self, k, r0h, eps):
        p = OcvParameters(k=k, r0h_Ohm=r0h, epsilon=eps, residual_rms_V=1.25e-4, condition=6.2e6, n_rows=7376, cell_id="c1")
        assert parse_parameters(format_parameters(p)) == p

    def test_file_round_trip(self, tmp_path):
        p = OcvParameters(k=GENERATIVE_K, r0h_Ohm=0.1)
        save_parameters(p, tmp_path / "p.txt")
        assert load_parameters(tmp_path / "p.txt") == p
        assert (tmp_path / "p.txt").read_text().startswith("# format=1\n")

    def test_missing_field_named(self):
        text = format_parameters(OcvParameters(k=GENERATIVE_K)).replace("k3 = ", "kk = ")
        with pytest.raises(ValueError, match="k3"):
            parse_parameters(text)
