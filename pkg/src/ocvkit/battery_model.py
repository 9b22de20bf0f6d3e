"""Equivalent-circuit cell simulator used as ground truth.

The circuit is EMF + hysteresis source + R_ohmic + two RC pairs (SEI and
charge-transfer/double-layer). Setting both RC resistances to zero gives the
R-int model. Positive current charges the cell.

State transitions are pure functions (:func:`step`, :func:`terminal_voltage`);
:class:`Cell` wraps a state, its ground truth and an injected RNG for the
protocol executors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.optimize import brentq

from .ocv_model import DEFAULT_EPSILON, OcvParameters, evaluate_ocv_extended


class SocClampWarning(UserWarning):
    """True SOC left [0, 1] and was clamped."""


# -- hysteresis variants ---------------------------------------------------------


@dataclass(frozen=True)
class Resistive:
    """h = i * R_h (zero at rest)."""

    r_h_Ohm: float

    def __post_init__(self):
        if not (self.r_h_Ohm >= 0.0 and math.isfinite(self.r_h_Ohm)):
            raise ValueError("r_h_Ohm must be finite and >= 0")


@dataclass(frozen=True)
class ConstantMagnitude:
    """h = M * sign(i); the last sign is held while the current is zero."""

    m_V: float

    def __post_init__(self):
        if not (self.m_V >= 0.0 and math.isfinite(self.m_V)):
            raise ValueError("m_V must be finite and >= 0")


Hysteresis = Union[Resistive, ConstantMagnitude]


def hysteresis_for(model: Hysteresis, current_A: float, h_prev: float) -> float:
    if isinstance(model, Resistive):
        return current_A * model.r_h_Ohm
    if current_A > 0.0:
        return model.m_V
    if current_A < 0.0:
        return -model.m_V
    return h_prev


# -- OCV curves ----------------------------------------------------------------


class PiecewiseLinearOcv:
    """Monotone OCV table with linear interpolation."""

    def __init__(self, soc, volts):
        self.soc = np.asarray(soc, dtype=float)
        self.volts = np.asarray(volts, dtype=float)
        if self.soc.ndim != 1 or self.soc.shape != self.volts.shape or self.soc.size < 2:
            raise ValueError("OCV table needs matching 1-D soc/volts arrays with >= 2 points")
        if not (np.all(np.isfinite(self.soc)) and np.all(np.isfinite(self.volts))):
            raise ValueError("OCV table entries must be finite")
        if abs(self.soc[0]) > 1e-12 or abs(self.soc[-1] - 1.0) > 1e-12:
            raise ValueError("OCV table must span SOC 0 to 1")
        if np.any(np.diff(self.soc) <= 0):
            raise ValueError("OCV table SOC must be strictly increasing")

    def __call__(self, s):
        out = np.interp(s, self.soc, self.volts)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"PiecewiseLinearOcv(n={self.soc.size})"


class Combined3Ocv:
    """Generative OCV: a Combined+3 curve laid over a true-SOC window.

    ``true_ocv(s) = C3(params, (s - soc_lo) / (soc_hi - soc_lo))``. With the
    default window (0, 1) the true SOC is the model SOC itself. A narrower
    window lets protocol voltage limits land exactly on the model's 0 and 1
    without the true SOC hitting its physical bounds.
    """

    def __init__(self, params: OcvParameters, soc_lo: float = 0.0, soc_hi: float = 1.0):
        if not soc_hi > soc_lo:
            raise ValueError("soc_hi must exceed soc_lo")
        self.params = params
        self.soc_lo = float(soc_lo)
        self.soc_hi = float(soc_hi)

    def relative_soc(self, s):
        return (np.asarray(s, dtype=float) - self.soc_lo) / (self.soc_hi - self.soc_lo)

    def __call__(self, s):
        return evaluate_ocv_extended(self.params, self.relative_soc(s))

    def __repr__(self):
        return f"Combined3Ocv(window=({self.soc_lo}, {self.soc_hi}), eps={self.params.epsilon})"


OcvCurve = Callable[[float], float]


def _check_monotone(curve: OcvCurve, n: int = 2001) -> None:
    if isinstance(curve, PiecewiseLinearOcv):
        v = curve.volts
    else:
        v = np.asarray(curve(np.linspace(0.0, 1.0, n)), dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("true OCV must be finite on [0, 1]")
    if np.any(np.diff(v) <= 0.0):
        raise ValueError("true OCV must be strictly increasing on [0, 1]")


# -- ground truth and state ------------------------------------------------------


@dataclass(frozen=True)
class BatteryGroundTruth:
    capacity_As: float
    r_ohmic_Ohm: float
    true_ocv: OcvCurve
    ocv_min_V: float
    ocv_max_V: float
    r_sei_Ohm: float = 0.0
    c_sei_F: float = 1.0
    r_ct_Ohm: float = 0.0
    c_dl_F: float = 1.0
    hysteresis: Hysteresis = Resistive(0.0)
    noise_std_V: float = 0.0
    # permits voltage limits outside [true_ocv(0), true_ocv(1)]
    limits_outside_ocv: bool = False

    def __post_init__(self):
        if not (self.capacity_As > 0 and math.isfinite(self.capacity_As)):
            raise ValueError("capacity_As must be positive")
        for name in ("r_ohmic_Ohm", "r_sei_Ohm", "r_ct_Ohm"):
            val = getattr(self, name)
            if not (val >= 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be finite and >= 0")
        for name in ("c_sei_F", "c_dl_F"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive")
        if not (self.noise_std_V >= 0 and math.isfinite(self.noise_std_V)):
            raise ValueError("noise_std_V must be finite and >= 0")
        if not self.ocv_min_V < self.ocv_max_V:
            raise ValueError("ocv_min_V must be below ocv_max_V")
        _check_monotone(self.true_ocv)
        if not self.limits_outside_ocv:
            lo, hi = self.true_ocv(0.0), self.true_ocv(1.0)
            if not (lo <= self.ocv_min_V and self.ocv_max_V <= hi):
                raise ValueError(
                    f"voltage limits [{self.ocv_min_V}, {self.ocv_max_V}] not inside true OCV "
                    f"range [{lo:.6g}, {hi:.6g}]; set limits_outside_ocv to allow"
                )

    @property
    def has_rc(self) -> bool:
        return self.r_sei_Ohm > 0.0 or self.r_ct_Ohm > 0.0

    @property
    def r_h_Ohm(self) -> float:
        return self.hysteresis.r_h_Ohm if isinstance(self.hysteresis, Resistive) else 0.0


def reduce_to_rint(truth: BatteryGroundTruth) -> float:
    """Total R-int resistance R0 = R_ohmic + R_SEI + R_CT."""
    return truth.r_ohmic_Ohm + truth.r_sei_Ohm + truth.r_ct_Ohm


@dataclass(frozen=True)
class CellState:
    soc_true: float
    v_sei_V: float = 0.0
    v_dl_V: float = 0.0
    h_V: float = 0.0
    t_s: float = 0.0
    clamp_events: int = 0


def _rc_update(v: float, r: float, c: float, i: float, dt: float) -> float:
    if r == 0.0:
        return 0.0
    a = math.exp(-dt / (r * c))
    return v * a + r * (1.0 - a) * i


def terminal_voltage(
    state: CellState,
    truth: BatteryGroundTruth,
    current_A: float,
    rng: np.random.Generator | None = None,
    hold_hysteresis: bool = False,
) -> float:
    """Instantaneous terminal voltage with ``current_A`` flowing.

    RC branch voltages are continuous, so they are taken from ``state``.
    Noise is added only when an RNG is supplied.
    """
    if not math.isfinite(current_A):
        raise ValueError("current must be finite")
    h = state.h_V if hold_hysteresis else hysteresis_for(truth.hysteresis, current_A, state.h_V)
    v = truth.true_ocv(state.soc_true) + h + current_A * truth.r_ohmic_Ohm + state.v_sei_V + state.v_dl_V
    if rng is not None and truth.noise_std_V > 0.0:
        v += rng.normal(0.0, truth.noise_std_V)
    return float(v)


def step(
    state: CellState,
    truth: BatteryGroundTruth,
    current_A: float,
    dt_s: float,
    rng: np.random.Generator | None = None,
    hold_hysteresis: bool = False,
) -> tuple[CellState, float]:
    """Hold ``current_A`` for ``dt_s`` seconds.

    Returns the new state and the terminal voltage at the end of the hold.
    Clamping of the true SOC increments ``clamp_events`` on the new state.
    """
    if not (math.isfinite(dt_s) and dt_s > 0.0):
        raise ValueError("dt_s must be finite and positive")
    if not math.isfinite(current_A):
        raise ValueError("current must be finite")
    soc = state.soc_true + current_A * dt_s / truth.capacity_As
    events = state.clamp_events
    if soc < 0.0 or soc > 1.0:
        soc = min(max(soc, 0.0), 1.0)
        events += 1
    h = state.h_V if hold_hysteresis else hysteresis_for(truth.hysteresis, current_A, state.h_V)
    new = CellState(
        soc_true=soc,
        v_sei_V=_rc_update(state.v_sei_V, truth.r_sei_Ohm, truth.c_sei_F, current_A, dt_s),
        v_dl_V=_rc_update(state.v_dl_V, truth.r_ct_Ohm, truth.c_dl_F, current_A, dt_s),
        h_V=h,
        t_s=state.t_s + dt_s,
        clamp_events=events,
    )
    return new, terminal_voltage(new, truth, current_A, rng, hold_hysteresis)


# -- stateful wrapper for protocol executors -----------------------------------------


class Cell:
    """A simulated cell owned by one protocol execution at a time.

    Control decisions use :meth:`true_voltage` and :meth:`predict_voltage`
    (noise-free); :meth:`measure` is what gets logged.
    """

    def __init__(
        self,
        truth: BatteryGroundTruth,
        soc: float = 0.5,
        rng: np.random.Generator | None = None,
        state: CellState | None = None,
    ):
        self.truth = truth
        self.state = state if state is not None else CellState(soc_true=float(soc))
        self.rng = rng if rng is not None else np.random.default_rng(0)

    @property
    def soc(self) -> float:
        return self.state.soc_true

    @property
    def t(self) -> float:
        return self.state.t_s

    def measure(self, current_A: float, hold_hysteresis: bool = False) -> float:
        return terminal_voltage(self.state, self.truth, current_A, self.rng, hold_hysteresis)

    def true_voltage(self, current_A: float, hold_hysteresis: bool = False) -> float:
        return terminal_voltage(self.state, self.truth, current_A, None, hold_hysteresis)

    def predict_voltage(self, current_A: float, dt_s: float, hold_hysteresis: bool = False) -> float:
        """Noise-free voltage after holding ``current_A`` for ``dt_s``; state untouched."""
        if dt_s == 0.0:
            return self.true_voltage(current_A, hold_hysteresis)
        _, v = step(self.state, self.truth, current_A, dt_s, None, hold_hysteresis)
        return v

    def advance(self, current_A: float, dt_s: float, hold_hysteresis: bool = False) -> None:
        before = self.state.clamp_events
        self.state, _ = step(self.state, self.truth, current_A, dt_s, None, hold_hysteresis)
        if self.state.clamp_events > before:
            warnings.warn(
                f"true SOC clamped at t={self.state.t_s:.3f} s (soc={self.state.soc_true})",
                SocClampWarning,
                stacklevel=2,
            )

    def cv_current(self, v_set: float, dt_s: float) -> float:
        """Charging current that holds the terminal voltage at ``v_set``.

        R-int cells use the instantaneous closed form; cells with RC branches
        solve the one-step voltage prediction. Returns 0 when no positive
        current satisfies the set point.
        """
        truth, st = self.truth, self.state
        if not truth.has_rc:
            emf = truth.true_ocv(st.soc_true)
            if isinstance(truth.hysteresis, Resistive):
                r = truth.r_ohmic_Ohm + truth.hysteresis.r_h_Ohm
                head = v_set - emf
            else:
                r = truth.r_ohmic_Ohm
                head = v_set - emf - truth.hysteresis.m_V
            if r <= 0.0:
                raise ValueError("CV regulation needs a positive series resistance")
            return max(head / r, 0.0)

        def gap(i):
            return self.predict_voltage(i, dt_s) - v_set

        if gap(0.0) >= 0.0:
            return 0.0
        hi = 1.0
        while gap(hi) < 0.0:
            hi *= 2.0
            if hi > 1e6:
                raise RuntimeError("CV current search diverged")
        return brentq(gap, 0.0, hi, xtol=1e-15, rtol=1e-14)


# -- stock cells ------------------------------------------------------------------


def default_ocv_curve(s):
    """Smooth strictly increasing curve, about 2.8 V empty to 4.2 V full."""
    s = np.asarray(s, dtype=float)
    return 2.8 + 0.6 * (1.0 - np.exp(-s / 0.04)) + 0.70 * s + 0.10 * (np.exp((s - 1.0) / 0.25) - math.exp(-4.0))


def default_ocv_table(n: int = 201) -> PiecewiseLinearOcv:
    s = np.linspace(0.0, 1.0, n)
    return PiecewiseLinearOcv(s, default_ocv_curve(s))


def default_cell(**overrides) -> BatteryGroundTruth:
    """4 Ah cell with two RC pairs and resistive hysteresis."""
    kw = dict(
        capacity_As=14400.0,
        r_ohmic_Ohm=0.05,
        r_sei_Ohm=0.02,
        c_sei_F=1000.0,
        r_ct_Ohm=0.03,
        c_dl_F=20000.0,
        hysteresis=Resistive(0.02),
        true_ocv=default_ocv_table(),
        ocv_min_V=2.9,
        ocv_max_V=4.18,
        noise_std_V=0.0002,
    )
    kw.update(overrides)
    return BatteryGroundTruth(**kw)


# Combined+3 least-squares approximation of default_ocv_curve over the true-SOC
# window (0.02, 0.98); strictly increasing on the whole true-SOC axis.
GENERATIVE_K = (
    3.07693563,
    -3.09424632,
    0.434133391,
    -0.0296038782,
    -0.000202829785,
    3.86075676,
    -4.89241574,
    -0.0798280937,
)
GENERATIVE_WINDOW = (0.02, 0.98)


def combined3_cell(
    test_current_A: float,
    k=GENERATIVE_K,
    epsilon: float = DEFAULT_EPSILON,
    window: tuple[float, float] = GENERATIVE_WINDOW,
    r0_Ohm: float = 0.08,
    hysteresis: Hysteresis = Resistive(0.02),
    **overrides,
) -> BatteryGroundTruth:
    """R-int cell whose OCV is an exact Combined+3 curve.

    Voltage limits are placed so that a constant-current test at
    ``test_current_A`` stops exactly at model SOC 0 and 1, i.e. the relative
    SOC recovered by Coulomb counting coincides with the model's SOC axis.
    """
    params = OcvParameters(k=k, epsilon=epsilon)
    ocv = Combined3Ocv(params, *window)
    drop = abs(test_current_A) * r0_Ohm
    if isinstance(hysteresis, Resistive):
        drop += abs(test_current_A) * hysteresis.r_h_Ohm
    else:
        drop += hysteresis.m_V
    kw = dict(
        capacity_As=14400.0,
        r_ohmic_Ohm=r0_Ohm,
        hysteresis=hysteresis,
        true_ocv=ocv,
        ocv_min_V=evaluate_ocv_extended(params, 0.0) - drop,
        ocv_max_V=evaluate_ocv_extended(params, 1.0) + drop,
        noise_std_V=0.0,
    )
    # a large drop can push a limit past the OCV at true SOC 0 or 1
    kw["limits_outside_ocv"] = not (ocv(0.0) <= kw["ocv_min_V"] and kw["ocv_max_V"] <= ocv(1.0))
    kw.update(overrides)
    return BatteryGroundTruth(**kw)

