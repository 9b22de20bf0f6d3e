"""CC-CV charging and the low-rate OCV test as deterministic executors.

Record semantics: a record at time t carries the current applied from t until
the next record and the voltage measured right after that current was set.
Control decisions (cut-offs, CV regulation) use the noise-free cell voltage,
i.e. an ideal cycler; the logged voltage is the noisy measurement.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .battery_model import Cell, reduce_to_rint
from .resistance import DEFAULT_PULSE_DT_S, PulseKind, PulseProfile, generate_pulse
from .soc import CHARGE, DISCHARGE, PULSE, REST, TimeSeriesLog

ROOT_XTOL_S = 1e-10


class ProtocolError(RuntimeError):
    """Protocol aborted; ``log`` holds the records written so far."""

    def __init__(self, message: str, log: TimeSeriesLog | None = None, phase: str | None = None):
        super().__init__(message)
        self.log = log
        self.phase = phase


class ProtocolTimeout(ProtocolError):
    pass


class ProtocolSafetyError(ProtocolError):
    pass


class ProtocolCancelled(ProtocolError):
    pass


@dataclass(frozen=True)
class ChargeConfig:
    i_cc_A: float
    i_sd_A: float
    ocv_max_V: float
    ocv_min_V: float
    r0_hat_Ohm: float
    control_dt_s: float = 1.0
    max_duration_s: float = 48 * 3600.0

    def __post_init__(self):
        if not self.r0_hat_Ohm > 0:
            raise ValueError("r0_hat_Ohm must be positive")
        if not self.ocv_min_V < self.ocv_max_V:
            raise ValueError("ocv_min_V must be below ocv_max_V")
        if not (0 < self.i_sd_A < self.i_cc_A <= self.i_max_A):
            raise ValueError(
                f"need 0 < i_sd ({self.i_sd_A}) < i_cc ({self.i_cc_A}) <= i_max ({self.i_max_A:.6g})"
            )
        if not self.control_dt_s > 0:
            raise ValueError("control_dt_s must be positive")

    @property
    def i_max_A(self) -> float:
        return (self.ocv_max_V - self.ocv_min_V) / self.r0_hat_Ohm

    @property
    def v_cv1_V(self) -> float:
        """Rested voltage at or above which charging starts directly in CV."""
        return self.ocv_max_V - self.i_cc_A * self.r0_hat_Ohm


@dataclass(frozen=True)
class OcvTestConfig:
    n: float
    temperature_C: float = 25.0
    sample_dt_s: float = 60.0
    rest_s: float = 3600.0
    control_dt_s: float = 1.0
    capacity_As: float | None = None  # rated capacity; defaults to the cell's
    r0_hat_Ohm: float | None = None  # defaults to the cell's R-int resistance
    pulse_kind: PulseKind = PulseKind.DISCHARGE_AT_FULL
    pulse_i_b_A: float = 1.0
    pulse_dt_s: float = DEFAULT_PULSE_DT_S
    pulse_cycles: int = 1
    switch_latency_s: float = 1e-6
    duration_margin: float = 1.5

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("N must be positive")
        if not self.sample_dt_s > 0:
            raise ValueError("sample_dt_s must be positive")
        object.__setattr__(self, "pulse_kind", PulseKind(self.pulse_kind))


class _LogBuilder:
    def __init__(self, cancel: threading.Event | None = None):
        self.t: list[float] = []
        self.i: list[float] = []
        self.v: list[float] = []
        self.mode: list[str] = []
        self.events: list[str] = []
        self.meta: dict = {}
        self.cancel = cancel

    def record(self, cell: Cell, current: float, mode: str, hold_hysteresis: bool = False) -> float:
        v = cell.measure(current, hold_hysteresis)
        self.t.append(cell.t)
        self.i.append(float(current))
        self.v.append(v)
        self.mode.append(mode)
        return v

    def check_cancel(self, phase: str) -> None:
        if self.cancel is not None and self.cancel.is_set():
            raise ProtocolCancelled(f"cancelled during {phase}", self.build(), phase)

    def build(self) -> TimeSeriesLog:
        return TimeSeriesLog(np.array(self.t), np.array(self.i), np.array(self.v), np.array(self.mode, dtype="<U1"),
                             dict(self.meta), list(self.events))


def _beyond(v: float, limit: float, current: float) -> bool:
    return v >= limit if current > 0 else v <= limit


def _cc_until(
    cell: Cell,
    log: _LogBuilder,
    current: float,
    v_limit: float,
    dt: float,
    mode: str,
    phase: str,
    max_duration_s: float,
    cutoff_record: bool,
    latency_s: float = 0.0,
) -> None:
    """Constant current until the terminal voltage reaches ``v_limit``.

    The crossing is located inside the step, so the cell stops exactly at the
    limit. With ``cutoff_record`` the crossing instant is logged, then the
    current keeps flowing for ``latency_s`` while the cycler switches.
    """
    t_start = cell.t
    if _beyond(cell.true_voltage(current), v_limit, current):
        if cutoff_record:
            log.record(cell, current, mode)
            if latency_s > 0:
                cell.advance(current, latency_s)
        return
    while True:
        log.check_cancel(phase)
        if cell.t - t_start > max_duration_s:
            raise ProtocolTimeout(f"{phase}: no voltage cut-off within {max_duration_s:.0f} s", log.build(), phase)
        log.record(cell, current, mode)
        if _beyond(cell.predict_voltage(current, dt), v_limit, current):
            tau = brentq(lambda s: cell.predict_voltage(current, s) - v_limit, 0.0, dt, xtol=ROOT_XTOL_S)
            t_cut = cell.t + tau
            if t_cut > cell.t:
                cell.advance(current, tau)
                if cutoff_record:
                    log.record(cell, current, mode)
            if latency_s > 0 and cutoff_record:
                cell.advance(current, latency_s)
            return
        cell.advance(current, dt)


def _cv_hold(
    cell: Cell,
    log: _LogBuilder,
    v_set: float,
    i_sd: float,
    dt: float,
    i_max: float,
    max_duration_s: float,
) -> None:
    t_start = cell.t
    while True:
        log.check_cancel("CV")
        if cell.t - t_start > max_duration_s:
            raise ProtocolTimeout(f"CV: current did not fall below {i_sd} A within {max_duration_s:.0f} s",
                                  log.build(), "CV")
        i = cell.cv_current(v_set, dt)
        if i > i_max:
            log.events.append(f"t={cell.t!r}: CV current {i!r} A clipped to i_max {i_max!r} A")
            i = i_max
        if i <= i_sd:
            return
        log.record(cell, i, CHARGE)
        start = cell.state
        cell.advance(i, dt)
        if cell.cv_current(v_set, dt) > i_sd:
            continue
        # current drops through i_sd inside this step: stop exactly there
        def excess(s):
            cell.state = start
            if s > 0:
                cell.advance(i, s)
            return cell.cv_current(v_set, dt) - i_sd

        tau = brentq(excess, 0.0, dt, xtol=ROOT_XTOL_S)
        cell.state = start
        cell.advance(i, tau)
        return


def cv_hold(
    cell: Cell,
    v_set: float,
    i_sd: float,
    control_dt_s: float = 1.0,
    i_max: float = math.inf,
    max_duration_s: float = 48 * 3600.0,
) -> TimeSeriesLog:
    """Hold ``v_set`` until the regulating current falls to ``i_sd``.

    Each control step applies the current that pins the cell voltage at the set
    point; a current above ``i_max`` is clipped and noted in ``log.events``.
    """
    log = _LogBuilder()
    _cv_hold(cell, log, v_set, i_sd, control_dt_s, i_max, max_duration_s)
    return log.build()


def _cccv(cell: Cell, config: ChargeConfig, log: _LogBuilder) -> None:
    v_rest = cell.true_voltage(0.0)
    log.meta["cccv_rest_voltage_V"] = v_rest
    if v_rest < config.v_cv1_V:
        if cell.true_voltage(config.i_cc_A) > config.ocv_max_V + 1e-9:
            raise ProtocolSafetyError(
                f"CC: terminal voltage {cell.true_voltage(config.i_cc_A):.4f} V exceeds OCV_max "
                f"{config.ocv_max_V} V at the first control step; R0_hat is too small",
                log.build(),
                "CC",
            )
        _cc_until(cell, log, config.i_cc_A, config.ocv_max_V, config.control_dt_s, CHARGE, "CC",
                  config.max_duration_s, cutoff_record=False)
    else:
        log.events.append(f"t={cell.t!r}: rested voltage {v_rest!r} V >= v_CV1; CC skipped")
    _cv_hold(cell, log, config.ocv_max_V, config.i_sd_A, config.control_dt_s, config.i_max_A,
             config.max_duration_s)


def cccv_charge(cell: Cell, config: ChargeConfig, cancel: threading.Event | None = None) -> TimeSeriesLog:
    """Charge with CC at ``i_cc`` up to OCV_max, then CV until the current is below ``i_sd``.

    A rested voltage at or above v_CV1 = OCV_max - i_cc * R0_hat starts directly
    in CV. The last record is a zero-current rest sample at the termination
    instant, so ``t_s[-1] - t_s[0]`` is the charge time.
    """
    log = _LogBuilder(cancel)
    _cccv(cell, config, log)
    log.record(cell, 0.0, REST)
    return log.build()


def _rest(cell: Cell, log: _LogBuilder, duration_s: float, sample_dt_s: float) -> None:
    end = cell.t + duration_s
    n = int(math.ceil(duration_s / sample_dt_s - 1e-9))
    for k in range(n):
        log.check_cancel("rest")
        log.record(cell, 0.0, REST)
        cell.advance(0.0, min(sample_dt_s, end - cell.t) if k == n - 1 else sample_dt_s)


def apply_pulse(cell: Cell, profile: PulseProfile, log: _LogBuilder | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Run a pulse profile; returns (currents, measured voltages).

    The hysteresis state is held during the pulse, so E stays the EMF plus the
    pre-pulse hysteresis voltage.
    """
    volts = np.empty(len(profile))
    for k, i in enumerate(profile.samples):
        if log is not None:
            log.check_cancel("pulse")
            volts[k] = log.record(cell, float(i), PULSE, hold_hysteresis=True)
        else:
            volts[k] = cell.measure(float(i), hold_hysteresis=True)
        cell.advance(float(i), profile.dt_s, hold_hysteresis=True)
    return profile.samples.copy(), volts


def low_rate_ocv_test(cell: Cell, config: OcvTestConfig, cancel: threading.Event | None = None) -> TimeSeriesLog:
    """Full low-rate OCV test.

    Order: CC-CV charge (1C, C/N); rest; CC discharge at C/N to OCV_min; CC
    charge at C/N to OCV_max (both sampled every ``sample_dt_s``); rest;
    resistance pulse test.
    """
    truth = cell.truth
    log = _LogBuilder(cancel)
    log.meta["temperature_C"] = config.temperature_C
    log.meta["n"] = config.n
    capacity = config.capacity_As if config.capacity_As is not None else truth.capacity_As
    r0_hat = config.r0_hat_Ohm if config.r0_hat_Ohm is not None else reduce_to_rint(truth)
    one_c = capacity / 3600.0
    i_low = one_c / config.n
    guard = config.duration_margin * config.n * 3600.0

    charge = ChargeConfig(one_c, i_low, truth.ocv_max_V, truth.ocv_min_V, r0_hat, config.control_dt_s)
    _cccv(cell, charge, log)
    _rest(cell, log, config.rest_s, config.sample_dt_s)
    _cc_until(cell, log, -i_low, truth.ocv_min_V, config.sample_dt_s, DISCHARGE, "discharge", guard,
              cutoff_record=True, latency_s=config.switch_latency_s)
    _cc_until(cell, log, i_low, truth.ocv_max_V, config.sample_dt_s, CHARGE, "charge", guard,
              cutoff_record=True, latency_s=config.switch_latency_s)
    _rest(cell, log, config.rest_s, config.sample_dt_s)
    profile = generate_pulse(config.pulse_kind, config.pulse_i_b_A, config.pulse_dt_s, config.pulse_cycles)
    apply_pulse(cell, profile, log)
    log.record(cell, 0.0, REST)
    return log.build()
