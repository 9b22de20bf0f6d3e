"""INI run configuration: cell ground truth, protocol, estimation and seed.

Example::

    [run]
    seed = 7
    cell_id = demo

    [cell]
    capacity = 14400        ; A*s
    r_ohmic = 0.05
    r_sei = 0.02
    c_sei = 1000
    r_ct = 0.03
    c_dl = 20000
    hysteresis = resistive  ; or constant_magnitude (then m = volts)
    r_h = 0.02
    ocv = table             ; table | default | combined3
    ocv_min = 2.9
    ocv_max = 4.18
    noise_std = 0.0002
    initial_soc = 0.5

    [ocv_table]
    0.0 = 2.8
    0.5 = 3.7
    1.0 = 4.2

    [protocol]
    n = 64

    [estimation]
    epsilon = 0.175
    table_n = 201

With ``ocv = combined3`` the curve is the Combined+3 function given by
``k0``..``k7``, ``epsilon``, ``soc_lo`` and ``soc_hi`` (defaults: the stock
generative curve), and omitted voltage limits are placed so the test current
C/N stops exactly at model SOC 0 and 1.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .battery_model import (
    GENERATIVE_K,
    GENERATIVE_WINDOW,
    BatteryGroundTruth,
    Combined3Ocv,
    ConstantMagnitude,
    PiecewiseLinearOcv,
    Resistive,
    combined3_cell,
    default_ocv_table,
    reduce_to_rint,
)
from .ocv_estimation import DEFAULT_TABLE_N
from .ocv_model import DEFAULT_EPSILON, FORMAT_LINE, OcvParameters
from .protocols import OcvTestConfig
from .resistance import DEFAULT_PULSE_DT_S, PulseKind

DEFAULT_SEED = 0


class ConfigError(ValueError):
    """Bad or missing configuration entry; the message names the field."""


@dataclass(frozen=True)
class MonteCarloConfig:
    sigma_V: float = 0.0002
    trials: int = 100_000
    pulse_kind: PulseKind = PulseKind.DISCHARGE_AT_FULL
    i_b_A: float = 1.0
    m: int = 1
    dt_s: float = DEFAULT_PULSE_DT_S


@dataclass
class RunConfig:
    truth: BatteryGroundTruth
    protocol: OcvTestConfig
    seed: int = DEFAULT_SEED
    seed_from_file: bool = False
    cell_id: str = "cell"
    initial_soc: float = 0.5
    epsilon: float = DEFAULT_EPSILON
    table_n: int = DEFAULT_TABLE_N
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    source: str | None = None

    def rngs(self) -> tuple[np.random.Generator, np.random.Generator]:
        """Independent (cell noise, Monte Carlo) generators split from the seed."""
        cell_ss, mc_ss = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(cell_ss), np.random.default_rng(mc_ss)


class _Section:
    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.sec = parser[name] if parser.has_section(name) else {}

    def _raw(self, key: str, required: bool):
        if key in self.sec:
            return self.sec[key]
        if required:
            raise ConfigError(f"[{self.name}] missing required field '{key}'")
        return None

    def float(self, key: str, default=None, required: bool = False):
        raw = self._raw(key, required and default is None)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] field '{key}': expected a number, got {raw!r}") from None

    def int(self, key: str, default=None):
        raw = self._raw(key, default is None)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] field '{key}': expected an integer, got {raw!r}") from None

    def str(self, key: str, default=None):
        raw = self._raw(key, default is None)
        return default if raw is None else raw.strip()


def _ocv_table(parser: configparser.ConfigParser) -> PiecewiseLinearOcv:
    if not parser.has_section("ocv_table"):
        raise ConfigError("[cell] ocv = table needs an [ocv_table] section of 'soc = volts' lines")
    pts = []
    for key, val in parser["ocv_table"].items():
        try:
            pts.append((float(key), float(val)))
        except ValueError:
            raise ConfigError(f"[ocv_table] entry '{key} = {val}' is not numeric") from None
    pts.sort()
    try:
        return PiecewiseLinearOcv([p[0] for p in pts], [p[1] for p in pts])
    except ValueError as exc:
        raise ConfigError(f"[ocv_table] {exc}") from None


def _hysteresis(cell: _Section):
    kind = cell.str("hysteresis", "resistive")
    if kind == "resistive":
        return Resistive(cell.float("r_h", 0.0))
    if kind == "constant_magnitude":
        return ConstantMagnitude(cell.float("m", required=True))
    raise ConfigError(f"[cell] field 'hysteresis': unknown model {kind!r}")


def _truth(parser: configparser.ConfigParser, n: float) -> BatteryGroundTruth:
    cell = _Section(parser, "cell")
    if not parser.has_section("cell"):
        raise ConfigError("missing [cell] section")
    capacity = cell.float("capacity", required=True)
    hyst = _hysteresis(cell)
    noise = cell.float("noise_std", 0.0)
    kind = cell.str("ocv", "table")
    try:
        if kind == "combined3":
            k = tuple(cell.float(f"k{j}", GENERATIVE_K[j]) for j in range(8))
            window = (cell.float("soc_lo", GENERATIVE_WINDOW[0]), cell.float("soc_hi", GENERATIVE_WINDOW[1]))
            extra = {}
            for key in ("ocv_min", "ocv_max"):
                val = cell.float(key)
                if val is not None:
                    extra[f"{key}_V"] = val
            return combined3_cell(
                capacity / 3600.0 / n,
                k=k,
                epsilon=cell.float("epsilon", DEFAULT_EPSILON),
                window=window,
                r0_Ohm=cell.float("r_ohmic", 0.08),
                hysteresis=hyst,
                capacity_As=capacity,
                noise_std_V=noise,
                **extra,
            )
        if kind == "table":
            ocv = _ocv_table(parser)
        elif kind == "default":
            ocv = default_ocv_table()
        else:
            raise ConfigError(f"[cell] field 'ocv': unknown curve {kind!r}")
        return BatteryGroundTruth(
            capacity_As=capacity,
            r_ohmic_Ohm=cell.float("r_ohmic", required=True),
            r_sei_Ohm=cell.float("r_sei", 0.0),
            c_sei_F=cell.float("c_sei", 1.0),
            r_ct_Ohm=cell.float("r_ct", 0.0),
            c_dl_F=cell.float("c_dl", 1.0),
            hysteresis=hyst,
            true_ocv=ocv,
            ocv_min_V=cell.float("ocv_min", required=True),
            ocv_max_V=cell.float("ocv_max", required=True),
            noise_std_V=noise,
            limits_outside_ocv=cell.str("limits_outside_ocv", "false").lower() == "true",
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[cell] {exc}") from None


def parse_config(text: str, source: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    run = _Section(parser, "run")
    proto = _Section(parser, "protocol")
    est = _Section(parser, "estimation")
    mc = _Section(parser, "monte_carlo")

    n = proto.float("n", 64.0)
    try:
        protocol = OcvTestConfig(
            n=n,
            temperature_C=proto.float("temperature", 25.0),
            sample_dt_s=proto.float("sample_dt", 60.0),
            rest_s=proto.float("rest", 3600.0),
            control_dt_s=proto.float("control_dt", 1.0),
            r0_hat_Ohm=proto.float("r0_hat"),
            pulse_kind=PulseKind(proto.str("pulse", PulseKind.DISCHARGE_AT_FULL.value)),
            pulse_i_b_A=proto.float("pulse_current", 1.0),
            pulse_dt_s=proto.float("pulse_dt", DEFAULT_PULSE_DT_S),
            pulse_cycles=proto.int("pulse_cycles", 1),
        )
        monte = MonteCarloConfig(
            sigma_V=mc.float("sigma", 0.0002),
            trials=mc.int("trials", 100_000),
            pulse_kind=PulseKind(mc.str("pulse", PulseKind.DISCHARGE_AT_FULL.value)),
            i_b_A=mc.float("pulse_current", 1.0),
            m=mc.int("pulse_cycles", 1),
            dt_s=mc.float("pulse_dt", DEFAULT_PULSE_DT_S),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[protocol] {exc}") from None
    truth = _truth(parser, n)
    seed_raw = run.int("seed", -1)
    return RunConfig(
        truth=truth,
        protocol=protocol,
        seed=DEFAULT_SEED if seed_raw == -1 else seed_raw,
        seed_from_file=seed_raw != -1,
        cell_id=run.str("cell_id", "cell"),
        initial_soc=_Section(parser, "cell").float("initial_soc", 0.5),
        epsilon=est.float("epsilon", DEFAULT_EPSILON),
        table_n=est.int("table_n", DEFAULT_TABLE_N),
        monte_carlo=monte,
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# -- truth sidecar ------------------------------------------------------------------


def format_truth(truth: BatteryGroundTruth, cell_id: str) -> str:
    """Key/value description of the simulated cell.

    For a generative Combined+3 cell the file also carries k0..k7, r0h_Ohm and
    epsilon in the parameter-file layout, so it loads as the true OcvParameters.
    """
    lines = [FORMAT_LINE, "# simulated cell ground truth", f"cell_id = {cell_id}"]
    for key in ("capacity_As", "r_ohmic_Ohm", "r_sei_Ohm", "c_sei_F", "r_ct_Ohm", "c_dl_F",
                "ocv_min_V", "ocv_max_V", "noise_std_V"):
        lines.append(f"{key} = {getattr(truth, key)!r}")
    lines.append(f"r0_Ohm = {reduce_to_rint(truth)!r}")
    h = truth.hysteresis
    if isinstance(h, Resistive):
        lines += ["hysteresis = resistive", f"r_h_Ohm = {h.r_h_Ohm!r}"]
    else:
        lines += ["hysteresis = constant_magnitude", f"m_V = {h.m_V!r}"]
    ocv = truth.true_ocv
    if isinstance(ocv, Combined3Ocv):
        p: OcvParameters = ocv.params
        lines += [f"soc_lo = {ocv.soc_lo!r}", f"soc_hi = {ocv.soc_hi!r}"]
        lines += [f"k{j} = {kj!r}" for j, kj in enumerate(p.k)]
        r0h = reduce_to_rint(truth) + (h.r_h_Ohm if isinstance(h, Resistive) else 0.0)
        lines += [f"r0h_Ohm = {r0h!r}", f"epsilon = {p.epsilon!r}"]
    return "\n".join(lines) + "\n"


def save_truth(truth: BatteryGroundTruth, cell_id: str, path) -> None:
    Path(path).write_text(format_truth(truth, cell_id))
