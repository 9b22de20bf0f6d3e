"""Command-line front end.

    ocvkit simulate     --config run.ini --out results/
    ocvkit estimate-ocv --log results/log.csv --out results/ [--epsilon 0.175] [--table-n 201]
    ocvkit estimate-r0  --log results/log.csv --out results/
    ocvkit estimate-r0  --config run.ini --out results/ [--trials 100000] [--seed 3]
    ocvkit hysteresis   --log results/log.csv --params results/params.txt --r0 results/r0_report.csv --out results/

Errors print one line ``error[CODE]: message`` to stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .battery_model import Cell
from .config import ConfigError, RunConfig, load_config, save_truth
from .logio import LogFormatError, load_log, save_log
from .ocv_estimation import (
    DEFAULT_TABLE_N,
    IllConditionedError,
    build_design,
    build_table,
    fit,
    save_table,
)
from .ocv_model import DEFAULT_EPSILON, FORMAT_LINE, load_parameters, save_parameters
from .protocols import ProtocolError, apply_pulse, low_rate_ocv_test
from .resistance import (
    PulseKind,
    RankDeficientError,
    estimate_r0,
    generate_pulse,
    load_report,
    monte_carlo,
    recover_hysteresis,
    save_report,
)
from .soc import PULSE, SegmentError, TimeSeriesLog, compute_capacity, coulomb_count, ocv_branches

LOG_NAME = "log.csv"
TRUTH_NAME = "truth.txt"
PARAMS_NAME = "params.txt"
TABLE_NAME = "table.csv"
RESIDUALS_NAME = "residuals.csv"
R0_NAME = "r0_report.csv"
HYSTERESIS_NAME = "hysteresis.csv"


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("E_IO", f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _config(args) -> RunConfig:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        raise CliError("E_CONFIG", str(exc)) from None
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.seed_from_file = True
    return cfg


def _log(path) -> TimeSeriesLog:
    try:
        return load_log(path)
    except OSError as exc:
        raise CliError("E_IO", f"cannot read log {path}: {exc.strerror}") from None
    except LogFormatError as exc:
        raise CliError("E_LOG", f"{path}: {exc}") from None


# -- simulate -----------------------------------------------------------------------


def cmd_simulate(args) -> list[str]:
    cfg = _config(args)
    out = _out_dir(args.out)
    cell_rng, _ = cfg.rngs()
    cell = Cell(cfg.truth, soc=cfg.initial_soc, rng=cell_rng)
    try:
        log = low_rate_ocv_test(cell, cfg.protocol)
    except ProtocolError as exc:
        raise CliError("E_PROTOCOL", str(exc)) from None
    log.meta.update(cell_id=cfg.cell_id, seed=cfg.seed, sigma_V=cfg.truth.noise_std_V)
    save_log(log, out / LOG_NAME)
    save_truth(cfg.truth, cfg.cell_id, out / TRUTH_NAME)
    return [
        f"seed={cfg.seed}",
        f"records={len(log)}",
        f"modes={log.mode_sequence()}",
        f"log={out / LOG_NAME}",
        f"truth={out / TRUTH_NAME}",
    ]


# -- estimate-ocv -------------------------------------------------------------------


def cmd_estimate_ocv(args) -> list[str]:
    log = _log(args.log)
    if not len(log):
        raise CliError("E_LOG", f"{args.log}: log has no records")
    try:
        branches = ocv_branches(log)
        qc, qd = compute_capacity(branches)
    except SegmentError as exc:
        raise CliError("E_SEGMENT", str(exc)) from None
    soc = coulomb_count(branches, qc, qd)
    try:
        system = build_design(branches, soc, args.epsilon)
        params = fit(system)
    except IllConditionedError as exc:
        raise CliError("E_FIT", str(exc)) from None
    except ValueError as exc:
        raise CliError("E_FIT", str(exc)) from None
    cell_id = log.meta.get("cell_id")
    params = params.with_meta(cell_id=None if cell_id is None else str(cell_id))
    table = build_table(branches, soc, args.table_n)

    out = _out_dir(args.out)
    save_parameters(params, out / PARAMS_NAME)
    save_table(table, out / TABLE_NAME)
    resid = system.v - system.P @ np.asarray(params.vector)
    keep = np.flatnonzero((branches.mode == "C") | (branches.mode == "D"))
    lines = [
        FORMAT_LINE,
        f"# residual_rms_V={params.residual_rms_V!r}",
        f"# condition={params.condition!r}",
        f"# qc_As={qc!r}",
        f"# qd_As={qd!r}",
        "k,soc,i_A,v_V,residual_V",
    ]
    lines += [
        f"{k},{soc[k]!r},{branches.i_A[k]!r},{branches.v_V[k]!r},{r!r}"
        for k, r in zip(keep.tolist(), resid.tolist())
    ]
    (out / RESIDUALS_NAME).write_text("\n".join(lines) + "\n")
    summary = [
        f"rows={params.n_rows}",
        f"residual_rms_V={params.residual_rms_V:.6g}",
        f"condition={params.condition:.6g}",
        f"r0h_Ohm={params.r0h_Ohm:.9g}",
        f"qc_As={qc:.9g}",
        f"qd_As={qd:.9g}",
    ]
    if table.non_monotone_steps:
        summary.append(f"warning: table has {table.non_monotone_steps} decreasing steps")
    return summary + [f"params={out / PARAMS_NAME}", f"table={out / TABLE_NAME}"]


# -- estimate-r0 --------------------------------------------------------------------


def _pulse_window(log: TimeSeriesLog) -> TimeSeriesLog:
    pulses = [s for s in log.segments() if s.mode == PULSE]
    if not pulses:
        raise CliError("E_NO_PULSE", f"no pulse segment found; mode sequence is {log.mode_sequence()!r}")
    seg = pulses[-1]
    return log[seg.start : seg.stop]


def _start_soc(kind: PulseKind) -> float:
    return {PulseKind.DISCHARGE_AT_FULL: 1.0, PulseKind.CHARGE_AT_EMPTY: 0.0}.get(kind, 0.5)


def cmd_estimate_r0(args) -> list[str]:
    out = _out_dir(args.out)
    if args.log is not None:
        log = _log(args.log)
        window = _pulse_window(log)
        sigma = log.meta.get("sigma_V")
        try:
            est = estimate_r0(window.i_A, window.v_V, None if sigma is None else float(sigma))
        except RankDeficientError as exc:
            raise CliError("E_NO_PULSE", str(exc)) from None
        summary = {
            "mode": "log",
            "cell_id": log.meta.get("cell_id", "cell"),
            "r0_hat_Ohm": est.r0_Ohm,
            "e_hat_V": est.e_V,
            "sigma_V": est.sigma_V,
            "crlb_var_Ohm2": est.predicted_var_Ohm2,
            "crlb_std_Ohm": est.predicted_var_Ohm2**0.5,
            "empirical_std_Ohm": 0.0,
            "n_samples": est.n_samples,
        }
        save_report(out / R0_NAME, summary, [est.r0_Ohm], [est.e_V])
    else:
        cfg = _config(args)
        mc = cfg.monte_carlo
        trials = args.trials if args.trials is not None else mc.trials
        profile = generate_pulse(mc.pulse_kind, mc.i_b_A, mc.dt_s, mc.m)
        # noise-free voltages of the configured cell for this profile
        clean_cell = Cell(replace(cfg.truth, noise_std_V=0.0), soc=_start_soc(mc.pulse_kind))
        _, clean = apply_pulse(clean_cell, profile)
        _, mc_rng = cfg.rngs()
        result = monte_carlo(profile, mc.sigma_V, trials, mc_rng, clean_voltages=clean)
        summary = {"mode": "monte_carlo", "cell_id": cfg.cell_id, "seed": cfg.seed, **result.summary()}
        summary["r0_hat_Ohm"] = result.mean
        summary["empirical_std_Ohm"] = result.std
        save_report(out / R0_NAME, summary, result.r0_hat, result.e_hat)
    keys = ("seed", "r0_hat_Ohm", "empirical_std_Ohm", "crlb_std_Ohm", "var_over_crlb")
    return [f"{k}={summary[k]:.6g}" if isinstance(summary[k], float) else f"{k}={summary[k]}"
            for k in keys if k in summary] + [f"report={out / R0_NAME}"]


# -- hysteresis ---------------------------------------------------------------------


def cmd_hysteresis(args) -> list[str]:
    log = _log(args.log)
    try:
        params = load_parameters(args.params)
        r0_summary, _, _ = load_report(args.r0)
    except OSError as exc:
        raise CliError("E_IO", f"cannot read {exc.filename}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError("E_FORMAT", str(exc)) from None
    ids = {
        "log": log.meta.get("cell_id"),
        "params": params.cell_id,
        "r0 report": r0_summary.get("cell_id"),
    }
    known = {str(v) for v in ids.values() if v is not None}
    if len(known) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in ids.items())
        raise CliError("E_CELL_ID", f"inputs belong to different cells ({detail})")
    if "r0_hat_Ohm" not in r0_summary:
        raise CliError("E_FORMAT", f"{args.r0}: report has no r0_hat_Ohm")
    try:
        result = recover_hysteresis(log, params, float(r0_summary["r0_hat_Ohm"]))
    except SegmentError as exc:
        raise CliError("E_SEGMENT", str(exc)) from None
    out = _out_dir(args.out)
    lines = [
        FORMAT_LINE,
        f"# r_h_Ohm={result.r_h_Ohm!r}",
        f"# rms_divergence_V={result.rms_divergence_V!r}",
        "k,soc,h1_V,h2_V",
    ]
    lines += [
        f"{k},{s!r},{a!r},{b!r}"
        for k, (s, a, b) in enumerate(zip(result.soc.tolist(), result.h1.tolist(), result.h2.tolist()))
    ]
    (out / HYSTERESIS_NAME).write_text("\n".join(lines) + "\n")
    return [
        f"r_h_Ohm={result.r_h_Ohm:.6g}",
        f"rms_divergence_V={result.rms_divergence_V:.6g}",
        f"hysteresis={out / HYSTERESIS_NAME}",
    ]


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocvkit", description="OCV characterisation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the low-rate OCV test on a simulated cell")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-ocv", help="fit Combined+3 parameters and build the OCV table")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--table-n", type=int, default=DEFAULT_TABLE_N)
    p.set_defaults(func=cmd_estimate_ocv)

    p = sub.add_parser("estimate-r0", help="resistance from a pulse log or a Monte Carlo study")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--log")
    src.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_estimate_r0)

    p = sub.add_parser("hysteresis", help="recover h1/h2 from a log, parameters and R0 report")
    p.add_argument("--log", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--r0", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hysteresis)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        lines = args.func(args)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    for line in lines:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
