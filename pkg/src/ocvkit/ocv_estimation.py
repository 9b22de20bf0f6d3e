"""Least-squares Combined+3 fit and the interpolated OCV-SOC table."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .ocv_model import DEFAULT_EPSILON, FORMAT_LINE, N_COEFFS, OcvParameters, regressor, scale_soc
from .soc import CHARGE, DISCHARGE, TimeSeriesLog

N_PARAMS = N_COEFFS + 1
CONDITION_LIMIT = 1e12
DEFAULT_TABLE_N = 201


class IllConditionedError(np.linalg.LinAlgError):
    """Design matrix is rank deficient or too badly conditioned to trust."""


@dataclass(frozen=True)
class DesignSystem:
    """Stacked observation model v = P k; P rows are [p_o(s'(k)), i(k)]."""

    P: np.ndarray
    v: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.P.ndim != 2 or self.P.shape[1] != N_PARAMS:
            raise ValueError(f"P must have {N_PARAMS} columns")
        if self.P.shape[0] != self.v.shape[0]:
            raise ValueError("P and v row counts differ")
        if self.P.shape[0] < N_PARAMS:
            raise ValueError(f"need at least {N_PARAMS} rows for an overdetermined fit, got {self.P.shape[0]}")
        if not (np.all(np.isfinite(self.P)) and np.all(np.isfinite(self.v))):
            raise ValueError("design system contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.P.shape[0]


def design_rows(soc: np.ndarray, current: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    soc = np.atleast_1d(np.asarray(soc, dtype=float))
    current = np.atleast_1d(np.asarray(current, dtype=float))
    return np.column_stack([regressor(scale_soc(soc, epsilon)), current])


def build_design(log: TimeSeriesLog, soc: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> DesignSystem:
    """Rows for every charge/discharge record; rest and pulse records are dropped."""
    soc = np.asarray(soc, dtype=float)
    if soc.shape != (len(log),):
        raise ValueError("SOC trajectory must align 1:1 with the log")
    keep = (log.mode == CHARGE) | (log.mode == DISCHARGE)
    return DesignSystem(design_rows(soc[keep], log.i_A[keep], epsilon), log.v_V[keep].copy(), epsilon)


def _solve_qr(P: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, float]:
    Q, R = np.linalg.qr(P, mode="reduced")
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[-1] == 0.0:
        raise IllConditionedError("design matrix is rank deficient")
    cond = float(sv[0] / sv[-1])
    if not cond <= CONDITION_LIMIT:
        raise IllConditionedError(f"design matrix condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}")
    return solve_triangular(R, Q.T @ v), cond


def fit(system: DesignSystem) -> OcvParameters:
    """Minimise ||v - P k||; returns k0..k7, R0h and fit diagnostics."""
    k, cond = _solve_qr(system.P, system.v)
    resid = system.v - system.P @ k
    return OcvParameters(
        k=k[:N_COEFFS],
        r0h_Ohm=float(k[N_COEFFS]),
        epsilon=system.epsilon,
        residual_rms_V=float(np.sqrt(np.mean(resid**2))),
        condition=cond,
        n_rows=system.n_rows,
    )


def parameter_covariance(system: DesignSystem, sigma_V: float) -> np.ndarray:
    """sigma^2 (P^T P)^-1, computed from the R factor."""
    _, R = np.linalg.qr(system.P, mode="reduced")
    rinv = solve_triangular(R, np.eye(R.shape[0]))
    return sigma_V**2 * (rinv @ rinv.T)


# -- table ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OcvTable:
    soc: np.ndarray
    ocv: np.ndarray
    extrapolated: np.ndarray
    cell_id: str | None = None

    @property
    def non_monotone_steps(self) -> int:
        """Number of adjacent node pairs where the OCV decreases."""
        return int(np.count_nonzero(np.diff(self.ocv) < 0))

    def __len__(self):
        return self.soc.size


def _branch_interp(nodes, soc, volts):
    order = np.argsort(soc, kind="stable")
    x, y = soc[order], volts[order]
    vals = np.interp(nodes, x, y)
    outside = (nodes < x[0]) | (nodes > x[-1])
    return vals, outside


def build_table(log: TimeSeriesLog, soc: np.ndarray, n: int = DEFAULT_TABLE_N) -> OcvTable:
    """Average of the discharge-branch and charge-branch voltages at N SOC nodes.

    Each branch is interpolated against its own SOC trajectory; nodes outside
    a branch's coverage take that branch's endpoint value and are flagged.
    """
    if n < 2:
        raise ValueError("table needs at least 2 nodes")
    soc = np.asarray(soc, dtype=float)
    if soc.shape != (len(log),):
        raise ValueError("SOC trajectory must align 1:1 with the log")
    d = log.mode == DISCHARGE
    c = log.mode == CHARGE
    if not (d.any() and c.any()):
        raise ValueError("table needs both a discharge and a charge branch")
    nodes = np.linspace(0.0, 1.0, n)
    vd, xd = _branch_interp(nodes, soc[d], log.v_V[d])
    vc, xc = _branch_interp(nodes, soc[c], log.v_V[c])
    return OcvTable(nodes, 0.5 * (vd + vc), xd | xc, log.meta.get("cell_id"))


def format_table(table: OcvTable) -> str:
    lines = [FORMAT_LINE, "soc,ocv_volts"]
    lines += [f"{s!r},{v!r}" for s, v in zip(table.soc.tolist(), table.ocv.tolist())]
    return "\n".join(lines) + "\n"


def save_table(table: OcvTable, path) -> None:
    Path(path).write_text(format_table(table))


def load_table(path) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != FORMAT_LINE:
        raise ValueError(f"table file must start with '{FORMAT_LINE}'")
    if lines[1].strip() != "soc,ocv_volts":
        raise ValueError("table header must be 'soc,ocv_volts'")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:] if ln.strip()])
    return data[:, 0], data[:, 1]
