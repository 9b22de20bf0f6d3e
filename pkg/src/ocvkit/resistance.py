"""Pulse profiles, the two-parameter resistance estimator, its CRLB and hysteresis recovery.

Model for L pulse samples: z(k) = i(k) * R0 + E + n(k), n ~ N(0, sigma^2),
with E (EMF plus hysteresis) assumed constant over the pulse.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .ocv_model import FORMAT_LINE, OcvParameters, evaluate_ocv
from .soc import TimeSeriesLog, compute_capacity, coulomb_count, ocv_branches

SAMPLES_PER_CYCLE = 8
# 4 samples at 1 A move a 4 Ah cell from s = 1 to s = 0.9962
DEFAULT_PULSE_DT_S = 13.68


class PulseKind(enum.Enum):
    DISCHARGE_AT_FULL = "discharge_at_full"
    CHARGE_AT_EMPTY = "charge_at_empty"
    OPTIMIZED_ALTERNATING = "optimized_alternating"


class RankDeficientError(np.linalg.LinAlgError):
    """All pulse currents are equal, so R0 and E cannot be separated."""


class NegativeHysteresisWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PulseProfile:
    samples: np.ndarray
    dt_s: float
    kind: PulseKind
    m: int = 1

    @property
    def net_charge_As(self) -> float:
        return float(np.sum(self.samples) * self.dt_s)

    def __len__(self):
        return self.samples.size


def generate_pulse(kind: PulseKind | str, i_b_A: float, dt_s: float = DEFAULT_PULSE_DT_S, m: int = 1) -> PulseProfile:
    """Current samples for ``m`` cycles of 8 (4 + 4) samples.

    DISCHARGE_AT_FULL: [-Ib]*4 + [0]*4; CHARGE_AT_EMPTY: [+Ib]*4 + [0]*4;
    OPTIMIZED_ALTERNATING: [+Ib]*4 + [-Ib]*4.
    """
    kind = PulseKind(kind)
    if not i_b_A > 0:
        raise ValueError("pulse amplitude must be positive")
    if m < 1:
        raise ValueError("need at least one cycle")
    if not dt_s > 0:
        raise ValueError("dt_s must be positive")
    half = SAMPLES_PER_CYCLE // 2
    first, second = {
        PulseKind.DISCHARGE_AT_FULL: (-i_b_A, 0.0),
        PulseKind.CHARGE_AT_EMPTY: (i_b_A, 0.0),
        PulseKind.OPTIMIZED_ALTERNATING: (i_b_A, -i_b_A),
    }[kind]
    cycle = np.array([first] * half + [second] * half)
    return PulseProfile(np.tile(cycle, m), float(dt_s), kind, int(m))


# -- estimator ----------------------------------------------------------------------


@dataclass(frozen=True)
class ResistanceEstimate:
    r0_Ohm: float
    e_V: float
    predicted_var_Ohm2: float
    n_samples: int
    sigma_V: float


def _design(currents: np.ndarray) -> np.ndarray:
    return np.column_stack([currents, np.ones_like(currents)])


def _crlb_denominator(currents: np.ndarray) -> float:
    currents = np.asarray(currents, dtype=float)
    L = currents.size
    if L < 2:
        raise RankDeficientError("need at least two samples")
    # centred form avoids cancellation in sum(i^2) - sum(i)^2 / L
    den = float(np.sum((currents - currents.mean()) ** 2))
    if den <= 1e-15 * max(float(np.sum(currents**2)), 1e-300):
        raise RankDeficientError("pulse currents are all equal; R0 is not identifiable")
    return den


def crlb_variance(currents, sigma_V: float) -> float:
    """(1,1) element of sigma^2 (H^T H)^-1: sigma^2 / (sum i^2 - (sum i)^2 / L)."""
    return sigma_V**2 / _crlb_denominator(np.asarray(currents, dtype=float))


def crlb_matrix(currents, sigma_V: float) -> np.ndarray:
    H = _design(np.asarray(currents, dtype=float))
    _crlb_denominator(H[:, 0])
    return sigma_V**2 * np.linalg.inv(H.T @ H)


def _qr_solver(currents: np.ndarray):
    _crlb_denominator(currents)
    Q, R = np.linalg.qr(_design(currents), mode="reduced")
    return Q, R


def estimate_r0(currents, voltages, sigma_V: float | None = None) -> ResistanceEstimate:
    """Least-squares [R0, E] from one pulse window.

    ``sigma_V`` sets the CRLB; when omitted it is estimated from the residuals
    (and is zero for exact data).
    """
    i = np.asarray(currents, dtype=float)
    z = np.asarray(voltages, dtype=float)
    if i.shape != z.shape or i.ndim != 1:
        raise ValueError("currents and voltages must be 1-D and equally long")
    Q, R = _qr_solver(i)
    r0, e = solve_triangular(R, Q.T @ z)
    if sigma_V is None:
        resid = z - (i * r0 + e)
        sigma_V = math.sqrt(float(resid @ resid) / (i.size - 2)) if i.size > 2 else 0.0
    return ResistanceEstimate(float(r0), float(e), crlb_variance(i, sigma_V), i.size, float(sigma_V))


def estimate_r0_batch(currents, voltages: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`estimate_r0` over rows of ``voltages`` (trials x L)."""
    i = np.asarray(currents, dtype=float)
    Z = np.atleast_2d(np.asarray(voltages, dtype=float))
    Q, R = _qr_solver(i)
    X = solve_triangular(R, Q.T @ Z.T)
    return X[0], X[1]


@dataclass
class MonteCarloResult:
    r0_hat: np.ndarray
    e_hat: np.ndarray
    crlb_Ohm2: float
    r0_true_Ohm: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return self.r0_hat.size

    @property
    def mean(self) -> float:
        return float(self.r0_hat.mean())

    @property
    def std(self) -> float:
        return float(self.r0_hat.std(ddof=1)) if self.trials > 1 else 0.0

    @property
    def var_ratio(self) -> float:
        return self.std**2 / self.crlb_Ohm2

    def summary(self) -> dict:
        out = {
            "trials": self.trials,
            "r0_mean_Ohm": self.mean,
            "r0_std_Ohm": self.std,
            "crlb_var_Ohm2": self.crlb_Ohm2,
            "crlb_std_Ohm": math.sqrt(self.crlb_Ohm2),
            "var_over_crlb": self.var_ratio,
        }
        if self.r0_true_Ohm is not None:
            out["r0_true_Ohm"] = self.r0_true_Ohm
            out["bias_Ohm"] = self.mean - self.r0_true_Ohm
        out.update(self.meta)
        return out


def monte_carlo(
    profile: PulseProfile,
    sigma_V: float,
    trials: int,
    rng: np.random.Generator,
    clean_voltages=None,
    r0_Ohm: float = 0.05,
    e_V: float = 3.7,
    chunk: int = 50_000,
) -> MonteCarloResult:
    """Repeat the pulse estimate under i.i.d. Gaussian voltage noise.

    ``clean_voltages`` are noise-free terminal voltages for the profile (e.g.
    from the simulator); otherwise the ideal z = i*R0 + E is used.
    """
    i = profile.samples
    if clean_voltages is None:
        clean = i * r0_Ohm + e_V
        truth = r0_Ohm
    else:
        clean = np.asarray(clean_voltages, dtype=float)
        truth = None
    r0s, es = [], []
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        Z = clean + rng.normal(0.0, sigma_V, size=(n, i.size))
        r, e = estimate_r0_batch(i, Z)
        r0s.append(r)
        es.append(e)
        done += n
    return MonteCarloResult(
        np.concatenate(r0s),
        np.concatenate(es),
        crlb_variance(i, sigma_V),
        truth,
        {"kind": profile.kind.value, "m": profile.m, "sigma_V": sigma_V, "i_b_A": float(np.max(np.abs(i)))},
    )


# -- hysteresis -----------------------------------------------------------------------


@dataclass
class HysteresisResult:
    r_h_Ohm: float
    soc: np.ndarray
    h1: np.ndarray
    h2: np.ndarray

    @property
    def rms_divergence_V(self) -> float:
        return float(np.sqrt(np.mean((self.h1 - self.h2) ** 2)))


def recover_hysteresis(
    log: TimeSeriesLog, params: OcvParameters, r0_hat_Ohm: float, soc: np.ndarray | None = None
) -> HysteresisResult:
    """h1 = v - E - i*R0_hat and h2 = i*Rh_hat over the OCV-test branches.

    Rh_hat = R0h_hat - R0_hat; E(k) is the fitted Combined+3 OCV at s(k).
    Without ``soc`` the discharge/charge block is extracted and Coulomb counted
    from s = 1.
    """
    if soc is None:
        log = ocv_branches(log)
        qc, qd = compute_capacity(log)
        soc = coulomb_count(log, qc, qd)
    soc = np.asarray(soc, dtype=float)
    r_h = params.r0h_Ohm - r0_hat_Ohm
    if r_h < 0:
        warnings.warn(f"estimated hysteresis resistance is negative ({r_h:.6g} Ohm)", NegativeHysteresisWarning, stacklevel=2)
    e = np.asarray(evaluate_ocv(params, np.clip(soc, 0.0, 1.0)))
    h1 = log.v_V - e - log.i_A * r0_hat_Ohm
    h2 = log.i_A * r_h
    return HysteresisResult(float(r_h), soc, h1, h2)


# -- report files ------------------------------------------------------------------


def format_report(summary: dict, r0_hat=None, e_hat=None) -> str:
    lines = [FORMAT_LINE]
    for key, val in summary.items():
        lines.append(f"# {key}={val!r}" if isinstance(val, float) else f"# {key}={val}")
    lines.append("trial,r0_hat_Ohm,e_hat_V")
    if r0_hat is not None:
        for n, (r, e) in enumerate(zip(np.asarray(r0_hat).tolist(), np.asarray(e_hat).tolist())):
            lines.append(f"{n},{r!r},{e!r}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> tuple[dict, np.ndarray, np.ndarray]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_LINE:
        raise ValueError(f"report must start with '{FORMAT_LINE}'")
    summary: dict = {}
    rows = []
    for ln in lines[1:]:
        if ln.startswith("# "):
            key, _, val = ln[2:].partition("=")
            summary[key] = _parse_scalar(val)
        elif ln.startswith("trial,") or not ln.strip():
            continue
        else:
            _, r, e = ln.split(",")
            rows.append((float(r), float(e)))
    arr = np.array(rows).reshape(-1, 2)
    return summary, arr[:, 0], arr[:, 1]


def _parse_scalar(val: str):
    for conv in (int, float):
        try:
            return conv(val)
        except ValueError:
            pass
    return val


def save_report(path, summary: dict, r0_hat=None, e_hat=None) -> None:
    Path(path).write_text(format_report(summary, r0_hat, e_hat))


def load_report(path) -> tuple[dict, np.ndarray, np.ndarray]:
    return parse_report(Path(path).read_text())
