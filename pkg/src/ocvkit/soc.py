"""Logged time series, capacity from charge/discharge durations and Coulomb counting."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DISCHARGE = "D"
CHARGE = "C"
REST = "R"
PULSE = "P"
MODES = (DISCHARGE, CHARGE, REST, PULSE)

CONSTANT_CURRENT_RTOL = 1e-3


class SegmentError(ValueError):
    """The log does not contain the segments an operation needs."""


class SocRangeWarning(UserWarning):
    """Coulomb-counted SOC strayed outside [-0.01, 1.01]."""


@dataclass(frozen=True)
class Segment:
    mode: str
    start: int
    stop: int  # exclusive

    def __len__(self):
        return self.stop - self.start


@dataclass
class TimeSeriesLog:
    """Ordered records of (time, current, voltage, mode).

    ``mode`` holds one-letter codes: D (discharge, Table-I "(-)"), C (charge,
    "(+)"), R (rest) and P (pulse).
    """

    t_s: np.ndarray
    i_A: np.ndarray
    v_V: np.ndarray
    mode: np.ndarray
    meta: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def __post_init__(self):
        self.t_s = np.asarray(self.t_s, dtype=float)
        self.i_A = np.asarray(self.i_A, dtype=float)
        self.v_V = np.asarray(self.v_V, dtype=float)
        self.mode = np.asarray(self.mode, dtype="<U1")
        n = self.t_s.size
        if not (self.i_A.size == self.v_V.size == self.mode.size == n):
            raise ValueError("log columns must have equal length")
        if n and np.any(np.diff(self.t_s) <= 0):
            raise ValueError("log timestamps must be strictly increasing")
        bad = set(np.unique(self.mode)) - set(MODES)
        if bad:
            raise ValueError(f"unknown mode codes {sorted(bad)}")

    def __len__(self):
        return self.t_s.size

    def __getitem__(self, idx) -> "TimeSeriesLog":
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return TimeSeriesLog(self.t_s[idx], self.i_A[idx], self.v_V[idx], self.mode[idx], dict(self.meta), [])

    def segments(self) -> list[Segment]:
        """Maximal runs of equal mode."""
        if not len(self):
            return []
        cuts = np.flatnonzero(self.mode[1:] != self.mode[:-1]) + 1
        bounds = np.concatenate([[0], cuts, [len(self)]])
        return [Segment(str(self.mode[a]), int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    def mode_sequence(self) -> str:
        return "".join(seg.mode for seg in self.segments())

    def equals(self, other: "TimeSeriesLog") -> bool:
        return (
            np.array_equal(self.t_s, other.t_s)
            and np.array_equal(self.i_A, other.i_A)
            and np.array_equal(self.v_V, other.v_V)
            and np.array_equal(self.mode, other.mode)
        )


def ocv_branches(log: TimeSeriesLog) -> TimeSeriesLog:
    """The discharge segment and the charge segment that immediately follows it.

    This is the Table-I block of a low-rate OCV test. The last D->C pair in the
    log is used so a preceding CC-CV charge is skipped.
    """
    segs = log.segments()
    for a, b in reversed(list(zip(segs[:-1], segs[1:]))):
        if a.mode == DISCHARGE and b.mode == CHARGE:
            return log[a.start : b.stop]
    raise SegmentError(
        f"no discharge segment followed by a charge segment; mode sequence is {log.mode_sequence()!r}"
    )


def _constant_current(log: TimeSeriesLog, seg: Segment) -> tuple[float, float]:
    if len(seg) < 2:
        raise SegmentError(f"{seg.mode} segment has {len(seg)} record(s); needs a nonzero duration")
    cur = log.i_A[seg.start : seg.stop]
    med = float(np.median(cur))
    if med == 0.0 or np.max(np.abs(cur - med)) > CONSTANT_CURRENT_RTOL * abs(med):
        raise SegmentError(f"{seg.mode} segment is not constant-current (median {med!r} A)")
    duration = float(log.t_s[seg.stop - 1] - log.t_s[seg.start])
    if duration <= 0.0:
        raise SegmentError(f"{seg.mode} segment has zero duration")
    return med, duration


def compute_capacity(log: TimeSeriesLog) -> tuple[float, float]:
    """(Qc, Qd) in A*s from the constant-current charge and discharge segments.

    Qc = I_c * t_c and Qd = -I_d * t_d, where t is the time between the first
    and last record of the segment.
    """
    segs = log.segments()
    dis = [s for s in segs if s.mode == DISCHARGE]
    chg = [s for s in segs if s.mode == CHARGE]
    if len(dis) != 1 or len(chg) != 1:
        raise SegmentError(
            f"expected exactly one discharge and one charge segment; mode sequence is {log.mode_sequence()!r}"
        )
    i_d, t_d = _constant_current(log, dis[0])
    i_c, t_c = _constant_current(log, chg[0])
    if i_d >= 0 or i_c <= 0:
        raise SegmentError("discharge current must be negative and charge current positive")
    return i_c * t_c, -i_d * t_d


def coulomb_count(log: TimeSeriesLog, qc_As: float, qd_As: float, s_initial: float = 1.0) -> np.ndarray:
    """SOC per record: s(k+1) = s(k) + dt_k * i(k) / Q.

    Q is ``qc_As`` for charging records and ``qd_As`` for discharging ones;
    zero-current records add nothing.
    """
    if not (qc_As > 0 and qd_As > 0):
        raise ValueError("capacities must be positive")
    if not len(log):
        raise ValueError("empty log")
    i = log.i_A[:-1]
    dt = np.diff(log.t_s)
    q = np.where(i > 0, qc_As, qd_As)
    inc = np.where(i == 0, 0.0, dt * i / q)
    s = np.empty(len(log))
    s[0] = s_initial
    s[1:] = s_initial + np.cumsum(inc)
    if s.min() < -0.01 or s.max() > 1.01:
        warnings.warn(
            f"Coulomb-counted SOC spans [{s.min():.4f}, {s.max():.4f}]; capacity or s_initial may be off",
            SocRangeWarning,
            stacklevel=2,
        )
    return s
