"""Lossless CSV serialisation of :class:`TimeSeriesLog`.

Layout::

    # format=1
    # meta cell_id=demo
    # event t=12.0: ...
    t_s,i_A,v_V,mode
    0.0,-0.0625,4.1731...,D

Floats are written with ``repr`` so parsing returns the identical doubles.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .ocv_model import FORMAT_LINE
from .soc import TimeSeriesLog

HEADER = "t_s,i_A,v_V,mode"


class LogFormatError(ValueError):
    pass


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def format_log(log: TimeSeriesLog) -> str:
    out = io.StringIO()
    out.write(FORMAT_LINE + "\n")
    for key in sorted(log.meta):
        val = log.meta[key]
        out.write(f"# meta {key}={val!r}\n" if isinstance(val, float) else f"# meta {key}={val}\n")
    for ev in log.events:
        out.write(f"# event {ev}\n")
    out.write(HEADER + "\n")
    for t, i, v, m in zip(log.t_s.tolist(), log.i_A.tolist(), log.v_V.tolist(), log.mode.tolist()):
        out.write(f"{t!r},{i!r},{v!r},{m}\n")
    return out.getvalue()


def parse_log(text: str) -> TimeSeriesLog:
    lines = text.splitlines()
    if not lines:
        raise LogFormatError("log file is empty")
    if lines[0].strip() != FORMAT_LINE:
        raise LogFormatError(f"line 1: log must start with '{FORMAT_LINE}'")
    meta: dict = {}
    events: list[str] = []
    n = 1
    while n < len(lines) and lines[n].startswith("#"):
        body = lines[n][1:].strip()
        if body.startswith("meta "):
            key, _, val = body[5:].partition("=")
            meta[key] = _scalar(val)
        elif body.startswith("event "):
            events.append(body[6:])
        n += 1
    if n >= len(lines) or lines[n].strip() != HEADER:
        raise LogFormatError(f"line {n + 1}: expected header '{HEADER}'")
    t, i, v, mode = [], [], [], []
    for lineno, raw in enumerate(lines[n + 1 :], start=n + 2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise LogFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            t.append(float(parts[0]))
            i.append(float(parts[1]))
            v.append(float(parts[2]))
        except ValueError as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from None
        mode.append(parts[3].strip())
    try:
        return TimeSeriesLog(np.array(t), np.array(i), np.array(v), np.array(mode, dtype="<U1"), meta, events)
    except ValueError as exc:
        raise LogFormatError(str(exc)) from None


def save_log(log: TimeSeriesLog, path) -> None:
    Path(path).write_text(format_log(log))


def load_log(path) -> TimeSeriesLog:
    return parse_log(Path(path).read_text())
