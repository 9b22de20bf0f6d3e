"""Combined+3 OCV-SOC model: SOC scaling, regressor and evaluation.

The model is linear in its eight coefficients::

    V_o(s) = k0 + k1/s + k2/s^2 + k3/s^3 + k4/s^4 + k5*s + k6*ln(s) + k7*ln(1-s)

and is always evaluated on the scaled SOC ``s' = (1 - 2*eps)*s + eps`` so the
singular terms stay finite at s = 0 and s = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

DEFAULT_EPSILON = 0.175
N_COEFFS = 8
SOC_TOLERANCE = 1e-9

ArrayLike = Union[float, np.ndarray]


def scale_soc(s: ArrayLike, epsilon: float = DEFAULT_EPSILON) -> ArrayLike:
    """Map SOC in [0, 1] onto [eps, 1 - eps]."""
    _check_epsilon(epsilon)
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise ValueError("SOC must be finite")
    if np.any(arr < -SOC_TOLERANCE) or np.any(arr > 1.0 + SOC_TOLERANCE):
        raise ValueError(f"SOC outside [0, 1]: min={arr.min():.12g}, max={arr.max():.12g}")
    out = (1.0 - 2.0 * epsilon) * arr + epsilon
    return float(out) if np.ndim(out) == 0 else out


def _check_epsilon(epsilon: float) -> None:
    if not (0.0 <= epsilon < 0.5):
        raise ValueError(f"epsilon must lie in [0, 0.5), got {epsilon!r}")


def regressor(s_prime: ArrayLike) -> np.ndarray:
    """Combined+3 regressor row(s) for scaled SOC.

    Returns shape (8,) for a scalar input and (n, 8) for a 1-D input.
    Raises ValueError when any s' is outside the open interval (0, 1); that
    normally means scaling was skipped.
    """
    sp = np.asarray(s_prime, dtype=float)
    if np.any(~np.isfinite(sp)) or np.any(sp <= 0.0) or np.any(sp >= 1.0):
        raise ValueError("scaled SOC must lie strictly inside (0, 1); was scale_soc applied?")
    return _regressor_unchecked(sp)


def _regressor_unchecked(sp: np.ndarray) -> np.ndarray:
    inv = 1.0 / sp
    cols = [
        np.ones_like(sp),
        inv,
        inv**2,
        inv**3,
        inv**4,
        sp,
        np.log(sp),
        np.log1p(-sp),
    ]
    return np.stack(cols, axis=-1)


def _as_coeffs(k) -> np.ndarray:
    arr = np.asarray(k, dtype=float).reshape(-1)
    if arr.shape != (N_COEFFS,):
        raise ValueError(f"expected {N_COEFFS} Combined+3 coefficients, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Combined+3 coefficients must be finite")
    return arr


@dataclass(frozen=True)
class OcvParameters:
    """Fitted (or generative) Combined+3 parameters.

    ``k`` are the eight OCV coefficients, ``r0h_Ohm`` the lumped resistance
    R0 + Rh. The remaining fields are fit diagnostics and are ``None`` for
    parameter sets that did not come out of a fit.
    """

    k: tuple
    r0h_Ohm: float = 0.0
    epsilon: float = DEFAULT_EPSILON
    residual_rms_V: float | None = None
    condition: float | None = None
    n_rows: int | None = None
    cell_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(float(x) for x in _as_coeffs(self.k)))
        if not math.isfinite(self.r0h_Ohm):
            raise ValueError("r0h_Ohm must be finite")
        _check_epsilon(self.epsilon)

    @property
    def vector(self) -> np.ndarray:
        """The nine-element estimate [k0..k7, R0h]."""
        return np.append(np.asarray(self.k), self.r0h_Ohm)

    def with_meta(self, **kw) -> "OcvParameters":
        return replace(self, **kw)


def evaluate_ocv(params: OcvParameters, s: ArrayLike) -> ArrayLike:
    """OCV in volts at (unscaled) SOC ``s``; accepts scalars or arrays."""
    rows = regressor(scale_soc(s, params.epsilon))
    out = rows @ np.asarray(params.k)
    return float(out) if np.ndim(out) == 0 else out


def evaluate_ocv_extended(params: OcvParameters, s: ArrayLike) -> ArrayLike:
    """Evaluate without the [0, 1] SOC check.

    Used by generative cells whose true-SOC axis extends a little past the
    fitted window; the scaled SOC must still stay inside (0, 1).
    """
    sp = (1.0 - 2.0 * params.epsilon) * np.asarray(s, dtype=float) + params.epsilon
    out = regressor(sp) @ np.asarray(params.k)
    return float(out) if np.ndim(out) == 0 else out


def evaluate_ocv_derivative(params: OcvParameters, s: ArrayLike) -> ArrayLike:
    """dV_o/ds with respect to the unscaled SOC."""
    a = 1.0 - 2.0 * params.epsilon
    sp = np.asarray(scale_soc(s, params.epsilon), dtype=float)
    k = params.k
    d = (
        -k[1] / sp**2
        - 2.0 * k[2] / sp**3
        - 3.0 * k[3] / sp**4
        - 4.0 * k[4] / sp**5
        + k[5]
        + k[6] / sp
        - k[7] / (1.0 - sp)
    )
    out = a * d
    return float(out) if np.ndim(out) == 0 else out


def predict_terminal_voltage(params: OcvParameters, s: ArrayLike, current_A: ArrayLike) -> ArrayLike:
    """R-int observation model v = V_o(s) + i * R0h."""
    out = np.asarray(evaluate_ocv(params, s)) + np.asarray(current_A, dtype=float) * params.r0h_Ohm
    return float(out) if np.ndim(out) == 0 else out


# -- text format ---------------------------------------------------------------

FORMAT_LINE = "# format=1"


def format_parameters(params: OcvParameters) -> str:
    lines = [FORMAT_LINE, "# Combined+3 OCV parameters"]
    if params.cell_id is not None:
        lines.append(f"cell_id = {params.cell_id}")
    for j, kj in enumerate(params.k):
        lines.append(f"k{j} = {kj!r}")
    lines.append(f"r0h_Ohm = {params.r0h_Ohm!r}")
    lines.append(f"epsilon = {params.epsilon!r}")
    if params.residual_rms_V is not None:
        lines.append(f"residual_rms_V = {params.residual_rms_V!r}")
    if params.condition is not None:
        lines.append(f"condition = {params.condition!r}")
    if params.n_rows is not None:
        lines.append(f"n_rows = {params.n_rows}")
    return "\n".join(lines) + "\n"


def parse_parameters(text: str) -> OcvParameters:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_LINE:
        raise ValueError(f"parameter file must start with '{FORMAT_LINE}'")
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        k = [float(fields[f"k{j}"]) for j in range(N_COEFFS)]
        r0h = float(fields["r0h_Ohm"])
        eps = float(fields["epsilon"])
    except KeyError as exc:
        raise ValueError(f"parameter file missing field {exc.args[0]!r}") from None
    return OcvParameters(
        k=k,
        r0h_Ohm=r0h,
        epsilon=eps,
        residual_rms_V=float(fields["residual_rms_V"]) if "residual_rms_V" in fields else None,
        condition=float(fields["condition"]) if "condition" in fields else None,
        n_rows=int(fields["n_rows"]) if "n_rows" in fields else None,
        cell_id=fields.get("cell_id"),
    )


def save_parameters(params: OcvParameters, path) -> None:
    Path(path).write_text(format_parameters(params))


def load_parameters(path) -> OcvParameters:
    return parse_parameters(Path(path).read_text())
