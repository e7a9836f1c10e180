"""Energy-harvesting characteristics.

The allocator is designed against the two-segment model
``min(eta * p_in, p_sat)``. Rates can be evaluated against a different
"truth" curve to study model mismatch: a smooth logistic-type saturation
curve or a measured table.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

PIECEWISE_LINEAR = "piecewise_linear"
LOGISTIC = "logistic"
TABLE = "table"
CURVE_KINDS = (PIECEWISE_LINEAR, LOGISTIC, TABLE)

DEFAULT_ETA = 0.2
DEFAULT_P_SAT = 9.2e-6
DEFAULT_KNEE_DBM = -16.0


class DegenerateCurveError(ValueError):
    """Raised when a curve cannot be summarised by a two-segment fit."""

    def __init__(self, message: str, eta: float = float("nan")):
        super().__init__(message)
        self.eta = eta


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class EhuProfile:
    """Harvesting parameters of one user and its distance to the BS (m)."""

    eta: float
    p_sat: float
    distance: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if not self.p_sat > 0.0:
            raise ValueError(f"p_sat must be positive, got {self.p_sat}")
        if not self.distance > 0.0:
            raise ValueError(f"distance must be positive, got {self.distance}")

    def design_curve(self) -> "EhCurve":
        return EhCurve.piecewise_linear(self.eta, self.p_sat)


@dataclass(frozen=True)
class EhCurve:
    """Incident RF power (W) to harvested DC power (W).

    ``params`` by kind:

    * ``piecewise_linear``: ``eta``, ``p_sat``
    * ``logistic``: ``slope``, ``p_sat``; the curve is
      ``p_sat * (2 / (1 + exp(-2*slope*p/p_sat)) - 1)``, i.e. a logistic
      shifted to pass through the origin with initial slope ``slope``
    * ``table``: ``p_in`` and ``p_h`` arrays, linearly interpolated and held
      constant beyond the last point
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.kind == TABLE:
            p_in = np.asarray(self.params["p_in"], dtype=float)
            p_h = np.asarray(self.params["p_h"], dtype=float)
            if p_in.ndim != 1 or p_in.shape != p_h.shape or p_in.size < 2:
                raise ValueError("table curve needs two equal-length columns with >= 2 rows")
            if np.any(np.diff(p_in) <= 0):
                raise ValueError("table incident power column must be strictly increasing")
            if p_in[0] < 0 or np.any(p_h < 0) or np.any(np.diff(p_h) < 0):
                raise ValueError("table curve must be non-negative and non-decreasing")

    @classmethod
    def piecewise_linear(cls, eta: float, p_sat: float) -> "EhCurve":
        return cls(PIECEWISE_LINEAR, {"eta": float(eta), "p_sat": float(p_sat)})

    @classmethod
    def logistic(cls, slope: float = DEFAULT_ETA, p_sat: float = DEFAULT_P_SAT) -> "EhCurve":
        return cls(LOGISTIC, {"slope": float(slope), "p_sat": float(p_sat)})

    @classmethod
    def table(cls, p_in: Sequence[float], p_h: Sequence[float]) -> "EhCurve":
        p_in = np.asarray(p_in, dtype=float)
        p_h = np.asarray(p_h, dtype=float)
        if p_in.size and p_in[0] > 0:
            p_in = np.concatenate([[0.0], p_in])
            p_h = np.concatenate([[0.0], p_h])
        return cls(TABLE, {"p_in": p_in, "p_h": p_h})

    @property
    def saturation(self) -> float:
        if self.kind == TABLE:
            return float(np.max(self.params["p_h"]))
        return float(self.params["p_sat"])

    def __call__(self, p_in):
        return harvested_power(self, p_in)


def harvested_power(curve: EhCurve, p_in):
    p = np.asarray(p_in, dtype=float)
    if curve.kind == PIECEWISE_LINEAR:
        out = np.minimum(curve.params["eta"] * p, curve.params["p_sat"])
    elif curve.kind == LOGISTIC:
        # tanh(v) == 2/(1+exp(-2v)) - 1
        p_sat = curve.params["p_sat"]
        out = p_sat * np.tanh(curve.params["slope"] * p / p_sat)
    else:
        out = np.interp(p, curve.params["p_in"], curve.params["p_h"])
    return float(out) if np.ndim(out) == 0 else out


def harvested_energy(profile: EhuProfile, x_k, n0: float, p0, tau0, t: float = 1.0):
    """Energy collected in the EH phase: ``T * min(N0*eta*x*p0, P_H) * tau0``."""
    p_in = n0 * np.asarray(x_k, dtype=float) * p0
    return t * tau0 * harvested_power(profile.design_curve(), p_in)


def fit_piecewise(curve: EhCurve, knee_input: float = dbm_to_watt(DEFAULT_KNEE_DBM),
                  distance: float = 10.0, n_points: int = 257) -> EhuProfile:
    """Two-segment fit: least-squares slope through the origin on
    ``[0, knee_input]`` and the curve's plateau as saturation level."""
    if not knee_input > 0:
        raise ValueError("knee_input must be positive")
    p = np.linspace(0.0, knee_input, n_points)
    h = np.asarray(harvested_power(curve, p))
    eta = float(np.dot(p, h) / np.dot(p, p))

    if curve.kind == TABLE:
        p_in, p_h = curve.params["p_in"], curve.params["p_h"]
        last_slope = (p_h[-1] - p_h[-2]) / (p_in[-1] - p_in[-2])
        if eta > 0 and last_slope > 1e-3 * eta:
            raise DegenerateCurveError(
                "table ends before the curve flattens; no saturation plateau", eta)
    p_sat = curve.saturation

    if not eta > 0:
        raise DegenerateCurveError(f"fitted slope is {eta}; curve is flat below the knee", eta)
    if not eta < 1:
        raise DegenerateCurveError(f"fitted slope {eta} is not an efficiency", eta)
    return EhuProfile(eta=eta, p_sat=p_sat, distance=distance)


def load_table_csv(path) -> EhCurve:
    """Read a two-column CSV (incident W, harvested W). Lines starting with
    ``#`` and a non-numeric header row are skipped."""
    rows = []
    with open(Path(path), newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise
    if not rows:
        raise ValueError(f"{path}: no data rows")
    p_in, p_h = zip(*rows)
    return EhCurve.table(p_in, p_h)


def curves_for(truth, profiles: Sequence[EhuProfile]) -> list[EhCurve]:
    """Per-user truth curves.

    ``truth`` may be a curve (shared by every user) or a kind name. A bare
    ``"piecewise_linear"`` reproduces each user's design model and
    ``"logistic"`` builds a smooth curve with each user's slope and plateau.
    """
    if isinstance(truth, EhCurve):
        return [truth] * len(profiles)
    kind = truth or PIECEWISE_LINEAR
    if kind == PIECEWISE_LINEAR:
        return [p.design_curve() for p in profiles]
    if kind == LOGISTIC:
        return [EhCurve.logistic(p.eta, p.p_sat) for p in profiles]
    raise ValueError(f"truth kind {kind!r} needs explicit curve data")


def evaluate_curves(curves: Sequence[EhCurve], p_in: np.ndarray) -> np.ndarray:
    """Apply curve ``k`` to column ``k`` of ``p_in`` (shape (M, K))."""
    out = np.empty_like(p_in, dtype=float)
    for k, curve in enumerate(curves):
        out[:, k] = harvested_power(curve, p_in[:, k])
    return out

