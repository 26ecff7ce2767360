"""Fit an 8-step RED marking curve to the ideal decrease-canceling curve.

The ideal per-packet marking probability for an instantaneous queue q is

    p(q) = 0                               q <= l
           min((q - l) / (bdp - l + q), 1/2)   q > l

divided by the sender-side compensation factor r (a sender that shrinks
its window by r per echo needs 1/r as many echoes). Commodity switches
cannot express this curve; classic RED gives eight equal-width probability
steps between two thresholds with a tunable ceiling p_max, marking
everything above the upper threshold. This module finds the p_max whose
staircase is closest to the ideal curve in the least-squares sense over
[t_min, t_max] and packages the result as a switch configuration.

Queue positions and thresholds here are in kilobytes, and the fitting
error is the integral of the squared difference, so its unit is KB.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from tbtcpsim.marking import STEP_FRACTIONS, step_index

QUADRATURE_STEP_KB = 0.1
GRID_STEP = 0.005


@dataclass(frozen=True)
class CurveSpec:
    """Ideal-curve parameters and the fitting window, all in KB.

    l is the burst-tolerance offset below which nothing is marked; the
    switch's lower threshold t_min is normally set equal to it. t_max must
    clear bdp + l, the point where the ideal curve saturates at 1/2.
    """

    bdp: float
    l: float
    t_min: float
    t_max: float
    scale_r: int = 1

    def __post_init__(self) -> None:
        if self.bdp <= 0:
            raise ValueError(f"bdp must be positive, got {self.bdp}")
        if self.l < 0:
            raise ValueError(f"l must be non-negative, got {self.l}")
        if not 0 <= self.t_min < self.t_max:
            raise ValueError(
                f"need 0 <= t_min < t_max, got t_min={self.t_min} t_max={self.t_max}"
            )
        if self.t_max <= self.bdp + self.l:
            raise ValueError(
                f"t_max must exceed bdp + l = {self.bdp + self.l}, got {self.t_max}"
            )
        if self.scale_r < 1 or int(self.scale_r) != self.scale_r:
            raise ValueError(f"scale_r must be a positive integer, got {self.scale_r}")


@dataclass(frozen=True)
class FitResult:
    p_max: float
    err: float


def corrected_p(spec: CurveSpec, q: float) -> float:
    """Ideal marking probability at queue position q KB, scaled by 1/r."""
    if q < 0:
        raise ValueError(f"queue position must be non-negative, got {q}")
    if q <= spec.l:
        return 0.0
    return min((q - spec.l) / (spec.bdp - spec.l + q), 0.5) / spec.scale_r


def step_f(spec: CurveSpec, p_max: float, q: float) -> float:
    """Staircase approximation: 0 through t_min, 8 steps, 1 above t_max."""
    if q < 0:
        raise ValueError(f"queue position must be non-negative, got {q}")
    if q <= spec.t_min:
        return 0.0
    if q > spec.t_max:
        return 1.0
    return p_max * STEP_FRACTIONS[step_index(q, spec.t_min, spec.t_max)]


def _unit_staircase(spec: CurveSpec, qs: np.ndarray) -> np.ndarray:
    """step_f with p_max = 1 on [t_min, t_max], vectorized for quadrature."""
    s = (spec.t_max - spec.t_min) / 8.0
    idx = np.ceil((qs - spec.t_min) / s).astype(int) - 1
    np.clip(idx, 0, 7, out=idx)
    vals = np.asarray(STEP_FRACTIONS)[idx]
    vals[qs <= spec.t_min] = 0.0
    return vals


def fit_pmax(spec: CurveSpec) -> FitResult:
    """Minimize the squared-difference integral over [t_min, t_max] in p_max.

    Quadrature is trapezoid with step <= 0.1 KB; the scalar search is a
    0.005-spaced grid over (0, 1] followed by parabolic refinement through
    the best grid point and its neighbors. The objective is quadratic in
    p_max between step boundaries, so the refinement lands on the true
    minimum of the sampled objective.
    """
    n = max(1, int(np.ceil((spec.t_max - spec.t_min) / QUADRATURE_STEP_KB)))
    qs = np.linspace(spec.t_min, spec.t_max, n + 1)
    ideal = np.array([corrected_p(spec, float(q)) for q in qs])
    stair = _unit_staircase(spec, qs)

    grid = np.arange(GRID_STEP, 1.0 + GRID_STEP / 2, GRID_STEP)
    errs = np.array(
        [float(np.trapezoid((ideal - p * stair) ** 2, qs)) for p in grid]
    )
    best = int(np.argmin(errs))

    if 0 < best < len(grid) - 1:
        e0, e1, e2 = errs[best - 1], errs[best], errs[best + 1]
        denom = e0 - 2.0 * e1 + e2
        offset = 0.5 * (e0 - e2) / denom if denom > 0 else 0.0
        p_star = float(grid[best] + offset * GRID_STEP)
    else:
        p_star = float(grid[best])
    p_star = min(max(p_star, GRID_STEP), 1.0)
    err_star = float(np.trapezoid((ideal - p_star * stair) ** 2, qs))
    return FitResult(p_max=p_star, err=err_star)


@dataclass(frozen=True)
class SwitchConfigRecord:
    """What gets programmed: switch thresholds/ceiling plus the sender's r."""

    t_min: float
    t_max: float
    p_max: float
    scale_r: int

    def to_config(self) -> dict[str, str]:
        """Key/value form for an experiment config file section."""
        return {
            "t_min_kb": repr(self.t_min),
            "t_max_kb": repr(self.t_max),
            "p_max": repr(self.p_max),
            "scale_r": str(self.scale_r),
        }

    @classmethod
    def from_config(cls, section: Mapping[str, str]) -> "SwitchConfigRecord":
        return cls(
            t_min=float(section["t_min_kb"]),
            t_max=float(section["t_max_kb"]),
            p_max=float(section["p_max"]),
            scale_r=int(section["scale_r"]),
        )


def emit_switch_config(spec: CurveSpec, fit: FitResult) -> SwitchConfigRecord:
    return SwitchConfigRecord(
        t_min=spec.t_min, t_max=spec.t_max, p_max=fit.p_max, scale_r=spec.scale_r
    )
