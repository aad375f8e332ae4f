"""Reduction of gamma-scans: sinusoid fits and stage-position <-> energy-phase conversion.

Model: ``y = A + B cos(2 pi (x - x0) / P)`` with ``x`` the stage displacement in mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

MIN_POINTS = 8
PARAM_NAMES = ("offset", "amplitude", "period", "phase_zero")


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanData:
    positions: np.ndarray  # mm
    counts: np.ndarray
    alpha_setting: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        y = np.asarray(self.counts, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("positions and counts must be 1-D arrays of equal length")
        if len(x) < MIN_POINTS:
            raise ValueError(f"a scan needs at least {MIN_POINTS} points, got {len(x)}")
        if np.any(np.diff(x) <= 0):
            raise ValueError("scan positions must be strictly increasing")
        if np.any(y < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "counts", y)

    @property
    def span(self) -> float:
        return float(self.positions[-1] - self.positions[0])


@dataclass(frozen=True)
class FitResult:
    offset: float
    amplitude: float
    period: float
    phase_zero: float
    covariance: np.ndarray
    chi2_dof: float
    n_points: int
    iterations: int = 0

    @property
    def params(self) -> np.ndarray:
        return np.array([self.offset, self.amplitude, self.period, self.phase_zero])

    @property
    def errors(self) -> dict:
        return dict(zip(PARAM_NAMES, np.sqrt(np.diag(self.covariance))))

    @property
    def contrast(self) -> float:
        return self.amplitude / self.offset

    @property
    def contrast_err(self) -> float:
        a, b = self.offset, self.amplitude
        grad = np.array([-b / a**2, 1.0 / a])
        return float(math.sqrt(grad @ self.covariance[:2, :2] @ grad))

    def model(self, x) -> np.ndarray:
        return sinusoid(np.asarray(x, dtype=float), *self.params)

    def to_dict(self) -> dict:
        err = self.errors
        return {
            "offset": self.offset,
            "offset_err": float(err["offset"]),
            "amplitude": self.amplitude,
            "amplitude_err": float(err["amplitude"]),
            "period_mm": self.period,
            "period_err_mm": float(err["period"]),
            "phase_zero_mm": self.phase_zero,
            "phase_zero_err_mm": float(err["phase_zero"]),
            "contrast": self.contrast,
            "contrast_err": self.contrast_err,
            "chi2_dof": self.chi2_dof,
        }


def sinusoid(x, offset, amplitude, period, phase_zero):
    return offset + amplitude * np.cos(2 * np.pi * (x - phase_zero) / period)


def _initial_guess(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Periodogram peak over periods shorter than the scan, then a linear solve at that frequency."""
    span = x[-1] - x[0]
    y0 = y - y.mean()
    freqs = np.linspace(1.0 / span, 0.5 * len(x) / span, 4000)
    power = np.abs(np.exp(-2j * np.pi * np.outer(freqs, x)) @ y0) ** 2
    f = freqs[np.argmax(power)]
    design = np.column_stack([np.ones_like(x), np.cos(2 * np.pi * f * x), np.sin(2 * np.pi * f * x)])
    (a0, ac, as_), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp = math.hypot(ac, as_)
    x0 = math.atan2(as_, ac) / (2 * np.pi * f)
    return np.array([a0, amp, 1.0 / f, x0])


def fit_sinusoid(scan: ScanData, max_iter: int = 200, xtol: float = 1e-10) -> FitResult:
    """Poisson-weighted least-squares fit of a single sinusoid to a scan.

    Weights are ``1/max(count, 1)``.  Parameter covariance is the inverse of the
    weighted normal matrix (not rescaled by chi-square).
    """
    x, y = scan.positions, scan.counts
    if np.ptp(y) == 0:
        raise FitError("zero amplitude / unidentifiable period: the scan is constant")
    sw = 1.0 / np.sqrt(np.maximum(y, 1.0))

    def resid(p):
        return (sinusoid(x, *p) - y) * sw

    def jac(p):
        a, b, per, x0 = p
        ph = 2 * np.pi * (x - x0) / per
        s = np.sin(ph)
        cols = [
            np.ones_like(x),
            np.cos(ph),
            b * s * ph / per,
            b * s * 2 * np.pi / per,
        ]
        return np.column_stack(cols) * sw[:, None]

    p0 = _initial_guess(x, y)
    sol = least_squares(resid, p0, jac=jac, method="lm", xtol=xtol, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_iter * (len(p0) + 1))
    if sol.status <= 0:
        raise FitError(f"sinusoid fit did not converge: {sol.message}")
    a, b, per, x0 = sol.x
    if per <= 0:
        raise FitError("fit converged to a nonpositive period")
    if b < 0:
        b, x0 = -b, x0 + per / 2
    if scan.span < 0.95 * per:
        raise FitError(f"insufficient span: scan covers {scan.span:.3g} < one period {per:.3g}")
    centre = 0.5 * (x[0] + x[-1])
    x0 = centre + ((x0 - centre + per / 2) % per) - per / 2

    p = np.array([a, b, per, x0])
    J = jac(p)
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular normal matrix") from exc
    r = resid(p)
    dof = max(len(x) - 4, 1)
    return FitResult(float(a), float(b), float(per), float(x0), cov, float(r @ r / dof), len(x), sol.nfev)


def mm_to_gamma(displacement, fit: FitResult):
    """Energy phase (rad) at a stage displacement (mm)."""
    if not fit.period > 0:
        raise ValueError("fit has no valid period")
    return 2 * np.pi * (np.asarray(displacement, dtype=float) - fit.phase_zero) / fit.period


def positions_for_bell_angles(fit: FitResult, gammas: Sequence[float]) -> list[float]:
    """Inverse of :func:`mm_to_gamma`."""
    if not fit.period > 0:
        raise ValueError("fit has no valid period")
    return [fit.phase_zero + fit.period * g / (2 * np.pi) for g in gammas]
