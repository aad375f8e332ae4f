"""Velocity-spread averaging: how the monochromator momentum spread washes out the fringe."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .analysis import FitResult, ScanData, fit_sinusoid
from .beamline import BeamlineConfig, gamma_period_mm, gamma_zero_displacement, transmission
from .constants import H_OVER_MN

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
MAX_SPREAD = 0.2
METHODS = ("gauss-hermite", "monte-carlo")


@dataclass(frozen=True)
class VelocityDistribution:
    """Gaussian momentum (= velocity) distribution.

    ``fractional_spread`` is the FWHM divided by the mean.  ``sample_count`` is the
    number of quadrature nodes or Monte-Carlo draws; ``seed`` only matters for
    Monte Carlo.
    """

    mean_wavelength: float = 1.99e-10
    fractional_spread: float = 0.0
    shape: str = "gaussian"
    sample_count: int = 64
    seed: int = 0
    method: str = "gauss-hermite"

    def __post_init__(self):
        if not self.mean_wavelength > 0:
            raise ValueError("mean wavelength must be positive")
        if not 0.0 <= self.fractional_spread < MAX_SPREAD:
            raise ValueError(f"fractional spread must lie in [0, {MAX_SPREAD})")
        if self.shape != "gaussian":
            raise ValueError(f"unsupported distribution shape {self.shape!r}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    @property
    def mean_velocity(self) -> float:
        return H_OVER_MN / self.mean_wavelength

    @property
    def relative_sigma(self) -> float:
        return self.fractional_spread / FWHM_PER_SIGMA

    def with_spread(self, spread: float) -> "VelocityDistribution":
        return VelocityDistribution(self.mean_wavelength, spread, self.shape, self.sample_count,
                                    self.seed, self.method)


def velocity_nodes(dist: VelocityDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Velocities and normalized weights representing ``dist``."""
    v0, sig = dist.mean_velocity, dist.relative_sigma
    if sig == 0:
        return np.array([v0]), np.array([1.0])
    if dist.method == "gauss-hermite":
        x, w = hermgauss(dist.sample_count)
        u = 1.0 + math.sqrt(2.0) * sig * x
        w = w / math.sqrt(math.pi)
    else:
        rng = np.random.default_rng(dist.seed)
        u = 1.0 + sig * rng.standard_normal(dist.sample_count)
        w = np.full(dist.sample_count, 1.0 / dist.sample_count)
    # far-tail nodes (weight < 1e-30 for spreads below MAX_SPREAD) would reach v <= 0
    keep = u > 0.05
    w = w[keep]
    return v0 * u[keep], w / w.sum()


def average_intensity(config: BeamlineConfig, dist: VelocityDistribution, phi_omega: float,
                      delta_L: float | None = None) -> float:
    """Velocity-averaged transmitted probability at one (phi_omega, stage) setting."""
    cfg = config if delta_L is None else config.with_stage(delta_L)
    v, w = velocity_nodes(dist)
    return float(np.sum(w * transmission(cfg, phi_omega, v)))


@dataclass(frozen=True)
class EnsembleResult:
    positions_mm: np.ndarray
    mean_intensity: np.ndarray
    alpha: float
    fit: FitResult
    zero_mm: float

    @property
    def effective_contrast(self) -> float:
        return self.fit.contrast

    @property
    def phase_offset(self) -> float:
        """Shift (rad) of the averaged fringe relative to the single-velocity gamma zero."""
        return 2 * math.pi * (self.fit.phase_zero - self.zero_mm) / self.fit.period


def default_scan_positions(config: BeamlineConfig, periods: float = 2.0, points: int = 48) -> np.ndarray:
    """Stage positions (mm) centred on the gamma zero, clipped to the stage travel."""
    period = gamma_period_mm(config)
    zero = 1e3 * gamma_zero_displacement(config)
    travel = 1e3 * config.stage_travel
    lo = max(-travel, zero - periods * period / 2)
    hi = min(travel, zero + periods * period / 2)
    return np.linspace(lo, hi, points)


def ensemble_scan(config: BeamlineConfig, dist: VelocityDistribution, alpha: float = 0.0,
                  positions_mm=None) -> EnsembleResult:
    """Noise-free gamma-scan of the velocity-averaged fringe, with its sinusoid fit."""
    x = default_scan_positions(config) if positions_mm is None else np.asarray(positions_mm, float)
    y = np.array([average_intensity(config, dist, alpha / 2, 1e-3 * p) for p in x])
    fit = fit_sinusoid(ScanData(x, y, alpha_setting=alpha))
    return EnsembleResult(x, y, alpha, fit, 1e3 * gamma_zero_displacement(config))


def effective_contrast(config: BeamlineConfig, dist: VelocityDistribution) -> float:
    """Fringe contrast B/A from a fitted gamma-scan of the averaged intensity."""
    return ensemble_scan(config, dist).effective_contrast


def calibrate_spread_to_contrast(config: BeamlineConfig, target_contrast: float,
                                 dist: VelocityDistribution | None = None, tol: float = 1e-3,
                                 max_spread: float = 0.199) -> float:
    """Fractional (FWHM) momentum spread whose effective contrast equals ``target_contrast``.

    The bracket grows upward from a small spread until the contrast falls below
    the target, then bisection on the monotone map spread -> contrast stops once
    ``|C - target| < tol / 10``.  Growing from below matters: at spreads where the
    phase spread exceeds ~10 rad, a fixed quadrature aliases and the computed
    contrast is meaningless.
    """
    if not 0.0 < target_contrast <= 1.0:
        raise ValueError("target contrast must lie in (0, 1]")
    if target_contrast == 1.0:
        return 0.0
    if dist is None:
        dist = VelocityDistribution(mean_wavelength=config.kinematics.wavelength)

    def contrast(s):
        return effective_contrast(config, dist.with_spread(s))

    lo, hi = 0.0, min(1e-3, max_spread)
    while contrast(hi) > target_contrast:
        if hi >= max_spread:
            raise ValueError(f"target contrast {target_contrast} unreachable with spread <= {max_spread}")
        lo, hi = hi, min(2 * hi, max_spread)
    mid = 0.5 * (lo + hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        c = contrast(mid)
        if abs(c - target_contrast) < tol / 10:
            break
        if c > target_contrast:
            lo = mid
        else:
            hi = mid
    return mid
