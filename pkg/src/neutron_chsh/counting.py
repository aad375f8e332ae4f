"""Poisson count-rate simulation and the count-based CHSH estimator."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constants import CONTRAST_CRIT, ETA_CRIT, LOCAL_BOUND, TSIRELSON
from .qstate import CANONICAL_ANGLES, chsh_value

TWO_PI = 2 * math.pi
BOUNDARY_TOL = 1e-3


@dataclass(frozen=True)
class RateModel:
    """Count-rate model ``N0 (1 + C cos(alpha + delta - gamma))/2 + background``.

    ``alpha_error_bound`` is the half-width (rad) of the uniform systematic offset
    drawn once per spin-phase setting per run; ``alpha_offsets`` pins the offsets
    explicitly (keyed by the alpha value).
    """

    peak_counts: float = 32000.0
    contrast: float = 0.838
    background: float = 0.0
    alpha_error_bound: float = math.radians(2.0)
    alpha_offsets: Mapping[float, float] | None = None

    def __post_init__(self):
        if not self.peak_counts > 0:
            raise ValueError("peak counts must be positive")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError("contrast must lie in [0, 1]")
        if self.background < 0 or self.alpha_error_bound < 0:
            raise ValueError("background and alpha error bound must be nonnegative")


def expected_counts(model: RateModel, alpha: float, gamma: float, alpha_offset: float = 0.0) -> float:
    return (model.peak_counts * 0.5 * (1.0 + model.contrast * math.cos(alpha + alpha_offset - gamma))
            + model.background)


def sample_counts(mean: float, seed) -> int:
    """One Poisson draw; ``seed`` is anything ``numpy.random.default_rng`` accepts."""
    if mean < 0:
        raise ValueError("Poisson mean must be nonnegative")
    return int(np.random.default_rng(seed).poisson(mean))


@dataclass(frozen=True)
class SettingQuad:
    """Counts at (a, g), (a+pi, g+pi), (a, g+pi), (a+pi, g), in that order."""

    alpha: float
    gamma: float
    counts: tuple

    def __post_init__(self):
        counts = tuple(self.counts)
        if len(counts) != 4:
            raise ValueError("a setting quad holds exactly four counts")
        if any(c < 0 for c in counts):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @staticmethod
    def settings(alpha: float, gamma: float) -> list[tuple[float, float]]:
        a_perp, g_perp = alpha + math.pi, gamma + math.pi
        return [(alpha, gamma), (a_perp, g_perp), (alpha, g_perp), (a_perp, gamma)]


def expectation_from_counts(quad: SettingQuad) -> tuple[float, float]:
    """E = (a + b - c - d)/T with first-order Poisson error propagation."""
    a, b, c, d = (float(x) for x in quad.counts)
    total = a + b + c + d
    if total <= 0:
        raise ValueError("setting quad has zero total counts")
    e = (a + b - c - d) / total
    d_same = 2.0 * (c + d) / total**2
    d_opp = 2.0 * (a + b) / total**2
    var = d_same**2 * (a + b) + d_opp**2 * (c + d)
    return e, math.sqrt(var)


def violation_significance(S: float, sigma_S: float) -> float:
    if not sigma_S > 0:
        raise ValueError("sigma_S must be positive")
    return (S - LOCAL_BOUND) / sigma_S


@dataclass(frozen=True)
class BellRun:
    quads: tuple
    repetitions: int
    E: tuple
    sigma_E: tuple
    S: float
    sigma_S: float
    records: tuple = ()
    alpha_offsets: dict = field(default_factory=dict)
    contrast: float | None = None
    seed: int | None = None

    @property
    def significance(self) -> float:
        return violation_significance(self.S, self.sigma_S)

    @property
    def angles(self) -> tuple[float, float, float, float]:
        q = self.quads
        return (q[0].alpha, q[1].alpha, q[0].gamma, q[2].gamma)


def bell_quad_angles(angles: Sequence[float]) -> list[tuple[float, float]]:
    """(alpha, gamma) per quad in CHSH order (a1,g1), (a2,g1), (a1,g2), (a2,g2)."""
    a1, a2, g1, g2 = angles
    return [(a1, g1), (a2, g1), (a1, g2), (a2, g2)]


def chsh_sigma(sigmas: Sequence[float]) -> float:
    """Error on S from independent errors on the four correlations, added in quadrature."""
    if len(sigmas) != 4 or any(s < 0 for s in sigmas):
        raise ValueError("need four nonnegative correlation errors")
    return math.sqrt(sum(s * s for s in sigmas))


def bell_run_from_quads(quads: Sequence[SettingQuad], repetitions: int = 1, **extra) -> BellRun:
    es = [expectation_from_counts(q) for q in quads]
    E = tuple(e for e, _ in es)
    sig = tuple(s for _, s in es)
    S = chsh_value(*E)
    sigma_S = chsh_sigma(sig)
    return BellRun(tuple(quads), repetitions, E, sig, S, sigma_S, **extra)


def _offset_keys(angles: Sequence[float]) -> list[float]:
    a1, a2 = angles[0], angles[1]
    return [a1, a1 + math.pi, a2, a2 + math.pi]


def draw_alpha_offsets(model: RateModel, angles: Sequence[float], seed: int) -> dict:
    keys = _offset_keys(angles)
    if model.alpha_offsets is not None:
        return {k: float(model.alpha_offsets.get(k, 0.0)) for k in keys}
    b = model.alpha_error_bound
    draws = np.random.default_rng([seed, 1]).uniform(-b, b, len(keys)) if b > 0 else np.zeros(len(keys))
    return dict(zip(keys, (float(x) for x in draws)))


def _beamline_intensity(config, dist):
    """Intensity function and fitted contrast following the gamma-scan workflow."""
    from .analysis import positions_for_bell_angles
    from .ensemble import average_intensity, ensemble_scan

    scan = ensemble_scan(config, dist, alpha=0.0)
    fit = scan.fit
    travel = 1e3 * config.stage_travel

    def position(gamma):
        # gamma wrapped to [-pi, pi) keeps the positions symmetric about the fringe zero
        wrapped = (gamma + math.pi) % TWO_PI - math.pi
        x = positions_for_bell_angles(fit, [wrapped])[0]
        while x > travel:
            x -= fit.period
        while x < -travel:
            x += fit.period
        return x

    def intensity(alpha, gamma):
        return average_intensity(config, dist, alpha / 2, 1e-3 * position(gamma))

    return intensity, fit.contrast


def run_bell_experiment(config=None, dist=None, model: RateModel = RateModel(),
                        angles: Sequence[float] = CANONICAL_ANGLES, repetitions: int = 3,
                        seed: int = 0, noise: bool = True) -> BellRun:
    """Simulate the 16-setting Bell measurement ``repetitions`` times.

    Without a beamline (``config``/``dist`` None) the closed-form rate model with
    ``model.contrast`` is used.  With one, intensities come from the
    velocity-averaged beamline at stage positions taken from a gamma-scan fit.
    ``noise=False`` gives expected counts and no systematic offsets.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if (config is None) != (dist is None):
        raise ValueError("config and dist must be given together")
    if config is None:
        contrast = model.contrast

        def intensity(alpha, gamma):
            return 0.5 * (1.0 + model.contrast * math.cos(alpha - gamma))
    else:
        intensity, contrast = _beamline_intensity(config, dist)

    offsets = draw_alpha_offsets(model, angles, seed) if noise else {k: 0.0 for k in _offset_keys(angles)}
    means = []
    for q, (alpha, gamma) in enumerate(bell_quad_angles(angles)):
        for slot, (a, g) in enumerate(SettingQuad.settings(alpha, gamma)):
            mean = model.peak_counts * intensity(a + offsets[a], g) + model.background
            means.append((q, slot, a, g, mean))

    totals = [[0] * 4 for _ in range(4)]
    records = []
    for rep in range(repetitions):
        for k, (q, slot, a, g, mean) in enumerate(means):
            n = sample_counts(mean, [seed, 2, rep, k]) if noise else mean
            totals[q][slot] += n
            records.append((a, g, rep, n))

    quads = [SettingQuad(alpha, gamma, tuple(totals[q])) for q, (alpha, gamma) in
             enumerate(bell_quad_angles(angles))]
    return bell_run_from_quads(quads, repetitions, records=tuple(records), alpha_offsets=offsets,
                               contrast=contrast, seed=seed)


ANGLE_DIGITS = 6


def _reduce(x: float, modulus: float) -> float:
    """``x mod modulus`` rounded to ANGLE_DIGITS, with values just below ``modulus`` sent to 0."""
    y = x % modulus
    if modulus - y < 10.0 ** -ANGLE_DIGITS:
        y = 0.0
    return round(y, ANGLE_DIGITS)


def _angle_key(x: float) -> float:
    return _reduce(x, TWO_PI)


KEY_TOL = 3 * 10.0 ** -ANGLE_DIGITS


def _circ_close(a: float, b: float) -> bool:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d) < KEY_TOL


def _lookup(sums: Mapping, alpha: float, gamma: float):
    for (ka, kg), total in sums.items():
        if _circ_close(ka, alpha) and _circ_close(kg, gamma):
            return total
    raise ValueError(f"incomplete setting quad: no counts at alpha={alpha:.6f}, gamma={gamma:.6f}")


def _split_pairs(values: Iterable[float], name: str) -> tuple[float, float]:
    """From four angles forming two (x, x+pi) pairs, return the members in [0, pi), sorted."""
    vals = sorted(set(values))
    bases = [v for v in vals if v < math.pi - KEY_TOL]
    paired = len(vals) == 4 and len(bases) == 2 and all(
        any(_circ_close(b + math.pi, v) for v in vals) for b in bases)
    if not paired:
        raise ValueError(f"incomplete setting quad: expected four {name} values in two pairs, got "
                         f"{[round(v, 6) for v in vals]}")
    return bases[0], bases[1]


def bell_run_from_records(records: Iterable[tuple], angles: Sequence[float] | None = None) -> BellRun:
    """Aggregate ``(alpha, gamma, repetition, counts)`` rows into a BellRun.

    When ``angles`` is None the Bell directions are inferred: each of alpha and
    gamma must take four values forming two pairs separated by pi, and the member
    of each pair in [0, pi) is taken as the base direction.  Angles are matched
    modulo 2 pi to within a few 1e-6 rad.
    """
    sums: "OrderedDict[tuple, object]" = OrderedDict()
    reps = set()
    for alpha, gamma, rep, counts in records:
        key = (_angle_key(alpha), _angle_key(gamma))
        sums[key] = sums.get(key, 0) + counts
        reps.add(rep)
    if not sums:
        raise ValueError("no count records")
    if angles is None:
        a1, a2 = _split_pairs((a for a, _ in sums), "alpha")
        g1, g2 = _split_pairs((g for _, g in sums), "gamma")
        angles = (a1, a2, g1, g2)
    quads = []
    for alpha, gamma in bell_quad_angles(angles):
        counts = [_lookup(sums, a, g) for a, g in SettingQuad.settings(alpha, gamma)]
        quads.append(SettingQuad(alpha, gamma, tuple(counts)))
    return bell_run_from_quads(quads, len(reps), records=tuple(records))


@dataclass(frozen=True)
class ThresholdReport:
    contrast: float
    efficiency: float
    contrast_threshold: float = CONTRAST_CRIT
    efficiency_threshold: float = ETA_CRIT

    @property
    def contrast_margin(self) -> float:
        return self.contrast - self.contrast_threshold

    @property
    def efficiency_margin(self) -> float:
        return self.efficiency - self.efficiency_threshold

    @property
    def contrast_at_boundary(self) -> bool:
        return abs(self.contrast_margin) < BOUNDARY_TOL

    @property
    def efficiency_at_boundary(self) -> bool:
        return abs(self.efficiency_margin) < BOUNDARY_TOL

    @property
    def contrast_ok(self) -> bool:
        return self.contrast_margin > 0 and not self.contrast_at_boundary

    @property
    def efficiency_ok(self) -> bool:
        return self.efficiency_margin > 0 and not self.efficiency_at_boundary

    @property
    def max_chsh(self) -> float:
        return self.contrast * TSIRELSON

    def warnings(self) -> list[str]:
        out = []
        if self.contrast_at_boundary:
            out.append(f"contrast {self.contrast:.4f} is at the violation threshold {self.contrast_threshold:.4f}")
        elif self.contrast_margin < 0:
            out.append(f"contrast {self.contrast:.4f} below {self.contrast_threshold:.4f}: no CHSH violation possible")
        if self.efficiency_at_boundary:
            out.append(f"detector efficiency {self.efficiency:.4f} is at the loophole threshold")
        elif self.efficiency_margin < 0:
            out.append(f"detector efficiency {self.efficiency:.4f} below {self.efficiency_threshold:.4f}")
        return out

    def to_dict(self) -> dict:
        return {
            "contrast": self.contrast,
            "contrast_threshold": self.contrast_threshold,
            "contrast_margin": self.contrast_margin,
            "contrast_above": self.contrast_ok,
            "contrast_at_boundary": self.contrast_at_boundary,
            "efficiency": self.efficiency,
            "efficiency_threshold": self.efficiency_threshold,
            "efficiency_margin": self.efficiency_margin,
            "efficiency_above": self.efficiency_ok,
            "efficiency_at_boundary": self.efficiency_at_boundary,
            "max_chsh": self.max_chsh,
            "warnings": self.warnings(),
        }


def thresholds_report(contrast: float, detector_efficiency: float) -> ThresholdReport:
    for name, x in (("contrast", contrast), ("detector efficiency", detector_efficiency)):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    return ThresholdReport(contrast, detector_efficiency)
