"""Run configuration: strict INI parsing with documented defaults.

Sections and keys (angles in radians, lengths in the unit named by the suffix)::

    [beamline]
    wavelength_m = 1.99e-10
    guide_field_t = 1.1e-3
    rf_frequency_hz = 32000
    coil_length_m = 0.02
    flipper_separation_m = 0.50     # L, first to second RF flipper
    return_drift_m = 0.30           # L', DC flipper to second pi/2 turner
    stage_travel_mm = 40
    flip_efficiency = 1.0
    compensation = true             # DC pi flipper on the translation stage

    [source]
    fractional_spread = auto        # FWHM/mean; "auto" calibrates to target_contrast
    target_contrast = 0.838
    quadrature = gauss-hermite      # or monte-carlo
    sample_count = 64

    [counting]
    peak_counts = 32000
    contrast = auto                 # "auto" takes the beamline ensemble contrast
    background = 0
    alpha_error_bound_rad = 0.0349065850398866
    repetitions = 3
    detector_efficiency = 0.99

    [bell]
    alpha1 = 0
    alpha2 = 1.5707963267948966
    gamma1 = 0.7853981633974483
    gamma2 = 2.356194490192345
    source = model                  # or beamline

    [output]
    directory = out
    seed = 0
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .beamline import BeamlineConfig, canonical_config
from .counting import RateModel
from .ensemble import VelocityDistribution


class ConfigError(ValueError):
    pass


AUTO = "auto"


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_or_auto(text: str):
    return AUTO if text.strip().lower() == AUTO else float(text)


# section -> key -> (attribute, parser, default)
SCHEMA = {
    "beamline": {
        "wavelength_m": ("wavelength", float, 1.99e-10),
        "guide_field_t": ("guide_field", float, 1.1e-3),
        "rf_frequency_hz": ("rf_frequency_hz", float, 32000.0),
        "coil_length_m": ("coil_length", float, 0.02),
        "flipper_separation_m": ("flipper_separation", float, 0.50),
        "return_drift_m": ("return_drift", float, 0.30),
        "stage_travel_mm": ("stage_travel_mm", float, 40.0),
        "flip_efficiency": ("flip_efficiency", float, 1.0),
        "compensation": ("compensation", _bool, True),
    },
    "source": {
        "fractional_spread": ("fractional_spread", _float_or_auto, AUTO),
        "target_contrast": ("target_contrast", float, 0.838),
        "quadrature": ("quadrature", str, "gauss-hermite"),
        "sample_count": ("sample_count", int, 64),
    },
    "counting": {
        "peak_counts": ("peak_counts", float, 32000.0),
        "contrast": ("contrast", _float_or_auto, AUTO),
        "background": ("background", float, 0.0),
        "alpha_error_bound_rad": ("alpha_error_bound", float, math.radians(2.0)),
        "repetitions": ("repetitions", int, 3),
        "detector_efficiency": ("detector_efficiency", float, 0.99),
    },
    "bell": {
        "alpha1": ("alpha1", float, 0.0),
        "alpha2": ("alpha2", float, math.pi / 2),
        "gamma1": ("gamma1", float, math.pi / 4),
        "gamma2": ("gamma2", float, 3 * math.pi / 4),
        "source": ("bell_source", str, "model"),
    },
    "output": {
        "directory": ("output_dir", str, "out"),
        "seed": ("seed", int, 0),
    },
}


@dataclass(frozen=True)
class RunConfig:
    wavelength: float = 1.99e-10
    guide_field: float = 1.1e-3
    rf_frequency_hz: float = 32000.0
    coil_length: float = 0.02
    flipper_separation: float = 0.50
    return_drift: float = 0.30
    stage_travel_mm: float = 40.0
    flip_efficiency: float = 1.0
    compensation: bool = True
    fractional_spread: object = AUTO
    target_contrast: float = 0.838
    quadrature: str = "gauss-hermite"
    sample_count: int = 64
    peak_counts: float = 32000.0
    contrast: object = AUTO
    background: float = 0.0
    alpha_error_bound: float = math.radians(2.0)
    repetitions: int = 3
    detector_efficiency: float = 0.99
    alpha1: float = 0.0
    alpha2: float = math.pi / 2
    gamma1: float = math.pi / 4
    gamma2: float = 3 * math.pi / 4
    bell_source: str = "model"
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        positive = ("wavelength", "guide_field", "rf_frequency_hz", "coil_length", "flipper_separation",
                    "return_drift", "stage_travel_mm", "peak_counts", "target_contrast")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.flip_efficiency <= 1:
            raise ConfigError("flip_efficiency must lie in (0, 1]")
        if self.target_contrast > 1:
            raise ConfigError("target_contrast must not exceed 1")
        if self.contrast != AUTO and not 0 <= self.contrast <= 1:
            raise ConfigError("contrast must lie in [0, 1]")
        if self.fractional_spread != AUTO and not 0 <= self.fractional_spread < 0.2:
            raise ConfigError("fractional_spread must lie in [0, 0.2)")
        if self.background < 0 or self.alpha_error_bound < 0:
            raise ConfigError("background and alpha_error_bound_rad must be nonnegative")
        if self.repetitions < 1 or self.sample_count < 1:
            raise ConfigError("repetitions and sample_count must be at least 1")
        if not 0 <= self.detector_efficiency <= 1:
            raise ConfigError("detector_efficiency must lie in [0, 1]")
        if self.quadrature not in ("gauss-hermite", "monte-carlo"):
            raise ConfigError("quadrature must be gauss-hermite or monte-carlo")
        if self.bell_source not in ("model", "beamline"):
            raise ConfigError("bell source must be model or beamline")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def angles(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.gamma1, self.gamma2)

    def beamline(self) -> BeamlineConfig:
        return canonical_config(
            wavelength=self.wavelength,
            guide_field=self.guide_field,
            rf_frequency_hz=self.rf_frequency_hz,
            coil_length=self.coil_length,
            L=self.flipper_separation,
            L_prime=self.return_drift,
            stage_travel=1e-3 * self.stage_travel_mm,
            flip_efficiency=self.flip_efficiency,
            compensation=self.compensation,
        )

    def distribution(self, spread: float) -> VelocityDistribution:
        return VelocityDistribution(self.wavelength, spread, sample_count=self.sample_count,
                                    seed=self.seed, method=self.quadrature)

    def rate_model(self, contrast: float) -> RateModel:
        return RateModel(self.peak_counts, contrast, self.background, self.alpha_error_bound)


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            attr, conv, _ = SCHEMA[section][key]
            try:
                values[attr] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return RunConfig(**values)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def default_config_text() -> str:
    """The documented defaults rendered as a config file."""
    attr_defaults = {f.name: f.default for f in fields(RunConfig)}
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (attr, _, _) in keys.items():
            value = attr_defaults[attr]
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
