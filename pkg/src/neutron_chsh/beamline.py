"""Operator model of the polarimeter: polarizer, DC turners, RF flippers, guide-field drifts.

Each element maps a :class:`~neutron_chsh.qstate.JointState` to a new state.  The
array kernels (``_k_*``) operate on amplitude arrays of shape ``(..., 2, N)`` so
that a whole velocity ensemble can be pushed through the beamline at once.

Conventions
-----------
* Spin rotations are ``exp(-i theta n.sigma / 2)``.  The DC pi/2 turner rotates
  about +y so that ``|up>`` becomes ``(|up> + |down>)/sqrt(2)``.  The DC pi flipper
  rotates about +x.
* RF flipper with oscillator phase ``phi``:
  ``|up, n> -> e^{+i phi}|down, n-1>`` and ``|down, n> -> e^{-i phi}|up, n+1>``.
* The fringe at the analyzer is ``(1 + cos(gamma - alpha))/2`` with ``alpha = 2 phi``
  and ``gamma`` growing with the stage displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .constants import H_OVER_MN, HBAR, MU_N
from .qstate import DOWN, UP, JointState, TruncationError, basis_state

Array = np.ndarray


class BeamlineError(ValueError):
    pass


# --------------------------------------------------------------------------- kinematics


def velocity_from_wavelength(wavelength: float) -> float:
    """de Broglie velocity in m/s for a wavelength in metres."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return H_OVER_MN / wavelength


def resonance_frequency(B0: float) -> float:
    """Larmor / RF resonance angular frequency 2|mu|B0/hbar in rad/s."""
    if not B0 > 0:
        raise ValueError("guide field must be positive")
    return 2.0 * MU_N * B0 / HBAR


def rf_amplitude_for_pi_flip(coil_length: float, velocity: float) -> float:
    """Rotating-frame field amplitude (T) giving a pi flip during the coil transit time."""
    if not (coil_length > 0 and velocity > 0):
        raise ValueError("coil length and velocity must be positive")
    tau = coil_length / velocity
    return math.pi * HBAR / (2.0 * tau * MU_N)


@dataclass(frozen=True)
class NeutronKinematics:
    wavelength: float
    velocity: float

    def __post_init__(self):
        if not (self.wavelength > 0 and self.velocity > 0):
            raise ValueError("wavelength and velocity must be positive")
        expected = H_OVER_MN / self.wavelength
        if abs(self.velocity - expected) > 1e-9 * expected:
            raise ValueError("velocity and wavelength violate the de Broglie relation")

    @classmethod
    def from_wavelength(cls, wavelength: float) -> "NeutronKinematics":
        return cls(wavelength, velocity_from_wavelength(wavelength))

    @classmethod
    def from_velocity(cls, velocity: float) -> "NeutronKinematics":
        if not velocity > 0:
            raise ValueError("velocity must be positive")
        return cls(H_OVER_MN / velocity, velocity)


# --------------------------------------------------------------------------- elements


@dataclass(frozen=True)
class Polarizer:
    position: float


@dataclass(frozen=True)
class DcPi2:
    position: float
    sign: int = 1


@dataclass(frozen=True)
class RfFlipper:
    position: float
    frequency: float  # rad/s
    phase: float = 0.0
    coil_length: float = 0.02
    efficiency: float = 1.0
    on_stage: bool = False


@dataclass(frozen=True)
class GuideFieldDrift:
    """Guide-field region starting at ``position``.

    ``stage_coupling`` is +1 if the drift ends at the translation stage (it grows
    with the displacement), -1 if it starts there, 0 if it does not touch it.
    """

    position: float
    B0: float
    length: float
    stage_coupling: int = 0


@dataclass(frozen=True)
class DcPi:
    position: float
    on_stage: bool = False


@dataclass(frozen=True)
class Analyzer:
    position: float


BeamlineElement = Union[Polarizer, DcPi2, RfFlipper, GuideFieldDrift, DcPi, Analyzer]

_THIN = (Polarizer, DcPi2, RfFlipper, DcPi, Analyzer)
_ORDER = (Polarizer, DcPi2, RfFlipper, GuideFieldDrift, RfFlipper, DcPi, GuideFieldDrift, DcPi2, Analyzer)


def _effective_position(el, delta_L: float) -> float:
    if isinstance(el, GuideFieldDrift):
        return el.position + (delta_L if el.stage_coupling == -1 else 0.0)
    return el.position + (delta_L if getattr(el, "on_stage", False) else 0.0)


def _drift_length(el: GuideFieldDrift, delta_L: float) -> float:
    return el.length + el.stage_coupling * delta_L


@dataclass(frozen=True)
class BeamlineConfig:
    elements: tuple
    guide_field: float
    kinematics: NeutronKinematics
    stage_displacement: float = 0.0  # m
    stage_travel: float = 0.040  # m, symmetric bound on |stage_displacement|
    n_max: int = 2

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        self.validate()

    def validate(self) -> None:
        kinds = [type(el) for el in self.elements]
        expected = list(_ORDER)
        if DcPi not in kinds:
            expected.remove(DcPi)
        if kinds != expected:
            names = ", ".join(k.__name__ for k in kinds)
            raise BeamlineError(f"element order does not match the polarimeter layout: {names}")
        if not self.guide_field > 0:
            raise BeamlineError("guide field must be positive")
        if abs(self.stage_displacement) > self.stage_travel + 1e-12:
            raise BeamlineError(
                f"stage displacement {self.stage_displacement * 1e3:.3f} mm exceeds "
                f"travel +/-{self.stage_travel * 1e3:.1f} mm"
            )
        freqs = {el.frequency for el in self.elements if isinstance(el, RfFlipper)}
        if len(freqs) != 1:
            raise BeamlineError("all RF flippers must run at the same frequency")
        if not next(iter(freqs)) > 0:
            raise BeamlineError("RF frequency must be positive")
        dl = self.stage_displacement
        pos = [_effective_position(el, dl) for el in self.elements]
        if any(b < a for a, b in zip(pos, pos[1:])):
            raise BeamlineError("element positions must increase along the beam")
        thin = [p for el, p in zip(self.elements, pos) if isinstance(el, _THIN)]
        if any(b <= a for a, b in zip(thin, thin[1:])):
            raise BeamlineError("element positions must be strictly increasing")
        for el in self.elements:
            if isinstance(el, GuideFieldDrift) and _drift_length(el, dl) < 0:
                raise BeamlineError("stage displacement makes a drift length negative")
            if isinstance(el, RfFlipper) and not 0.0 <= el.efficiency <= 1.0:
                raise BeamlineError("flip efficiency must lie in [0, 1]")

    @property
    def rf_omega(self) -> float:
        return next(el.frequency for el in self.elements if isinstance(el, RfFlipper))

    @property
    def velocity(self) -> float:
        return self.kinematics.velocity

    @property
    def has_compensation(self) -> bool:
        return any(isinstance(el, DcPi) for el in self.elements)

    def with_stage(self, delta_L: float) -> "BeamlineConfig":
        return replace(self, stage_displacement=float(delta_L))

    def with_guide_field_in_drifts(self, B0: float) -> "BeamlineConfig":
        """Same layout with every drift field set to ``B0`` (0 switches Larmor precession off)."""
        els = tuple(replace(el, B0=B0) if isinstance(el, GuideFieldDrift) else el for el in self.elements)
        return replace(self, elements=els)


def canonical_config(
    wavelength: float = 1.99e-10,
    guide_field: float = 1.1e-3,
    rf_frequency_hz: float = 32e3,
    coil_length: float = 0.02,
    L: float = 0.50,
    L_prime: float = 0.30,
    stage_travel: float = 0.040,
    stage_displacement: float = 0.0,
    flip_efficiency: float = 1.0,
    compensation: bool = True,
    n_max: int = 2,
) -> BeamlineConfig:
    """Default polarimeter geometry; lengths in metres, displacement relative to nominal."""
    omega = 2 * math.pi * rf_frequency_hz
    rf1 = 0.20
    rf2 = rf1 + L
    dc = rf2 + 0.05
    turner2 = dc + L_prime
    els: list = [
        Polarizer(0.0),
        DcPi2(0.10, +1),
        RfFlipper(rf1, omega, 0.0, coil_length, flip_efficiency),
        GuideFieldDrift(rf1, guide_field, L, stage_coupling=+1),
        RfFlipper(rf2, omega, 0.0, coil_length, flip_efficiency, on_stage=True),
    ]
    if compensation:
        els.append(DcPi(dc, on_stage=True))
    els += [
        GuideFieldDrift(dc, guide_field, L_prime, stage_coupling=-1),
        DcPi2(turner2, -1),
        Analyzer(turner2 + 0.10),
    ]
    return BeamlineConfig(
        tuple(els),
        guide_field=guide_field,
        kinematics=NeutronKinematics.from_wavelength(wavelength),
        stage_displacement=stage_displacement,
        stage_travel=stage_travel,
        n_max=n_max,
    )


# --------------------------------------------------------------------------- array kernels


def _dc_pi2_matrix(sign: int) -> Array:
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return np.array([[1.0, -sign], [sign, 1.0]], dtype=complex) / math.sqrt(2)


_DC_PI_MATRIX = np.array([[0.0, -1j], [-1j, 0.0]])


def _k_rotate(amps: Array, rot: Array) -> Array:
    return np.einsum("ij,...jn->...in", rot, amps)


def _k_rf(amps: Array, phi: float, efficiency: float = 1.0) -> Array:
    eps = float(efficiency)
    if eps > 0 and (np.any(amps[..., UP, 0] != 0) or np.any(amps[..., DOWN, -1] != 0)):
        raise TruncationError("RF flip would populate an energy level beyond n_max")
    leak = 1j * math.sqrt(max(0.0, 1.0 - eps * eps))
    up, down = amps[..., UP, :], amps[..., DOWN, :]
    new = np.zeros_like(amps)
    new[..., UP, :] = leak * up
    new[..., DOWN, :] = leak * down
    # (|up, n+1>, |down, n>) pairs exchange a photon
    new[..., UP, 1:] += eps * np.exp(-1j * phi) * down[..., :-1]
    new[..., DOWN, :-1] += eps * np.exp(1j * phi) * up[..., 1:]
    return new


def _k_drift(amps: Array, larmor_angle, ladder_angle, levels: Array) -> Array:
    """Larmor rotation about z by ``larmor_angle`` plus ladder phase e^{-i n ladder_angle}."""
    larmor_angle = np.asarray(larmor_angle, dtype=float)[..., None]
    ladder_angle = np.asarray(ladder_angle, dtype=float)[..., None]
    spin_phase = np.stack([np.exp(-0.5j * larmor_angle), np.exp(0.5j * larmor_angle)], axis=-2)
    ladder_phase = np.exp(-1j * levels * ladder_angle)[..., None, :]
    return amps * spin_phase * ladder_phase


# --------------------------------------------------------------------------- state operations


def apply_polarizer(state: JointState) -> tuple[JointState, float]:
    """Project onto spin up; returns the renormalized state and the transmission."""
    amps = np.array(state.amplitudes)
    amps[DOWN] = 0
    prob = float(np.sum(np.abs(amps) ** 2))
    if prob == 0:
        raise BeamlineError("polarizer blocks the whole beam")
    return state.with_amplitudes(amps / math.sqrt(prob)), prob


def apply_dc_pi2(state: JointState, sign: int) -> JointState:
    return state.with_amplitudes(_k_rotate(state.amplitudes, _dc_pi2_matrix(sign)))


def apply_dc_pi(state: JointState) -> JointState:
    return state.with_amplitudes(_k_rotate(state.amplitudes, _DC_PI_MATRIX))


def apply_rf_flipper(state: JointState, phi_omega: float, efficiency: float = 1.0) -> JointState:
    return state.with_amplitudes(_k_rf(state.amplitudes, phi_omega, efficiency))


def apply_guide_field_drift(state: JointState, B0: float, length: float, velocity: float) -> JointState:
    if length < 0 or not velocity > 0:
        raise ValueError("drift needs nonnegative length and positive velocity")
    t = length / velocity
    larmor = 2.0 * MU_N * B0 / HBAR * t
    return state.with_amplitudes(_k_drift(state.amplitudes, larmor, state.omega * t, state.levels))


def analyze_up(state: JointState) -> float:
    return float(np.sum(np.abs(state.amplitudes[UP]) ** 2))


# --------------------------------------------------------------------------- pipeline


def _pipeline(config: BeamlineConfig, phi_omega: float, velocities: Array, record=None) -> Array:
    """Push ``|up, 0>`` through the beamline for each velocity; returns P(up) per velocity."""
    velocities = np.asarray(velocities, dtype=float)
    if np.any(velocities <= 0):
        raise ValueError("velocities must be positive")
    n_max = config.n_max
    levels = np.arange(-n_max, n_max + 1)
    amps = np.zeros(velocities.shape + (2, 2 * n_max + 1), dtype=complex)
    amps[..., UP, n_max] = 1.0
    omega = config.rf_omega
    dl = config.stage_displacement
    n_rf = 0
    prob = None
    for el in config.elements:
        if isinstance(el, Polarizer):
            amps[..., DOWN, :] = 0
            amps = amps / np.sqrt(np.sum(np.abs(amps) ** 2, axis=(-2, -1)))[..., None, None]
        elif isinstance(el, DcPi2):
            amps = _k_rotate(amps, _dc_pi2_matrix(el.sign))
        elif isinstance(el, RfFlipper):
            phase = el.phase + (phi_omega if n_rf == 1 else 0.0)
            amps = _k_rf(amps, phase, el.efficiency)
            n_rf += 1
        elif isinstance(el, GuideFieldDrift):
            t = _drift_length(el, dl) / velocities
            amps = _k_drift(amps, 2.0 * MU_N * el.B0 / HBAR * t, omega * t, levels)
        elif isinstance(el, DcPi):
            amps = _k_rotate(amps, _DC_PI_MATRIX)
        elif isinstance(el, Analyzer):
            prob = np.sum(np.abs(amps[..., UP, :]) ** 2, axis=-1)
        if record is not None:
            record.append((el, amps))
    return prob


def run_beamline(config: BeamlineConfig, phi_omega: float, velocity: float | None = None) -> float:
    """Transmitted probability for a single neutron velocity (default: config velocity)."""
    v = config.velocity if velocity is None else velocity
    return float(_pipeline(config, phi_omega, np.asarray(v)))


def transmission(config: BeamlineConfig, phi_omega: float, velocities: Sequence[float]) -> Array:
    """Vectorized :func:`run_beamline` over an array of velocities."""
    return _pipeline(config, phi_omega, np.asarray(velocities, dtype=float))


def trace_states(config: BeamlineConfig, phi_omega: float, velocity: float | None = None):
    """List of ``(element, state after element)`` along the beamline."""
    v = config.velocity if velocity is None else velocity
    record: list = []
    _pipeline(config, phi_omega, np.asarray(v), record)
    return [(el, JointState(a, config.n_max, config.rf_omega)) for el, a in record]


def initial_state(config: BeamlineConfig) -> JointState:
    return basis_state(UP, 0, omega=config.rf_omega, n_max=config.n_max)


def fringe_phase(config: BeamlineConfig, velocity: float | None = None) -> float:
    """Phase ``Psi`` of ``I(phi) = (1 + V cos(Psi - 2 phi))/2`` by four-step phase shifting."""
    steps = [run_beamline(config, k * math.pi / 4, velocity) for k in range(4)]
    z = sum(i * np.exp(1j * k * math.pi / 2) for k, i in enumerate(steps))
    return float(np.angle(z))


def _wrap(x: float) -> float:
    return (x + math.pi) % (2 * math.pi) - math.pi


def gamma_period_mm(config: BeamlineConfig) -> float:
    """Stage displacement (mm) for one period of the energy phase: v / (2 f)."""
    f = config.rf_omega / (2 * math.pi)
    return 1000.0 * config.velocity / (2.0 * f)


def gamma_zero_displacement(config: BeamlineConfig, velocity: float | None = None) -> float:
    """Stage displacement (m) nearest zero where the fringe phase vanishes (gamma = 0)."""
    step = 1e-3 * gamma_period_mm(config) / 8
    psi0 = fringe_phase(config.with_stage(0.0), velocity)
    psi1 = fringe_phase(config.with_stage(step), velocity)
    slope = _wrap(psi1 - psi0) / step
    period = 2 * math.pi / abs(slope)
    zero = -psi0 / slope
    return (zero + period / 2) % period - period / 2


def energy_phase(config: BeamlineConfig, delta_L: float | None = None) -> float:
    """Energy-subspace phase gamma (rad) set by the stage, zeroed at the gamma-scan zero."""
    dl = config.stage_displacement if delta_L is None else delta_L
    return 2.0 * config.rf_omega * (dl - gamma_zero_displacement(config)) / config.velocity


def larmor_phase_shift(config: BeamlineConfig, displacement: float) -> float:
    """Fringe phase change over a stage move that is due to Larmor precession alone.

    Compares the move with the guide field present against the same move with the
    drift fields switched off, which leaves only the energy-phase contribution.
    """
    def shift(cfg):
        return _wrap(fringe_phase(cfg.with_stage(displacement)) - fringe_phase(cfg.with_stage(0.0)))

    no_field = config.with_guide_field_in_drifts(0.0)
    return _wrap(shift(config) - shift(no_field))
