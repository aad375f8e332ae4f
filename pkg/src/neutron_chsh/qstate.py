"""Dense linear algebra on the spin (x) energy-ladder Hilbert space.

A state is stored as a ``(2, 2*n_max + 1)`` complex array: row 0 is spin up,
row 1 spin down, and column ``n + n_max`` holds the energy level
``E0 + n*hbar*omega``.  Operators act on the flattened, spin-major vector of
length ``2*(2*n_max + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

UP = 0
DOWN = 1
DEFAULT_N_MAX = 2

#: Bell-test directions (alpha1, alpha2, gamma1, gamma2) of maximal violation
CANONICAL_ANGLES = (0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4)

NORM_TOL = 1e-9
ALGEBRA_TOL = 1e-12


class TruncationError(ValueError):
    """An operation would populate an energy level outside ``|n| <= n_max``."""


class NormalizationError(ValueError):
    pass


def _spin_index(spin) -> int:
    if spin in (UP, "up", "+"):
        return UP
    if spin in (DOWN, "down", "-"):
        return DOWN
    raise ValueError(f"unknown spin label {spin!r}")


def ladder_dim(n_max: int) -> int:
    return 2 * n_max + 1


@dataclass(frozen=True)
class JointState:
    """Pure state on spin{up, down} (x) energy ladder {E0 + n*hbar*omega}."""

    amplitudes: np.ndarray
    n_max: int = DEFAULT_N_MAX
    omega: float = 1.0

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (2, ladder_dim(self.n_max)):
            raise ValueError(
                f"amplitudes must have shape (2, {ladder_dim(self.n_max)}), got {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_mapping(cls, mapping: Mapping, n_max: int = DEFAULT_N_MAX, omega: float = 1.0):
        """Build a state from ``{(spin, n): amplitude}``; levels beyond n_max are an error."""
        amps = np.zeros((2, ladder_dim(n_max)), dtype=complex)
        for (spin, n), value in mapping.items():
            if abs(n) > n_max:
                if value != 0:
                    raise TruncationError(f"level n={n} outside |n| <= {n_max}")
                continue
            amps[_spin_index(spin), n + n_max] += value
        return cls(amps, n_max=n_max, omega=omega)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def amplitude(self, spin, n: int) -> complex:
        if abs(n) > self.n_max:
            return 0j
        return complex(self.amplitudes[_spin_index(spin), n + self.n_max])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def normalized(self) -> "JointState":
        nrm = self.norm()
        if nrm == 0:
            raise NormalizationError("cannot normalize the zero vector")
        return JointState(self.amplitudes / nrm, self.n_max, self.omega)

    def with_amplitudes(self, amps: np.ndarray) -> "JointState":
        return JointState(amps, self.n_max, self.omega)

    def density_matrix(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())

    def reduced_spin_density(self) -> np.ndarray:
        """Partial trace over the energy ladder (2x2)."""
        a = self.amplitudes
        return a @ a.conj().T

    def reduced_energy_density(self) -> np.ndarray:
        a = self.amplitudes
        return a.T @ a.conj()

    def overlap(self, other: "JointState") -> complex:
        return complex(np.vdot(self.vector, other.vector))

    def fidelity(self, other: "JointState") -> float:
        """|<self|other>|^2; insensitive to global phase."""
        return abs(self.overlap(other)) ** 2


def basis_state(spin, n: int, omega: float = 1.0, n_max: int = DEFAULT_N_MAX) -> JointState:
    return JointState.from_mapping({(spin, n): 1.0}, n_max=n_max, omega=omega)


def product_state(spin_vec, energy_amplitudes: Mapping[int, complex], omega: float = 1.0,
                  n_max: int = DEFAULT_N_MAX) -> JointState:
    """Separable state ``|chi_S> (x) |chi_E>``, normalized."""
    spin_vec = np.asarray(spin_vec, dtype=complex)
    energy = np.zeros(ladder_dim(n_max), dtype=complex)
    for n, amp in energy_amplitudes.items():
        if abs(n) > n_max:
            raise TruncationError(f"level n={n} outside |n| <= {n_max}")
        energy[n + n_max] = amp
    state = JointState(np.outer(spin_vec, energy), n_max=n_max, omega=omega)
    return state.normalized()


def make_bell_state(omega: float, n_max: int = DEFAULT_N_MAX) -> JointState:
    """(|E0+hw, up> + |E0-hw, down>)/sqrt(2)."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    s = 1 / math.sqrt(2)
    return JointState.from_mapping({(UP, 1): s, (DOWN, -1): s}, n_max=n_max, omega=omega)


@dataclass(frozen=True)
class Projector:
    matrix: np.ndarray
    rank: int

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def is_idempotent(self, tol: float = ALGEBRA_TOL) -> bool:
        return bool(np.allclose(self.matrix @ self.matrix, self.matrix, atol=tol, rtol=0))

    def is_hermitian(self, tol: float = ALGEBRA_TOL) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=tol, rtol=0))

    def probability(self, state: JointState) -> float:
        v = state.vector
        return float(np.real(np.vdot(v, self.matrix @ v)))


@dataclass(frozen=True)
class Observable:
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if not np.allclose(m, m.conj().T, atol=ALGEBRA_TOL, rtol=0):
            raise ValueError("observable matrix is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def expectation(self, state: JointState) -> float:
        v = state.vector
        return float(np.real(np.vdot(v, self.matrix @ v)))

    def __matmul__(self, other: "Observable") -> "Observable":
        # only meaningful for commuting operators (spin vs energy)
        return Observable(self.matrix @ other.matrix, f"{self.label}*{other.label}")


def _check_sign(sign: int) -> int:
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return sign


def _spin_ket(alpha: float, sign: int) -> np.ndarray:
    return np.array([1.0, sign * np.exp(-1j * alpha)]) / math.sqrt(2)


def spin_projector(alpha: float, sign: int, n_max: int = DEFAULT_N_MAX) -> Projector:
    """Projector onto (|up> +/- e^{-i alpha}|down>)/sqrt(2), identity on the ladder."""
    ket = _spin_ket(alpha, _check_sign(sign))
    p_spin = np.outer(ket, ket.conj())
    dim = ladder_dim(n_max)
    return Projector(np.kron(p_spin, np.eye(dim)), rank=dim)


def energy_projector(gamma: float, sign: int, n_max: int = DEFAULT_N_MAX) -> Projector:
    """Projector onto (|E0+hw> +/- e^{+i gamma}|E0-hw>)/sqrt(2), identity on spin.

    Supported on the n = +1 / n = -1 pair only; zero on every other level.
    """
    _check_sign(sign)
    dim = ladder_dim(n_max)
    ket = np.zeros(dim, dtype=complex)
    ket[1 + n_max] = 1 / math.sqrt(2)
    ket[-1 + n_max] = sign * np.exp(1j * gamma) / math.sqrt(2)
    p_energy = np.outer(ket, ket.conj())
    return Projector(np.kron(np.eye(2), p_energy), rank=2)


def observable(projector_plus: Projector, projector_minus: Projector, label: str = "") -> Observable:
    """Dichotomic observable P+ - P-; the projectors must be orthogonal."""
    cross = projector_plus.matrix @ projector_minus.matrix
    if not np.allclose(cross, 0, atol=ALGEBRA_TOL):
        raise ValueError("projectors are not orthogonal")
    return Observable(projector_plus.matrix - projector_minus.matrix, label)


def spin_observable(alpha: float, n_max: int = DEFAULT_N_MAX) -> Observable:
    return observable(spin_projector(alpha, 1, n_max), spin_projector(alpha, -1, n_max), f"A({alpha:g})")


def energy_observable(gamma: float, n_max: int = DEFAULT_N_MAX) -> Observable:
    return observable(energy_projector(gamma, 1, n_max), energy_projector(gamma, -1, n_max), f"B({gamma:g})")


def joint_expectation(state: JointState, alpha: float, gamma: float) -> float:
    """<psi| A(alpha) (x) B(gamma) |psi>; cos(alpha - gamma) for the Bell state."""
    if not state.is_normalized():
        raise NormalizationError(f"state norm {state.norm():.3e} != 1")
    joint = spin_observable(alpha, state.n_max) @ energy_observable(gamma, state.n_max)
    return float(np.clip(joint.expectation(state), -1.0, 1.0))


def chsh_value(e11: float, e21: float, e12: float, e22: float) -> float:
    """|E(a1,g1) + E(a2,g1) - E(a1,g2) + E(a2,g2)|."""
    for e in (e11, e21, e12, e22):
        if not abs(e) <= 1.0 + ALGEBRA_TOL:
            raise ValueError(f"expectation value {e} outside [-1, 1]")
    return abs(e11 + e21 - e12 + e22)


def chsh_from_state(state: JointState, alpha1: float, alpha2: float, gamma1: float,
                    gamma2: float) -> float:
    return chsh_value(
        joint_expectation(state, alpha1, gamma1),
        joint_expectation(state, alpha2, gamma1),
        joint_expectation(state, alpha1, gamma2),
        joint_expectation(state, alpha2, gamma2),
    )
