import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neutron_chsh.constants import TSIRELSON
from neutron_chsh.qstate import (
    CANONICAL_ANGLES,
    DOWN,
    UP,
    JointState,
    NormalizationError,
    TruncationError,
    basis_state,
    chsh_from_state,
    chsh_value,
    energy_observable,
    energy_projector,
    joint_expectation,
    make_bell_state,
    observable,
    product_state,
    spin_observable,
    spin_projector,
)

OMEGA = 2 * math.pi * 32000
angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def ket(up, down):
    return np.array([up, down], dtype=complex) / math.sqrt(abs(up) ** 2 + abs(down) ** 2)


def spin_block(p):
    """2x2 spin part of a spin projector (acting as identity on the ladder)."""
    return p.matrix.reshape(2, 5, 2, 5)[:, 0, :, 0]


def test_bell_state_amplitudes():
    bell = make_bell_state(OMEGA)
    s = 1 / math.sqrt(2)
    expected = np.zeros((2, 5), complex)
    expected[UP, 3] = s
    expected[DOWN, 1] = s
    np.testing.assert_allclose(bell.amplitudes, expected, atol=1e-15)
    assert bell.amplitude(UP, 1) == pytest.approx(s)
    assert bell.amplitude(DOWN, 0) == 0


@pytest.mark.parametrize("omega", [1.0, OMEGA, 7.3e6])
def test_bell_state_any_omega(omega):
    bell = make_bell_state(omega)
    assert joint_expectation(bell, 0, 0) == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(bell.reduced_spin_density(), np.eye(2) / 2, atol=1e-12)


def test_reduced_spin_density_by_explicit_partial_trace():
    bell = make_bell_state(OMEGA)
    a = bell.amplitudes
    rho = np.array([[sum(a[i, n] * np.conj(a[j, n]) for n in range(5)) for j in range(2)] for i in range(2)])
    np.testing.assert_allclose(bell.reduced_spin_density(), rho, atol=1e-15)


def test_state_rejects_wrong_shape_and_bad_levels():
    with pytest.raises(ValueError):
        JointState(np.zeros((2, 4)))
    with pytest.raises(TruncationError):
        basis_state(UP, 3)
    with pytest.raises(TruncationError):
        product_state([1, 0], {5: 1.0})


def test_amplitudes_are_read_only():
    bell = make_bell_state(OMEGA)
    with pytest.raises(ValueError):
        bell.amplitudes[0, 0] = 1


def test_unnormalized_state_rejected_by_expectation():
    state = JointState(2 * make_bell_state(OMEGA).amplitudes)
    with pytest.raises(NormalizationError):
        joint_expectation(state, 0, 0)
    assert joint_expectation(state.normalized(), 0, 0) == pytest.approx(1)


@pytest.mark.parametrize("alpha, sign, up, down", [
    (0.0, +1, 1, 1),
    (math.pi, +1, 1, -1),
    (math.pi / 2, -1, 1, -np.exp(-1j * math.pi / 2)),
])
def test_spin_projector_directions(alpha, sign, up, down):
    p = spin_projector(alpha, sign)
    v = ket(up, down)
    np.testing.assert_allclose(spin_block(p), np.outer(v, v.conj()), atol=1e-12)
    assert p.is_idempotent() and p.is_hermitian()
    assert p.rank == 5


def test_energy_projector_gamma_zero():
    p = energy_projector(0.0, +1)
    e = p.matrix.reshape(2, 5, 2, 5)[0, :, 0, :]
    v = np.zeros(5)
    v[[1, 3]] = 1 / math.sqrt(2)
    np.testing.assert_allclose(e, np.outer(v, v), atol=1e-12)


def test_energy_then_spin_projection_probability():
    bell = make_bell_state(OMEGA)
    joint = spin_projector(0, +1).matrix @ energy_projector(math.pi / 4, +1).matrix
    psi = bell.vector
    prob = float(np.real(psi.conj() @ joint @ psi))
    assert prob == pytest.approx(0.5 * 0.5 * (1 + math.cos(math.pi / 4)), abs=1e-12)


@pytest.mark.parametrize("gamma", [0.0, math.pi / 4, 1.234])
def test_energy_projectors_orthogonal(gamma):
    plus, minus = energy_projector(gamma, +1), energy_projector(gamma, -1)
    np.testing.assert_allclose(plus.matrix @ minus.matrix, 0, atol=1e-12)


@given(angles)
def test_spin_projector_pair_complete_and_orthogonal(alpha):
    plus, minus = spin_projector(alpha, +1), spin_projector(alpha, -1)
    np.testing.assert_allclose(plus.matrix + minus.matrix, np.eye(10), atol=1e-12)
    np.testing.assert_allclose(plus.matrix @ minus.matrix, 0, atol=1e-12)


@given(angles)
def test_energy_projector_pair_complete_on_pm1_subspace(gamma):
    plus, minus = energy_projector(gamma, +1), energy_projector(gamma, -1)
    total = (plus.matrix + minus.matrix).reshape(2, 5, 2, 5)[0, :, 0, :]
    np.testing.assert_allclose(total, np.diag([0, 1, 0, 1, 0]), atol=1e-12)


def test_spin_observable_at_zero_is_sigma_x():
    obs = spin_observable(0.0)
    block = obs.matrix.reshape(2, 5, 2, 5)[:, 2, :, 2]
    np.testing.assert_allclose(block, [[0, 1], [1, 0]], atol=1e-12)


def test_energy_observable_at_zero_is_sigma_x_on_pm1():
    e = energy_observable(0.0).matrix.reshape(2, 5, 2, 5)[0, :, 0, :]
    np.testing.assert_allclose(e[np.ix_([3, 1], [3, 1])], [[0, 1], [1, 0]], atol=1e-12)


@pytest.mark.parametrize("obs, support", [
    (spin_observable(0.7), np.eye(10)),
    (energy_observable(0.7), np.kron(np.eye(2), np.diag([0, 1, 0, 1, 0]))),
])
def test_observable_squares_to_identity_on_support(obs, support):
    np.testing.assert_allclose(obs.matrix @ obs.matrix, support, atol=1e-12)


def test_observable_requires_orthogonal_pair():
    p = spin_projector(0.0, +1)
    with pytest.raises(ValueError):
        observable(p, p)


@pytest.mark.parametrize("alpha, gamma, expected", [
    (0.0, math.pi / 4, math.sqrt(2) / 2),
    (math.pi / 2, -math.pi / 2, -1.0),
    (0.3, 0.4, math.cos(0.3 - 0.4)),
])
def test_joint_expectation_examples(alpha, gamma, expected):
    assert joint_expectation(make_bell_state(OMEGA), alpha, gamma) == pytest.approx(expected, abs=1e-12)


def test_joint_expectation_matches_dense_contraction():
    bell = make_bell_state(OMEGA)
    psi = bell.vector
    for alpha, gamma in [(0.3, 0.4), (1.1, -2.0), (2.5, 0.25)]:
        op = spin_observable(alpha).matrix @ energy_observable(gamma).matrix
        dense = float(np.real(psi.conj() @ op @ psi))
        assert joint_expectation(bell, alpha, gamma) == pytest.approx(dense, abs=1e-12)


def test_joint_expectation_cosine_law_on_grid():
    bell = make_bell_state(OMEGA)
    grid = np.linspace(0, 2 * math.pi, 10, endpoint=False)
    for a, g in itertools.product(grid, grid):
        assert abs(joint_expectation(bell, a, g) - math.cos(a - g)) < 1e-12


@pytest.mark.parametrize("es, expected", [
    ((0.594, 0.575, -0.571, 0.593), 2.333),
    ((1, 1, -1, 1), 4.0),
])
def test_chsh_value_examples(es, expected):
    assert chsh_value(*es) == pytest.approx(expected, abs=1e-12)


def test_chsh_cosines_at_canonical_angles():
    a1, a2, g1, g2 = CANONICAL_ANGLES
    cos = [math.cos(a1 - g1), math.cos(a2 - g1), math.cos(a1 - g2), math.cos(a2 - g2)]
    assert chsh_value(*cos) == pytest.approx(TSIRELSON, abs=1e-12)


def test_chsh_rejects_out_of_range_correlation():
    with pytest.raises(ValueError):
        chsh_value(1.1, 0, 0, 0)


def test_chsh_from_bell_state_is_tsirelson():
    assert abs(chsh_from_state(make_bell_state(OMEGA), *CANONICAL_ANGLES) - TSIRELSON) < 1e-12


def test_tsirelson_grid_search():
    bell = make_bell_state(OMEGA)
    a1, _, g1, g2 = CANONICAL_ANGLES
    best = max(chsh_from_state(bell, a1, a2, g1, g2) for a2 in np.linspace(0, 2 * math.pi, 720, endpoint=False))
    assert best <= TSIRELSON + 1e-9
    assert best == pytest.approx(TSIRELSON, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, math.pi), st.floats(0, 2 * math.pi), st.floats(0, math.pi), st.floats(0, 2 * math.pi))
def test_separable_states_respect_local_bound(theta_s, phi_s, theta_e, phi_e):
    spin = [math.cos(theta_s / 2), np.exp(1j * phi_s) * math.sin(theta_s / 2)]
    energy = {1: math.cos(theta_e / 2), -1: np.exp(1j * phi_e) * math.sin(theta_e / 2)}
    state = product_state(spin, energy, OMEGA)
    grid = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    e = {(a, g): joint_expectation(state, a, g) for a, g in itertools.product(grid, grid)}
    best = max(chsh_value(e[a1, g1], e[a2, g1], e[a1, g2], e[a2, g2])
               for a1, a2, g1, g2 in itertools.product(grid, repeat=4))
    assert best <= 2 + 1e-9
