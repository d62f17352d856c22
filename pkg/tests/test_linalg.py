import numpy as np
import pytest

from qndmeter import linalg
from qndmeter.errors import DimensionMismatch, InvalidDistribution, InvalidState, LengthMismatch, NoConvergence, NotHermitian


def random_hermitian(n, rng):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a + a.conj().T


def test_eigensystem_identity_and_pauli_x():
    w, _ = linalg.hermitian_eigensystem(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1], atol=1e-14)
    w, v = linalg.hermitian_eigensystem([[0, 1], [1, 0]])
    np.testing.assert_allclose(w, [1, -1], atol=1e-14)
    assert abs(abs(v[0, 0]) - 2**-0.5) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 6, 12])
def test_eigensystem_reconstructs_random_hermitian(n):
    m = random_hermitian(n, np.random.default_rng(n))
    w, v = linalg.hermitian_eigensystem(m)
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose((v * w) @ v.conj().T, m, atol=1e-10)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(m)[::-1], atol=1e-10)


def test_eigensystem_degenerate_spectrum():
    u = linalg.random_unitary(4, np.random.default_rng(3))
    m = u @ np.diag([2.0, 2.0, -1.0, -1.0]) @ u.conj().T
    w, v = linalg.hermitian_eigensystem(m)
    np.testing.assert_allclose(w, [2, 2, -1, -1], atol=1e-12)
    np.testing.assert_allclose((v * w) @ v.conj().T, m, atol=1e-12)


def test_eigensystem_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        linalg.hermitian_eigensystem([[0, 1], [0, 0]])


def test_eigensystem_sweep_cap():
    m = random_hermitian(5, np.random.default_rng(0))
    with pytest.raises(NoConvergence):
        linalg.hermitian_eigensystem(m, max_sweeps=1)


def test_eigensystem_rejects_non_square():
    with pytest.raises(DimensionMismatch):
        linalg.hermitian_eigensystem(np.zeros((2, 3)))


def test_quantum_trace_distance_examples():
    zero, one = linalg.basis_projector(0, 2), linalg.basis_projector(1, 2)
    assert linalg.quantum_trace_distance(zero, zero) == pytest.approx(0, abs=1e-14)
    assert linalg.quantum_trace_distance(zero, one) == pytest.approx(1, abs=1e-14)
    assert linalg.quantum_trace_distance(zero, np.eye(2) / 2) == pytest.approx(0.5, abs=1e-14)


def test_quantum_trace_distance_validates_states():
    with pytest.raises(InvalidState):
        linalg.quantum_trace_distance(np.diag([1.5, -0.5]), np.eye(2) / 2)
    with pytest.raises(InvalidState):
        linalg.quantum_trace_distance(np.eye(2), np.eye(2) / 2)
    with pytest.raises(InvalidState):
        linalg.quantum_trace_distance([[0.5, 0.5], [0, 0.5]], np.eye(2) / 2)


def test_quantum_trace_distance_clamps_tiny_negative_eigenvalues():
    rho = np.diag([1 + 5e-11, -5e-11])
    assert linalg.quantum_trace_distance(rho, linalg.basis_projector(0, 2)) < 1e-9


def test_classical_trace_distance_examples():
    assert linalg.classical_trace_distance([0.3, 0.7], [0.3, 0.7]) == 0
    assert linalg.classical_trace_distance([1, 0], [0, 1]) == 1
    assert linalg.classical_trace_distance([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.25, abs=1e-15)


def test_classical_trace_distance_errors():
    with pytest.raises(LengthMismatch):
        linalg.classical_trace_distance([1, 0], [1, 0, 0])
    with pytest.raises(InvalidDistribution):
        linalg.classical_trace_distance([0.6, 0.6], [0.5, 0.5])
    with pytest.raises(InvalidDistribution):
        linalg.classical_trace_distance([1.2, -0.2], [0.5, 0.5])


def test_spectral_norm_examples():
    assert linalg.spectral_norm(np.eye(3)) == pytest.approx(1, abs=1e-14)
    assert linalg.spectral_norm(np.diag([0.3, -0.9])) == pytest.approx(0.9, abs=1e-14)
    rng = np.random.default_rng(11)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert linalg.spectral_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-12)


def test_tensor_and_partial_trace():
    np.testing.assert_array_equal(linalg.tensor_product(np.eye(2), np.eye(3)), np.eye(6))
    rng = np.random.default_rng(2)
    ra, rb = linalg.random_density_matrix(2, rng), linalg.random_density_matrix(3, rng)
    joint = linalg.tensor_product(ra, rb)
    np.testing.assert_allclose(linalg.partial_trace(joint, (2, 3), keep="A"), ra, atol=1e-14)
    np.testing.assert_allclose(linalg.partial_trace(joint, (2, 3), keep="B"), rb, atol=1e-14)
    with pytest.raises(DimensionMismatch):
        linalg.partial_trace(joint, (2, 2))


def test_composite_ordering_is_qubit_then_cavity():
    qubit_one = linalg.basis_projector(1, 2)
    vac = linalg.basis_projector(0, 5)
    joint = linalg.tensor_product(qubit_one, vac)
    assert joint[1 * 5 + 0, 1 * 5 + 0] == 1


def test_probability_vector_clamps_roundoff():
    p = linalg.probability_vector([1 + 1e-13, -1e-13])
    assert p.min() >= 0 and p.max() <= 1
