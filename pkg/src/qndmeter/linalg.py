"""Dense complex linear algebra for small operators.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Composite
qubit-cavity operators always use the ordering ``qubit (x) cavity``: the
basis index of ``|q>|n>`` is ``q * n_fock + n``.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidDistribution,
    InvalidState,
    LengthMismatch,
    NoConvergence,
    NotHermitian,
)

HERMITIAN_TOL = 1e-10
PSD_FLOOR = -1e-10
TRACE_TOL = 1e-9
PROB_EPS = 1e-12
PROB_SUM_TOL = 1e-9
MAX_SWEEPS = 100


def as_matrix(m) -> np.ndarray:
    """Coerce to a finite square complex matrix."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidState("matrix has non-finite entries")
    return a


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


def probability_vector(values) -> np.ndarray:
    """Validate a probability vector, clamping round-off into [0, 1]."""
    p = np.asarray(values, dtype=float).ravel()
    if p.size == 0 or not np.all(np.isfinite(p)):
        raise InvalidDistribution("probabilities must be a non-empty finite list")
    if np.any(p < -PROB_EPS) or np.any(p > 1 + PROB_EPS):
        raise InvalidDistribution(f"entries outside [0, 1]: {p}")
    p = np.clip(p, 0.0, 1.0)
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise InvalidDistribution(f"probabilities sum to {p.sum()!r}")
    return p


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def hermitian_eigensystem(m, tol: float = HERMITIAN_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigen-decompose a Hermitian matrix with cyclic complex Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors stored as columns.

    Raises:
        NotHermitian: if ``max |M - M^H|`` exceeds ``tol``.
        NoConvergence: if off-diagonal mass remains after ``max_sweeps``.
    """
    a = as_matrix(m)
    err = hermiticity_error(a)
    if err > tol:
        raise NotHermitian(f"max |M - M^H| = {err:.3e} exceeds {tol:.1e}")
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(max_sweeps):
        if _off_norm(a) <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= 1e-300:
                    continue
                phase = apq / r
                tau = (a[q, q].real - a[p, p].real) / (2.0 * r)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # J = diag(1, conj(phase)) @ [[c, s], [-s, c]] on the (p, q) plane
                j = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ j
                a[idx, :] = j.conj().T @ a[idx, :]
                v[:, idx] = v[:, idx] @ j
                a[p, q] = a[q, p] = 0.0
    else:
        if _off_norm(a) > 1e-12 * scale:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).real.copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def check_density_matrix(rho, name: str = "state") -> np.ndarray:
    """Validate a density matrix and return it with tiny negative eigenvalues clamped."""
    try:
        r = as_matrix(rho)
        w, v = hermitian_eigensystem(r)
    except (NotHermitian, DimensionMismatch) as exc:
        raise InvalidState(f"{name}: {exc}") from exc
    if w[-1] < PSD_FLOOR:
        raise InvalidState(f"{name}: eigenvalue {w[-1]:.3e} below PSD floor")
    tr = float(np.trace(r).real)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"{name}: trace {tr!r} differs from 1")
    if w[-1] < 0:
        w = np.clip(w, 0.0, None)
        r = (v * w) @ v.conj().T
    return r


def quantum_trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma`` for two density matrices."""
    r = check_density_matrix(rho, "rho")
    s = check_density_matrix(sigma, "sigma")
    if r.shape != s.shape:
        raise InvalidState(f"dimension mismatch {r.shape} vs {s.shape}")
    w, _ = hermitian_eigensystem(r - s)
    return float(min(max(0.5 * np.sum(np.abs(w)), 0.0), 1.0))


def classical_trace_distance(p, q) -> float:
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise LengthMismatch(f"lengths {p.size} and {q.size} differ")
    p, q = probability_vector(p), probability_vector(q)
    return float(min(0.5 * np.sum(np.abs(p - q)), 1.0))


def spectral_norm(m) -> float:
    """Largest singular value, via the eigenvalues of ``M^H M``."""
    a = as_matrix(m)
    w, _ = hermitian_eigensystem(a.conj().T @ a)
    return float(np.sqrt(max(w[0], 0.0)))


def tensor_product(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def partial_trace(m, dims: tuple[int, int], keep: str = "A") -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    ``dims = (dA, dB)`` with ``A`` the first tensor factor; ``keep`` is ``"A"``
    or ``"B"``.
    """
    a = as_matrix(m)
    da, db = dims
    if da < 1 or db < 1 or da * db != a.shape[0]:
        raise DimensionMismatch(f"dims {dims} incompatible with shape {a.shape}")
    t = a.reshape(da, db, da, db)
    if keep == "A":
        return np.einsum("ijkj->ik", t)
    if keep == "B":
        return np.einsum("ijil->jl", t)
    raise ValueError(f"keep must be 'A' or 'B', not {keep!r}")


def basis_projector(k: int, n: int) -> np.ndarray:
    out = np.zeros((n, n), dtype=np.complex128)
    out[k, k] = 1.0
    return out


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the phase-fixed QR of a Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density_matrix(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = n if rank is None else rank
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
