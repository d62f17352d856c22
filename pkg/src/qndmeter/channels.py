"""Kraus-operator measurement models.

A :class:`KrausSet` pairs each Kraus operator with an integer outcome label.
Several operators may share a label; outcome statistics are then summed over
the operators carrying that label (coarse-graining at the statistics level,
never by adding operators). Metrics indexed by computational basis states
read outcome ``k`` as "the measurement reported basis state ``k``".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    Degenerate,
    DimensionMismatch,
    GridTooCoarse,
    IncompleteKraus,
    InputError,
    InvalidState,
)
from .linalg import (
    basis_projector,
    hermitian_eigensystem,
    probability_vector,
    random_unitary,
    spectral_norm,
)

COMPLETENESS_TOL = 1e-9
PREDICATE_TOL = 1e-9
INDEPENDENCE_TOL = 1e-8
ZERO_OPERATOR_TOL = 1e-14
HETERODYNE_TOL = 1e-3


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    residual: float
    operator_norms: tuple[float, ...]
    dim: int
    count: int

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "residual": self.residual,
            "operator_norms": list(self.operator_norms),
            "dim": self.dim,
            "count": self.count,
        }


def _stack(operators) -> np.ndarray:
    mats = [np.asarray(m, dtype=np.complex128) for m in operators]
    if len({m.shape for m in mats}) > 1:
        raise DimensionMismatch(f"Kraus operators have differing shapes {sorted({m.shape for m in mats})}")
    ops = np.asarray(mats)
    if ops.ndim != 3 or ops.shape[0] < 1 or ops.shape[1] != ops.shape[2]:
        raise DimensionMismatch(f"Kraus operators must be equal-size square matrices, got {ops.shape}")
    if not np.all(np.isfinite(ops)):
        raise InputError("Kraus operators contain non-finite entries")
    return ops


def completeness_residual(operators) -> float:
    ops = operators.operators if isinstance(operators, KrausSet) else _stack(operators)
    s = np.einsum("mji,mjk->ik", ops.conj(), ops)
    return float(np.max(np.abs(s - np.eye(ops.shape[1]))))


def validate_kraus(operators) -> ValidationReport:
    """Report the completeness residual ``max |sum M^H M - I|`` and operator norms.

    Accepts a :class:`KrausSet` or any sequence of square matrices; failure is
    reported, not raised.
    """
    ops = operators.operators if isinstance(operators, KrausSet) else _stack(operators)
    residual = completeness_residual(ops)
    norms = tuple(spectral_norm(m) for m in ops)
    return ValidationReport(residual < COMPLETENESS_TOL, residual, norms, ops.shape[1], ops.shape[0])


@dataclass(frozen=True, eq=False)
class KrausSet:
    """Immutable, outcome-labelled set of Kraus operators.

    ``outcomes`` is the declared outcome alphabet; it defaults to the sorted
    distinct labels and may list outcomes that no operator produces.
    """

    operators: np.ndarray
    labels: tuple[int, ...] = None
    outcomes: tuple[int, ...] = None
    tol: float = field(default=COMPLETENESS_TOL, repr=False)

    def __post_init__(self):
        ops = _stack(self.operators)
        count = ops.shape[0]
        labels = tuple(range(count)) if self.labels is None else tuple(int(x) for x in self.labels)
        if len(labels) != count:
            raise InputError(f"{len(labels)} labels for {count} operators")
        declared = sorted(set(labels)) if self.outcomes is None else [int(x) for x in self.outcomes]
        if len(set(declared)) != len(declared) or not set(labels) <= set(declared):
            raise InputError(f"outcomes {declared} do not cover labels {sorted(set(labels))}")
        for i, m in enumerate(ops):
            if np.max(np.abs(m)) < ZERO_OPERATOR_TOL:
                raise Degenerate(f"Kraus operator {i} is zero")
        residual = completeness_residual(ops)
        if residual >= self.tol:
            raise IncompleteKraus(f"completeness residual {residual:.3e} exceeds {self.tol:.1e}")
        ops.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "outcomes", tuple(sorted(declared)))

    @property
    def dim(self) -> int:
        return self.operators.shape[1]

    @property
    def count(self) -> int:
        return self.operators.shape[0]

    @property
    def povm(self) -> np.ndarray:
        """Per-operator POVM elements ``E_i = M_i^H M_i``."""
        return np.einsum("mji,mjk->mik", self.operators.conj(), self.operators)

    def label_matrix(self) -> np.ndarray:
        """0/1 matrix mapping operator index to outcome index."""
        col = {o: j for j, o in enumerate(self.outcomes)}
        out = np.zeros((self.count, len(self.outcomes)))
        for i, lab in enumerate(self.labels):
            out[i, col[lab]] = 1.0
        return out

    def outcome_povm(self) -> np.ndarray:
        """POVM element of each declared outcome, in ``outcomes`` order."""
        return np.einsum("io,ijk->ojk", self.label_matrix(), self.povm)

    def operators_for(self, outcome: int) -> np.ndarray:
        idx = [i for i, lab in enumerate(self.labels) if lab == outcome]
        return self.operators[idx]

    def relabel(self, labels, outcomes=None) -> "KrausSet":
        return KrausSet(self.operators, labels, outcomes)


def _check_operand(k: KrausSet, m) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.shape != (k.dim, k.dim):
        raise DimensionMismatch(f"operand shape {a.shape} does not match Kraus dimension {k.dim}")
    return a


def _check_state(k: KrausSet, rho) -> np.ndarray:
    r = _check_operand(k, rho)
    if np.max(np.abs(r - r.conj().T)) > 1e-10 or abs(np.trace(r).real - 1) > 1e-9:
        raise InvalidState("input is not a unit-trace Hermitian matrix")
    return r


def apply_channel(k: KrausSet, rho) -> np.ndarray:
    """Non-selective post-measurement state ``sum_m M rho M^H``."""
    r = _check_state(k, rho)
    m = k.operators
    return np.einsum("mij,jk,mlk->il", m, r, m.conj())


def apply_adjoint(k: KrausSet, obs) -> np.ndarray:
    """Heisenberg-picture channel ``sum_m M^H O M``."""
    o = _check_operand(k, obs)
    m = k.operators
    return np.einsum("mji,jk,mkl->il", m.conj(), o, m)


def outcome_distribution(k: KrausSet, rho) -> np.ndarray:
    """Outcome probabilities ``Tr[E rho]`` in the order of ``k.outcomes``."""
    r = _check_state(k, rho)
    per_op = np.einsum("mij,ji->m", k.povm, r).real
    return probability_vector(per_op @ k.label_matrix())


@dataclass(frozen=True)
class TwoStageStats:
    """Statistics of two back-to-back applications of one measurement.

    ``joint[n, m]`` is P(first = n, second = m) over ``outcomes``;
    ``conditional[n]`` is P(second | first = n) and is NaN where P(first = n) = 0.
    """

    outcomes: tuple[int, ...]
    first: np.ndarray
    second: np.ndarray
    joint: np.ndarray
    conditional: np.ndarray


def _joint_from_per_operator(k: KrausSet, per_op: np.ndarray) -> TwoStageStats:
    lab = k.label_matrix()
    joint = np.clip(lab.T @ per_op @ lab, 0.0, None)
    first = probability_vector(joint.sum(axis=1))
    second = probability_vector(joint.sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(first[:, None] > 0, joint / first[:, None], np.nan)
    return TwoStageStats(k.outcomes, first, second, joint, cond)


def two_stage_distributions(k: KrausSet, rho) -> TwoStageStats:
    r = _check_state(k, rho)
    m = k.operators
    post = np.einsum("nij,jk,nlk->nil", m, r, m.conj())
    per_op = np.einsum("mij,nji->nm", k.povm, post).real
    return _joint_from_per_operator(k, per_op)


def basis_two_stage(k: KrausSet, basis: int) -> TwoStageStats:
    """Two-stage statistics for the prepared basis state ``|basis>``."""
    return two_stage_distributions(k, basis_projector(basis, k.dim))


@dataclass(frozen=True)
class QndReport:
    all_kraus_diagonal: bool
    adjoint_fixes_basis_projectors: bool
    channel_fixes_basis_states: bool
    povm_diagonal: bool
    povm_linearly_independent: bool
    p_equals_q_on_basis: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _max_offdiag(ops: np.ndarray) -> float:
    mask = ~np.eye(ops.shape[-1], dtype=bool)
    return float(np.max(np.abs(ops[..., mask]))) if mask.any() else 0.0


def qnd_predicates(k: KrausSet, tol: float = PREDICATE_TOL) -> QndReport:
    n = k.dim
    projs = [basis_projector(j, n) for j in range(n)]
    adj = all(np.max(np.abs(apply_adjoint(k, p) - p)) < tol for p in projs)
    chan = all(np.max(np.abs(apply_channel(k, p) - p)) < tol for p in projs)
    povm = k.povm
    diag_stack = np.einsum("mii->mi", povm).real
    independent = False
    if k.count <= n:
        gram = diag_stack @ diag_stack.T
        w, _ = hermitian_eigensystem(gram)
        independent = bool(np.sqrt(max(w[-1], 0.0)) > INDEPENDENCE_TOL)
    p_eq_q = True
    for j in range(n):
        st = basis_two_stage(k, j)
        if np.max(np.abs(st.first - st.second)) >= tol:
            p_eq_q = False
            break
    return QndReport(
        all_kraus_diagonal=_max_offdiag(k.operators) < tol,
        adjoint_fixes_basis_projectors=bool(adj),
        channel_fixes_basis_states=bool(chan),
        povm_diagonal=_max_offdiag(povm) < tol,
        povm_linearly_independent=independent,
        p_equals_q_on_basis=p_eq_q,
    )


# --- fixtures -------------------------------------------------------------


def complete(operators) -> np.ndarray:
    """Right-multiply by ``(sum M^H M)^(-1/2)`` so the set resolves the identity."""
    ops = _stack(operators)
    s = np.einsum("mji,mjk->ik", ops.conj(), ops)
    w, v = hermitian_eigensystem(s)
    if w[-1] <= 0:
        raise Degenerate("operators do not span the space; cannot complete")
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    return ops @ inv_sqrt


def projective(n: int) -> KrausSet:
    return KrausSet([basis_projector(j, n) for j in range(n)])


def cos_sin_pair(theta: float) -> KrausSet:
    c, s = np.cos(theta), np.sin(theta)
    return KrausSet([np.diag([c, s]), np.diag([s, c])])


def decay(theta: float) -> KrausSet:
    """Amplitude-damping readout: outcome 1 also resets ``|1>`` to ``|0>``."""
    c, s = np.cos(theta), np.sin(theta)
    return KrausSet([np.array([[1, 0], [0, c]]), np.array([[0, s], [0, 0]])])


def swap() -> KrausSet:
    return KrausSet([np.array([[0, 1], [0, 0]]), np.array([[0, 0], [1, 0]])])


def _ginibre(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_kraus(n: int, count: int, seed: int) -> KrausSet:
    """Complex Gaussian operators completed with the inverse square root of their sum."""
    rng = np.random.default_rng(seed)
    return KrausSet(complete(_ginibre(rng, (count, n, n))))


def random_diagonal_kraus(n: int, count: int, seed: int) -> KrausSet:
    rng = np.random.default_rng(seed)
    d = _ginibre(rng, (count, n))
    return KrausSet(complete([np.diag(x) for x in d]))


def projective_with_phases(n: int, seed: int) -> KrausSet:
    rng = np.random.default_rng(seed)
    phases = np.exp(2j * np.pi * rng.random(n))
    return KrausSet([phases[j] * basis_projector(j, n) for j in range(n)])


def perturb_offdiagonal(k: KrausSet, magnitude: float, seed: int) -> KrausSet:
    """Add an off-diagonal bump of the given magnitude to one operator, then re-complete."""
    rng = np.random.default_rng(seed)
    ops = np.array(k.operators)
    i = int(rng.integers(k.count))
    r, c = rng.choice(k.dim, size=2, replace=False)
    ops[i, r, c] += magnitude * np.exp(2j * np.pi * rng.random())
    return KrausSet(complete(ops), k.labels, k.outcomes)


def unitary_scramble(k: KrausSet, seed: int) -> KrausSet:
    """Conjugate every operator by one Haar-random unitary."""
    u = random_unitary(k.dim, np.random.default_rng(seed))
    return KrausSet(u @ k.operators @ u.conj().T, k.labels, k.outcomes)


def fixture_generators() -> dict:
    """Named fixture constructors."""
    return {
        "projective": projective,
        "cos_sin_pair": cos_sin_pair,
        "decay": decay,
        "swap": swap,
        "random_kraus": random_kraus,
        "random_diagonal_kraus": random_diagonal_kraus,
    }


# --- heterodyne readout -----------------------------------------------------


def coherent_overlap(alpha, beta):
    """``<alpha|beta>`` for coherent states."""
    alpha = np.asarray(alpha, dtype=complex)
    return np.exp(-(np.abs(alpha) ** 2 + np.abs(beta) ** 2) / 2 + alpha.conj() * beta)


def default_heterodyne_grid(points: int = 41, extent: float = 5.0):
    axis = np.linspace(-extent, extent, points)
    re, im = np.meshgrid(axis, axis, indexing="ij")
    step = axis[1] - axis[0]
    grid = (re + 1j * im).ravel()
    return grid, np.full(grid.size, step * step)


@dataclass(frozen=True, eq=False)
class HeterodyneFamily:
    fine: KrausSet
    binned: KrausSet
    raw_residual: float
    grid: np.ndarray
    weights: np.ndarray


def binary_labels(grid, alpha0: complex, alpha1: complex) -> np.ndarray:
    """0 on the ``alpha0`` side of the perpendicular bisector, 1 on the other; ties go to 0."""
    mid = 0.5 * (alpha0 + alpha1)
    side = np.real((np.asarray(grid) - mid) * np.conj(alpha0 - alpha1))
    return np.where(side >= 0, 0, 1)


def heterodyne_kraus_family(alpha0: complex, alpha1: complex, grid=None, weights=None) -> HeterodyneFamily:
    """Discretised qubit Kraus operators of heterodyne detection of a dispersively shifted cavity.

    Operator ``i`` is ``sqrt(w_i/pi) (<a_i|alpha0> |0><0| + <a_i|alpha1> |1><1|)``.
    The raw completeness residual is recorded; the operators are then completed
    exactly (a diagonal rescaling of order the residual) so the sets satisfy the
    usual Kraus invariant.

    Raises:
        GridTooCoarse: if the raw residual is ``>= 1e-3``.
    """
    if grid is None:
        grid, weights = default_heterodyne_grid()
    grid = np.asarray(grid, dtype=complex).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape != grid.shape or np.any(weights <= 0):
        raise InputError("grid weights must be positive and match the grid")
    amp = np.sqrt(weights / np.pi)
    d0 = amp * coherent_overlap(grid, alpha0)
    d1 = amp * coherent_overlap(grid, alpha1)
    ops = np.zeros((grid.size, 2, 2), dtype=complex)
    ops[:, 0, 0] = d0
    ops[:, 1, 1] = d1
    keep = np.max(np.abs(ops), axis=(1, 2)) >= ZERO_OPERATOR_TOL
    ops, grid, weights = ops[keep], grid[keep], weights[keep]
    raw = completeness_residual(ops)
    if raw >= HETERODYNE_TOL:
        raise GridTooCoarse(f"heterodyne completeness residual {raw:.3e} >= {HETERODYNE_TOL:.0e}")
    ops = complete(ops)
    fine = KrausSet(ops)
    binned = KrausSet(ops, binary_labels(grid, alpha0, alpha1), outcomes=(0, 1))
    return HeterodyneFamily(fine, binned, raw, grid, weights)


# --- interchange format ------------------------------------------------------


def kraus_to_dict(k: KrausSet) -> dict:
    doc = {
        "dim": k.dim,
        "operators": [[[float(z.real), float(z.imag)] for z in m.ravel()] for m in k.operators],
        "labels": list(k.labels),
    }
    if list(k.outcomes) != sorted(set(k.labels)):
        doc["outcomes"] = list(k.outcomes)
    return doc


def _parse_operator(raw, n: int) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.shape == (n * n, 2):
        arr = arr.reshape(n, n, 2)
    if arr.shape != (n, n, 2):
        raise InputError(f"operator entries must be {n}x{n} [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def kraus_operators_from_dict(doc: dict) -> tuple[np.ndarray, list | None, list | None]:
    try:
        n = int(doc["dim"])
        ops = np.array([_parse_operator(m, n) for m in doc["operators"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed Kraus document: {exc}") from exc
    return ops, doc.get("labels"), doc.get("outcomes")


def kraus_from_dict(doc: dict) -> KrausSet:
    ops, labels, outcomes = kraus_operators_from_dict(doc)
    return KrausSet(ops, labels, outcomes)


def write_kraus_json(k: KrausSet, path, extra: dict | None = None) -> None:
    doc = kraus_to_dict(k)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_kraus_json(path) -> KrausSet:
    """Load a Kraus file; completeness is checked on construction."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return kraus_from_dict(doc)
