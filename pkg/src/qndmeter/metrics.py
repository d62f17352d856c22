"""Measurement-quality scorecard computed exactly from a Kraus model."""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np

from .channels import (
    KrausSet,
    QndReport,
    apply_adjoint,
    apply_channel,
    basis_two_stage,
    qnd_predicates,
)
from .errors import DimensionTooLarge, MissingBasisLabel
from .linalg import basis_projector, classical_trace_distance, hermitian_eigensystem, quantum_trace_distance

THEOREM_TOL = 1e-9
MAX_VERTEX_DIM = 16


def _clamp(x: float) -> float:
    return float(min(max(x, 0.0), 1.0))


def _basis_outcome_index(k: KrausSet) -> list[int]:
    """Column of each basis outcome ``0..N-1`` in ``k.outcomes``."""
    missing = [j for j in range(k.dim) if j not in k.outcomes]
    if missing:
        raise MissingBasisLabel(f"no outcome label for basis states {missing}")
    return [k.outcomes.index(j) for j in range(k.dim)]


def readout_fidelity(k: KrausSet) -> float:
    """Average probability of reporting ``j`` when ``|j>`` is prepared."""
    cols = _basis_outcome_index(k)
    e = k.outcome_povm()
    return _clamp(np.mean([e[cols[j], j, j].real for j in range(k.dim)]))


def projectivity(k: KrausSet) -> float:
    """Average probability that two consecutive measurements of ``|j>`` both report ``j``."""
    cols = _basis_outcome_index(k)
    e = k.outcome_povm()
    total = 0.0
    for j in range(k.dim):
        ej = e[cols[j]]
        for m in k.operators_for(j):
            col = m[:, j]
            total += np.vdot(col, ej @ col).real
    return _clamp(total / k.dim)


def ideality(k: KrausSet) -> float:
    """Mean of ``|<j|M|j>|^2`` over basis states, summed over operators labelled ``j``."""
    _basis_outcome_index(k)
    total = sum(np.sum(np.abs(k.operators_for(j)[:, j, j]) ** 2) for j in range(k.dim))
    return _clamp(total / k.dim)


def theoretical_demolition(k: KrausSet) -> tuple[float, float]:
    """Average trace distance between ``|j><j|`` and its non-selective image."""
    n = k.dim
    d = np.mean([quantum_trace_distance(basis_projector(j, n), apply_channel(k, basis_projector(j, n))) for j in range(n)])
    d = _clamp(d)
    return d, 1.0 - d


def experimental_demolition(k: KrausSet) -> tuple[float, float]:
    """Average classical distance between first- and second-shot outcome distributions."""
    dist = []
    for j in range(k.dim):
        st = basis_two_stage(k, j)
        dist.append(classical_trace_distance(st.first, st.second))
    d = _clamp(np.mean(dist))
    return d, 1.0 - d


def destructiveness_bound(k: KrausSet) -> float:
    """Half the largest spectral-norm change of a unit-norm diagonal observable.

    The objective is convex in the diagonal entries, so the maximum over the
    cube ``[-1, 1]^N`` sits on a vertex; the global sign is fixed by symmetry.
    """
    n = k.dim
    if n > MAX_VERTEX_DIM:
        raise DimensionTooLarge(f"vertex enumeration capped at N={MAX_VERTEX_DIM}, got {n}")
    # the map o -> O - E^dag(O) is linear, so precompute it on basis projectors
    images = np.array([basis_projector(j, n) - apply_adjoint(k, basis_projector(j, n)) for j in range(n)])
    best = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=n - 1):
        o = np.array((1.0,) + signs)
        diff = np.einsum("j,jab->ab", o, images)
        w, _ = hermitian_eigensystem(diff)
        best = max(best, abs(w[0]), abs(w[-1]))
    return _clamp(0.5 * best)


@dataclass(frozen=True)
class MetricReport:
    F: float
    F_Q: float
    F_I: float
    D_D: float
    Q_D: float
    D_E: float
    Q_E: float
    D_P: float
    flags: QndReport
    mode: str = "exact"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = self.flags.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def full_report(k: KrausSet) -> MetricReport:
    d_d, q_d = theoretical_demolition(k)
    d_e, q_e = experimental_demolition(k)
    return MetricReport(
        F=readout_fidelity(k),
        F_Q=projectivity(k),
        F_I=ideality(k),
        D_D=d_d,
        Q_D=q_d,
        D_E=d_e,
        Q_E=q_e,
        D_P=destructiveness_bound(k),
        flags=qnd_predicates(k),
    )


@dataclass(frozen=True)
class TheoremCheck:
    name: str
    holds: bool
    detail: str


def relationship_check(report: MetricReport, tol: float = THEOREM_TOL) -> list[TheoremCheck]:
    """Evaluate the relationship theorems on one report.

    Statements of the form ``X = 1`` are read as ``X >= 1 - tol``.
    """
    one = lambda x: x >= 1.0 - tol  # noqa: E731
    r = report
    fq, f, qd, qe = one(r.F_Q), one(r.F), one(r.Q_D), one(r.Q_E)
    vals = f"F={r.F:.12g} F_Q={r.F_Q:.12g} Q_D={r.Q_D:.12g} Q_E={r.Q_E:.12g}"
    return [
        TheoremCheck("F_Q=1 <=> F=1 and Q_D=1", fq == (f and qd), vals),
        TheoremCheck("F_Q=1 <=> F=1 and Q_E=1", fq == (f and qe), vals),
        TheoremCheck("Q_D=1 => Q_E=1", (not qd) or qe, vals),
        TheoremCheck("D_E <= D_D", r.D_E <= r.D_D + tol, f"D_E={r.D_E:.12g} D_D={r.D_D:.12g}"),
        TheoremCheck("F_Q <= F", r.F_Q <= r.F + tol, vals),
        TheoremCheck("F_Q=1 <=> F_I=1", fq == one(r.F_I), f"F_Q={r.F_Q:.12g} F_I={r.F_I:.12g}"),
    ]
