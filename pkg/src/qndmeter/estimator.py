"""Plug-in estimates of F, F_Q and D_E from two-shot outcome counts.

For every prepared basis state ``k`` the input is a square matrix
``c_k[n, m]`` counting shots whose first outcome was ``n`` and second ``m``.
No bias correction is applied: near ``D_E = 0`` the absolute values in the
classical distance fold noise upward, so the plug-in ``D_E`` is biased
slightly positive at finite shots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channels import KrausSet, basis_two_stage
from .errors import EmptyCounts, InputError, MissingBasisCounts

METRIC_NAMES = ("F", "F_Q", "D_E", "Q_E")


@dataclass(frozen=True, eq=False)
class TwoStageCounts:
    dim: int
    counts: dict[int, np.ndarray]

    def __post_init__(self):
        clean = {}
        for k, c in self.counts.items():
            arr = np.asarray(c)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise InputError(f"counts for state {k} must be a square matrix, got {arr.shape}")
            if np.any(arr < 0) or not np.all(np.equal(np.mod(arr, 1), 0)):
                raise InputError(f"counts for state {k} must be non-negative integers")
            arr = arr.astype(np.int64)
            if arr.sum() == 0:
                raise EmptyCounts(f"no shots recorded for state {k}")
            clean[int(k)] = arr
        if not clean:
            raise EmptyCounts("no prepared states in counts")
        object.__setattr__(self, "counts", dict(sorted(clean.items())))

    def shots(self, k: int) -> int:
        return int(self.counts[k].sum())

    def to_dict(self) -> dict:
        return {"dim": self.dim, "counts": {str(k): c.tolist() for k, c in self.counts.items()}}

    @classmethod
    def from_dict(cls, doc: dict) -> "TwoStageCounts":
        try:
            return cls(int(doc["dim"]), {int(k): np.asarray(v) for k, v in doc["counts"].items()})
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise InputError(f"malformed counts document: {exc}") from exc

    def scaled(self, factor: int) -> "TwoStageCounts":
        return TwoStageCounts(self.dim, {k: c * factor for k, c in self.counts.items()})


def write_counts_json(counts: TwoStageCounts, path, extra: dict | None = None) -> None:
    doc = counts.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_counts_json(path) -> TwoStageCounts:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return TwoStageCounts.from_dict(doc)


@dataclass(frozen=True)
class EmpiricalDistributions:
    first: np.ndarray
    second: np.ndarray
    conditional: np.ndarray


def empirical_distributions(counts: TwoStageCounts) -> dict[int, EmpiricalDistributions]:
    out = {}
    for k, c in counts.counts.items():
        shots = c.sum()
        first = c.sum(axis=1) / shots
        second = c.sum(axis=0) / shots
        rows = c.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(rows > 0, c / rows, np.nan)
        out[k] = EmpiricalDistributions(first, second, cond)
    return out


@dataclass(frozen=True)
class EmpiricalMetrics:
    F: float
    F_Q: float
    D_E: float
    Q_E: float
    stderr: dict

    def to_dict(self) -> dict:
        return {"F": self.F, "F_Q": self.F_Q, "D_E": self.D_E, "Q_E": self.Q_E, "stderr": dict(self.stderr)}


def _metrics_from_freqs(freqs: np.ndarray) -> np.ndarray:
    """Metrics from joint frequencies of shape ``(..., N, M, M)``; returns ``(..., 3)`` as (F, F_Q, D_E)."""
    n = freqs.shape[-3]
    idx = np.arange(n)
    first = freqs.sum(axis=-1)
    second = freqs.sum(axis=-2)
    f = first[..., idx, idx].mean(axis=-1)
    f_q = freqs[..., idx, idx, idx].mean(axis=-1)
    d_e = 0.5 * np.abs(first - second).sum(axis=-1).mean(axis=-1)
    return np.stack([f, f_q, d_e], axis=-1)


def _frequency_stack(counts: TwoStageCounts) -> np.ndarray:
    n = counts.dim
    missing = [k for k in range(n) if k not in counts.counts]
    if missing:
        raise MissingBasisCounts(f"no counts for basis states {missing}")
    sizes = {counts.counts[k].shape[0] for k in range(n)}
    if len(sizes) != 1 or sizes.pop() < n:
        raise InputError("all count matrices must share one outcome alphabet covering 0..N-1")
    return np.array([counts.counts[k] / counts.counts[k].sum() for k in range(n)])


def _stderr(freqs: np.ndarray, shots: np.ndarray) -> dict:
    """Delta-method multinomial standard errors of the plug-in metrics."""
    n, m, _ = freqs.shape
    var = np.zeros(3)
    for k in range(n):
        pi = freqs[k]
        f_ind = np.zeros((m, m))
        f_ind[k, :] = 1.0
        q_ind = np.zeros((m, m))
        q_ind[k, k] = 1.0
        sign = np.sign(pi.sum(axis=1) - pi.sum(axis=0))
        d_grad = 0.5 * (sign[:, None] - sign[None, :])
        for i, g in enumerate((f_ind, q_ind, d_grad)):
            mean = np.sum(pi * g)
            var[i] += (np.sum(pi * g * g) - mean * mean) / shots[k] / n**2
    se = np.sqrt(np.clip(var, 0.0, None))
    return {"F": float(se[0]), "F_Q": float(se[1]), "D_E": float(se[2]), "Q_E": float(se[2])}


def empirical_metrics(counts: TwoStageCounts) -> EmpiricalMetrics:
    freqs = _frequency_stack(counts)
    f, f_q, d_e = _metrics_from_freqs(freqs)
    shots = np.array([counts.shots(k) for k in range(counts.dim)])
    return EmpiricalMetrics(float(f), float(f_q), float(d_e), float(1.0 - d_e), _stderr(freqs, shots))


def bootstrap_ci(counts: TwoStageCounts, resamples: int = 1000, level: float = 0.95, seed: int = 0) -> dict:
    """Percentile intervals from multinomial resampling of each state's joint counts."""
    if resamples < 100:
        raise InputError("bootstrap needs at least 100 resamples")
    freqs = _frequency_stack(counts)
    rng = np.random.default_rng(seed)
    n, m, _ = freqs.shape
    boot = np.empty((resamples, n, m, m))
    for k in range(n):
        shots = counts.shots(k)
        draws = rng.multinomial(shots, freqs[k].ravel(), size=resamples)
        boot[:, k] = draws.reshape(resamples, m, m) / shots
    vals = _metrics_from_freqs(boot)
    lo_q, hi_q = 0.5 * (1 - level), 0.5 * (1 + level)
    out = {}
    for i, name in enumerate(("F", "F_Q", "D_E")):
        lo, hi = np.quantile(vals[:, i], [lo_q, hi_q])
        out[name] = (float(lo), float(hi))
    lo, hi = out["D_E"]
    out["Q_E"] = (1.0 - hi, 1.0 - lo)
    return out


def exact_joint(k: KrausSet) -> dict[int, np.ndarray]:
    """Exact joint outcome distribution for each basis preparation."""
    return {j: basis_two_stage(k, j).joint for j in range(k.dim)}


def synthetic_counts(k: KrausSet, scale: int = 10**12) -> TwoStageCounts:
    """Exact distributions turned into (rounded) integer counts."""
    return TwoStageCounts(k.dim, {j: np.rint(p * scale).astype(np.int64) for j, p in exact_joint(k).items()})


def sample_counts(k: KrausSet, shots: int, rng: np.random.Generator) -> TwoStageCounts:
    """Multinomial draws from the exact joint distribution of each basis preparation."""
    out = {}
    for j, p in exact_joint(k).items():
        p = p / p.sum()
        out[j] = rng.multinomial(shots, p.ravel()).reshape(p.shape)
    return TwoStageCounts(k.dim, out)
