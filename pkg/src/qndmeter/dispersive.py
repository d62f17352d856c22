"""Heterodyne-monitored dispersive readout of a qubit coupled to a cavity.

Composite states use the ``qubit (x) cavity`` ordering; ``|0>`` is the qubit
ground state and ``sigma_z = |1><1| - |0><0|``, so ``sigma_- = |0><1|``
describes relaxation.

Trajectories are integrated in the frame where the qubit rotates at the
cavity frequency. There the Hamiltonian
``(Delta/2) sigma_z + g (sigma_+ a + sigma_- a^dag) + Omega (a + a^dag)`` is
piecewise constant, so the no-jump, noise-free part of each step is an exact
matrix exponential. The interaction-picture Hamiltonian
``g sigma_+ a e^{i Delta t} + h.c. + Omega (a + a^dag)`` is related to it by
a qubit phase rotation, which leaves cavity observables, qubit populations,
measurement records and jump statistics unchanged. The Lindblad reference
integrates the interaction-picture form directly.

Measurement records follow the heterodyne convention
``dI = sqrt(kappa) <a + a^dag> dt + sqrt(2) dW_I`` (same for ``Q`` with
``<i(a^dag - a)>``), so the ensemble mean of ``I`` over a window is
``sqrt(kappa) * integral <a + a^dag> dt``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numba as nb
import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, InputError, StepTooLarge, StepUnstable, WindowOutOfRange
from .estimator import TwoStageCounts, empirical_metrics
from .linalg import spectral_norm

TWO_PI = 2.0 * math.pi
STEP_BOUND = 0.1
NORM_DRIFT_LIMIT = 0.1
NOISE_BLOCK = 512
DEFAULT_GRID = (5.0, 7.5, 10.0, 15.0, 20.0, 30.0, 40.0, 60.0)
SWEEP_HEADER = (
    "delta_over_g",
    "readout_error",
    "readout_error_std",
    "non_projectivity",
    "non_projectivity_std",
    "demolition",
    "demolition_std",
    "n_traj",
    "seed",
)


@dataclass(frozen=True)
class SimConfig:
    """Physical and numerical parameters (SI units, angular frequencies in rad/s).

    Rates left as ``None`` take their defaults relative to ``g``: ``kappa =
    0.2 g``, ``gamma = gamma_phi = 1e-4 g``, ``omega_drive = 0.173 g`` and
    ``t_meas = 8 / kappa``. ``dt`` overrides ``dt_over_invg / g`` and is
    required when ``g == 0``.
    """

    g: float = TWO_PI * 200e6
    delta_over_g: float = 10.0
    kappa: float | None = None
    gamma: float | None = None
    gamma_phi: float | None = None
    omega_drive: float | None = None
    t_meas: float | None = None
    t_reset: float = 20e-9
    n_fock: int = 10
    dt_over_invg: float = 0.002
    n_traj: int = 1000
    seed: int = 0
    dt: float | None = None

    def __post_init__(self):
        g = float(self.g)
        if not math.isfinite(g) or g < 0:
            raise InputError(f"g must be finite and non-negative, got {g}")
        defaults = {"kappa": 0.2 * g, "gamma": 1e-4 * g, "gamma_phi": 1e-4 * g, "omega_drive": 0.173 * g}
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.t_meas is None:
            if self.kappa <= 0:
                raise InputError("t_meas must be given when kappa is zero")
            object.__setattr__(self, "t_meas", 8.0 / self.kappa)
        if self.dt is None:
            if g == 0:
                raise InputError("an explicit dt is required when g is zero")
            object.__setattr__(self, "dt", self.dt_over_invg / g)
        for name in ("kappa", "gamma", "gamma_phi", "omega_drive", "t_reset"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InputError(f"{name} must be finite and non-negative, got {v}")
        if not self.t_meas > 0 or not self.dt > 0:
            raise InputError("t_meas and dt must be positive")
        if int(self.n_fock) < 2:
            raise InputError("n_fock must be at least 2")
        if int(self.n_traj) < 1:
            raise InputError("n_traj must be at least 1")
        if g > 0 and not self.delta_over_g > 0:
            raise InputError("delta_over_g must be positive")
        bound = self.dt * max(self.hamiltonian_norm(), self.kappa * self.n_fock)
        if bound >= STEP_BOUND:
            raise StepTooLarge(
                f"dt * max(||H||, kappa * n_fock) = {bound:.3g} violates the stability bound {STEP_BOUND}"
            )

    @property
    def delta(self) -> float:
        return self.delta_over_g * self.g

    @property
    def chi(self) -> float:
        return self.g**2 / self.delta if self.delta else 0.0

    @property
    def dim(self) -> int:
        return 2 * self.n_fock

    def hamiltonian_norm(self) -> float:
        # the interaction-picture H(t) is a unitary conjugate of H(0)
        return spectral_norm(build_rotating_hamiltonian(self, 0.0, self.omega_drive))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class CompositeOperators:
    a: np.ndarray
    sigma_minus: np.ndarray
    sigma_z: np.ndarray
    number: np.ndarray
    excited: np.ndarray
    x: np.ndarray
    y: np.ndarray


@lru_cache(maxsize=16)
def composite_operators(n_fock: int) -> CompositeOperators:
    b = np.diag(np.sqrt(np.arange(1, n_fock)), k=1).astype(complex)
    eye_c = np.eye(n_fock)
    a = np.kron(np.eye(2), b)
    sm = np.kron(np.array([[0, 1], [0, 0]]), eye_c).astype(complex)
    sz = np.kron(np.diag([-1.0, 1.0]), eye_c).astype(complex)
    ops = CompositeOperators(
        a=a,
        sigma_minus=sm,
        sigma_z=sz,
        number=a.conj().T @ a,
        excited=sm.conj().T @ sm,
        x=a + a.conj().T,
        y=1j * (a.conj().T - a),
    )
    for arr in ops.__dict__.values():
        arr.setflags(write=False)
    return ops


def build_rotating_hamiltonian(cfg: SimConfig, t: float, drive: float) -> np.ndarray:
    """Interaction-picture Hamiltonian ``g s+ a e^{i Delta t} + g s- a^dag e^{-i Delta t} + drive (a + a^dag)``."""
    if t < 0:
        raise InputError("time must be non-negative")
    ops = composite_operators(cfg.n_fock)
    coupling = cfg.g * np.exp(1j * cfg.delta * t) * (ops.sigma_minus.conj().T @ ops.a)
    return coupling + coupling.conj().T + drive * ops.x


def static_hamiltonian(cfg: SimConfig, drive: float) -> np.ndarray:
    """Time-independent Hamiltonian in the frame co-rotating with the cavity."""
    ops = composite_operators(cfg.n_fock)
    coupling = cfg.g * (ops.sigma_minus.conj().T @ ops.a)
    return 0.5 * cfg.delta * ops.sigma_z + coupling + coupling.conj().T + drive * ops.x


def to_rotating_frame(psi: np.ndarray, cfg: SimConfig, t: float) -> np.ndarray:
    """Map a static-frame state (last axis = composite index) to the interaction picture."""
    nf = cfg.n_fock
    phase = np.concatenate([np.full(nf, np.exp(-0.5j * cfg.delta * t)), np.full(nf, np.exp(0.5j * cfg.delta * t))])
    return psi * phase


def basis_state(cfg: SimConfig, qubit: int, photons: int = 0) -> np.ndarray:
    if qubit not in (0, 1) or not 0 <= photons < cfg.n_fock:
        raise InputError(f"no basis state |{qubit}>|{photons}> with n_fock={cfg.n_fock}")
    psi = np.zeros(cfg.dim, dtype=complex)
    psi[qubit * cfg.n_fock + photons] = 1.0
    return psi


@dataclass(frozen=True)
class PulseSchedule:
    """Contiguous drive segments ``(start, end, amplitude)`` beginning at ``t = 0``.

    ``windows`` lists the measurement windows; when omitted they are the
    maximal runs of driven segments.
    """

    segments: tuple[tuple[float, float, float], ...]
    windows: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(c)) for a, b, c in self.segments)
        if not segs:
            raise InputError("schedule needs at least one segment")
        t = 0.0
        for start, end, _ in segs:
            if not math.isclose(start, t, rel_tol=1e-12, abs_tol=1e-18) or not end > start:
                raise InputError(f"segments must be contiguous from 0, got {segs}")
            t = end
        object.__setattr__(self, "segments", segs)
        if self.windows is not None:
            wins = tuple((float(a), float(b)) for a, b in self.windows)
            for a, b in wins:
                if not 0 <= a < b <= t * (1 + 1e-12):
                    raise InputError(f"window {(a, b)} outside the schedule")
            object.__setattr__(self, "windows", wins)

    @property
    def duration(self) -> float:
        return self.segments[-1][1]

    def measurement_windows(self) -> list[tuple[float, float]]:
        if self.windows is not None:
            return list(self.windows)
        out = []
        for start, end, amp in self.segments:
            if amp == 0:
                continue
            if out and math.isclose(out[-1][1], start, rel_tol=1e-12):
                out[-1] = (out[-1][0], end)
            else:
                out.append((start, end))
        return out


def default_schedule(cfg: SimConfig) -> PulseSchedule:
    """Measure for ``t_meas``, let the cavity ring down for ``t_reset``, measure again."""
    t, r, w = cfg.t_meas, cfg.t_reset, cfg.omega_drive
    segs = [(0.0, t, w)]
    if r > 0:
        segs.append((t, t + r, 0.0))
    segs.append((t + r, 2 * t + r, w))
    return PulseSchedule(tuple(segs), ((0.0, t), (t + r, 2 * t + r)))


def trajectory_stream(seed: int, repeat: int, basis: int, index: int) -> np.random.Generator:
    """Private generator that depends only on (master seed, repeat, basis label, trajectory index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(repeat), int(basis), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


@nb.njit(cache=True, nogil=True)
def _expect_a(psi, nf, sqn, out):
    n = psi.shape[0]
    for j in range(n):
        acc = 0j
        for b in (0, nf):
            for m in range(nf - 1):
                acc += psi[j, b + m].conjugate() * sqn[m] * psi[j, b + m + 1]
        out[j] = acc


@nb.njit(cache=True, nogil=True)
def _finish_step(new, old, ea, z, u, h, kappa, gamma, gamma_phi, nf, sqn, acc, rec, drift_limit):
    """Complete one step after ``new = old @ P^T`` (no-jump drift already applied).

    Applies the heterodyne innovation or a qubit jump, renormalises, updates the
    window accumulators and returns the number of trajectories whose
    pre-normalisation norm departs from the record likelihood by more than
    ``drift_limit``.
    """
    n = new.shape[0]
    d = new.shape[1]
    sqrt_h = math.sqrt(h)
    sk = math.sqrt(kappa)
    shk = math.sqrt(0.5 * kappa)
    s2 = math.sqrt(2.0)
    unstable = 0
    for j in range(n):
        x = 2.0 * ea[j].real
        y = 2.0 * ea[j].imag
        dw1 = sqrt_h * z[j, 0]
        dw2 = sqrt_h * z[j, 1]
        acc[j, 0] += sk * x * h + s2 * dw1
        acc[j, 1] += sk * y * h + s2 * dw2
        rec[j, 0] = x
        rec[j, 1] = y
        rec[j, 2] = s2 * dw1
        rec[j, 3] = s2 * dw2
        pe = 0.0
        for m in range(nf):
            v = old[j, nf + m]
            pe += v.real * v.real + v.imag * v.imag
        p_decay = gamma * pe * h
        p_deph = 0.5 * gamma_phi * h
        c = 0j
        if u[j] < p_decay:
            for m in range(nf):
                new[j, m] = old[j, nf + m]
                new[j, nf + m] = 0.0
        elif u[j] < p_decay + p_deph:
            for m in range(nf):
                new[j, m] = -old[j, m]
                new[j, nf + m] = old[j, nf + m]
        else:
            dr1 = shk * x * h + dw1
            dr2 = shk * y * h + dw2
            c = shk * (dr1 - 1j * dr2)
            for b in (0, nf):
                for m in range(nf - 1):
                    new[j, b + m] += c * sqn[m] * old[j, b + m + 1]
        s = 0.0
        for i in range(d):
            v = new[j, i]
            s += v.real * v.real + v.imag * v.imag
        if u[j] >= p_decay + p_deph:
            # first-order norm change is the record likelihood |1 + c <a>|^2
            lik = abs(1.0 + c * ea[j]) ** 2
            if lik <= 0.0 or abs(s / lik - 1.0) > drift_limit:
                unstable += 1
        s = 1.0 / math.sqrt(s)
        for i in range(d):
            new[j, i] *= s
        acc_a = 0j
        for b in (0, nf):
            for m in range(nf - 1):
                acc_a += new[j, b + m].conjugate() * sqn[m] * new[j, b + m + 1]
        ea[j] = acc_a
    return unstable


@dataclass
class EnsembleSamples:
    """Ensemble means sampled on a decimated time grid."""

    times: list = field(default_factory=list)
    x: list = field(default_factory=list)
    number: list = field(default_factory=list)
    sigma_z: list = field(default_factory=list)

    def add(self, t, psi, ops):
        probs = psi.real**2 + psi.imag**2
        nf = ops.a.shape[0] // 2
        ndiag = np.tile(np.arange(nf), 2)
        szdiag = np.repeat([-1.0, 1.0], nf)
        ea = np.einsum("ji,ik,jk->j", psi.conj(), ops.a, psi)
        self.times.append(t)
        self.x.append(float(np.mean(2 * ea.real)))
        self.number.append(float(np.mean(probs @ ndiag)))
        self.sigma_z.append(float(np.mean(probs @ szdiag)))

    def arrays(self):
        return {k: np.asarray(v) for k, v in self.__dict__.items()}


@dataclass
class _EvolveResult:
    segment_iq: np.ndarray
    samples: EnsembleSamples
    boundary_number: list
    final_state: np.ndarray
    records: np.ndarray | None
    step_times: np.ndarray | None
    step_sizes: np.ndarray | None
    snapshots: list
    snapshot_times: list


def _step_plan(cfg: SimConfig, schedule: PulseSchedule):
    plan = []
    for start, end, amp in schedule.segments:
        steps = max(1, int(round((end - start) / cfg.dt)))
        plan.append((start, end, amp, steps, (end - start) / steps))
    return plan


def _evolve(cfg, psi0, schedule, streams, record=False, sample_every=0, snapshot_every=0):
    ops = composite_operators(cfg.n_fock)
    nf = cfg.n_fock
    psi = np.array(np.atleast_2d(psi0), dtype=complex, order="C")
    n = psi.shape[0]
    if psi.shape[1] != cfg.dim or len(streams) != n:
        raise DimensionMismatch("initial states, streams and config dimension disagree")
    norms = np.linalg.norm(psi, axis=1)
    if np.any(np.abs(norms - 1) > 1e-9):
        raise InputError("initial states must be normalised")
    sqn = np.sqrt(np.arange(1, nf, dtype=float))
    damping = cfg.kappa * ops.number + cfg.gamma * ops.excited + 0.5 * cfg.gamma_phi * np.eye(cfg.dim)
    plan = _step_plan(cfg, schedule)
    total = sum(p[3] for p in plan)
    seg_iq = np.zeros((n, len(plan), 2))
    samples = EnsembleSamples()
    boundary = []
    rec_all = np.zeros((total, n, 4)) if record else None
    step_times = np.zeros(total) if record else None
    step_sizes = np.zeros(total) if record else None
    snapshots, snap_times = [], []
    scratch = np.zeros((n, 4))
    ea = np.zeros(n, dtype=complex)
    _expect_a(psi, nf, sqn, ea)
    new = np.empty_like(psi)
    z = u = None
    s = 0
    for iseg, (start, _end, amp, steps, h) in enumerate(plan):
        boundary.append(float(np.mean((psi.real**2 + psi.imag**2) @ np.tile(np.arange(nf), 2))))
        heff = static_hamiltonian(cfg, amp) - 0.5j * damping
        prop_t = np.ascontiguousarray(expm(-1j * heff * h).T)
        acc = seg_iq[:, iseg, :].copy()
        for i in range(steps):
            t = start + i * h
            b = s % NOISE_BLOCK
            if b == 0:
                size = min(NOISE_BLOCK, total - s)
                z = np.empty((size, n, 2))
                u = np.empty((size, n))
                for j, g in enumerate(streams):
                    z[:, j, :] = g.standard_normal((size, 2))
                    u[:, j] = g.random(size)
            if sample_every and s % sample_every == 0:
                samples.add(t, psi, ops)
            if snapshot_every and s % snapshot_every == 0:
                snapshots.append(to_rotating_frame(psi.copy(), cfg, t))
                snap_times.append(t)
            np.matmul(psi, prop_t, out=new)
            bad = _finish_step(new, psi, ea, z[b], u[b], h, cfg.kappa, cfg.gamma, cfg.gamma_phi, nf, sqn, acc, scratch, NORM_DRIFT_LIMIT)
            if bad:
                raise StepUnstable(f"norm drift above {NORM_DRIFT_LIMIT} in {bad} trajectories at t={t:.4g}")
            if record:
                rec_all[s] = scratch
                step_times[s] = t
                step_sizes[s] = h
            psi, new = new, psi
            s += 1
        seg_iq[:, iseg, :] = acc
    boundary.append(float(np.mean((psi.real**2 + psi.imag**2) @ np.tile(np.arange(nf), 2))))
    if sample_every:
        samples.add(schedule.duration, psi, ops)
    return _EvolveResult(seg_iq, samples, boundary, psi, rec_all, step_times, step_sizes, snapshots, snap_times)


@dataclass(eq=False)
class Trajectory:
    """One monitored trajectory.

    ``signal_i``/``signal_q`` hold the conditional ``<a + a^dag>`` and
    ``<i(a^dag - a)>`` at the start of each step; ``noise_i``/``noise_q`` the
    ``sqrt(2) dW`` increments. States (if kept) are in the interaction picture.
    """

    times: np.ndarray
    step_sizes: np.ndarray
    signal_i: np.ndarray
    signal_q: np.ndarray
    noise_i: np.ndarray
    noise_q: np.ndarray
    kappa: float
    states: list = field(default_factory=list)
    state_times: list = field(default_factory=list)
    final_state: np.ndarray | None = None

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1] + self.step_sizes[-1])


def run_heterodyne_trajectory(cfg, psi0, schedule=None, rng_stream=None, snapshot_every=0) -> Trajectory:
    """Integrate one trajectory, keeping its full measurement record."""
    schedule = default_schedule(cfg) if schedule is None else schedule
    stream = trajectory_stream(cfg.seed, 0, 0, 0) if rng_stream is None else rng_stream
    res = _evolve(cfg, psi0, schedule, [stream], record=True, snapshot_every=snapshot_every)
    rec = res.records[:, 0, :]
    return Trajectory(
        times=res.step_times,
        step_sizes=res.step_sizes,
        signal_i=rec[:, 0].copy(),
        signal_q=rec[:, 1].copy(),
        noise_i=rec[:, 2].copy(),
        noise_q=rec[:, 3].copy(),
        kappa=cfg.kappa,
        states=[s[0] for s in res.snapshots],
        state_times=res.snapshot_times,
        final_state=res.final_state[0],
    )


def integrate_iq(traj: Trajectory, window: tuple[float, float]) -> tuple[float, float]:
    """``I = sqrt(kappa) sum <a + a^dag> dt + sum sqrt(2) dW`` over steps starting in the window."""
    t0, t1 = window
    lo, hi = traj.span
    tol = 1e-9 * float(np.min(traj.step_sizes))
    if t0 < lo - tol or t1 > hi + tol or t1 < t0:
        raise WindowOutOfRange(f"window {window} outside trajectory span {(lo, hi)}")
    sel = (traj.times >= t0 - tol) & (traj.times < t1 - tol)
    sk = math.sqrt(traj.kappa)
    h = traj.step_sizes[sel]
    i_val = sk * np.sum(traj.signal_i[sel] * h) + np.sum(traj.noise_i[sel])
    q_val = sk * np.sum(traj.signal_q[sel] * h) + np.sum(traj.noise_q[sel])
    return float(i_val), float(q_val)


def discriminate(i_value, threshold: float = 0.0, zero_side: int = 1):
    """Assign outcome 0 when ``I - threshold`` has the calibrated sign of ``|0>``; ties give 0."""
    v = np.asarray(i_value, dtype=float) - threshold
    out = np.where((v == 0) | (np.sign(v) == zero_side), 0, 1)
    return int(out) if out.ndim == 0 else out


@dataclass(eq=False)
class LindbladResult:
    times: np.ndarray
    x: np.ndarray
    number: np.ndarray
    sigma_z: np.ndarray
    trace: np.ndarray
    final_state: np.ndarray

    def integrated_i(self, kappa: float, window: tuple[float, float]) -> float:
        """``sqrt(kappa) * integral <a + a^dag> dt`` over ``window`` (trapezoid on the samples)."""
        sel = (self.times >= window[0] - 1e-18) & (self.times <= window[1] + 1e-18)
        return float(math.sqrt(kappa) * np.trapezoid(self.x[sel], self.times[sel]))


def lindblad_reference(cfg: SimConfig, rho0, schedule=None, sample_every: int = 50, trace_tol: float = 1e-7) -> LindbladResult:
    """Fixed-step RK4 integration of the master equation with the interaction-picture Hamiltonian.

    Dissipators: ``kappa D[a]``, ``gamma D[sigma_-]`` and ``(gamma_phi / 2) D[sigma_z]``.
    """
    schedule = default_schedule(cfg) if schedule is None else schedule
    ops = composite_operators(cfg.n_fock)
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (cfg.dim, cfg.dim):
        raise DimensionMismatch(f"rho0 must be {cfg.dim}x{cfg.dim}")
    a, adag = ops.a, ops.a.conj().T
    sm, sp = ops.sigma_minus, ops.sigma_minus.conj().T
    szd = np.diag(ops.sigma_z).real
    zsign = np.outer(szd, szd)
    coupling = cfg.g * (sp @ a)
    damping = cfg.kappa * ops.number + cfg.gamma * ops.excited + 0.5 * cfg.gamma_phi * np.eye(cfg.dim)
    g_static = -0.5 * damping
    g_coupling = -1j * coupling
    g_x = -1j * ops.x
    k, gm, gp = cfg.kappa, cfg.gamma, 0.5 * cfg.gamma_phi
    delta = cfg.delta

    def rhs(r, t, amp):
        ph = np.exp(1j * delta * t)
        gen = g_static + ph * g_coupling - (ph * g_coupling).conj().T + amp * g_x
        gr = gen @ r
        out = gr + gr.conj().T
        out += k * (a @ r @ adag) + gm * (sm @ r @ sp) + gp * (zsign * r)
        return out

    ndiag = np.diag(ops.number).real
    times, xs, ns, szs, trs = [], [], [], [], []

    def sample(t, r):
        times.append(t)
        xs.append(float(np.sum(ops.x * r.T).real))
        ns.append(float(np.sum(ndiag * np.diag(r).real)))
        szs.append(float(np.sum(szd * np.diag(r).real)))
        trs.append(float(np.trace(r).real))

    s = 0
    for start, _end, amp, steps, h in _step_plan(cfg, schedule):
        for i in range(steps):
            t = start + i * h
            if s % sample_every == 0:
                sample(t, rho)
            k1 = rhs(rho, t, amp)
            k2 = rhs(rho + 0.5 * h * k1, t + 0.5 * h, amp)
            k3 = rhs(rho + 0.5 * h * k2, t + 0.5 * h, amp)
            k4 = rhs(rho + h * k3, t + h, amp)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            s += 1
    sample(schedule.duration, rho)
    if abs(trs[-1] - 1.0) > trace_tol:
        raise StepUnstable(f"trace drifted to {trs[-1]!r}")
    return LindbladResult(np.array(times), np.array(xs), np.array(ns), np.array(szs), np.array(trs), rho)


def calibrate_zero_side(cfg: SimConfig) -> int:
    """Sign of the ensemble-mean first-window ``I`` for ``|0>``, from the master equation."""
    first = PulseSchedule((default_schedule(cfg).segments[0],))
    psi = basis_state(cfg, 0)
    res = lindblad_reference(cfg, np.outer(psi, psi.conj()), first, sample_every=10)
    val = res.integrated_i(cfg.kappa, (0.0, cfg.t_meas))
    return 1 if val >= 0 else -1


@dataclass(eq=False)
class ExperimentResult:
    basis: int
    counts: np.ndarray
    iq: np.ndarray
    outcomes: np.ndarray
    zero_side: int
    photons_after_reset: float
    samples: dict
    windows: list

    def mean_i(self) -> np.ndarray:
        return self.iq[:, :, 0].mean(axis=0)


def _segments_in(schedule: PulseSchedule, window: tuple[float, float]) -> list[int]:
    """Indices of the segments that tile ``window``; windows must fall on segment boundaries."""
    t0, t1 = window
    tol = 1e-9 * schedule.duration
    idx = [i for i, (a, b, _) in enumerate(schedule.segments) if a >= t0 - tol and b <= t1 + tol]
    covered = sum(schedule.segments[i][1] - schedule.segments[i][0] for i in idx)
    if abs(covered - (t1 - t0)) > tol:
        raise InputError(f"window {window} does not align with segment boundaries")
    return idx


def run_two_measurement_experiment(
    cfg: SimConfig,
    basis: int,
    repeat: int = 0,
    zero_side: int | None = None,
    schedule: PulseSchedule | None = None,
    sample_every: int = 100,
) -> ExperimentResult:
    """Prepare ``|basis>|vac>``, measure, let the cavity reset, measure again, for ``n_traj`` trajectories."""
    if basis not in (0, 1):
        raise InputError("basis must be 0 or 1")
    schedule = default_schedule(cfg) if schedule is None else schedule
    windows = schedule.measurement_windows()
    if len(windows) != 2:
        raise InputError(f"expected two measurement windows, found {len(windows)}")
    zero_side = calibrate_zero_side(cfg) if zero_side is None else zero_side
    streams = [trajectory_stream(cfg.seed, repeat, basis, j) for j in range(cfg.n_traj)]
    psi0 = np.tile(basis_state(cfg, basis), (cfg.n_traj, 1))
    res = _evolve(cfg, psi0, schedule, streams, sample_every=sample_every)
    iq = np.zeros((cfg.n_traj, 2, 2))
    for w, window in enumerate(windows):
        iq[:, w, :] = res.segment_iq[:, _segments_in(schedule, window), :].sum(axis=1)
    outcomes = np.stack([discriminate(iq[:, 0, 0], zero_side=zero_side), discriminate(iq[:, 1, 0], zero_side=zero_side)], axis=1)
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (outcomes[:, 0], outcomes[:, 1]), 1)
    seg_idx = _segments_in(schedule, windows[1])[0]
    return ExperimentResult(
        basis=basis,
        counts=counts,
        iq=iq,
        outcomes=outcomes,
        zero_side=zero_side,
        photons_after_reset=res.boundary_number[seg_idx],
        samples=res.samples.arrays(),
        windows=windows,
    )


def counts_from_experiments(results) -> TwoStageCounts:
    return TwoStageCounts(2, {r.basis: r.counts for r in results})


@dataclass(frozen=True)
class SweepRow:
    delta_over_g: float
    readout_error: float
    readout_error_std: float
    non_projectivity: float
    non_projectivity_std: float
    demolition: float
    demolition_std: float
    n_traj: int
    seed: int


@dataclass(eq=False)
class SweepResult:
    rows: list
    per_repeat: np.ndarray  # (repeats, grid, 3): readout error, non-projectivity, demolition
    grid: tuple
    config: SimConfig
    mean_first_i: np.ndarray  # (repeats, grid, basis): ensemble-mean I of the first window

    def argmin_per_repeat(self, column: int) -> list[float]:
        return [self.grid[int(np.argmin(r[:, column]))] for r in self.per_repeat]


def worker_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("QNDMETER_THREADS")
    return max(1, int(env)) if env else 1


def run_detuning_sweep(cfg: SimConfig, grid=DEFAULT_GRID, repeats: int = 5, threads: int | None = None, progress=None) -> SweepResult:
    """Both basis preparations at every ``Delta/g``, repeated with independent streams."""
    grid = tuple(float(x) for x in grid)
    if not grid:
        raise InputError("grid must be non-empty")
    if repeats < 1:
        raise InputError("repeats must be at least 1")
    cfgs = [replace(cfg, delta_over_g=d) for d in grid]
    sides = [calibrate_zero_side(c) for c in cfgs]
    tasks = [(gi, r, b) for gi in range(len(grid)) for r in range(repeats) for b in (0, 1)]

    def run(task):
        gi, r, b = task
        res = run_two_measurement_experiment(cfgs[gi], b, repeat=r, zero_side=sides[gi], sample_every=0)
        if progress:
            progress(task)
        return res.counts, float(res.mean_i()[0])

    with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
        outputs = list(pool.map(run, tasks))
    per = np.zeros((repeats, len(grid), 3))
    mean_i = np.zeros((repeats, len(grid), 2))
    lookup = dict(zip(tasks, outputs))
    for gi in range(len(grid)):
        for r in range(repeats):
            m = empirical_metrics(TwoStageCounts(2, {b: lookup[(gi, r, b)][0] for b in (0, 1)}))
            per[r, gi] = (1 - m.F, 1 - m.F_Q, m.D_E)
            mean_i[r, gi] = [lookup[(gi, r, b)][1] for b in (0, 1)]
    mean = per.mean(axis=0)
    std = per.std(axis=0, ddof=1) if repeats > 1 else np.zeros_like(mean)
    rows = [
        SweepRow(grid[i], mean[i, 0], std[i, 0], mean[i, 1], std[i, 1], mean[i, 2], std[i, 2], cfg.n_traj, cfg.seed)
        for i in range(len(grid))
    ]
    return SweepResult(rows, per, grid, cfg, mean_i)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def sweep_csv(result: SweepResult, provenance: dict | None = None) -> str:
    """CSV text: optional ``#`` provenance lines, then the header and one row per grid point."""
    buf = io.StringIO()
    if provenance:
        for key in sorted(provenance):
            buf.write(f"# {key}: {provenance[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in result.rows:
        writer.writerow([_fmt(getattr(row, h)) for h in SWEEP_HEADER])
    return buf.getvalue()
