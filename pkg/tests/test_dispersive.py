import math

import numpy as np
import pytest

from qndmeter import dispersive as d
from qndmeter.errors import InputError, StepTooLarge, WindowOutOfRange
from qndmeter.estimator import empirical_metrics

G = d.TWO_PI * 200e6


def small_cfg(**kw):
    """Short, low-dimensional configuration for fast checks."""
    base = dict(n_fock=6, n_traj=20, t_meas=2e-9, t_reset=1e-9)
    base.update(kw)
    return d.SimConfig(**base)


def hand_hamiltonian(cfg, t, drive):
    nf = cfg.n_fock
    h = np.zeros((2 * nf, 2 * nf), dtype=complex)
    for n in range(nf - 1):
        # sigma_+ a |0, n+1> = sqrt(n+1) |1, n>
        h[nf + n, n + 1] = cfg.g * math.sqrt(n + 1) * np.exp(1j * cfg.delta * t)
        h[n + 1, nf + n] = np.conj(h[nf + n, n + 1])
        for q in (0, 1):
            h[q * nf + n, q * nf + n + 1] += drive * math.sqrt(n + 1)
            h[q * nf + n + 1, q * nf + n] += drive * math.sqrt(n + 1)
    return h


def test_config_defaults_resolve_relative_to_g():
    cfg = d.SimConfig()
    assert cfg.kappa == pytest.approx(0.2 * G)
    assert cfg.gamma == pytest.approx(1e-4 * G) and cfg.gamma_phi == pytest.approx(1e-4 * G)
    assert cfg.omega_drive == pytest.approx(0.173 * G)
    assert cfg.t_meas == pytest.approx(8 / cfg.kappa)
    assert cfg.dt == pytest.approx(0.002 / G)
    assert cfg.chi == pytest.approx(G / 10)
    assert 2 * cfg.chi == pytest.approx(cfg.kappa)


def test_config_rejects_bad_values():
    with pytest.raises(StepTooLarge, match="0.1"):
        d.SimConfig(dt_over_invg=0.2)
    with pytest.raises(InputError):
        d.SimConfig(g=0.0)
    with pytest.raises(InputError):
        d.SimConfig(kappa=-1.0)
    with pytest.raises(InputError):
        d.SimConfig(n_fock=1)
    with pytest.raises(InputError):
        d.SimConfig(n_traj=0)


def test_hamiltonian_trivial_cases():
    cfg = d.SimConfig(g=0.0, kappa=0.0, t_meas=1e-9, dt=1e-12)
    np.testing.assert_array_equal(d.build_rotating_hamiltonian(cfg, 0.3e-9, 0.0), 0)
    cfg = small_cfg()
    h0 = d.build_rotating_hamiltonian(cfg, 0.0, 0.5 * G)
    assert np.max(np.abs(h0.imag)) == 0
    np.testing.assert_allclose(h0, hand_hamiltonian(cfg, 0.0, 0.5 * G), atol=1e-12 * G)


def test_hamiltonian_matches_hand_expansion_at_random_times():
    cfg = small_cfg(delta_over_g=7.3)
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, 5e-9, size=5):
        h = d.build_rotating_hamiltonian(cfg, t, 0.17 * G)
        # entrywise 1e-12 relative to the coupling scale
        np.testing.assert_allclose(h / G, hand_hamiltonian(cfg, t, 0.17 * G) / G, atol=1e-12)
        np.testing.assert_allclose(h, h.conj().T, atol=0)
    with pytest.raises(InputError):
        d.build_rotating_hamiltonian(cfg, -1.0, 0.0)


def test_schedule_validation_and_windows():
    cfg = d.SimConfig()
    sched = d.default_schedule(cfg)
    t, r = cfg.t_meas, cfg.t_reset
    assert sched.segments == ((0.0, t, cfg.omega_drive), (t, t + r, 0.0), (t + r, 2 * t + r, cfg.omega_drive))
    assert sched.measurement_windows() == [(0.0, t), (t + r, 2 * t + r)]
    with pytest.raises(InputError):
        d.PulseSchedule(((0.0, 1.0, 1.0), (1.5, 2.0, 1.0)))
    with pytest.raises(InputError):
        d.PulseSchedule(((0.0, 1.0, 1.0), (1.0, 0.5, 1.0)))


def test_discriminate_rules():
    assert d.discriminate(3.0, zero_side=1) == 0
    assert d.discriminate(-3.0, zero_side=1) == 1
    assert d.discriminate(0.0, zero_side=1) == 0
    assert d.discriminate(0.0, zero_side=-1) == 0
    assert d.discriminate(-3.0, zero_side=-1) == 0
    np.testing.assert_array_equal(d.discriminate(np.array([1.0, -1.0, 0.0])), [0, 1, 0])
    assert d.discriminate(0.5, threshold=1.0) == 1


def _synthetic_trajectory(signal, kappa, h=1e-12):
    n = len(signal)
    z = np.zeros(n)
    return d.Trajectory(np.arange(n) * h, np.full(n, h), np.asarray(signal, float), z, z, z, kappa)


def test_integrate_iq_rectangle_and_zero():
    kappa = 2.5e8
    zero = _synthetic_trajectory(np.zeros(100), kappa)
    assert d.integrate_iq(zero, (0, 100e-12)) == (0.0, 0.0)
    const = _synthetic_trajectory(np.full(1000, 1.7), kappa)
    i_val, _ = d.integrate_iq(const, (0, 1000e-12))
    assert i_val == pytest.approx(math.sqrt(kappa) * 1.7 * 1e-9, rel=1e-12)
    half, _ = d.integrate_iq(const, (0, 500e-12))
    assert half == pytest.approx(i_val / 2, rel=1e-12)
    with pytest.raises(WindowOutOfRange):
        d.integrate_iq(const, (0, 2e-9))


def test_streams_depend_on_every_key():
    draws = {key: d.trajectory_stream(5, *key).random() for key in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]}
    assert len(set(draws.values())) == 4
    assert d.trajectory_stream(5, 0, 0, 0).random() == draws[(0, 0, 0)]


def test_free_system_is_static_and_noise_has_zero_mean():
    cfg = d.SimConfig(g=0.0, kappa=0.0, gamma=0.0, gamma_phi=0.0, omega_drive=0.0, t_meas=1e-9, t_reset=0.2e-9, dt=1e-12, n_fock=4, n_traj=400)
    psi0 = d.basis_state(cfg, 1, 2)
    traj = d.run_heterodyne_trajectory(cfg, psi0, snapshot_every=100)
    for s in traj.states:
        np.testing.assert_allclose(np.abs(s), np.abs(psi0), atol=1e-12)
    res = d.run_two_measurement_experiment(cfg, 0, zero_side=1)
    se = math.sqrt(2 * cfg.t_meas / cfg.n_traj)
    assert np.all(np.abs(res.mean_i()) < 3 * se)


def test_driven_empty_cavity_follows_analytic_amplitude():
    kappa, omega = 0.2 * G, 0.173 * G
    cfg = d.SimConfig(g=0.0, kappa=kappa, gamma=0.0, gamma_phi=0.0, omega_drive=omega, t_meas=8 / kappa, dt=0.002 / G, n_fock=14)
    sched = d.PulseSchedule(((0.0, cfg.t_meas, omega),))
    traj = d.run_heterodyne_trajectory(cfg, d.basis_state(cfg, 0), sched, snapshot_every=500)
    a = d.composite_operators(cfg.n_fock).a
    alpha_ss = 2 * omega / kappa
    assert alpha_ss == pytest.approx(1.73)
    for t, psi in zip(traj.state_times, traj.states):
        expected = alpha_ss * (1 - math.exp(-kappa * t / 2))
        assert abs(np.vdot(psi, a @ psi)) == pytest.approx(expected, abs=5e-3)


def test_lindblad_fock_decay_matches_exponential():
    kappa = 0.2 * G
    cfg = d.SimConfig(g=0.0, kappa=kappa, gamma=0.0, gamma_phi=0.0, omega_drive=0.0, t_meas=5 / kappa, dt=0.002 / G, n_fock=6)
    sched = d.PulseSchedule(((0.0, cfg.t_meas, 0.0),))
    psi = d.basis_state(cfg, 0, 3)
    res = d.lindblad_reference(cfg, np.outer(psi, psi.conj()), sched, sample_every=100)
    np.testing.assert_allclose(res.number, 3 * np.exp(-kappa * res.times), rtol=1e-8)
    assert abs(res.trace[-1] - 1) < 1e-7


def test_lindblad_zero_dynamics_is_constant():
    cfg = d.SimConfig(g=0.0, kappa=0.0, gamma=0.0, gamma_phi=0.0, omega_drive=0.0, t_meas=1e-9, dt=1e-11, n_fock=3)
    psi = (d.basis_state(cfg, 0, 1) + d.basis_state(cfg, 1, 0)) / math.sqrt(2)
    res = d.lindblad_reference(cfg, np.outer(psi, psi.conj()), d.PulseSchedule(((0.0, 1e-9, 0.0),)), sample_every=10)
    assert np.ptp(res.number) == 0 and np.ptp(res.sigma_z) == 0
    np.testing.assert_allclose(res.final_state, np.outer(psi, psi.conj()), atol=1e-15)


def test_lindblad_rejects_wrong_dimension():
    cfg = small_cfg()
    with pytest.raises(InputError):
        d.lindblad_reference(cfg, np.eye(3) / 3)


def test_static_frame_trajectory_matches_interaction_picture():
    # with kappa = gamma = gamma_phi = 0 the trajectory is plain Schrodinger evolution
    cfg = d.SimConfig(kappa=0.0, gamma=0.0, gamma_phi=0.0, t_meas=3e-9, t_reset=1e-9, n_fock=5, omega_drive=0.173 * G)
    psi0 = d.basis_state(cfg, 1)
    traj = d.run_heterodyne_trajectory(cfg, psi0)
    ref = d.lindblad_reference(cfg, np.outer(psi0, psi0.conj()))
    final = d.to_rotating_frame(traj.final_state, cfg, d.default_schedule(cfg).duration)
    np.testing.assert_allclose(np.outer(final, final.conj()), ref.final_state, atol=1e-8)


def test_trajectory_norm_and_record_shapes():
    cfg = small_cfg()
    traj = d.run_heterodyne_trajectory(cfg, d.basis_state(cfg, 1), snapshot_every=50)
    for s in traj.states:
        assert abs(np.linalg.norm(s) - 1) < 1e-9
    assert abs(np.linalg.norm(traj.final_state) - 1) < 1e-9
    n = len(traj.times)
    assert traj.signal_i.shape == traj.noise_q.shape == (n,)
    lo, hi = traj.span
    assert lo == 0 and hi == pytest.approx(d.default_schedule(cfg).duration, rel=1e-12)


def test_experiment_counts_and_determinism():
    cfg = small_cfg(seed=3)
    a = d.run_two_measurement_experiment(cfg, 1, zero_side=1)
    b = d.run_two_measurement_experiment(cfg, 1, zero_side=1)
    assert a.counts.sum() == cfg.n_traj
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.iq, b.iq)
    c = d.run_two_measurement_experiment(cfg, 1, zero_side=1, repeat=1)
    assert not np.array_equal(a.iq, c.iq)
    with pytest.raises(InputError):
        d.run_two_measurement_experiment(cfg, 2)


def test_batch_matches_single_trajectory_record():
    cfg = small_cfg(n_traj=3, seed=11)
    batch = d.run_two_measurement_experiment(cfg, 0, zero_side=1)
    traj = d.run_heterodyne_trajectory(cfg, d.basis_state(cfg, 0), rng_stream=d.trajectory_stream(11, 0, 0, 2))
    windows = d.default_schedule(cfg).measurement_windows()
    for w, win in enumerate(windows):
        np.testing.assert_allclose(d.integrate_iq(traj, win), batch.iq[2, w], rtol=1e-9, atol=1e-15)


def test_sweep_shape_and_thread_independence():
    cfg = small_cfg(n_traj=10, seed=5)
    one = d.run_detuning_sweep(cfg, grid=(8.0, 12.0), repeats=2, threads=1)
    two = d.run_detuning_sweep(cfg, grid=(8.0, 12.0), repeats=2, threads=2)
    assert [r.delta_over_g for r in one.rows] == [8.0, 12.0]
    np.testing.assert_array_equal(one.per_repeat, two.per_repeat)
    assert d.sweep_csv(one) == d.sweep_csv(two)
    for row in one.rows:
        for v in (row.readout_error, row.non_projectivity, row.demolition):
            assert 0 <= v <= 1
        assert math.isfinite(row.readout_error_std)


def test_single_repeat_sweep_has_zero_std():
    cfg = small_cfg(n_traj=5)
    res = d.run_detuning_sweep(cfg, grid=(10.0,), repeats=1)
    assert len(res.rows) == 1 and res.rows[0].demolition_std == 0.0
    with pytest.raises(InputError):
        d.run_detuning_sweep(cfg, grid=(), repeats=1)


def test_sweep_csv_format():
    cfg = small_cfg(n_traj=5)
    res = d.run_detuning_sweep(cfg, grid=(10.0,), repeats=1)
    text = d.sweep_csv(res, {"seed": 0})
    lines = text.split("\n")
    assert lines[0] == "# seed: 0"
    assert lines[1] == ",".join(d.SWEEP_HEADER)
    assert "\r" not in text and text.endswith("\n")
    assert lines[2].endswith(",5,0")


def test_worker_count_reads_environment(monkeypatch):
    monkeypatch.setenv("QNDMETER_THREADS", "3")
    assert d.worker_count() == 3
    assert d.worker_count(2) == 2
    monkeypatch.delenv("QNDMETER_THREADS")
    assert d.worker_count() == 1


# --- default-parameter physics (shares the session-scoped runs) -------------


def test_default_counts_total_and_photons_after_reset(default_runs):
    cfg, _, runs = default_runs
    for r in runs.values():
        assert r.counts.sum() == cfg.n_traj
        assert r.photons_after_reset <= 0.02


def test_default_ground_state_statistics_agree_between_shots(default_runs):
    cfg, _, runs = default_runs
    c = runs[0].counts
    n = c.sum()
    p, q = c.sum(axis=1) / n, c.sum(axis=0) / n
    se = math.sqrt(max(p[0] * p[1], q[0] * q[1], 1 / n) * 2 / n)
    assert abs(p[0] - q[0]) <= 3 * se


def test_default_mean_i_has_opposite_signs(default_runs):
    _, side, runs = default_runs
    i0, i1 = runs[0].mean_i()[0], runs[1].mean_i()[0]
    assert i0 * i1 < 0
    assert np.sign(i0) == side


def test_convergence_under_step_halving():
    # integration gate at reduced scale: halving dt moves each metric by less than its repeat spread
    base = d.SimConfig(n_traj=150, seed=13)
    fine = d.SimConfig(n_traj=150, seed=13, dt_over_invg=0.001)
    a = d.run_detuning_sweep(base, grid=(10.0,), repeats=5)
    b = d.run_detuning_sweep(fine, grid=(10.0,), repeats=5)
    spread = np.maximum(a.per_repeat.std(axis=0, ddof=1), b.per_repeat.std(axis=0, ddof=1))[0]
    change = np.abs(a.per_repeat.mean(axis=0) - b.per_repeat.mean(axis=0))[0]
    assert np.all(change < spread), (change, spread)


def test_deep_dispersive_limit_without_decoherence_is_qnd():
    cfg = d.SimConfig(delta_over_g=100.0, gamma=0.0, gamma_phi=0.0, dt_over_invg=0.001, n_traj=300, seed=21)
    side = d.calibrate_zero_side(cfg)
    runs = [d.run_two_measurement_experiment(cfg, b, zero_side=side, sample_every=0) for b in (0, 1)]
    m = empirical_metrics(d.counts_from_experiments(runs))
    assert m.D_E <= 3 * m.stderr["D_E"], m
