import numpy as np
import pytest

from kinlim.equilibrium import FP, LB
from kinlim.forcing import (constant_two_point_renewal, generate_path,
                            two_point_renewal, zero_renewal)
from kinlim.kinetic import (KineticRunConfig, ParticleEnsemble,
                            corrector_decomposition, make_ensemble, moments,
                            run_rescaled, step_micro)
from kinlim.rng import substream
from kinlim.torus import TorusField, TorusGrid, pairing

A = 0.5


@pytest.fixture
def grid():
    return TorusGrid(1, 64)


def zero_path(grid, horizon, t_start=0.0):
    return generate_path(zero_renewal(grid), horizon, seed=0, t_start=t_start)


def uniform_ensemble(n, eps, seed, dim=1, velocities=None):
    rng = substream(seed)
    pos = rng.random((n, dim))
    vel = rng.standard_normal((n, dim)) if velocities is None else velocities
    return ParticleEnsemble(pos, vel, np.full(n, 1.0 / n), eps)


def test_config_validation(grid):
    with pytest.raises(ValueError):
        KineticRunConfig(LB, 0.5, 0.05, dt=0.05, n_particles=10, grid=grid)
    with pytest.raises(ValueError):
        KineticRunConfig("xx", 0.5, 0.05, dt=0.01, n_particles=10, grid=grid)
    with pytest.raises(ValueError):
        KineticRunConfig(LB, 0.5, 0.05, dt=0.01, n_particles=10, grid=grid,
                         moment_cap=4)


def test_zero_velocity_zero_force_positions_fixed(grid):
    n = 1000
    ens = uniform_ensemble(n, 0.5, 1, velocities=np.zeros((n, 1)))
    path = zero_path(grid, 1.0)
    out = step_micro(ens, path, 0.02, substream(2), LB)
    assert np.array_equal(out.positions, ens.positions)


def test_fp_velocity_marginal_relaxes_to_maxwellian(grid):
    # E = 0: velocity variance within [0.94, 1.06] after micro time 10
    n = 100_000
    rng = substream(3)
    ens = ParticleEnsemble(rng.random((n, 1)), np.full((n, 1), 2.0),
                           np.full(n, 1.0 / n), 1.0)
    path = zero_path(grid, 10.0)
    dt = 0.05
    for _ in range(200):
        ens = step_micro(ens, path, dt, rng, FP)
    var = ens.velocities.var()
    assert 0.94 < var < 1.06
    assert abs(ens.velocities.mean()) < 4 / np.sqrt(n)


def test_lb_jump_fraction(grid):
    # fraction of particles that ever jumped by micro time t is 1 - exp(-t)
    n = 100_000
    rng = substream(4)
    v0 = np.full((n, 1), 5.0)  # marker velocity, overwritten on first jump
    ens = ParticleEnsemble(rng.random((n, 1)), v0.copy(),
                           np.full(n, 1.0 / n), 1.0)
    path = zero_path(grid, 2.0)
    t, dt = 0.7, 0.005
    for _ in range(int(round(t / dt))):
        ens = step_micro(ens, path, dt, rng, LB)
    jumped = np.mean(ens.velocities[:, 0] != 5.0)
    # per-step no-jump probability exp(-dt) compounds to exp(-t) exactly
    expected = -np.expm1(-t)
    se = np.sqrt(expected * (1 - expected) / n)
    assert abs(jumped - expected) < 3 * se


def test_path_coverage_error(grid):
    ens = uniform_ensemble(100, 0.5, 5)
    path = zero_path(grid, 0.01)
    with pytest.raises(ValueError):
        step_micro(ens, path, 0.02, substream(6), LB)


def test_moments_single_particle(grid):
    # particle sitting on a grid node deposits v0 x v0 / cell volume there
    v0 = np.array([[1.5]])
    pos = np.array([[0.25]])
    ens = ParticleEnsemble(pos, v0, np.array([1.0]), 1.0)
    est = moments(ens, grid)
    assert est.totals[0] == pytest.approx(1.0)
    assert est.totals[1] == pytest.approx(1.5)
    node = int(0.25 * grid.m)
    assert est.pressure.values[0, 0, node] == pytest.approx(
         v0[0, 0] ** 2 * grid.m)
    assert est.rho.values[node] == pytest.approx(grid.m)
    assert pairing(est.rho, TorusField.constant(grid, 1.0)) == pytest.approx(1.0)


def test_moments_maxwellian_second_moment_is_identity(grid):
    n = 1_000_000
    ens = uniform_ensemble(n, 0.5, 7)
    est = moments(ens, grid)
    k_global = est.pressure.physical().mean(axis=-1)  # integral over x
    se = np.sqrt(2.0 / n)
    assert abs(k_global[0, 0] - 1.0) < 3 * se


def test_moments_zero_velocities(grid):
    n = 1000
    ens = uniform_ensemble(n, 0.5, 8, velocities=np.zeros((n, 1)))
    est = moments(ens, grid)
    assert np.max(np.abs(est.current.values)) == 0.0
    assert np.max(np.abs(est.pressure.values)) == 0.0


def test_moments_fourier_estimator_mass_exact(grid):
    ens = uniform_ensemble(5000, 0.5, 9)
    est = moments(ens, grid, estimator="fourier")
    one = TorusField.constant(grid, 1.0)
    assert pairing(est.rho, one) == pytest.approx(ens.mass, abs=1e-12)


def test_run_rescaled_uniform_equilibrium(grid):
    # E = 0, uniform initial density: the density stays uniform up to
    # binomial bin noise, and mass is conserved exactly
    cfg = KineticRunConfig(LB, 0.5, 0.02, dt=0.02, n_particles=50_000,
                           grid=grid)
    model = zero_renewal(grid)
    path = generate_path(model, cfg.micro_horizon + 0.1, seed=1)
    rho0 = TorusField.constant(grid, 1.0)
    run = run_rescaled(cfg, path, rho0, seed=10, n_checkpoints=4)
    one = TorusField.constant(grid, 1.0)
    for est in run.estimates:
        assert pairing(est.rho, one) == pytest.approx(1.0, abs=1e-12)
    final = run.estimates[-1].rho.physical()
    noise = 4 * np.sqrt(grid.m / cfg.n_particles)
    assert np.max(np.abs(final - 1.0)) < noise
    # third total moment stays bounded by a fixed multiple of its start
    j3_0 = run.estimates[0].totals[3] + run.estimates[0].totals[0]
    for est in run.estimates:
        assert est.totals[3] <= 10.0 * j3_0


def test_moment_evolution_identity_both_collisions(grid):
    # space-homogeneous force: total current matches
    # exp(-t) J(0) + mass * int exp(-(t-s)) E(s) ds at the checkpoints
    from kinlim.equilibrium import path_weighted_integral
    model = constant_two_point_renewal(grid, A)
    micro_t, dt, n = 2.0, 0.004, 40_000
    x0 = np.array([[0.0]])
    for collision in (LB, FP):
        path = generate_path(model, micro_t + 0.1, seed=21)
        rng = substream(22)
        ens = uniform_ensemble(n, 1.0, 23)
        j0 = float(np.sum(ens.weights[:, None] * ens.velocities))
        n_steps = int(round(micro_t / dt))
        check = {int(round(f * n_steps)) for f in (0.2, 0.4, 0.6, 0.8, 1.0)}
        for step in range(1, n_steps + 1):
            ens = step_micro(ens, path, dt, rng, collision)
            if step in check:
                t = step * dt
                drift = np.exp(-t) * path_weighted_integral(
                    path, x0, 1.0, 0.0, t)[0, 0]
                expected = np.exp(-t) * j0 + ens.mass * drift
                observed = float(np.sum(ens.weights[:, None] * ens.velocities))
                se = ens.velocities.std() / np.sqrt(n)
                assert abs(observed - expected) < 3 * se + 2 * dt * A


def test_fp_exact_gaussian_kernel(grid):
    # frozen space-homogeneous force: (X, V) after micro time t is Gaussian
    # with mean and covariance of the explicit Ornstein-Uhlenbeck solution
    e0 = 0.3
    model = constant_two_point_renewal(grid, e0)
    # force the +amplitude atom by picking a path whose first draw is +
    path = None
    for s in range(10):
        cand = generate_path(model, 1.0, seed=s)
        if cand.value_at(0.0).field.physical()[0, 0] > 0 and \
                len(cand.times) == 2:  # no jumps within horizon
            path = cand
            break
    assert path is not None
    n, t, dt = 200_000, 0.25, 0.002
    x0, w0 = 0.5, 0.0
    ens = ParticleEnsemble(np.full((n, 1), x0), np.full((n, 1), w0),
                           np.full(n, 1.0 / n), 1.0)
    rng = substream(31)
    for _ in range(int(round(t / dt))):
        ens = step_micro(ens, path, dt, rng, FP)
    disp = ens.positions[:, 0] - x0  # no wraps: 5+ sigma margin
    vel = ens.velocities[:, 0]
    # exact moments for dV = (e0 - V)dt + sqrt(2) dB from rest
    mean_v = e0 * (1 - np.exp(-t))
    mean_x = e0 * (t - (1 - np.exp(-t)))
    var_v = 1 - np.exp(-2 * t)
    var_x = 2 * (t - 2 * (1 - np.exp(-t)) + 0.5 * (1 - np.exp(-2 * t)))
    cov_xv = 2 * ((1 - np.exp(-t)) - 0.5 * (1 - np.exp(-2 * t)))
    se = 1.0 / np.sqrt(n)
    assert abs(vel.mean() - mean_v) < 3 * se * np.sqrt(var_v) + 3 * dt * e0
    assert abs(disp.mean() - mean_x) < 3 * se * np.sqrt(var_x) + 3 * dt * t
    assert abs(vel.var() - var_v) < 3 * var_v * np.sqrt(2.0 / n) + 3 * dt
    assert abs(disp.var() - var_x) < 3 * var_x * np.sqrt(2.0 / n) + 3 * dt * var_x ** 0.5
    emp_cov = np.mean((disp - disp.mean()) * (vel - vel.mean()))
    assert abs(emp_cov - cov_xv) < 4 * np.sqrt(var_x * var_v / n) + 3 * dt * cov_xv


def test_corrector_trivial_cases(grid):
    model = two_point_renewal(grid, A)
    e = model.atoms[0]
    n = 4000
    ens = uniform_ensemble(n, 0.25, 41, velocities=np.zeros((n, 1)))
    est = moments(ens, grid, estimator="fourier")
    # J = 0 and e = 0: theta = 0, zeta = rho
    zero_e = TorusField.zeros(grid, 1)
    theta, zeta = corrector_decomposition(est, zero_e, 0.25)
    assert np.max(np.abs(theta.values)) < 1e-12
    assert np.max(np.abs(zeta.values - est.rho.values)) < 1e-12
    # constant J and rho with space-homogeneous e: divergence of a constant
    const_est = moments(
        ParticleEnsemble(np.linspace(0, 1, n, endpoint=False)[:, None],
                         np.ones((n, 1)), np.full(n, 1.0 / n), 0.25),
        grid, estimator="fourier")
    e_const = TorusField.constant(grid, np.array([0.7]))
    theta2, _ = corrector_decomposition(const_est, e_const, 0.25)
    assert np.max(np.abs(theta2.values)) < 1e-9


def test_corrector_scaling_smoke(grid):
    # sup_t ||theta^eps||_{H^-1} shrinks roughly linearly in eps
    model = two_point_renewal(grid, A)
    rho0 = TorusField.from_function(
        grid, 0, lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x))
    norms = {}
    for eps in (0.5, 0.25):
        cfg = KineticRunConfig(LB, eps, 0.02, dt=0.1 * eps**2,
                               n_particles=20_000, grid=grid,
                               estimator="fourier")
        path = generate_path(model, cfg.micro_horizon + 1.0, seed=51)
        run = run_rescaled(cfg, path, rho0, seed=52, n_checkpoints=5,
                           track_corrector=True)
        norms[eps] = run.corrector_norms.max()
    ratio = norms[0.5] / norms[0.25]
    assert 1.0 < ratio < 4.0


def test_equilibrium_invariance_both_collisions(grid):
    # E = 0, velocities from the Maxwellian: the empirical second moment
    # stays within 3 se of the identity at every checkpoint
    n = 50_000
    model = zero_renewal(grid)
    rho0 = TorusField.constant(grid, 1.0)
    for collision in (LB, FP):
        cfg = KineticRunConfig(collision, 0.5, 0.025, dt=0.025,
                               n_particles=n, grid=grid)
        path = generate_path(model, cfg.micro_horizon + 0.1, seed=71)
        run = run_rescaled(cfg, path, rho0, seed=72, n_checkpoints=4)
        se = np.sqrt(2.0 / n)
        for est in run.estimates:
            k_global = est.pressure.physical().mean(axis=-1)[0, 0]
            assert abs(k_global - 1.0) < 3 * se + 0.01
