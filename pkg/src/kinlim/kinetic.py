"""Particle Monte Carlo for the rescaled forced kinetic dynamics.

One realization follows n particles (X_i, V_i) on the torus sharing a single
force path; conditionally on that path, the weighted empirical measure
approximates the phase-space density, so position functionals sample the
random density rho at fixed environment.  Micro (fast) time s relates to the
macroscopic clock through t = eps^2 s; positions advance by eps*V per unit
micro time.

Stepping is a first-order splitting, vectorised over particles:

* positions: explicit Euler with the step-start velocity, wrapped into [0,1);
* velocities, jump collisions ('lb'): free drift dV = E dt with the field
  frozen at the step-start position, then a redraw from the Maxwellian with
  probability 1 - exp(-dt) (at most one jump per substep, so dt must keep
  the double-jump mass negligible -- the config enforces dt <= 0.1 eps^2);
* velocities, diffusion collisions ('fp'): exact Ornstein-Uhlenbeck update
  exp(-dt) V + (1 - exp(-dt)) E + Gaussian noise of variance 1 - exp(-2 dt).

Randomness is drawn from a counter-based stream owned by the realization, so
ensembles are reproducible for any number of workers (realizations are the
parallel unit; reductions happen in realization order).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import FP, LB, _check_collision
from .forcing import ForceFieldModel, ForcePath, generate_path
from .rng import as_generator, parallel_map, substream
from .torus import TorusField, TorusGrid, divergence, sobolev_norm


@dataclass
class ParticleEnsemble:
    """Positions on the torus, velocities in R^N, one weight per particle."""

    positions: np.ndarray   # (n, N) in [0, 1)
    velocities: np.ndarray  # (n, N)
    weights: np.ndarray     # (n,), nonnegative, sum = total mass
    epsilon: float
    time: float = 0.0       # macroscopic clock

    def __post_init__(self):
        if not (0 < self.epsilon <= 1):
            raise ValueError("epsilon must lie in (0, 1]")
        if (self.weights < 0).any():
            raise ValueError("weights must be nonnegative")

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def micro_time(self) -> float:
        return self.time / self.epsilon**2


@dataclass
class KineticRunConfig:
    collision: str
    epsilon: float
    horizon: float             # macroscopic T
    dt: float                  # micro time step
    n_particles: int
    grid: TorusGrid
    moment_cap: int = 3
    estimator: str = "histogram"

    def __post_init__(self):
        _check_collision(self.collision)
        if self.dt > 0.1 * self.epsilon**2 + 1e-15:
            raise ValueError("micro step too large: need dt <= 0.1 eps^2")
        if self.moment_cap > 3:
            raise ValueError("velocity moments tracked up to order 3 only")
        if self.estimator not in ("histogram", "fourier"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    @property
    def micro_horizon(self) -> float:
        return self.horizon / self.epsilon**2


@dataclass
class DensityEstimate:
    rho: TorusField              # scalar density
    current: TorusField          # vector first moment
    pressure: TorusField         # matrix second moment
    totals: np.ndarray           # total |v|^m moments, m = 0..3
    estimator: str
    mass: float


# -- initial data ---------------------------------------------------------------


def sample_positions(rho: TorusField, n: int, seed) -> np.ndarray:
    """Sample n positions from a nonnegative density field (mass-normalised)."""
    rng = as_generator(seed)
    grid = rho.grid
    if grid.dim == 1:
        fine = 1 << 14
        xs = np.arange(fine) / fine
        vals = np.maximum(rho.eval_at(xs[:, None]), 0.0)
        cdf = np.concatenate([[0.0], np.cumsum(vals)])
        cdf /= cdf[-1]
        edges = np.concatenate([xs, [1.0]])
        u = rng.random(n)
        return np.interp(u, cdf, edges)[:, None]
    # rejection sampling against the sup of the density
    vals = rho.physical()
    bound = float(vals.max()) * 1.05
    out = np.empty((n, grid.dim))
    filled = 0
    while filled < n:
        cand = rng.random((2 * (n - filled), grid.dim))
        acc = rng.random(cand.shape[0]) * bound <= np.maximum(
            rho.eval_at(cand), 0.0)
        take = cand[acc][: n - filled]
        out[filled:filled + take.shape[0]] = take
        filled += take.shape[0]
    return out


def equilibrium_velocities(path: ForcePath, collision: str,
                           positions: np.ndarray, seed) -> np.ndarray:
    """Velocities drawn from the local invariant profile at each position.

    Needs a path with past history (t_start <= -5).  Jump collisions mix the
    Maxwellian shift over an exponential lookback time; diffusion collisions
    shift by the exponentially weighted past force.
    """
    _check_collision(collision)
    if path.t_start > -5.0:
        raise ValueError("equilibrium init needs a path spanning [-T, 0], T >= 5")
    rng = as_generator(seed)
    n = positions.shape[0]
    dim = positions.shape[1]
    noise = rng.standard_normal((n, dim))
    pieces = list(path.segments_between(path.t_start, 0.0))
    if collision == FP:
        shift = np.zeros((n, dim))
        for t0, t1, sample in pieces:
            w = np.exp(min(t1, 0.0)) - np.exp(t0)
            shift += w * sample.field.eval_at(positions)
        return noise + shift
    # lookback time per particle, truncated at the available past
    tau = np.minimum(-np.log1p(-rng.random(n)), -path.t_start)
    shift = np.zeros((n, dim))
    for t0, t1, sample in pieces:
        lo = np.maximum(t0, -tau)
        hi = np.minimum(t1, 0.0)
        overlap = np.maximum(hi - lo, 0.0)
        shift += overlap[:, None] * sample.field.eval_at(positions)
    return noise + shift


def make_ensemble(rho_init: TorusField, n: int, epsilon: float, seed,
                  velocity_init: str = "maxwellian",
                  path: ForcePath = None,
                  collision: str = None) -> ParticleEnsemble:
    from .torus import pairing
    rng = as_generator(seed)
    mass = pairing(rho_init, TorusField.constant(rho_init.grid, 1.0))
    pos = sample_positions(rho_init, n, rng)
    if velocity_init == "maxwellian":
        vel = rng.standard_normal(pos.shape)
    elif velocity_init == "equilibrium":
        vel = equilibrium_velocities(path, collision, pos, rng)
    else:
        raise ValueError(f"unknown velocity_init {velocity_init!r}")
    w = np.full(n, mass / n)
    return ParticleEnsemble(pos, vel, w, epsilon)


# -- stepping ---------------------------------------------------------------------


def step_micro(ens: ParticleEnsemble, path: ForcePath, dt: float, seed,
               collision: str) -> ParticleEnsemble:
    """Advance every particle by one micro time step."""
    _check_collision(collision)
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = ens.micro_time
    if not path.covers(s, s + dt):
        raise ValueError(f"force path does not cover [{s}, {s + dt}]")
    rng = as_generator(seed)
    e_vals = path.value_at(s).field.eval_at(ens.positions)
    new_pos = np.mod(ens.positions + ens.epsilon * dt * ens.velocities, 1.0)
    v = ens.velocities
    if collision == LB:
        new_vel = v + dt * e_vals
        jump = rng.random(ens.n_particles) < -np.expm1(-dt)
        if jump.any():
            new_vel[jump] = rng.standard_normal((int(jump.sum()), v.shape[1]))
    else:
        decay = np.exp(-dt)
        noise = rng.standard_normal(v.shape)
        new_vel = decay * v + (1.0 - decay) * e_vals + \
            np.sqrt(1.0 - decay**2) * noise
    return ParticleEnsemble(new_pos, new_vel, ens.weights, ens.epsilon,
                            ens.time + dt * ens.epsilon**2)


# -- moment estimation ---------------------------------------------------------------


def _deposit_linear(grid: TorusGrid, positions: np.ndarray,
                    values: np.ndarray) -> np.ndarray:
    """Cloud-in-cell deposition of per-particle values onto grid nodes."""
    m = grid.m
    dim = grid.dim
    g = positions * m
    i0 = np.floor(g).astype(np.int64) % m
    frac = g - np.floor(g)
    out_shape = values.shape[1:] + grid.shape
    flat = np.zeros(values.shape[1:] + (grid.size,))
    # accumulate over the 2^dim corner combinations
    for corner in range(1 << dim):
        idx = np.zeros(positions.shape[0], dtype=np.int64)
        w = np.ones(positions.shape[0])
        for d in range(dim):
            up = (corner >> d) & 1
            node = (i0[:, d] + up) % m
            idx = idx * m + node
            w = w * (frac[:, d] if up else 1.0 - frac[:, d])
        if values.ndim == 1:
            flat += np.bincount(idx, weights=values * w, minlength=grid.size)
        else:
            comp = values.reshape(values.shape[0], -1)
            for c in range(comp.shape[1]):
                flat.reshape(-1, grid.size)[c] += np.bincount(
                    idx, weights=comp[:, c] * w, minlength=grid.size)
    return flat.reshape(out_shape) * grid.size  # deposit / cell volume


def _empirical_modes(grid: TorusGrid, positions: np.ndarray,
                     values: np.ndarray, kmax: int) -> np.ndarray:
    """Exact empirical Fourier sums sum_i values_i exp(-2 pi i k.x_i)."""
    m = grid.m
    kmax = min(kmax, m // 2 - 1)
    freq = np.fft.fftfreq(m, d=1.0 / m).astype(int)
    comp_shape = values.shape[1:]
    vals2 = values.reshape(values.shape[0], -1)
    spec_flat = np.zeros((vals2.shape[1], grid.size), dtype=complex)
    kgrid = np.stack([k.ravel() for k in grid.wavenumbers()], axis=1).astype(int)
    keep = np.nonzero(np.max(np.abs(kgrid), axis=1) <= kmax)[0]
    phase = np.exp(-2j * np.pi * (positions @ kgrid[keep].T))  # (n, nkeep)
    spec_flat[:, keep] = vals2.T @ phase
    del phase
    return spec_flat.reshape(comp_shape + grid.shape)


def moments(ens: ParticleEnsemble, grid: TorusGrid,
            estimator: str = "histogram", kmax: int = None) -> DensityEstimate:
    """Density, current and pressure fields plus total velocity moments."""
    w = ens.weights
    v = ens.velocities
    speeds = np.linalg.norm(v, axis=1)
    totals = np.array([np.sum(w * speeds**m) for m in range(4)])
    val_rho = w
    val_j = w[:, None] * v
    val_k = w[:, None, None] * (v[:, :, None] * v[:, None, :])
    if estimator == "histogram":
        rho = TorusField(grid, 0, _deposit_linear(grid, ens.positions, val_rho))
        cur = TorusField(grid, 1, _deposit_linear(grid, ens.positions, val_j))
        pres = TorusField(grid, 2, _deposit_linear(grid, ens.positions, val_k))
    elif estimator == "fourier":
        if kmax is None:
            kmax = grid.m // 4
        rho = TorusField(grid, 0,
                         _empirical_modes(grid, ens.positions,
                                          val_rho[:, None], kmax
                                          ).reshape(grid.shape),
                         space="spectral").to_physical()
        cur = TorusField(grid, 1,
                         _empirical_modes(grid, ens.positions, val_j, kmax),
                         space="spectral").to_physical()
        pres = TorusField(grid, 2,
                          _empirical_modes(grid, ens.positions, val_k, kmax),
                          space="spectral").to_physical()
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return DensityEstimate(rho, cur, pres, totals, estimator, ens.mass)


# -- corrector diagnostic ----------------------------------------------------------


def corrector_decomposition(dens: DensityEstimate, e_now: TorusField,
                            epsilon: float):
    """Split rho = theta + zeta with theta = eps * div(J + rho R0(E)).

    Uses the renewal closed form R0(e) = e, so `e_now` is the current force
    field itself.  theta captures the fast, O(eps) part of the density; its
    dual-norm decay in eps is one of the scaling diagnostics.
    """
    flux = dens.current + e_now.scale_pointwise(dens.rho)
    theta = epsilon * divergence(flux)
    zeta = dens.rho - theta
    return theta, zeta


# -- full runs -------------------------------------------------------------------


@dataclass
class KineticRun:
    times: list
    estimates: list            # DensityEstimate per checkpoint
    ensemble: ParticleEnsemble
    corrector_norms: np.ndarray = field(default=None)  # sup_t ||theta||_{H^-1}


def run_rescaled(cfg: KineticRunConfig, path: ForcePath,
                 rho_init: TorusField, seed,
                 velocity_init: str = "maxwellian",
                 n_checkpoints: int = 10,
                 track_corrector: bool = False,
                 kmax: int = None) -> KineticRun:
    """Evolve one conditioned realization over macro time [0, horizon].

    All particles share `path` (the conditioning environment); the collision
    and thermal noise is particle-independent.  Checkpoints are evenly spaced
    in macro time, including both endpoints.
    """
    micro_t = cfg.micro_horizon
    if not path.covers(0.0, micro_t):
        raise ValueError("force path horizon too short for the rescaled run")
    n_steps = max(int(np.ceil(micro_t / cfg.dt - 1e-9)), 1)
    dt = micro_t / n_steps
    rng = as_generator(seed)
    ens = make_ensemble(rho_init, cfg.n_particles, cfg.epsilon, rng,
                        velocity_init=velocity_init, path=path,
                        collision=cfg.collision)
    checkpoint_steps = np.unique(np.round(
        np.linspace(0, n_steps, n_checkpoints + 1)).astype(int))
    times, estimates, norms = [], [], []

    def record(e):
        est = moments(e, cfg.grid, estimator=cfg.estimator, kmax=kmax)
        times.append(e.time)
        estimates.append(est)
        if track_corrector:
            est_f = est if cfg.estimator == "fourier" else \
                moments(e, cfg.grid, estimator="fourier", kmax=kmax)
            e_now = path.value_at(min(e.micro_time, path.t_end)).field
            theta, _ = corrector_decomposition(est_f, e_now, cfg.epsilon)
            norms.append(sobolev_norm(theta, -1.0))

    record(ens)
    for step in range(1, n_steps + 1):
        ens = step_micro(ens, path, dt, rng, cfg.collision)
        if step in checkpoint_steps:
            record(ens)
    return KineticRun(times, estimates, ens,
                      np.asarray(norms) if track_corrector else None)


def functional_samples(cfg: KineticRunConfig, model: ForceFieldModel,
                       rho_init: TorusField, xi_fields, n_realizations: int,
                       seed: int, n_workers: int = 1,
                       velocity_init: str = "maxwellian"):
    """Samples of the position functionals <rho_T, xi> across realizations.

    Each realization draws its own force path and its own particle noise.
    Returns (samples, noise_floor), both (n_realizations, len(xi_fields)):
    `noise_floor` is the estimated conditional (particle-sampling) variance
    of each sample, mass^2 Var(xi(X)) / n.  By the law of total variance,
    subtracting its mean from the sample variance estimates the variance of
    the underlying law of <rho_T, xi> itself.
    """
    args = [(cfg, model, rho_init, xi_fields, seed, r, velocity_init)
            for r in range(n_realizations)]
    rows = parallel_map(_one_functional_sample, args, n_workers)
    arr = np.asarray(rows)
    n_xi = len(xi_fields)
    return arr[:, :n_xi], arr[:, n_xi:]


def _one_functional_sample(args):
    cfg, model, rho_init, xi_fields, seed, r, velocity_init = args
    micro_t = cfg.micro_horizon
    path = generate_path(model, micro_t * (1 + 1e-9) + 1e-9,
                         seed=substream(seed, 11, r))
    n_steps = max(int(np.ceil(micro_t / cfg.dt - 1e-9)), 1)
    dt = micro_t / n_steps
    rng = substream(seed, 12, r)
    ens = make_ensemble(rho_init, cfg.n_particles, cfg.epsilon, rng,
                        velocity_init=velocity_init, path=path,
                        collision=cfg.collision)
    for _ in range(n_steps):
        ens = step_micro(ens, path, dt, rng, cfg.collision)
    out = np.empty(2 * len(xi_fields))
    n = ens.n_particles
    for j, xi in enumerate(xi_fields):
        vals = xi.eval_at(ens.positions)
        out[j] = float(np.sum(ens.weights * vals))
        out[len(xi_fields) + j] = ens.mass**2 * float(vals.var(ddof=1)) / n
    return out
