"""Mixing random force fields on the torus.

Two constructions of a stationary, exponentially mixing, centred Markov field
t -> E(t, .) with values in a fixed ball of a Sobolev space:

* renewal: the field sits at a draw from a base law nu and is redrawn,
  independently, at the jump times of a rate-1 Poisson process.  For centred
  linear observables the semigroup is exp(-t) times the identity, so the
  resolvents have the closed forms R_lam(e) = e / (1 + lam).

* ou: a link map applied to an m-dimensional Ornstein-Uhlenbeck process
  dX = -X dt + sqrt(2) dB at equilibrium.  The link is a clipped linear
  combination of fixed band-limited vector fields, hence bounded and
  Lipschitz; resolvents are estimated by time-quadrature Monte Carlo.

The default base law is the symmetric two-point law on +/- a*cos(2 pi k0 x)
along one axis: it is centred, ball-bounded, and every second-moment
expectation can be enumerated over the two atoms, which gives the exact
oracles used by the verification suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator
from .torus import TorusField, TorusGrid, vector_sobolev_norm

RENEWAL = "renewal"
OU = "ou"


@dataclass(frozen=True)
class ForceSample:
    """One draw e from the stationary law, with its norm bound.

    `state` carries the underlying Markov state when the field is a function
    of a hidden process (the OU construction); it is None for renewal fields.
    """

    field: TorusField
    norm_bound: float
    state: np.ndarray | None = None


class ForceFieldModel:
    """Stationary mixing force field (renewal or OU-driven)."""

    def __init__(self, kind, grid, atoms=None, weights=None, link_basis=None,
                 clip_radius=5.0, sobolev_index=6.0, mixing_rate=1.0):
        if kind not in (RENEWAL, OU):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.grid = grid
        self.sobolev_index = float(sobolev_index)
        self.mixing_rate = float(mixing_rate)
        self.jump_rate = 1.0
        if kind == RENEWAL:
            if not atoms:
                raise ValueError("renewal model needs at least one atom")
            self.atoms = list(atoms)
            if weights is None:
                weights = np.full(len(self.atoms), 1.0 / len(self.atoms))
            self.weights = np.asarray(weights, dtype=float)
            if abs(self.weights.sum() - 1.0) > 1e-12 or (self.weights < 0).any():
                raise ValueError("atom weights must be a probability vector")
            mean = sum(w * a.physical() for w, a in zip(self.weights, self.atoms))
            if np.max(np.abs(mean)) > 1e-12:
                raise ValueError("base law must be centred")
            self.norm_bound = max(
                (vector_sobolev_norm(a, self.sobolev_index) for a in self.atoms),
                default=0.0,
            )
            self._atom_values = np.stack([a.physical() for a in self.atoms])
        else:
            if not link_basis:
                raise ValueError("ou model needs a link basis")
            self.link_basis = list(link_basis)
            self.ou_dim = len(self.link_basis)
            self.clip_radius = float(clip_radius)
            total = np.sqrt(sum(
                vector_sobolev_norm(b, self.sobolev_index) ** 2
                for b in self.link_basis))
            self.norm_bound = self.clip_radius * float(total)
            self._basis_values = np.stack([b.physical() for b in self.link_basis])

    # -- stationary sampling ------------------------------------------------

    def _clip(self, u: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(u)
        if r > self.clip_radius:
            return u * (self.clip_radius / r)
        return u

    def link(self, u: np.ndarray) -> TorusField:
        """OU link map: clipped linear combination of the basis fields."""
        cu = self._clip(np.asarray(u, dtype=float))
        vals = np.tensordot(cu, self._basis_values, axes=(0, 0))
        return TorusField(self.grid, 1, vals)

    def _draw_atom_index(self, rng) -> int:
        return int(rng.choice(len(self.atoms), p=self.weights))

    def is_trivial(self) -> bool:
        return self.kind == RENEWAL and \
            all(np.max(np.abs(a.physical())) == 0.0 for a in self.atoms)


def two_point_renewal(grid: TorusGrid, amplitude: float, mode: int = 1,
                      axis: int = 0, sobolev_index: float = 6.0) -> ForceFieldModel:
    """Symmetric two-point base law +/- amplitude*cos(2 pi mode x_axis) e_axis."""
    def comp(*xs):
        out = np.zeros((grid.dim,) + grid.shape)
        out[axis] = amplitude * np.cos(2 * np.pi * mode * xs[axis])
        return out

    atom = TorusField.from_function(grid, 1, comp)
    return ForceFieldModel(RENEWAL, grid, atoms=[atom, -1.0 * atom],
                           sobolev_index=sobolev_index)


def constant_two_point_renewal(grid: TorusGrid, amplitude: float,
                               axis: int = 0,
                               sobolev_index: float = 6.0) -> ForceFieldModel:
    """Space-homogeneous two-point law +/- amplitude * e_axis."""
    vec = np.zeros(grid.dim)
    vec[axis] = amplitude
    atom = TorusField.constant(grid, vec)
    return ForceFieldModel(RENEWAL, grid, atoms=[atom, -1.0 * atom],
                           sobolev_index=sobolev_index)


def zero_renewal(grid: TorusGrid, sobolev_index: float = 6.0) -> ForceFieldModel:
    """Degenerate base law: the zero field (no forcing)."""
    return ForceFieldModel(RENEWAL, grid, atoms=[TorusField.zeros(grid, 1)],
                           sobolev_index=sobolev_index)


def ou_single_mode(grid: TorusGrid, amplitude: float, mode: int = 1,
                   axis: int = 0, clip_radius: float = 5.0,
                   sobolev_index: float = 6.0) -> ForceFieldModel:
    """OU model with a one-dimensional, identity-like link map."""
    def comp(*xs):
        out = np.zeros((grid.dim,) + grid.shape)
        out[axis] = amplitude * np.cos(2 * np.pi * mode * xs[axis])
        return out

    basis = TorusField.from_function(grid, 1, comp)
    return ForceFieldModel(OU, grid, link_basis=[basis],
                           clip_radius=clip_radius,
                           sobolev_index=sobolev_index)


# -- sampling and paths -------------------------------------------------------


def sample_stationary(model: ForceFieldModel, seed) -> ForceSample:
    """Draw from the stationary law nu."""
    rng = as_generator(seed)
    if model.kind == RENEWAL:
        idx = model._draw_atom_index(rng)
        return ForceSample(model.atoms[idx], model.norm_bound)
    u = rng.standard_normal(model.ou_dim)
    return ForceSample(model.link(u), model.norm_bound, state=u.copy())


@dataclass
class ForcePath:
    """One sampled trajectory t -> E(t, .), piecewise constant in time.

    `times` are the breakpoints (jump times for renewal, the uniform update
    grid for the OU construction); `samples[i]` is the value on
    [times[i], times[i+1]), right-continuous at breakpoints.  `jump_flags[i]`
    is True when the value at times[i] arose from a renewal jump.
    """

    model: ForceFieldModel
    times: np.ndarray
    samples: list
    seed: int
    jump_flags: np.ndarray = field(default=None)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def covers(self, a: float, b: float, tol: float = 1e-9) -> bool:
        return self.t_start - tol <= a and b <= self.t_end + tol

    def segment_index(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.clip(idx, 0, len(self.samples) - 1)

    def value_at(self, t: float) -> ForceSample:
        if not self.covers(t, t):
            raise ValueError(f"time {t} outside path span "
                             f"[{self.t_start}, {self.t_end}]")
        return self.samples[int(self.segment_index(t))]

    def shifted(self, offset: float) -> "ForcePath":
        """Same realization on a translated clock (times + offset)."""
        return ForcePath(self.model, self.times + offset, self.samples,
                         self.seed, self.jump_flags)

    def segments_between(self, a: float, b: float):
        """Yield (t0, t1, sample) pieces covering [a, b]."""
        if b < a:
            raise ValueError("need a <= b")
        if not self.covers(a, b):
            raise ValueError("interval outside path span")
        i = int(self.segment_index(a))
        t = a
        while t < b - 1e-15:
            t_next = self.times[i + 1] if i + 1 < len(self.times) else b
            t1 = min(float(t_next), b)
            yield t, t1, self.samples[i]
            t = t1
            i += 1
        if a == b:
            yield a, b, self.samples[int(self.segment_index(a))]


def generate_path(model: ForceFieldModel, horizon: float, dt_ou: float = 0.01,
                  seed=0, t_start: float = 0.0) -> ForcePath:
    """Stationary path on [t_start, t_start + horizon]."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = as_generator(seed)
    seed_val = seed if isinstance(seed, (int, np.integer)) else -1
    if model.kind == RENEWAL:
        times = [t_start]
        idx = model._draw_atom_index(rng)
        indices = [idx]
        t = t_start
        end = t_start + horizon
        while True:
            # inverse-CDF exponential(1) inter-jump times
            t = t + (-np.log1p(-rng.random()))
            if t >= end:
                break
            times.append(t)
            indices.append(model._draw_atom_index(rng))
        times.append(end)
        samples = [ForceSample(model.atoms[i], model.norm_bound) for i in indices]
        flags = np.zeros(len(samples), dtype=bool)
        flags[1:] = True
        return ForcePath(model, np.asarray(times), samples, int(seed_val), flags)
    if dt_ou <= 0:
        raise ValueError("dt_ou must be positive for the OU construction")
    n = int(np.ceil(horizon / dt_ou))
    times = t_start + np.minimum(np.arange(n + 1) * dt_ou, horizon)
    u = rng.standard_normal(model.ou_dim)
    states = [u.copy()]
    decay = np.exp(-dt_ou)
    sd = np.sqrt(1.0 - decay**2)
    for _ in range(n - 1):
        u = decay * u + sd * rng.standard_normal(model.ou_dim)
        states.append(u.copy())
    samples = [ForceSample(model.link(s), model.norm_bound, state=s)
               for s in states]
    flags = np.zeros(len(samples), dtype=bool)
    return ForcePath(model, times, samples, int(seed_val), flags)


# -- resolvents ----------------------------------------------------------------


def _clip_rows(u: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return u * scale


def _ou_time_quadrature(model, sample, weight_fn, horizon, dt, n_replicates, rng):
    """Monte Carlo of integral weight(t) * E[E_t(e)] dt from the given state.

    Replicates run in antithetic pairs (mirrored Brownian increments), which
    removes the noise exactly while the clipping is inactive and leaves the
    estimator unbiased otherwise.
    """
    if sample.state is None:
        raise ValueError("OU resolvents need the underlying state")
    n = int(np.ceil(horizon / dt))
    decay = np.exp(-dt)
    sd = np.sqrt(1.0 - decay**2)
    up = np.tile(sample.state, (n_replicates, 1))
    um = up.copy()
    coef = weight_fn(0.0) * dt * _clip_rows(up[:1], model.clip_radius)[0]
    for step in range(1, n):
        xi = rng.standard_normal(up.shape)
        up = decay * up + sd * xi
        um = decay * um - sd * xi
        w = weight_fn(step * dt)
        if w == 0.0:
            continue
        mean_u = 0.5 * (_clip_rows(up, model.clip_radius).mean(axis=0)
                        + _clip_rows(um, model.clip_radius).mean(axis=0))
        coef += w * dt * mean_u
    vals = np.tensordot(coef, model._basis_values, axes=(0, 0))
    return TorusField(model.grid, 1, vals)


def resolvent_apply(model: ForceFieldModel, lam: float, sample: ForceSample,
                    seed=0, horizon: float = None, dt: float = 0.05,
                    n_replicates: int = 256) -> TorusField:
    """Resolvent R_lam applied to the field observable at the given sample.

    Renewal: closed form e / (1 + lam).  OU: time-quadrature Monte Carlo of
    integral exp(-lam t) E[E_t(e)] dt over a finite horizon (default
    40 / mixing_rate, so the truncation error is exp(-40) times smaller than
    the Monte Carlo error).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if model.kind == RENEWAL:
        return sample.field * (1.0 / (1.0 + lam))
    if horizon is None:
        horizon = 40.0 / model.mixing_rate
    rng = as_generator(seed)
    return _ou_time_quadrature(model, sample, lambda t: np.exp(-lam * t),
                               horizon, dt, n_replicates, rng)


def resolvent_r1r0_apply(model: ForceFieldModel, sample: ForceSample,
                         seed=0, horizon: float = None, dt: float = 0.05,
                         n_replicates: int = 256) -> TorusField:
    """Composition R_1 R_0 applied to the field observable.

    Renewal closed form e/2.  For the OU construction, Fubini plus the Markov
    property turn the double time integral into a single quadrature with
    weight (1 - exp(-t)).
    """
    if model.kind == RENEWAL:
        return sample.field * 0.5
    if horizon is None:
        horizon = 40.0 / model.mixing_rate
    rng = as_generator(seed)
    return _ou_time_quadrature(model, sample, lambda t: -np.expm1(-t),
                               horizon, dt, n_replicates, rng)


# -- covariance estimation ------------------------------------------------------


@dataclass
class CovarianceEstimate:
    """Monte Carlo estimate of E[E(lag, x) (x) E(0, y)] at point pairs."""

    lag: float
    pairs: np.ndarray      # (npairs, 2, dim) physical coordinates
    values: np.ndarray     # (npairs, N, N)
    stderr: np.ndarray     # (npairs, N, N)
    n_paths: int


def estimate_stationary_covariance(model: ForceFieldModel, lag: float,
                                   n_paths: int, seed=0,
                                   pairs=None, dt_ou: float = 0.01
                                   ) -> CovarianceEstimate:
    """Sample the stationary two-time covariance kernel at point pairs."""
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    if n_paths < 2:
        raise ValueError("need at least two paths for an error bar")
    if pairs is None:
        # default: a small diagonal set of pairs x = y
        xs = np.linspace(0.0, 1.0, 5, endpoint=False)
        pts = np.zeros((len(xs), model.grid.dim))
        pts[:, 0] = xs
        pairs = np.stack([pts, pts], axis=1)
    pairs = np.asarray(pairs, dtype=float)
    npairs = pairs.shape[0]
    n = model.grid.dim
    acc = np.zeros((n_paths, npairs, n, n))
    horizon = max(lag, dt_ou)
    for p in range(n_paths):
        path = generate_path(model, horizon, dt_ou=dt_ou,
                             seed=_path_rng(seed, p))
        e0 = path.value_at(0.0).field.eval_at(pairs[:, 1, :])
        et = path.value_at(lag).field.eval_at(pairs[:, 0, :])
        acc[p] = et[:, :, None] * e0[:, None, :]
    mean = acc.mean(axis=0)
    stderr = acc.std(axis=0, ddof=1) / np.sqrt(n_paths)
    return CovarianceEstimate(lag, pairs, mean, stderr, n_paths)


def _path_rng(seed, index: int):
    from .rng import substream
    return substream(int(seed), 7, int(index))


def path_to_csv(path: ForcePath, file, kmax: int = 4) -> None:
    """One row per segment: start time, jump flag, Fourier coefficients.

    Coefficients are the field components' modes with |k| <= kmax along the
    first axis (real and imaginary parts), enough to reconstruct the
    band-limited default atoms exactly.
    """
    import csv as _csv

    grid = path.model.grid
    ks = [k for k in range(-kmax, kmax + 1)]
    with open(file, "w", newline="") as fh:
        fh.write(f"# dim={grid.dim} m={grid.m} kmax={kmax}\n")
        writer = _csv.writer(fh)
        header = ["time", "jump"]
        for c in range(grid.dim):
            for k in ks:
                header += [f"c{c}_k{k}_re", f"c{c}_k{k}_im"]
        writer.writerow(header)
        for i, sample in enumerate(path.samples):
            coef = sample.field.spectrum()
            row = [f"{path.times[i]:.12g}", int(path.jump_flags[i])]
            for c in range(grid.dim):
                for k in ks:
                    val = coef[(c, k) + (0,) * (grid.dim - 1)]
                    row += [f"{val.real:.12g}", f"{val.imag:.12g}"]
            writer.writerow(row)
