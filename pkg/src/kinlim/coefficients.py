"""Limit-equation data: diffusion matrix, drift field, noise covariance.

The hydrodynamic limit of the forced kinetic dynamics is driven by three
objects built from the stationary law of the force field and its resolvents
R_lam (R_0(e) = e and R_1(e) = e/2 for the renewal construction):

* diffusion matrix field
    K(x) = Id + (1/2) E[ E (x)sym (R_0 E + (b-1) R_1 E) ](x),
  with b = 2 for jump collisions and b = 1 for velocity diffusion;
* drift vector field
    Theta(x) = (b/2) div E[ R_1 E (x)sym E ](x) + E[ R_1 R_0 E  div E ](x);
* covariance kernel
    H(i, x, j, y) = (1/2) E[ (R_0 E)_i(x) E_j(y) + (R_0 E)_j(y) E_i(x) ],
  whose integral operator is symmetric, nonnegative and trace class; its
  spectral square root generates the limit noise.

Here a (x)sym b = a (x) b + b (x) a.  All expectations are Monte Carlo
averages over stationary draws, with per-entry standard errors; for the
default two-point base law every second-moment average is deterministic, so
the estimates coincide with the two-atom enumeration exactly.

The kernel is discretised by grid quadrature (uniform weight M^-N), stored
dense, and eigendecomposed; eigenvalues below a noise floor are dropped and
the dropped tail is reported as a modelling-error bound.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .equilibrium import FP, LB, _check_collision, path_weighted_integral
from .forcing import (ForceFieldModel, generate_path, resolvent_apply,
                      resolvent_r1r0_apply, sample_stationary)
from .rng import substream
from .torus import TorusField, TorusGrid, divergence, matrix_divergence

COLLISION_FACTOR = {LB: 2.0, FP: 1.0}


@dataclass
class HydroCoefficients:
    """Diffusion matrix and drift of the limit equation, with MC errors."""

    diffusion: TorusField        # matrix field, symmetric and >= Id
    drift: TorusField            # vector field
    collision: str
    collision_factor: float      # 2 (jump) or 1 (velocity diffusion)
    r1_sym: TorusField           # matrix field E[R_1 E (x)sym E]
    diffusion_stderr: np.ndarray
    drift_stderr: np.ndarray
    n_mc: int


@dataclass
class CovOperator:
    """Noise covariance operator on vector fields, in spectral form."""

    grid: TorusGrid
    kernel: np.ndarray           # (N*M^N, N*M^N) kernel values H
    eigenvalues: np.ndarray      # kept eigenvalues, descending
    eigenfields: list            # orthonormal TorusField vectors
    trace: float
    dropped_tail: float          # trace mass of the dropped eigenvalues
    tol_eig: float
    kernel_stderr: float         # Frobenius standard error of the kernel

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    def noise_fields(self) -> list:
        """sqrt(lambda_k) * zeta_k, the Wiener-expansion amplitudes."""
        return [np.sqrt(lam) * z for lam, z in
                zip(self.eigenvalues, self.eigenfields)]

    def noise_diagonal(self) -> TorusField:
        """Matrix field sum_k phi_k(x) phi_k(x)^T (pointwise noise strength)."""
        grid = self.grid
        vals = np.zeros((grid.dim, grid.dim) + grid.shape)
        for lam, z in zip(self.eigenvalues, self.eigenfields):
            zv = z.physical()
            vals += lam * zv[None, :] * zv[:, None]
        return TorusField(grid, 2, vals)


def _sym_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a (x)sym b per grid point; inputs (N, grid), output (N, N, grid)."""
    return a[:, None] * b[None, :] + b[:, None] * a[None, :]


def _centering_check(draws: np.ndarray, grid: TorusGrid):
    n = draws.shape[0]
    mean = draws.mean(axis=0)
    std = draws.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    excess = np.abs(mean) - 5.0 * std / np.sqrt(n)
    if np.max(excess) > 1e-9:
        raise ValueError("empirical force law is not centred (beyond 5 sigma)")


def compute_coefficients(model: ForceFieldModel, collision: str,
                         grid: TorusGrid, n_mc: int, seed=0,
                         resolvent_kwargs: dict = None) -> HydroCoefficients:
    """Monte Carlo of the limit diffusion matrix and drift fields."""
    _check_collision(collision)
    if n_mc < 100:
        raise ValueError("need n_mc >= 100")
    b = COLLISION_FACTOR[collision]
    kw = resolvent_kwargs or {}
    n_dim = grid.dim
    e_draws = np.empty((n_mc, n_dim) + grid.shape)
    sym0 = np.empty((n_mc, n_dim, n_dim) + grid.shape)
    sym1 = np.empty_like(sym0)
    drift2 = np.empty((n_mc, n_dim) + grid.shape)
    for i in range(n_mc):
        s = sample_stationary(model, substream(seed, 1, i))
        ev = s.field.physical()
        r0 = resolvent_apply(model, 0.0, s, seed=substream(seed, 2, i), **kw)
        r1 = resolvent_apply(model, 1.0, s, seed=substream(seed, 3, i), **kw)
        r10 = resolvent_r1r0_apply(model, s, seed=substream(seed, 4, i), **kw)
        e_draws[i] = ev
        sym0[i] = _sym_outer(ev, r0.physical())
        sym1[i] = _sym_outer(r1.physical(), ev)
        drift2[i] = r10.physical() * divergence(s.field).physical()[None]
    _centering_check(e_draws, grid)

    eye = np.zeros((n_dim, n_dim) + grid.shape)
    for d in range(n_dim):
        eye[d, d] = 1.0
    diff_draws = eye[None] + 0.5 * (sym0 + (b - 1.0) * sym1)
    diff_vals = diff_draws.mean(axis=0)
    diff_se = diff_draws.std(axis=0, ddof=1) / np.sqrt(n_mc)
    # store the symmetrised average (symmetric by construction up to round-off)
    diff_vals = 0.5 * (diff_vals + np.swapaxes(diff_vals, 0, 1))
    r1_sym_field = TorusField(grid, 2, sym1.mean(axis=0))
    drift_field = (b / 2.0) * matrix_divergence(r1_sym_field).physical() \
        + drift2.mean(axis=0)
    # drift error: MC spread of the pointwise term; the divergence term's
    # spread is propagated through the same spectral derivative
    div_draws = np.empty_like(drift2)
    for i in range(n_mc):
        div_draws[i] = matrix_divergence(
            TorusField(grid, 2, sym1[i])).physical()
    drift_draws = (b / 2.0) * div_draws + drift2
    drift_se = drift_draws.std(axis=0, ddof=1) / np.sqrt(n_mc)
    return HydroCoefficients(
        diffusion=TorusField(grid, 2, diff_vals),
        drift=TorusField(grid, 1, drift_field),
        collision=collision,
        collision_factor=b,
        r1_sym=r1_sym_field,
        diffusion_stderr=diff_se,
        drift_stderr=drift_se,
        n_mc=n_mc,
    )


def compute_cov_operator(model: ForceFieldModel, grid: TorusGrid, n_mc: int,
                         tol_eig: float = None, seed=0,
                         max_kernel_dim: int = 1024,
                         resolvent_kwargs: dict = None) -> CovOperator:
    """Monte Carlo kernel estimate and dense symmetric eigendecomposition."""
    if n_mc < 100:
        raise ValueError("need n_mc >= 100")
    dim = grid.dim * grid.size
    if dim > max_kernel_dim:
        raise ValueError(f"kernel dimension {dim} exceeds {max_kernel_dim}; "
                         "coarsen the grid or raise max_kernel_dim")
    kw = resolvent_kwargs or {}
    acc = np.zeros((dim, dim))
    acc_sq = np.zeros((dim, dim))
    for i in range(n_mc):
        s = sample_stationary(model, substream(seed, 5, i))
        ev = s.field.physical().reshape(dim)
        r0 = resolvent_apply(model, 0.0, s, seed=substream(seed, 6, i),
                             **kw).physical().reshape(dim)
        outer = np.outer(r0, ev)
        outer = 0.5 * (outer + outer.T)      # explicit symmetrisation
        acc += outer
        acc_sq += outer**2
    kernel = acc / n_mc
    kernel = 0.5 * (kernel + kernel.T)
    var = np.maximum(acc_sq / n_mc - (acc / n_mc) ** 2, 0.0) \
        * n_mc / max(n_mc - 1, 1)
    se_entries = np.sqrt(var / n_mc)
    weight = 1.0 / grid.size
    se_fro = float(np.sqrt(np.sum((se_entries * weight) ** 2)))
    op = kernel * weight                     # quadrature-weighted operator
    eigvals, eigvecs = np.linalg.eigh(op)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    trace = float(np.trace(op))
    if tol_eig is None:
        tol_eig = abs(trace) * 1e-10 + 3.0 * se_fro
    if eigvals[-1] < -10.0 * max(tol_eig, 1e-300):
        raise ValueError("kernel estimate far from nonnegative; raise n_mc")
    keep = eigvals > tol_eig
    dropped = float(np.sum(np.clip(eigvals[~keep], 0.0, None)))
    fields = []
    for j in np.nonzero(keep)[0]:
        vec = eigvecs[:, j] * np.sqrt(grid.size)   # L^2-normalised
        fields.append(TorusField(grid, 1,
                                 vec.reshape((grid.dim,) + grid.shape)))
    return CovOperator(grid, kernel, eigvals[keep], fields, trace, dropped,
                       float(tol_eig), se_fro)


def apply_cov_operator(cov: CovOperator, v: TorusField) -> TorusField:
    """Direct kernel quadrature (S v)_i(x) = sum_j int H(i,x,j,y) v_j(y) dy."""
    if v.grid != cov.grid or v.rank != 1:
        raise ValueError("need a vector field on the operator's grid")
    flat = v.physical().reshape(-1)
    out = cov.kernel @ flat / cov.grid.size
    return TorusField(cov.grid, 1, out.reshape((cov.grid.dim,) + cov.grid.shape))


def apply_sqrt_cov(cov: CovOperator, v: TorusField) -> TorusField:
    """Spectral square root: sum_k sqrt(lambda_k) <v, zeta_k> zeta_k."""
    if v.grid != cov.grid or v.rank != 1:
        raise ValueError("need a vector field on the operator's grid")
    from .torus import inner
    out = np.zeros((cov.grid.dim,) + cov.grid.shape)
    for lam, z in zip(cov.eigenvalues, cov.eigenfields):
        out += np.sqrt(lam) * inner(v, z) * z.physical()
    return TorusField(cov.grid, 1, out)


# -- structural checks ------------------------------------------------------------


@dataclass
class EnhancementReport:
    """Pointwise positivity and consistency checks on the limit data."""

    min_eig_over_base: float       # min over x of eig(K(x) - Id)
    min_eig_over_noise: float      # min over x of eig(K(x) - Id - sum phi phi^T)
    strato_diffusion: TorusField   # Id + ((b-1)/2) E[R_1 E (x)sym E]
    consistency_gap: float         # max |K - Kstrato - sum phi phi^T|
    tolerance: float
    passed: bool


def _pointwise_min_eig(mat_vals: np.ndarray, grid: TorusGrid) -> float:
    flat = mat_vals.reshape(grid.dim, grid.dim, grid.size)
    mats = np.moveaxis(flat, -1, 0)
    return float(np.min(np.linalg.eigvalsh(mats)))


def verify_enhancement(coeffs: HydroCoefficients, cov: CovOperator,
                       tol: float = None) -> EnhancementReport:
    """Check K >= Id, K >= Id + sum phi phi^T, and the Ito/Stratonovich split.

    A violation beyond tolerance yields passed=False rather than an
    exception, so callers can report the margins.
    """
    grid = coeffs.diffusion.grid
    if tol is None:
        tol = 10.0 * float(np.max(coeffs.diffusion_stderr)) \
            + 3.0 * cov.kernel_stderr + cov.dropped_tail + 1e-10
    eye = np.zeros((grid.dim, grid.dim) + grid.shape)
    for d in range(grid.dim):
        eye[d, d] = 1.0
    k_vals = coeffs.diffusion.physical()
    noise_diag = cov.noise_diagonal().physical()
    m1 = _pointwise_min_eig(k_vals - eye, grid)
    m2 = _pointwise_min_eig(k_vals - eye - noise_diag, grid)
    strato_vals = eye + 0.5 * (coeffs.collision_factor - 1.0) \
        * coeffs.r1_sym.physical()
    gap = float(np.max(np.abs(k_vals - strato_vals - noise_diag)))
    passed = (m1 >= -tol) and (m2 >= -tol) and (gap <= tol)
    return EnhancementReport(m1, m2, TorusField(grid, 2, strato_vals),
                             gap, tol, passed)


@dataclass
class SymposReport:
    """Both sides of the resolvent-covariance identity at one decay rate."""

    delta: float
    lhs: np.ndarray        # E[R_delta(E) (x)sym E] at grid points
    rhs: np.ndarray        # 2 delta E[(int e^{delta s} E ds)^(x)2]
    lhs_stderr: np.ndarray
    rhs_stderr: np.ndarray
    max_sigma_distance: float


def check_sympos_identity(model: ForceFieldModel, delta: float = 1.0,
                          n_paths: int = 10_000, n_mc: int = 2_000,
                          t_trunc: float = 20.0, seed=0,
                          points: np.ndarray = None) -> SymposReport:
    """Monte Carlo of both sides of the stationary identity

        E[R_delta(E(0)) (x)sym E(0)] = 2 delta E[(int_-inf^0 e^(delta s) E(s) ds)^(x)2].

    The left side averages over stationary draws (exact for two-point laws);
    the right side integrates sampled paths over a [-T, 0] truncation.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    grid = model.grid
    if points is None:
        pts = np.zeros((4, grid.dim))
        pts[:, 0] = np.array([0.0, 0.1, 0.2, 0.35])
    else:
        pts = np.atleast_2d(points)
    npts = pts.shape[0]
    n = grid.dim
    lhs_draws = np.empty((n_mc, npts, n, n))
    for i in range(n_mc):
        s = sample_stationary(model, substream(seed, 21, i))
        ev = s.field.eval_at(pts)
        rv = resolvent_apply(model, delta, s,
                             seed=substream(seed, 22, i)).eval_at(pts)
        lhs_draws[i] = rv[:, :, None] * ev[:, None, :] \
            + ev[:, :, None] * rv[:, None, :]
    rhs_draws = np.empty((n_paths, npts, n, n))
    for p in range(n_paths):
        path = generate_path(model, t_trunc, seed=substream(seed, 23, p),
                             t_start=-t_trunc)
        integ = path_weighted_integral(path, pts, delta, -t_trunc, 0.0)
        rhs_draws[p] = 2.0 * delta * integ[:, :, None] * integ[:, None, :]
    lhs = lhs_draws.mean(axis=0)
    rhs = rhs_draws.mean(axis=0)
    lhs_se = lhs_draws.std(axis=0, ddof=1) / np.sqrt(n_mc)
    rhs_se = rhs_draws.std(axis=0, ddof=1) / np.sqrt(n_paths)
    denom = np.sqrt(lhs_se**2 + rhs_se**2) + 1e-12
    sigma = float(np.max(np.abs(lhs - rhs) / denom))
    return SymposReport(delta, lhs, rhs, lhs_se, rhs_se, sigma)


def closed_form_two_point_diffusion(amplitude: float, mode: int,
                                    collision: str, grid: TorusGrid
                                    ) -> TorusField:
    """Two-atom enumeration of the diffusion matrix for the default base law.

    With R_0(e) = e and R_1(e) = e/2, the matrix is
    Id + (1 + (b-1)/2) a^2 cos^2(2 pi k x) along the forced axis.
    """
    _check_collision(collision)
    b = COLLISION_FACTOR[collision]
    coef = 1.0 + (b - 1.0) / 2.0

    def mat(*xs):
        out = np.zeros((grid.dim, grid.dim) + grid.shape)
        for d in range(grid.dim):
            out[d, d] = 1.0
        out[0, 0] += coef * amplitude**2 * np.cos(2 * np.pi * mode * xs[0])**2
        return out

    return TorusField.from_function(grid, 2, mat)


# -- serialization -----------------------------------------------------------------


def coefficients_to_csv(coeffs: HydroCoefficients, path) -> None:
    grid = coeffs.diffusion.grid
    n = grid.dim
    coords = [c.ravel() for c in grid.coords()]
    diff = coeffs.diffusion.physical().reshape(n * n, grid.size)
    drift = coeffs.drift.physical().reshape(n, grid.size)
    r1s = coeffs.r1_sym.physical().reshape(n * n, grid.size)
    with open(path, "w", newline="") as fh:
        fh.write(f"# collision={coeffs.collision} b={coeffs.collision_factor} "
                 f"dim={n} m={grid.m} n_mc={coeffs.n_mc}\n")
        writer = csv.writer(fh)
        header = [f"x{i}" for i in range(n)]
        header += [f"K{i}{j}" for i in range(n) for j in range(n)]
        header += [f"Theta{i}" for i in range(n)]
        header += [f"R1sym{i}{j}" for i in range(n) for j in range(n)]
        writer.writerow(header)
        for p in range(grid.size):
            row = [f"{coords[i][p]:.16g}" for i in range(n)]
            row += [f"{diff[c][p]:.16g}" for c in range(n * n)]
            row += [f"{drift[c][p]:.16g}" for c in range(n)]
            row += [f"{r1s[c][p]:.16g}" for c in range(n * n)]
            writer.writerow(row)


def coefficients_from_csv(path) -> HydroCoefficients:
    with open(path) as fh:
        meta = dict(kv.split("=") for kv in
                    fh.readline().lstrip("# ").split())
        rows = list(csv.reader(io.StringIO(fh.read())))
    n, m = int(meta["dim"]), int(meta["m"])
    grid = TorusGrid(n, m)
    data = np.array(rows[1:], dtype=float)
    diff = data[:, n:n + n * n].T.reshape((n, n) + grid.shape)
    drift = data[:, n + n * n:2 * n + n * n].T.reshape((n,) + grid.shape)
    r1s = data[:, 2 * n + n * n:].T.reshape((n, n) + grid.shape)
    zeros_m = np.zeros((n, n) + grid.shape)
    zeros_v = np.zeros((n,) + grid.shape)
    return HydroCoefficients(
        diffusion=TorusField(grid, 2, diff),
        drift=TorusField(grid, 1, drift),
        collision=meta["collision"],
        collision_factor=float(meta["b"]),
        r1_sym=TorusField(grid, 2, r1s),
        diffusion_stderr=zeros_m,
        drift_stderr=zeros_v,
        n_mc=int(meta["n_mc"]),
    )


def spectrum_to_csv(cov: CovOperator, path) -> None:
    grid = cov.grid
    with open(path, "w", newline="") as fh:
        fh.write(f"# dim={grid.dim} m={grid.m} trace={cov.trace:.16g} "
                 f"dropped={cov.dropped_tail:.16g} tol={cov.tol_eig:.16g} "
                 f"kse={cov.kernel_stderr:.16g}\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "eigenvalue"]
                        + [f"z{c}_{p}" for c in range(grid.dim)
                           for p in range(grid.size)])
        for k, (lam, z) in enumerate(zip(cov.eigenvalues, cov.eigenfields)):
            flat = z.physical().reshape(-1)
            writer.writerow([k, f"{lam:.16g}"]
                            + [f"{val:.16g}" for val in flat])


def spectrum_from_csv(path) -> CovOperator:
    with open(path) as fh:
        meta = dict(kv.split("=") for kv in fh.readline().lstrip("# ").split())
        rows = list(csv.reader(io.StringIO(fh.read())))
    grid = TorusGrid(int(meta["dim"]), int(meta["m"]))
    eigenvalues, fields = [], []
    for row in rows[1:]:
        eigenvalues.append(float(row[1]))
        vals = np.array(row[2:], dtype=float).reshape(
            (grid.dim,) + grid.shape)
        fields.append(TorusField(grid, 1, vals))
    eigenvalues = np.array(eigenvalues)
    # reconstruct the kernel from the kept spectrum (dropped tail reported)
    dim = grid.dim * grid.size
    kernel = np.zeros((dim, dim))
    for lam, z in zip(eigenvalues, fields):
        flat = z.physical().reshape(-1)
        kernel += lam * np.outer(flat, flat)
    return CovOperator(grid, kernel, eigenvalues, fields,
                       float(meta["trace"]), float(meta["dropped"]),
                       float(meta["tol"]), float(meta["kse"]))
