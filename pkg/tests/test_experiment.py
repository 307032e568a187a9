import numpy as np
import pytest

from kinlim.coefficients import compute_coefficients, compute_cov_operator
from kinlim.config import ExperimentConfig
from kinlim.equilibrium import FP, LB
from kinlim.experiment import (_monotone_with_slack, build_model,
                               check_coefficients_closed_form,
                               check_enhancement, coefficients_stage,
                               default_test_functions, load_coefficient_stage,
                               validation_suite)
from kinlim.forcing import two_point_renewal
from kinlim.torus import TorusGrid


def test_monotone_with_slack():
    gaps = np.array([[0.5], [0.3], [0.2]])
    ses = np.array([[0.01], [0.01], [0.01]])
    assert _monotone_with_slack(gaps, ses)
    gaps_bad = np.array([[0.2], [0.5], [0.2]])
    assert not _monotone_with_slack(gaps_bad, ses)
    # increase within one combined standard error is tolerated
    gaps_noisy = np.array([[0.20], [0.21], [0.19]])
    ses_wide = np.array([[0.01], [0.01], [0.01]])
    assert _monotone_with_slack(gaps_noisy, ses_wide)


def test_mislabel_detection():
    grid = TorusGrid(1, 32)
    model = two_point_renewal(grid, 0.5)
    coeffs = compute_coefficients(model, FP, grid, n_mc=120, seed=1)
    ok = check_coefficients_closed_form(coeffs, 0.5, 1)
    assert ok.passed
    coeffs.collision = LB           # deliberate mislabel
    coeffs.collision_factor = 2.0
    bad = check_coefficients_closed_form(coeffs, 0.5, 1)
    assert not bad.passed
    cov = compute_cov_operator(model, grid, n_mc=120, seed=2)
    assert not check_enhancement(coeffs, cov).passed


def test_default_test_functions_shapes():
    grid = TorusGrid(1, 32)
    xi = default_test_functions(grid)
    names = [n for n, _ in xi]
    assert names == ["one", "cos1", "sin1", "cos2"]
    for _, f in xi:
        assert f.rank == 0 and f.grid == grid


def test_coefficient_stage_files_and_reload(tmp_path):
    cfg = ExperimentConfig(grid_m=32, n_mc=100, out_dir=str(tmp_path),
                           seed=5)
    coeffs, cov, report, trace_ok = coefficients_stage(cfg)
    assert report.passed and trace_ok
    loaded_c, loaded_k = load_coefficient_stage(str(tmp_path))
    assert np.max(np.abs(loaded_c.diffusion.values
                         - coeffs.diffusion.values)) < 1e-12
    assert np.allclose(loaded_k.eigenvalues, cov.eigenvalues)


def test_validation_suite_mini_passes():
    cfg = ExperimentConfig(grid_m=32, n_mc=100, n_paths=1500,
                           n_particles=2000, seed=9)
    report = validation_suite(cfg)
    for line in report.lines():
        print(line)
    assert report.passed
    assert any("equilibration diagnostic" in d for d in report.diagnostics)


def test_build_model_kinds():
    cfg = ExperimentConfig(grid_m=32)
    m = build_model(cfg)
    assert m.kind == "renewal"
    cfg2 = ExperimentConfig(grid_m=32, model_kind="ou")
    m2 = build_model(cfg2)
    assert m2.kind == "ou"
