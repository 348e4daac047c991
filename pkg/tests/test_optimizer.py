import json

import numpy as np
import pytest

from ejmnet.bilocal import BilocalModel, analytic_boundary, eval_bilocal
from ejmnet.correlators import SHAPE, TripartiteDistribution
from ejmnet.errors import UsageError, ValidityError
from ejmnet.optimizer import (
    FitOptions,
    boundary_scan,
    critical_visibility_symmetricV,
    expression_value,
    fit_bilocal,
    max_B_given_Z,
    max_expression_over_bilocal,
    quantum_target,
)
from ejmnet.quantum import network_distribution

from conftest import random_model

FAST = FitOptions(restarts=4, max_iters=100)


def independent_residual(result, target) -> float:
    """Re-evaluate the returned model by explicit summation, bypassing the optimiser's maps."""
    m = BilocalModel.from_json(result.model.to_json())
    return eval_bilocal(m).linf(target)


def test_options_invariants():
    with pytest.raises(UsageError):
        FitOptions(restarts=0)
    with pytest.raises(UsageError):
        FitOptions(tol_residual=0)
    with pytest.raises(UsageError):
        FitOptions(parametrization="fourier")


def test_bell_state_case_is_feasible():
    target = quantum_target(np.pi / 2, 1, 1)
    res = fit_bilocal(target, FitOptions(restarts=4, tol_residual=1e-6))
    assert res.feasible and res.residual <= 1e-6
    assert independent_residual(res, target) == pytest.approx(res.residual, abs=1e-15)


def test_below_critical_visibility_is_feasible():
    target = quantum_target(0, 0.75, 0.75)
    res = fit_bilocal(target, FAST)
    assert res.feasible
    assert independent_residual(res, target) <= FAST.tol_residual


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_bilocal_targets_are_recovered(seed):
    target = eval_bilocal(random_model(np.random.default_rng(seed)))
    res = fit_bilocal(target, FitOptions(restarts=8, tol_residual=1e-6, seed=seed))
    assert res.feasible and res.residual < 1e-6


def test_far_above_critical_visibility_not_found():
    res = fit_bilocal(quantum_target(0, 1, 1), FAST)
    assert not res.feasible
    assert res.residual > 1e-3
    assert res.restarts_used >= FAST.restarts


def test_feasible_flag_matches_residual():
    res = fit_bilocal(quantum_target(0, 0.85, 0.85), FAST)
    assert res.feasible == (res.residual <= FAST.tol_residual)
    assert res.residual >= 0


def test_reproducible():
    target = quantum_target(0, 0.82, 0.8)
    a = fit_bilocal(target, FAST)
    b = fit_bilocal(target, FAST)
    assert a.to_json() == b.to_json()


def test_parallel_matches_serial():
    target = quantum_target(0, 0.9, 0.8)
    opts = FitOptions(restarts=4, max_iters=60, seed=5)
    serial = fit_bilocal(target, opts)
    parallel = fit_bilocal(target, FitOptions(restarts=4, max_iters=60, seed=5, workers=2))
    assert serial.to_json() == parallel.to_json()


def test_result_json_contains_model():
    res = fit_bilocal(quantum_target(np.pi / 2, 0.5, 0.5), FAST)
    data = json.loads(res.to_json())
    assert data["feasible"] is True
    BilocalModel.from_dict(data["model"]).validate()


def test_invalid_target_rejected():
    p = np.full(SHAPE, 1 / 16)
    p[0, 0, 0, 0, 0] = -0.1
    with pytest.raises(ValidityError):
        fit_bilocal(TripartiteDistribution(p), FAST)


def test_symmetric_parametrisation_fits_analytic_boundary():
    params, v2 = analytic_boundary(0.9)
    target = quantum_target(0, 0.9, v2 - 1e-4)
    res = fit_bilocal(target, FitOptions(restarts=4, parametrization="symmetric14"))
    assert res.feasible and res.parametrization == "symmetric14"


def test_feasibility_monotone_in_first_visibility():
    flags = [fit_bilocal(quantum_target(0, v1, 0.74), FAST).feasible for v1 in (0.7, 0.8, 0.9, 1.0)]
    # once infeasible, larger V1 must stay infeasible
    assert flags == sorted(flags, reverse=True)
    assert flags[0]


def test_always_feasible_flag():
    cv = critical_visibility_symmetricV(np.pi / 2, "pauli", FAST)
    assert cv.flag == "always feasible" and cv.value == 1.0


@pytest.mark.slow
def test_scan_at_full_visibility_matches_analytic_boundary():
    rows = boundary_scan(0, "pauli", [1.0], FitOptions(restarts=6))
    (row,) = rows
    assert row.flag == "ok"
    assert row.V2crit == pytest.approx(analytic_boundary(1.0)[1], abs=1e-3)
    assert row.analytic_V2 == pytest.approx(analytic_boundary(1.0)[1])


def test_scan_records_point_errors_in_row():
    rows = boundary_scan(np.pi / 2, "pauli", [0.5, 1.5], FAST)
    assert [r.V1 for r in rows] == [0.5, 1.5]
    assert rows[0].flag == "always feasible"
    assert rows[1].flag.startswith("error") and not rows[1].feasible


def test_unknown_expression():
    with pytest.raises(UsageError):
        max_expression_over_bilocal("S-T", FAST)


def test_linear_maxima_under_zero_z():
    for expr in ("S", "-S+T"):
        res = max_expression_over_bilocal(expr, FitOptions(restarts=3), zero_Z=True)
        assert res.value == pytest.approx(3.0, abs=0.01)
        assert res.Z <= 1e-6
        assert expression_value(expr, eval_bilocal(res.model)) == pytest.approx(res.value)


def test_z_capped_maximum_stays_under_envelope():
    res = max_B_given_Z(0.1, FitOptions(restarts=3))
    assert res.value <= 3.5
    assert res.Z <= 0.1 + 1e-6


def test_symmetric_zero_z_maximum():
    res = max_expression_over_bilocal("S/3-T", FitOptions(restarts=3, parametrization="symmetric14"), zero_Z=True)
    assert 2.99 <= res.value <= 3 + 1e-9


def test_quantum_target_presets_agree():
    a = quantum_target(0.4, 0.7, 0.6, "pauli")
    b = network_distribution(0.4, 0.7, 0.6)
    assert a.linf(b) < 1e-14
