import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaoanoise.engine import AngleSchedule, NoiseModel
from qaoanoise.errors import ValidationError
from qaoanoise.ising import IsingInstance, ground_energy, random_instance
from qaoanoise.optimize import finite_difference_gradient, objective, optimize_angles

import oracles

FIELD = IsingInstance(1, [(0, 1.0)])


def dense_cost(inst, x, d):
    diag = oracles.instance_diagonal(inst)
    psi = oracles.ideal_state(diag, x[:d], x[d:], inst.n_qubits)
    return float(np.abs(psi) ** 2 @ diag)


def test_objective_at_zero_angles():
    f = objective(FIELD, None, 1)
    assert f(AngleSchedule([0.0], [0.0])) == pytest.approx(0.0, abs=1e-15)
    assert f([0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_objective_matches_dense_oracle():
    inst = random_instance(4, "uniform", 1)
    x = np.array([0.3, 1.2, 0.8, 2.0])
    assert objective(inst, None, 2)(x) == pytest.approx(dense_cost(inst, x, 2), abs=1e-12)


def test_noisy_objective_matches_dense_oracle():
    inst = random_instance(3, "pm1", 2)
    x = np.array([0.5, 0.9])
    diag = oracles.instance_diagonal(inst)
    rho = oracles.noisy_density(diag, x[:1], x[1:], 3, oracles.PAULIS["dephasing"], 0.2)
    assert objective(inst, NoiseModel.dephasing(0.2), 1)(x) == pytest.approx(float(np.diag(rho).real @ diag))


def test_objective_rejects_wrong_length():
    with pytest.raises(ValidationError):
        objective(FIELD, None, 2)([0.1, 0.2])


def test_gradient_at_stationary_point_is_zero():
    # <Z> after |+> is zero for beta = 0 and flat in gamma
    grad = finite_difference_gradient(objective(FIELD, None, 1), [0.0, 0.0])
    np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_gradient_matches_fourth_order_stencil():
    inst = random_instance(4, "uniform", 3)
    f = objective(inst, None, 2)
    x = np.array([0.4, 1.3, 0.7, 2.2])
    h = 1e-3
    ref = np.empty(4)
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        ref[i] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    np.testing.assert_allclose(finite_difference_gradient(f, x), ref, atol=1e-7)
    with pytest.raises(ValidationError):
        finite_difference_gradient(f, x, step=0.0)


def test_single_qubit_reaches_minus_one():
    report = optimize_angles(FIELD, 1, restarts=5, seed=0)
    assert report.best_cost == pytest.approx(-1.0, abs=1e-6)
    assert dense_cost(FIELD, report.best_angles.as_vector(), 1) == pytest.approx(-1.0, abs=1e-6)


def test_single_qubit_optimum_matches_grid_search():
    grid = np.linspace(0, 2 * np.pi, 181)
    best = min(dense_cost(FIELD, np.array([g, b]), 1) for g in grid for b in grid[:91])
    report = optimize_angles(FIELD, 1, restarts=3, seed=1)
    assert report.best_cost <= best + 1e-9


def test_best_is_minimum_of_restarts():
    report = optimize_angles(random_instance(4, "pm1", 0), 2, restarts=6, seed=2)
    assert report.best_cost == min(report.restart_costs)
    assert report.best_restart == int(np.argmin(report.restart_costs))
    assert len(report.converged) == 6
    assert report.evaluations > 0


def test_optimized_cost_is_non_positive_and_above_ground():
    inst = random_instance(5, "pm1", 1)
    report = optimize_angles(inst, 1, restarts=4, seed=0)
    assert ground_energy(inst)[0] - 1e-12 <= report.best_cost <= 0.0


def test_optimization_is_deterministic_and_jobs_independent():
    inst = random_instance(4, "uniform", 4)
    a = optimize_angles(inst, 2, restarts=4, seed=7, jobs=1)
    b = optimize_angles(inst, 2, restarts=4, seed=7, jobs=3)
    assert a.best_angles == b.best_angles
    assert a.restart_costs == b.restart_costs


def test_more_restarts_never_hurt():
    inst = random_instance(5, "pm1", 3)
    few = optimize_angles(inst, 2, restarts=2, seed=0)
    many = optimize_angles(inst, 2, restarts=6, seed=0)
    # the first restarts coincide, so the best can only improve
    assert many.restart_costs[:2] == few.restart_costs
    assert many.best_cost <= few.best_cost


def test_noiseless_optimum_beats_noisy_objective():
    inst = random_instance(4, "pm1", 2)
    clean = optimize_angles(inst, 1, restarts=4, seed=0)
    noisy = optimize_angles(inst, 1, noise=NoiseModel.depolarizing(0.2), restarts=4, seed=0)
    assert clean.best_cost <= noisy.best_cost + 1e-9


def test_angles_lie_in_canonical_range():
    for inst in (random_instance(4, "pm1", 5), random_instance(3, "uniform", 5)):
        report = optimize_angles(inst, 2, restarts=3, seed=3)
        x = report.best_angles.as_vector()
        assert np.all(x >= 0) and np.all(x <= 2 * np.pi)


def test_gamma_is_periodic_for_integer_instances():
    inst = random_instance(4, "pm1", 6)
    f = objective(inst, None, 1)
    assert f([0.7 + 2 * math.pi, 0.3]) == pytest.approx(f([0.7, 0.3]), abs=1e-12)


def test_report_serialises(tmp_path):
    report = optimize_angles(FIELD, 1, restarts=2, seed=0)
    data = json.loads(report.save(tmp_path / "r.json").read_text())
    assert AngleSchedule.from_dict(data["angles"]) == report.best_angles
    assert data["depth"] == 1


def test_invalid_arguments():
    with pytest.raises(ValidationError):
        optimize_angles(FIELD, 1, restarts=0)
    with pytest.raises(ValidationError):
        objective(FIELD, None, 0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_beta_has_period_pi(g, b):
    f = objective(random_instance(3, "pm1", 0), None, 1)
    assert f([g, b + math.pi]) == pytest.approx(f([g, b]), abs=1e-10)
