"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines appear in
the "acceptance criteria" section at the end of the pytest output.
"""

import numpy as np
import pytest

from qaoanoise import tradeoff
from qaoanoise.closedform import (
    CostFit,
    FidelityFit,
    delta_exponent,
    eta_exponent,
    fit_cost,
    fit_fidelity,
    model_cost,
    model_fidelity,
)
from qaoanoise.decomposition import assemble_density_matrix, m_level_curves, reconstruct_cost, reconstruct_fidelity
from qaoanoise.engine import (
    AngleSchedule,
    NoiseModel,
    expected_cost_dm,
    expected_cost_pure,
    fidelity,
    monte_carlo,
    noisy_state,
    plus_state,
    qaoa_state,
)
from qaoanoise.ising import IsingInstance, diagonal, ground_energy, random_instance
from qaoanoise.optimize import optimize_angles

import oracles
from conftest import TRADEOFF_DEPTHS, TRADEOFF_SEED

pytestmark = pytest.mark.acceptance

FIELD = IsingInstance(1, [(0, 1.0)])


def random_schedule(seed, d):
    rng = np.random.default_rng(seed)
    return AngleSchedule(rng.uniform(0, 2 * np.pi, d), rng.uniform(0, 2 * np.pi, d))


def test_single_qubit_closed_forms(acceptance_report):
    angles = AngleSchedule([0.4], [1.1])
    c_ideal = expected_cost_pure(qaoa_state(FIELD, angles), diagonal(FIELD))
    err = 0.0
    for p in np.round(np.linspace(0, 1, 11), 12):
        noise = NoiseModel.depolarizing(p)
        rho_plus = noisy_state(FIELD, AngleSchedule([0.0], [0.0]), noise)
        err = max(err, abs(fidelity(rho_plus, plus_state(1)) - (1 - p / 2)))
        rho = noisy_state(FIELD, angles, noise)
        err = max(err, abs(expected_cost_dm(rho, diagonal(FIELD)) - (1 - p) * c_ideal))
    ok = err <= 1e-12
    acceptance_report(1, "single-qubit fidelity and cost closed forms", ok, f"max error {err:.1e}")
    assert ok


def test_cross_engine_equivalence(acceptance_report):
    cases = [(2, 2, "uniform", 0), (3, 1, "pm1", 1), (3, 2, "uniform", 2), (4, 1, "ring", 3), (4, 2, "pm1", 4)]
    worst = 0.0
    for n, d, ensemble, seed in cases:
        inst = random_instance(n, ensemble, seed)
        angles = random_schedule(100 + seed, d)
        for kind in ("depolarizing", "dephasing"):
            for p in (0.1, 0.5, 0.9):
                noise = NoiseModel(kind, p)
                a = noisy_state(inst, angles, noise).matrix
                b = assemble_density_matrix(inst, angles, noise).matrix
                worst = max(worst, oracles.trace_norm_distance(a, b))
    ok = worst <= 1e-10
    acceptance_report(2, "density-matrix engine equals pattern sum", ok, f"max trace distance {worst:.1e}")
    assert ok


def test_binomial_reconstruction_eight_qubits(acceptance_report):
    inst = random_instance(8, "pm1", 0)
    angles = random_schedule(8, 1)
    f, c = m_level_curves(inst, angles, NoiseModel.depolarizing(0.0), budget_per_m=10**6)
    assert f.is_exact and c.is_exact
    assert int(f.samples.sum()) == 5**8
    ideal = qaoa_state(inst, angles)
    err = 0.0
    for p in (0.1, 0.3, 0.5, 0.9):
        rho = noisy_state(inst, angles, NoiseModel.depolarizing(p))
        err = max(err, abs(reconstruct_fidelity(f, p) - fidelity(rho, ideal)))
        err = max(err, abs(reconstruct_cost(c, p) - expected_cost_dm(rho, diagonal(inst))))
    ok = err <= 1e-10
    acceptance_report(3, "binomial reconstruction at N=8", ok, f"max error {err:.1e}")
    assert ok


def test_published_exponents(acceptance_report):
    delta = delta_exponent(FidelityFit(0.9958, 2.71, 0.0))
    eta = eta_exponent(CostFit(1.04, -7.41, 1.32, 0.0))
    ok = abs(delta - 0.63) <= 0.005 and abs(eta - 0.28) <= 0.005
    acceptance_report(4, "delta and eta from published fit parameters", ok, f"delta={delta:.4f}, eta={eta:.4f}")
    assert ok


def test_fully_depolarized_limits(acceptance_report):
    instances = [
        random_instance(3, "pm1", 0),
        random_instance(5, "uniform", 1),
        random_instance(6, "ring", 2),
        IsingInstance(4, [(0, 0.7), (2, -1.3)], [(0, 3, 0.4)], [((1, 2, 3), 0.9)]),
    ]
    err = 0.0
    for k, inst in enumerate(instances):
        for d in (1, 2):
            angles = random_schedule(k, d)
            rho = noisy_state(inst, angles, NoiseModel.depolarizing(1.0))
            err = max(err, abs(expected_cost_dm(rho, diagonal(inst))))
            err = max(err, abs(fidelity(rho, qaoa_state(inst, angles)) - 2.0**-inst.n_qubits))
    ok = err <= 1e-10
    acceptance_report(5, "p=1 gives zero cost and 2^-N fidelity", ok, f"max error {err:.1e}")
    assert ok


@pytest.mark.slow
def test_closed_form_quality(acceptance_report):
    ps = np.linspace(0, 1, 51)
    passed, details = 0, []
    for seed in range(10):
        inst = random_instance(8, "pm1", seed)
        e0 = ground_energy(inst)[0]
        angles = optimize_angles(inst, 1, restarts=20, seed=0).best_angles
        f, c = m_level_curves(inst, angles, NoiseModel.depolarizing(0.0), budget_per_m=10**6)
        ff, cf = fit_fidelity(f), fit_cost(c)
        ideal = qaoa_state(inst, angles)
        fid_dev = cost_dev = 0.0
        for p in ps:
            rho = noisy_state(inst, angles, NoiseModel.depolarizing(p))
            fid_dev = max(fid_dev, abs(model_fidelity(ff, 8, p) - fidelity(rho, ideal)))
            cost_dev = max(cost_dev, abs(model_cost(cf, 8, p) - expected_cost_dm(rho, diagonal(inst))))
        good = fid_dev <= 0.03 and cost_dev <= 0.05 * abs(e0)
        passed += good
        details.append(f"{fid_dev:.3f}/{cost_dev / abs(e0):.3f}")
    ok = passed >= 8
    acceptance_report(6, "closed-form models track exact curves", ok, f"{passed}/10 instances within bounds")
    assert ok, details


def test_fit_recovery(acceptance_report):
    rng = np.random.default_rng(2024)
    ms = np.arange(13)
    worst = 0.0
    for _ in range(10):
        alpha, kappa = rng.uniform(0.5, 1.0), rng.uniform(1.3, 4.0)
        fit = fit_fidelity(ms, FidelityFit(alpha, kappa, 0.0).f_model(ms))
        worst = max(worst, abs(fit.alpha - alpha), abs(fit.kappa - kappa))
    for _ in range(10):
        alpha, alpha_tilde, chi = rng.uniform(-1, 1), rng.uniform(-8, -2), rng.uniform(1.2, 3.0)
        fit = fit_cost(ms, CostFit(alpha, alpha_tilde, chi, 0.0).c_model(ms))
        worst = max(worst, abs(fit.alpha - alpha), abs(fit.alpha_tilde - alpha_tilde), abs(fit.chi - chi))
    ok = worst <= 1e-6
    acceptance_report(7, "fits recover synthetic parameters", ok, f"max parameter error {worst:.1e}")
    assert ok


def test_monte_carlo_consistency(acceptance_report):
    inst = random_instance(6, "pm1", 0)
    angles = random_schedule(6, 2)
    noise = NoiseModel.depolarizing(0.1)
    rho = noisy_state(inst, angles, noise)
    exact_c = expected_cost_dm(rho, diagonal(inst))
    exact_f = fidelity(rho, qaoa_state(inst, angles))
    small = monte_carlo(inst, angles, noise, trials=20_000, seed=0)
    large = monte_carlo(inst, angles, noise, trials=80_000, seed=1)
    z_c = abs(small.cost_mean - exact_c) / small.cost_stderr
    z_f = abs(small.fidelity_mean - exact_f) / small.fidelity_stderr
    ratio_c = large.cost_stderr / small.cost_stderr
    ratio_f = large.fidelity_stderr / small.fidelity_stderr
    ok = z_c <= 4 and z_f <= 4 and 0.4 <= ratio_c <= 0.6 and 0.4 <= ratio_f <= 0.6
    acceptance_report(
        8, "trajectory estimates agree with exact values", ok,
        f"z={z_c:.2f}/{z_f:.2f}, stderr ratio {ratio_c:.3f}/{ratio_f:.3f}",
    )
    assert ok


@pytest.mark.slow
def test_optimizer_sanity(acceptance_report):
    grid = np.linspace(0, 2 * np.pi, 121)
    diag = oracles.instance_diagonal(FIELD)
    grid_best = min(
        float(np.abs(oracles.ideal_state(diag, [g], [b], 1)) ** 2 @ diag) for g in grid for b in grid[:61]
    )
    single = optimize_angles(FIELD, 1, restarts=20, seed=0).best_cost
    inst = random_instance(6, "pm1", TRADEOFF_SEED)
    e0 = ground_energy(inst)[0]
    ratios = [optimize_angles(inst, 4, restarts=20, seed=s).best_cost / e0 for s in range(5)]
    hits = sum(r >= 0.98 for r in ratios)
    ok = abs(single + 1) <= 1e-6 and single <= grid_best + 1e-9 and hits >= 4
    acceptance_report(
        9, "optimizer reaches known optima", ok, f"n=1 cost {single:.9f}, N=6 d=4 hits {hits}/5"
    )
    assert ok, ratios


@pytest.mark.slow
def test_depth_noise_tradeoff(tradeoff_setup, acceptance_report):
    inst, _, table = tradeoff_setup
    e0 = ground_energy(inst)[0]
    at0 = [table.lookup(d, 0.0).cost_exact for d in TRADEOFF_DEPTHS]
    at_half = [table.lookup(d, 0.5).cost_exact for d in TRADEOFF_DEPTHS]
    deeper_better = all(b <= a + 0.01 * abs(e0) for a, b in zip(at0, at0[1:]))
    shallower_better = all(b >= a for a, b in zip(at_half, at_half[1:]))
    crossings = tradeoff.find_crossings(table, 1, 5)
    ok = deeper_better and shallower_better and len(crossings) >= 1
    acceptance_report(
        10, "deeper wins at p=0, shallower at p=0.5, depths 1 and 5 cross", ok,
        f"p*(1,5)={crossings[0]:.4f}" if crossings else "no crossing",
    )
    assert ok, (at0, at_half)
