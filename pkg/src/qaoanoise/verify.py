"""Cross-checks between the three engines, runnable from the CLI.

Every check goes through the public engine functions, so a defect injected
into one of them (e.g. a broken channel) shows up as a named failure rather
than a crash.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import decomposition, engine
from .closedform import haar_cost
from .engine import AngleSchedule, DensityMatrix, NoiseModel
from .ising import IsingInstance, diagonal, random_instance

LEVELS = ("fast", "full")


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float | None = None
    tolerance: float | None = None
    detail: str = ""
    seconds: float = 0.0


def _random_angles(rng, d):
    return AngleSchedule(rng.uniform(0, 2 * np.pi, d), rng.uniform(0, 2 * np.pi, d))


def _random_density(rng, n):
    a = rng.normal(size=(1 << n, 1 << n)) + 1j * rng.normal(size=(1 << n, 1 << n))
    rho = a @ a.conj().T
    return DensityMatrix(n, rho / np.trace(rho))


def check_single_qubit_closed_forms():
    inst = IsingInstance(1, [(0, 1.0)])
    plus = AngleSchedule([0.0], [0.0])
    flip = AngleSchedule([math.pi / 4], [math.pi / 4])
    c_ideal = engine.expected_cost_pure(engine.qaoa_state(inst, flip), diagonal(inst))
    err = 0.0
    for p in np.linspace(0.0, 1.0, 11):
        noise = NoiseModel.depolarizing(p)
        rho = engine.noisy_state(inst, plus, noise)
        err = max(err, abs(engine.fidelity(rho, engine.plus_state(1)) - (1 - p / 2)))
        rho = engine.noisy_state(inst, flip, noise)
        err = max(err, abs(engine.expected_cost_dm(rho, diagonal(inst)) - (1 - p) * c_ideal))
    return err, 1e-12


def check_depolarizing_fixed_point():
    err = 0.0
    for n in (1, 3):
        mixed = DensityMatrix.maximally_mixed(n)
        for p in (0.2, 0.7, 1.0):
            for q in range(n):
                out = engine.apply_local_channel(mixed, NoiseModel.depolarizing(p), q)
                err = max(err, float(np.max(np.abs(out.matrix - mixed.matrix))))
    return err, 1e-12


def check_channel_trace_preservation():
    rng = np.random.default_rng(5)
    err = 0.0
    for kind in ("depolarizing", "dephasing"):
        rho = _random_density(rng, 3)
        for q in range(3):
            out = engine.apply_local_channel(rho, NoiseModel(kind, 0.37), q)
            err = max(err, abs(np.trace(out.matrix) - 1.0), float(np.max(np.abs(out.matrix - out.matrix.conj().T))))
    return err, 1e-12


def _cross_engine(cases):
    err = 0.0
    for inst, angles in cases:
        for kind in ("depolarizing", "dephasing"):
            for p in (0.1, 0.5, 0.9):
                noise = NoiseModel(kind, p)
                a = engine.noisy_state(inst, angles, noise)
                b = decomposition.assemble_density_matrix(inst, angles, noise)
                err = max(err, engine.trace_distance(a, b))
    return err, 1e-10


def _reconstruction(inst, angles):
    f, c = decomposition.m_level_curves(inst, angles, NoiseModel.depolarizing(0.0), budget_per_m=10**9)
    diag = diagonal(inst)
    ideal = engine.qaoa_state(inst, angles)
    err = 0.0
    for p in (0.1, 0.5, 0.9):
        rho = engine.noisy_state(inst, angles, NoiseModel.depolarizing(p))
        err = max(err, abs(decomposition.reconstruct_fidelity(f, p) - engine.fidelity(rho, ideal)))
        err = max(err, abs(decomposition.reconstruct_cost(c, p) - engine.expected_cost_dm(rho, diag)))
    return err, 1e-10


def check_monte_carlo_consistency():
    inst = random_instance(3, "uniform", 2)
    angles = _random_angles(np.random.default_rng(3), 2)
    noise = NoiseModel.depolarizing(0.2)
    est = engine.monte_carlo(inst, angles, noise, trials=4000, seed=9)
    rho = engine.noisy_state(inst, angles, noise)
    z_cost = abs(est.cost_mean - engine.expected_cost_dm(rho, diagonal(inst))) / est.cost_stderr
    z_fid = abs(est.fidelity_mean - engine.fidelity(rho, engine.qaoa_state(inst, angles))) / est.fidelity_stderr
    return max(z_cost, z_fid), 5.0


def check_haar_limits():
    err = 0.0
    for seed in range(3):
        inst = random_instance(4, "pm1", seed)
        angles = _random_angles(np.random.default_rng(seed), 2)
        rho = engine.noisy_state(inst, angles, NoiseModel.depolarizing(1.0))
        err = max(err, abs(engine.expected_cost_dm(rho, diagonal(inst)) - haar_cost(diagonal(inst))))
        err = max(err, abs(engine.fidelity(rho, engine.qaoa_state(inst, angles)) - 2.0**-4))
    return err, 1e-10


def _fast_checks():
    rng = np.random.default_rng(11)
    small = [(random_instance(n, "uniform", s), _random_angles(rng, d)) for s, (n, d) in enumerate([(2, 2), (3, 2), (4, 1)])]
    return [
        ("single_qubit_closed_forms", check_single_qubit_closed_forms),
        ("depolarizing_fixed_point", check_depolarizing_fixed_point),
        ("channel_trace_preservation", check_channel_trace_preservation),
        ("cross_engine_equivalence", lambda: _cross_engine(small)),
        ("binomial_reconstruction", lambda: _reconstruction(random_instance(4, "pm1", 1), _random_angles(rng, 1))),
        ("monte_carlo_consistency", check_monte_carlo_consistency),
        ("haar_limits", check_haar_limits),
    ]


def _full_checks():
    rng = np.random.default_rng(23)
    cases = [(random_instance(4, "pm1", 4), _random_angles(rng, 2)), (random_instance(4, "uniform", 5), _random_angles(rng, 2))]
    return [
        ("cross_engine_equivalence_n4_d2", lambda: _cross_engine(cases)),
        ("binomial_reconstruction_n8", lambda: _reconstruction(random_instance(8, "pm1", 0), _random_angles(rng, 1))),
    ]


def run_checks(level: str = "fast") -> dict:
    """Run the suite; returns a JSON-ready report with one entry per check."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    checks = _fast_checks() + (_full_checks() if level == "full" else [])
    results = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            err, tol = fn()
            ok = bool(np.isfinite(err) and err <= tol)
            res = CheckResult(name, ok, float(err), tol, "" if ok else f"error {err:.3e} exceeds {tol:.0e}")
        except Exception as exc:  # a broken engine should be reported, not crash the run
            res = CheckResult(name, False, detail=f"{type(exc).__name__}: {exc}")
        res.seconds = round(time.perf_counter() - t0, 3)
        results.append(res)
    return {
        "level": level,
        "passed": all(r.passed for r in results),
        "failed": [r.name for r in results if not r.passed],
        "checks": [asdict(r) for r in results],
    }
