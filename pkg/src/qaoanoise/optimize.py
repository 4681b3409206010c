"""Multi-restart quasi-Newton optimisation of QAOA angles."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .engine import AngleSchedule, NoiseModel, _ideal_state, _noisy_matrix, MAX_DENSITY_QUBITS
from .errors import ResourceLimitError, ValidationError
from .ising import IsingInstance, diagonal

TWO_PI = 2.0 * math.pi
FD_STEP = 1e-6
GTOL = 1e-8
MAX_ITER = 500
DEFAULT_RESTARTS = 20


@dataclass
class OptimizationReport:
    best_angles: AngleSchedule
    best_cost: float
    restart_costs: list
    evaluations: int
    converged: list = field(default_factory=list)

    @property
    def best_restart(self) -> int:
        return int(np.argmin(self.restart_costs))

    def to_dict(self) -> dict:
        return {
            "depth": self.best_angles.depth,
            "angles": self.best_angles.to_dict(),
            "best_cost": self.best_cost,
            "restart_costs": list(self.restart_costs),
            "converged": list(self.converged),
            "evaluations": self.evaluations,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def objective(instance: IsingInstance, noise: NoiseModel | None, d: int):
    """Expected cost as a function of the angles.

    The returned callable accepts an :class:`AngleSchedule` or a flat vector
    ``[gammas..., betas...]`` of length ``2d``. Noiseless objectives use the
    state-vector engine, noisy ones the exact density-matrix engine.
    """
    if d < 1:
        raise ValidationError("depth must be >= 1")
    n = instance.n_qubits
    diag = diagonal(instance)
    if noise is not None and n > MAX_DENSITY_QUBITS:
        raise ResourceLimitError(f"noisy objective needs the density-matrix engine (n <= {MAX_DENSITY_QUBITS})")

    def as_schedule(angles):
        if isinstance(angles, AngleSchedule):
            sched = angles
        else:
            sched = AngleSchedule.from_vector(angles)
        if sched.depth != d:
            raise ValidationError(f"expected {2 * d} angles, got depth {sched.depth}")
        return sched

    if noise is None:
        def f(angles):
            psi = _ideal_state(diag, as_schedule(angles), n)
            return float(np.dot(psi.real**2 + psi.imag**2, diag))
    else:
        def f(angles):
            rho = _noisy_matrix(diag, as_schedule(angles), noise, n)
            return float(np.dot(np.diagonal(rho).real, diag))
    return f


def finite_difference_gradient(f, angles, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of ``f`` at a flat angle vector."""
    if step <= 0:
        raise ValidationError("finite-difference step must be positive")
    x = np.asarray(angles.as_vector() if isinstance(angles, AngleSchedule) else angles, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return grad


def _wrap(x, d, gamma_periodic):
    x = np.array(x, dtype=float)
    # beta has period pi (exp(-i pi X) = -I per qubit), so mod 2pi is always exact
    lo = 0 if gamma_periodic else d
    part = np.mod(x[lo:], TWO_PI)
    part[part >= TWO_PI] = 0.0  # np.mod(-tiny, 2pi) rounds up to 2pi
    x[lo:] = part
    return x


def optimize_angles(
    instance: IsingInstance,
    d: int,
    noise: NoiseModel | None = None,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    jobs: int = 1,
) -> OptimizationReport:
    """Minimise the expected cost over all ``2d`` angles jointly.

    Restart ``r`` starts from angles drawn uniformly in ``[0, 2pi)`` with
    ``default_rng([seed, r])`` and runs BFGS on central finite-difference
    gradients. Returned angles lie in ``[0, 2pi)``. When the cost diagonal is
    not integer-valued, ``gamma`` is not ``2pi``-periodic and the search is
    box-constrained to ``[0, 2pi]`` instead of wrapped.
    """
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    f = objective(instance, noise, d)
    gamma_periodic = instance.is_integer_valued
    bounds = None if gamma_periodic else [(0.0, TWO_PI)] * d + [(None, None)] * d

    def run(r):
        calls = [0]

        def counted(x):
            calls[0] += 1
            return f(x)

        x0 = np.random.default_rng([seed, r]).uniform(0.0, TWO_PI, size=2 * d)
        jac = lambda x: finite_difference_gradient(counted, x, FD_STEP)
        if bounds is None:
            res = minimize(counted, x0, jac=jac, method="BFGS", options={"gtol": GTOL, "maxiter": MAX_ITER})
        else:
            res = minimize(
                counted, x0, jac=jac, method="L-BFGS-B", bounds=bounds,
                options={"gtol": GTOL, "maxiter": MAX_ITER},
            )
        x = _wrap(res.x, d, gamma_periodic)
        return x, f(x), bool(res.success), calls[0] + 1

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(restarts)))
    else:
        results = [run(r) for r in range(restarts)]
    costs = [c for _, c, _, _ in results]
    best = int(np.argmin(costs))  # first index wins ties
    return OptimizationReport(
        best_angles=AngleSchedule.from_vector(results[best][0]),
        best_cost=costs[best],
        restart_costs=costs,
        evaluations=sum(e for *_, e in results),
        converged=[ok for _, _, ok, _ in results],
    )
