"""Depth versus noise-rate trade-off.

Evaluates the exact noisy cost and fidelity on a ``(depth, p)`` grid,
optionally next to the closed-form model predictions, locates the noise
rates at which two depths swap order, and recommends a depth per ``p``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import closedform
from .engine import AngleSchedule, NoiseModel, _ideal_state, _noisy_matrix, MAX_DENSITY_QUBITS
from .errors import ResourceLimitError, ValidationError
from .ising import IsingInstance, diagonal

SWEEP_COLUMNS = ("d", "p", "cost_exact", "fidelity_exact", "cost_model", "fidelity_model", "angle_source")


def default_p_grid() -> list[float]:
    """51 uniform points on [0, 1] merged with a fine prefix 0, 0.005, ..., 0.05."""
    coarse = np.linspace(0.0, 1.0, 51)
    fine = np.linspace(0.0, 0.05, 11)
    return sorted({round(float(x), 12) for x in np.concatenate([coarse, fine])})


def parse_p_grid(spec: str) -> list[float]:
    """``"a:b:steps"`` -> ``steps`` evenly spaced points, or a comma list."""
    try:
        if ":" in spec:
            a, b, steps = spec.split(":")
            pts = np.linspace(float(a), float(b), int(steps))
        else:
            pts = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse p grid {spec!r}") from None
    pts = [round(float(x), 12) for x in pts]
    if not pts or any(not 0.0 <= x <= 1.0 for x in pts):
        raise ValidationError(f"p grid {spec!r} must be non-empty and inside [0, 1]")
    return sorted(set(pts))


@dataclass(frozen=True)
class SweepRow:
    d: int
    p: float
    cost_exact: float
    fidelity_exact: float
    cost_model: float | None = None
    fidelity_model: float | None = None
    angle_source: str = "optimized_p0"


@dataclass
class SweepTable:
    rows: list
    n_qubits: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        keys = [(r.d, r.p) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValidationError("sweep rows must be unique in (d, p)")
        for r in self.rows:
            if not math.isfinite(r.cost_exact):
                raise ValidationError(f"non-finite cost at d={r.d}, p={r.p}")
            if not -1e-9 <= r.fidelity_exact <= 1 + 1e-9:
                raise ValidationError(f"fidelity {r.fidelity_exact} out of range at d={r.d}, p={r.p}")

    @property
    def depths(self) -> list[int]:
        return sorted({r.d for r in self.rows})

    def curve(self, d: int, column: str = "cost_exact") -> tuple[np.ndarray, np.ndarray]:
        rows = sorted((r for r in self.rows if r.d == d), key=lambda r: r.p)
        return np.array([r.p for r in rows]), np.array([getattr(r, column) for r in rows], dtype=float)

    def lookup(self, d: int, p: float) -> SweepRow:
        for r in self.rows:
            if r.d == d and abs(r.p - p) < 1e-12:
                return r
        raise KeyError((d, p))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for r in sorted(self.rows, key=lambda r: (r.d, r.p)):
                w.writerow([
                    r.d, repr(r.p), repr(r.cost_exact), repr(r.fidelity_exact),
                    "" if r.cost_model is None else repr(r.cost_model),
                    "" if r.fidelity_model is None else repr(r.fidelity_model),
                    r.angle_source,
                ])
        return path

    @classmethod
    def from_csv(cls, path, n_qubits: int) -> "SweepTable":
        opt = lambda s: None if s == "" else float(s)
        with Path(path).open(newline="") as fh:
            rows = [
                SweepRow(int(r["d"]), float(r["p"]), float(r["cost_exact"]), float(r["fidelity_exact"]),
                         opt(r["cost_model"]), opt(r["fidelity_model"]), r["angle_source"])
                for r in csv.DictReader(fh)
            ]
        return cls(rows, n_qubits)


def sweep(
    instance: IsingInstance,
    depths,
    p_grid,
    noise_kind: str,
    angles: dict,
    cost_fits: dict | None = None,
    fidelity_fits: dict | None = None,
    angle_source: str = "optimized_p0",
    jobs: int = 1,
) -> SweepTable:
    """Exact noisy cost/fidelity for every ``(d, p)`` with optional model columns.

    ``angles`` maps each depth to its :class:`AngleSchedule`; fidelity is taken
    against the ideal output of the same schedule. Model columns use
    ``n_slots = N*d``.
    """
    n = instance.n_qubits
    if n > MAX_DENSITY_QUBITS:
        raise ResourceLimitError(f"sweep uses the density-matrix engine (n <= {MAX_DENSITY_QUBITS})")
    depths = sorted(set(int(d) for d in depths))
    missing = [d for d in depths if d not in angles]
    if missing:
        raise ValidationError(f"no angles supplied for depths {missing}")
    for d in depths:
        if angles[d].depth != d:
            raise ValidationError(f"angles for depth {d} have depth {angles[d].depth}")
    p_grid = sorted(set(float(p) for p in p_grid))
    if any(not 0.0 <= p <= 1.0 for p in p_grid):
        raise ValidationError("p grid must lie in [0, 1]")
    cost_fits = cost_fits or {}
    fidelity_fits = fidelity_fits or {}
    diag = diagonal(instance)
    ideal = {d: _ideal_state(diag, angles[d], n) for d in depths}

    def evaluate(key):
        d, p = key
        rho = _noisy_matrix(diag, angles[d], NoiseModel(noise_kind, p), n)
        psi = ideal[d]
        cost = float(np.dot(np.diagonal(rho).real, diag))
        fid = float(np.vdot(psi, rho @ psi).real)
        cm = closedform.model_cost(cost_fits[d], n * d, p) if d in cost_fits else None
        fm = closedform.model_fidelity(fidelity_fits[d], n * d, p) if d in fidelity_fits else None
        return SweepRow(d, p, cost, fid, cm, fm, angle_source)

    keys = [(d, p) for d in depths for p in p_grid]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(evaluate, keys))
    else:
        rows = [evaluate(k) for k in keys]

    meta = {"max_cost_deviation": {}, "max_fidelity_deviation": {}, "cost_monotone": {}}
    for d in depths:
        drows = [r for r in rows if r.d == d]
        if d in cost_fits:
            meta["max_cost_deviation"][d] = max(abs(r.cost_model - r.cost_exact) for r in drows)
        if d in fidelity_fits:
            meta["max_fidelity_deviation"][d] = max(abs(r.fidelity_model - r.fidelity_exact) for r in drows)
        mags = [abs(r.cost_exact) for r in drows]
        meta["cost_monotone"][d] = all(b <= a + 1e-12 for a, b in zip(mags, mags[1:]))
    return SweepTable(rows, n, meta)


def sweep_reoptimized(
    instance: IsingInstance,
    depths,
    p_grid,
    noise_kind: str,
    restarts: int = 20,
    seed: int = 0,
    jobs: int = 1,
) -> SweepTable:
    """Like :func:`sweep`, but angles are re-optimised with the noisy objective at every ``(d, p)``."""
    from .optimize import optimize_angles

    rows = []
    for d in sorted(set(int(d) for d in depths)):
        for p in sorted(set(float(p) for p in p_grid)):
            report = optimize_angles(instance, d, NoiseModel(noise_kind, p), restarts, seed, jobs)
            sub = sweep(instance, [d], [p], noise_kind, {d: report.best_angles}, angle_source="optimized_per_p")
            rows.extend(sub.rows)
    return SweepTable(rows, instance.n_qubits, {})


def fit_sweep(table: SweepTable) -> tuple[dict, dict]:
    """Per-depth closed-form fits made directly against the exact p-curves."""
    cost_fits, fid_fits = {}, {}
    for d in table.depths:
        ps, costs = table.curve(d, "cost_exact")
        _, fids = table.curve(d, "fidelity_exact")
        n_slots = table.n_qubits * d
        cost_fits[d] = closedform.fit_cost_vs_p(ps, costs, n_slots)
        fid_fits[d] = closedform.fit_fidelity_vs_p(ps, fids, n_slots)
    return cost_fits, fid_fits


def with_models(table: SweepTable, cost_fits: dict, fidelity_fits: dict | None = None) -> SweepTable:
    """Copy of ``table`` with model columns filled from the given fits."""
    fidelity_fits = fidelity_fits or {}
    n = table.n_qubits
    rows = []
    for r in table.rows:
        cm = closedform.model_cost(cost_fits[r.d], n * r.d, r.p) if r.d in cost_fits else r.cost_model
        fm = (closedform.model_fidelity(fidelity_fits[r.d], n * r.d, r.p)
              if r.d in fidelity_fits else r.fidelity_model)
        rows.append(SweepRow(r.d, r.p, r.cost_exact, r.fidelity_exact, cm, fm, r.angle_source))
    meta = dict(table.metadata)
    meta["max_cost_deviation"] = {
        d: max(abs(r.cost_model - r.cost_exact) for r in rows if r.d == d) for d in cost_fits
    }
    if fidelity_fits:
        meta["max_fidelity_deviation"] = {
            d: max(abs(r.fidelity_model - r.fidelity_exact) for r in rows if r.d == d) for d in fidelity_fits
        }
    return SweepTable(rows, n, meta)


def find_crossings(table: SweepTable, d_a: int, d_b: int, evaluate=None) -> list[float]:
    """Noise rates where ``cost(d_a, p) - cost(d_b, p)`` changes sign.

    Each sign change between adjacent common grid points is located by
    linear interpolation. A grid point where the difference is exactly zero
    counts as a crossing only if the sign differs on either side. If
    ``evaluate(d, p) -> cost`` is given, crossings closer together than two
    grid steps are refined by one bisection of their bracketing interval.
    """
    pa, ca = table.curve(d_a)
    pb, cb = table.curve(d_b)
    common = np.intersect1d(np.round(pa, 12), np.round(pb, 12))
    if common.size < 2:
        raise ValidationError(f"depths {d_a} and {d_b} share fewer than two grid points")
    ia = {round(p, 12): c for p, c in zip(pa, ca)}
    ib = {round(p, 12): c for p, c in zip(pb, cb)}
    ps = common
    diff = np.array([ia[p] - ib[p] for p in ps])

    brackets = []
    last_sign, last_idx = 0, None
    for i, v in enumerate(diff):
        s = int(np.sign(v))
        if s == 0:
            continue
        if last_sign and s != last_sign:
            brackets.append((last_idx, i))
        last_sign, last_idx = s, i

    def interp(lo_p, lo_v, hi_p, hi_v):
        return lo_p + (hi_p - lo_p) * lo_v / (lo_v - hi_v)

    out = []
    for k, (i, j) in enumerate(brackets):
        lo_p, hi_p, lo_v, hi_v = ps[i], ps[j], diff[i], diff[j]
        crowded = evaluate is not None and any(
            abs(brackets[o][0] - i) < 2 for o in (k - 1, k + 1) if 0 <= o < len(brackets)
        )
        if crowded and j == i + 1:
            mid = 0.5 * (lo_p + hi_p)
            mv = evaluate(d_a, mid) - evaluate(d_b, mid)
            if np.sign(mv) == np.sign(lo_v):
                lo_p, lo_v = mid, mv
            elif mv != 0:
                hi_p, hi_v = mid, mv
            else:
                out.append(float(mid))
                continue
        if j > i + 1:
            # exact zeros in between: report the zero point itself
            out.append(float(ps[i + 1 + int(np.argmin(np.abs(diff[i + 1 : j])))]))
        else:
            out.append(float(interp(lo_p, lo_v, hi_p, hi_v)))
    return out


def crossings_to_csv(crossings: dict, path) -> Path:
    """Write ``{(d_a, d_b): [p*, ...]}`` as ``d_a,d_b,p_star`` rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d_a", "d_b", "p_star"])
        for (da, db), ps in sorted(crossings.items()):
            for p in ps:
                w.writerow([da, db, repr(p)])
    return path


def optimal_depth(fits: dict, n_qubits: int, p: float, c_ideals: dict | None = None, tol: float = 1e-12) -> int:
    """Depth minimising the closed-form cost at noise rate ``p``.

    ``fits`` maps depth to :class:`~qaoanoise.closedform.CostFit`. If
    ``c_ideals`` is given, those ideal costs replace ``alpha + alpha_tilde``.
    Ties within ``tol`` go to the smaller depth.
    """
    if not fits:
        raise ValidationError("need at least one depth")
    best_d, best_c = None, math.inf
    for d in sorted(fits):
        fit = fits[d]
        if c_ideals is not None and d in c_ideals:
            fit = closedform.CostFit(fit.alpha, c_ideals[d] - fit.alpha, fit.chi, fit.residual, fit.converged)
        c = closedform.model_cost(fit, n_qubits * d, p)
        if c < best_c - tol:
            best_d, best_c = d, c
    return best_d


def depth_schedule(fits: dict, n_qubits: int, p_grid, c_ideals: dict | None = None) -> list[tuple[float, int]]:
    """``optimal_depth`` over a grid of noise rates."""
    return [(float(p), optimal_depth(fits, n_qubits, p, c_ideals)) for p in p_grid]
