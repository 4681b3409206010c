"""Pure-state expansion of the noisy QAOA output.

With unitary Kraus operators the noisy state after ``d`` rounds on ``N`` qubits
is an exact mixture over *noise patterns*: choices of ``m`` distinct
(round, qubit) slots out of ``N*d`` together with a Kraus index per chosen slot,

    rho_d = sum_m (1-p)^(Nd-m) (p/M)^m sum_{patterns with m insertions} |psi_pat><psi_pat|.

This module enumerates or samples those patterns, rebuilds ``rho_d`` from
them, and computes the per-``m`` averages ``f_m`` (overlap with the ideal
state) and ``c_m`` (cost), from which fidelity and cost follow as binomial
sums.

Patterns are handled in bulk as integer "choice" arrays: one row per
trajectory, one column per slot ``(round-1)*N + qubit``, entry 0 for no noise
or the 1-based Kraus index.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import (
    AngleSchedule,
    DensityMatrix,
    NoiseModel,
    PureState,
    _apply_1q,
    _apply_round,
    _ideal_state,
    _trajectories,
)
from .errors import PreconditionError, ResourceLimitError, ValidationError
from .ising import IsingInstance, diagonal

DEFAULT_BUDGET_PER_M = 2000
CHUNK_ROWS = 8192


@dataclass(frozen=True)
class NoisePattern:
    """Kraus insertions as ``(layer, qubit, kraus_index)`` triples.

    ``layer`` and ``kraus_index`` are 1-based, ``qubit`` is 0-based. Entries are
    stored sorted by (layer, qubit); each slot may appear at most once.
    """

    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(sorted((int(l), int(q), int(j)) for l, q, j in self.entries))
        slots = [(l, q) for l, q, _ in entries]
        if len(set(slots)) != len(slots):
            raise ValidationError("noise pattern uses a (layer, qubit) slot twice")
        object.__setattr__(self, "entries", entries)

    @property
    def m(self) -> int:
        return len(self.entries)

    def validate_for(self, n_qubits: int, depth: int, n_kraus: int) -> "NoisePattern":
        for l, q, j in self.entries:
            if not 1 <= l <= depth:
                raise ValidationError(f"layer {l} outside [1, {depth}]")
            if not 0 <= q < n_qubits:
                raise ValidationError(f"qubit {q} outside [0, {n_qubits})")
            if not 1 <= j <= n_kraus:
                raise ValidationError(f"Kraus index {j} outside [1, {n_kraus}]")
        return self

    def choices(self, n_qubits: int, depth: int) -> np.ndarray:
        row = np.zeros((1, n_qubits * depth), dtype=np.int64)
        for l, q, j in self.entries:
            row[0, (l - 1) * n_qubits + q] = j
        return row


def pattern_count(n_qubits: int, depth: int, m: int, n_kraus: int) -> int:
    """``M**m * C(N*d, m)``, the number of patterns with exactly ``m`` insertions."""
    n_slots = n_qubits * depth
    if not 0 <= m <= n_slots:
        raise ValidationError(f"m={m} outside [0, {n_slots}]")
    return n_kraus**m * math.comb(n_slots, m)


def iter_pattern_choices(n_slots: int, m: int, n_kraus: int, chunk_rows: int = CHUNK_ROWS):
    """Yield every pattern with ``m`` insertions as blocks of choice rows.

    Order is deterministic: slot subsets lexicographically, Kraus tuples in
    product order within each subset.
    """
    tuples = list(itertools.product(range(1, n_kraus + 1), repeat=m))
    kraus = np.array(tuples, dtype=np.int64).reshape(len(tuples), m)
    per_subset = len(tuples)
    subsets_per_chunk = max(1, chunk_rows // per_subset)
    combos = itertools.combinations(range(n_slots), m)
    while True:
        block = list(itertools.islice(combos, subsets_per_chunk))
        if not block:
            return
        subsets = np.array(block, dtype=np.int64).reshape(len(block), m)
        rows = np.zeros((len(block) * per_subset, n_slots), dtype=np.int64)
        if m:
            row_idx = np.repeat(np.arange(rows.shape[0]), m)
            col_idx = np.repeat(subsets, per_subset, axis=0).ravel()
            rows[row_idx, col_idx] = np.tile(kraus, (len(block), 1)).ravel()
        yield rows


def sample_pattern_choices(rng: np.random.Generator, n_slots: int, m: int, n_kraus: int, count: int):
    """Draw ``count`` patterns uniformly: a uniform ``m``-subset of slots, uniform Kraus indices."""
    rows = np.zeros((count, n_slots), dtype=np.int64)
    if m == 0 or count == 0:
        return rows
    slots = np.argsort(rng.random((count, n_slots)), axis=1)[:, :m]
    kraus = rng.integers(1, n_kraus + 1, size=(count, m))
    np.put_along_axis(rows, slots, kraus, axis=1)
    return rows


def trajectory_state(
    instance: IsingInstance, angles: AngleSchedule, noise: NoiseModel, pattern: NoisePattern
) -> PureState:
    """``K_d U_d ... K_1 U_1 |+>`` with the pattern's insertions after each round."""
    noise.require_unitary()
    n, d = instance.n_qubits, angles.depth
    pattern.validate_for(n, d, noise.n_kraus)
    vec = _trajectories(diagonal(instance), angles, noise.kraus_ops, pattern.choices(n, d), n)[0]
    return PureState(n, vec)


def _enumerate_all(diag, angles, kraus_ops, n, leaf, chunk_rows=CHUNK_ROWS, jobs=1):
    """Visit every pattern over all ``m`` by expanding slots one at a time.

    Patterns sharing a prefix of slot decisions share the work for that
    prefix. ``leaf(vecs, m)`` is called on blocks of final trajectory states
    (``m`` = insertion count per row) and must return an array; the results are
    summed in a fixed depth-first order.
    """
    d = angles.depth
    n_slots = n * d
    ops = [None] + [np.asarray(k, dtype=complex) for k in kraus_ops]

    def visit(vecs, m, slot, pool=None):
        if slot == n_slots:
            return leaf(vecs, m)
        if slot % n == 0:
            k = slot // n
            vecs = _apply_round(vecs, diag, angles.gammas[k], angles.betas[k], n)
        q = slot % n
        children = [
            (vecs if op is None else _apply_1q(vecs, op, q, n), m + (op is not None))
            for op in ops
        ]
        if vecs.shape[0] * len(ops) <= chunk_rows:
            vecs = np.concatenate([c for c, _ in children])
            return visit(vecs, np.concatenate([cm for _, cm in children]), slot + 1, pool)
        if pool is not None:
            parts = list(pool.map(lambda c: visit(c[0], c[1], slot + 1), children))
        else:
            parts = [visit(c, cm, slot + 1) for c, cm in children]
        return sum(parts[1:], parts[0])

    root = np.full((1, 1 << n), 2.0 ** (-n / 2), dtype=complex)
    m0 = np.zeros(1, dtype=np.int64)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return visit(root, m0, 0, pool)
    return visit(root, m0, 0)


def _run_blocks(blocks, fn, jobs):
    # Results come back in block order so reductions are interleaving-independent.
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, blocks))
    return [fn(b) for b in blocks]


def assemble_density_matrix(
    instance: IsingInstance,
    angles: AngleSchedule,
    noise: NoiseModel,
    max_terms: int = 2_000_000,
    jobs: int = 1,
) -> DensityMatrix:
    """Rebuild ``rho_d`` from the full weighted sum over noise patterns."""
    noise.require_unitary()
    n, d, M, p = instance.n_qubits, angles.depth, noise.n_kraus, noise.p
    n_slots = n * d
    total = (M + 1) ** n_slots  # sum_m M^m C(Nd, m)
    if total > max_terms:
        raise ResourceLimitError(f"full enumeration needs {total} trajectories, budget is {max_terms}")
    diag = diagonal(instance)
    weights = np.array([(1.0 - p) ** (n_slots - m) * (p / M) ** m for m in range(n_slots + 1)])

    def leaf(vecs, m):
        return (vecs.T * weights[m]) @ vecs.conj()

    return DensityMatrix(n, _enumerate_all(diag, angles, noise.kraus_ops, n, leaf, jobs=jobs))


@dataclass
class MLevelCurve:
    """Per-``m`` means of an overlap or cost quantity over noise patterns."""

    n_slots: int
    means: np.ndarray
    samples: np.ndarray
    exact: np.ndarray
    variances: np.ndarray | None = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.samples = np.asarray(self.samples, dtype=np.int64)
        self.exact = np.asarray(self.exact, dtype=bool)
        if not (self.means.shape == self.samples.shape == self.exact.shape == (self.n_slots + 1,)):
            raise ValidationError("curve arrays must all have length n_slots + 1")
        if not np.all(np.isfinite(self.means)):
            raise ValidationError("curve means must be finite")

    @property
    def ms(self) -> np.ndarray:
        return np.arange(self.n_slots + 1)

    @property
    def is_exact(self) -> bool:
        return bool(np.all(self.exact))

    def stderr(self) -> np.ndarray:
        """Standard error per ``m`` (zero where exact)."""
        if self.variances is None:
            return np.zeros_like(self.means)
        se = np.sqrt(np.asarray(self.variances) / np.maximum(self.samples, 1))
        return np.where(self.exact, 0.0, se)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "mean", "samples", "exact"])
            for m in range(self.n_slots + 1):
                w.writerow([m, repr(float(self.means[m])), int(self.samples[m]), str(bool(self.exact[m])).lower()])
        return path

    @classmethod
    def from_csv(cls, path) -> "MLevelCurve":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValidationError(f"{path}: empty curve file")
        ms = [int(r["m"]) for r in rows]
        if ms != list(range(len(ms))):
            raise ValidationError(f"{path}: m column must be 0..n_slots")
        return cls(
            len(ms) - 1,
            [float(r["mean"]) for r in rows],
            [int(r["samples"]) for r in rows],
            [r["exact"].strip().lower() == "true" for r in rows],
        )


def m_level_curves(
    instance: IsingInstance,
    angles: AngleSchedule,
    noise: NoiseModel,
    budget_per_m: int = DEFAULT_BUDGET_PER_M,
    seed: int = 0,
    jobs: int = 1,
    max_enumeration: int = 2_000_000,
) -> tuple[MLevelCurve, MLevelCurve]:
    """Compute ``(f_curve, c_curve)`` from one shared set of trajectories.

    Level ``m`` is enumerated exactly when its pattern count is within
    ``budget_per_m`` (``m = 0`` always is); otherwise ``budget_per_m`` patterns
    are drawn with ``default_rng([seed, m])``. When every level is exact and
    the total fits in ``max_enumeration``, all levels come from one shared
    prefix-tree enumeration.
    """
    noise.require_unitary()
    if budget_per_m < 1:
        raise ValidationError("budget_per_m must be >= 1")
    n, d, M = instance.n_qubits, angles.depth, noise.n_kraus
    n_slots = n * d
    diag = diagonal(instance)
    ideal_conj = _ideal_state(diag, angles, n).conj()

    counts = [pattern_count(n, d, m, M) for m in range(n_slots + 1)]
    exact = np.array([m == 0 or c <= budget_per_m for m, c in enumerate(counts)])
    stats = np.zeros((5, n_slots + 1))  # count, sum f, sum f^2, sum c, sum c^2

    def leaf_stats(vecs, m):
        ov = np.abs(vecs @ ideal_conj) ** 2
        cost = (np.abs(vecs) ** 2) @ diag
        out = np.zeros((5, n_slots + 1))
        for row, w in enumerate((None, ov, ov**2, cost, cost**2)):
            out[row] = np.bincount(m, weights=w, minlength=n_slots + 1)
        return out

    if exact.all() and sum(counts) <= max_enumeration:
        stats += _enumerate_all(diag, angles, noise.kraus_ops, n, leaf_stats, jobs=jobs)
    else:
        for m in range(n_slots + 1):
            if exact[m]:
                blocks = iter_pattern_choices(n_slots, m, M)
            else:
                rng = np.random.default_rng([seed, m])
                draws = sample_pattern_choices(rng, n_slots, m, M, budget_per_m)
                blocks = (draws[i : i + CHUNK_ROWS] for i in range(0, budget_per_m, CHUNK_ROWS))

            def block_stats(choices, m=m):
                vecs = _trajectories(diag, angles, noise.kraus_ops, choices, n)
                return leaf_stats(vecs, np.full(vecs.shape[0], m))

            for part in _run_blocks(blocks, block_stats, jobs):
                stats += part

    samples = np.rint(stats[0]).astype(np.int64)
    f_mean, c_mean = stats[1] / samples, stats[3] / samples
    k = np.maximum(samples - 1, 1)
    f_var = np.maximum(stats[2] - samples * f_mean**2, 0.0) / k
    c_var = np.maximum(stats[4] - samples * c_mean**2, 0.0) / k
    # the m = 0 trajectory is the ideal state itself
    f_mean[0] = 1.0
    return (
        MLevelCurve(n_slots, f_mean, samples, exact, f_var),
        MLevelCurve(n_slots, c_mean, samples.copy(), exact.copy(), c_var),
    )


def f_curve(instance, angles, noise, budget_per_m=DEFAULT_BUDGET_PER_M, seed=0, jobs=1) -> MLevelCurve:
    """Mean squared overlap with the ideal output per number of insertions."""
    return m_level_curves(instance, angles, noise, budget_per_m, seed, jobs)[0]


def c_curve(instance, angles, noise, budget_per_m=DEFAULT_BUDGET_PER_M, seed=0, jobs=1) -> MLevelCurve:
    """Mean cost expectation per number of insertions."""
    return m_level_curves(instance, angles, noise, budget_per_m, seed, jobs)[1]


def binomial_weights(n_slots: int, p: float) -> np.ndarray:
    return np.array([math.comb(n_slots, m) * (1 - p) ** (n_slots - m) * p**m for m in range(n_slots + 1)])


def _reconstruct(curve: MLevelCurve, p: float) -> float:
    if not curve.is_exact:
        missing = [int(m) for m in np.nonzero(~curve.exact)[0]]
        raise PreconditionError(f"binomial reconstruction needs an exact curve; sampled at m={missing}")
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p={p} outside [0, 1]")
    return float(np.dot(binomial_weights(curve.n_slots, p), curve.means))


def reconstruct_fidelity(curve: MLevelCurve, p: float) -> float:
    """``sum_m C(Nd, m) (1-p)^(Nd-m) p^m f_m``."""
    return _reconstruct(curve, p)


def reconstruct_cost(curve: MLevelCurve, p: float) -> float:
    """``sum_m C(Nd, m) (1-p)^(Nd-m) p^m c_m``."""
    return _reconstruct(curve, p)
