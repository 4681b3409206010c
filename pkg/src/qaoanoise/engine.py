"""State-vector and density-matrix simulation of noisy QAOA.

One QAOA round is ``exp(-i beta H_x) exp(-i gamma H_c)`` with ``H_x = sum_i X_i``.
In the noisy model every round is followed by a layer of single-qubit channels

    rho -> (1 - p) rho + (p / M) sum_j K_j rho K_j^dagger

applied to each qubit in turn. Three routes are provided: pure states
(ideal circuit), density matrices (exact noisy circuit), and Monte Carlo
trajectories that unravel the channel into random Kraus insertions.

The ``_``-prefixed kernels work on arrays with arbitrary leading batch axes
and are shared with :mod:`qaoanoise.decomposition`.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ResourceLimitError, UnsupportedNoiseError, ValidationError
from .ising import IsingInstance, diagonal

MAX_PURE_QUBITS = 24
MAX_DENSITY_QUBITS = 12
TRAJECTORY_CHUNK = 1024

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


def _check_n(n, cap, what):
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"n_qubits must be a positive integer, got {n!r}")
    if n > cap:
        raise ResourceLimitError(f"{what} engine capped at {cap} qubits, got {n}")


@dataclass(frozen=True)
class PureState:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_n(self.n_qubits, MAX_PURE_QUBITS, "pure-state")
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (1 << self.n_qubits,):
            raise ValidationError(f"expected {1 << self.n_qubits} amplitudes, got shape {amps.shape}")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > 1e-9:
            raise ValidationError(f"state not normalised: |psi|^2 = {norm2}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "PureState":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Density operator on ``n_qubits``.

    Construction checks Hermiticity and unit trace. Positivity costs a full
    eigendecomposition, so it is checked by :meth:`validate` on request.
    """

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        _check_n(self.n_qubits, MAX_DENSITY_QUBITS, "density-matrix")
        mat = np.array(self.matrix, dtype=complex)
        dim = 1 << self.n_qubits
        if mat.shape != (dim, dim):
            raise ValidationError(f"expected {dim}x{dim} matrix, got {mat.shape}")
        if np.max(np.abs(mat - mat.conj().T)) > 1e-9:
            raise ValidationError("density matrix is not Hermitian")
        tr = np.trace(mat)
        if abs(tr - 1.0) > 1e-9:
            raise ValidationError(f"density matrix trace {tr} != 1")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        dim = 1 << n_qubits
        return cls(n_qubits, np.eye(dim, dtype=complex) / dim)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def validate(self, psd_tol: float = 1e-8) -> "DensityMatrix":
        lam = self.min_eigenvalue()
        if lam < -psd_tol:
            raise ValidationError(f"density matrix not positive semidefinite: min eigenvalue {lam}")
        return self


@dataclass(frozen=True)
class AngleSchedule:
    gammas: tuple
    betas: tuple

    def __post_init__(self):
        g = tuple(float(x) for x in self.gammas)
        b = tuple(float(x) for x in self.betas)
        if len(g) != len(b) or len(g) < 1:
            raise ValidationError(
                f"need equal-length gammas/betas of length >= 1, got {len(g)} and {len(b)}"
            )
        if not all(math.isfinite(x) for x in g + b):
            raise ValidationError("angles must be finite")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "betas", b)

    @property
    def depth(self) -> int:
        return len(self.gammas)

    def as_vector(self) -> np.ndarray:
        """Flat ``[gamma_1..gamma_d, beta_1..beta_d]``."""
        return np.array(self.gammas + self.betas)

    @classmethod
    def from_vector(cls, x) -> "AngleSchedule":
        x = np.asarray(x, dtype=float).ravel()
        if x.size % 2:
            raise ValidationError("angle vector must have even length")
        d = x.size // 2
        return cls(tuple(x[:d]), tuple(x[d:]))

    def to_dict(self) -> dict:
        return {"gammas": list(self.gammas), "betas": list(self.betas)}

    @classmethod
    def from_dict(cls, data: dict) -> "AngleSchedule":
        try:
            return cls(data["gammas"], data["betas"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed angle schedule: {exc}") from None


NOISE_KINDS = ("depolarizing", "dephasing", "custom")


@dataclass(frozen=True)
class NoiseModel:
    """Local channel ``(1-p) rho + (p/M) sum_j K_j rho K_j^dagger``.

    The identity stays inside the Kraus list for the built-in kinds, so
    depolarizing at ``p`` sends a qubit to ``I/2`` with probability ``p``.
    """

    kind: str
    p: float
    kraus_ops: tuple = ()

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        p = float(self.p)
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"noise strength p={p} outside [0, 1]")
        object.__setattr__(self, "p", p)
        if self.kind == "depolarizing":
            ops = (I2, X, Y, Z)
        elif self.kind == "dephasing":
            ops = (I2, Z)
        else:
            ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
            if not ops:
                raise ValidationError("custom noise needs at least one Kraus operator")
            if any(k.shape != (2, 2) for k in ops):
                raise ValidationError("Kraus operators must be 2x2")
            total = sum(k.conj().T @ k for k in ops)
            if np.max(np.abs(total - len(ops) * I2)) > 1e-9:
                raise ValidationError("Kraus operators violate sum_j K_j^dagger K_j = M * I")
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "kraus_ops", ops)

    @classmethod
    def depolarizing(cls, p: float) -> "NoiseModel":
        return cls("depolarizing", p)

    @classmethod
    def dephasing(cls, p: float) -> "NoiseModel":
        return cls("dephasing", p)

    @classmethod
    def custom(cls, p: float, kraus_ops: Sequence) -> "NoiseModel":
        return cls("custom", p, tuple(kraus_ops))

    @property
    def n_kraus(self) -> int:
        return len(self.kraus_ops)

    @property
    def is_unitary(self) -> bool:
        return all(np.max(np.abs(k.conj().T @ k - I2)) <= 1e-9 for k in self.kraus_ops)

    def with_p(self, p: float) -> "NoiseModel":
        return NoiseModel(self.kind, p, self.kraus_ops if self.kind == "custom" else ())

    def require_unitary(self):
        if not self.is_unitary:
            raise UnsupportedNoiseError(
                "trajectory methods need unitary Kraus operators; use the density-matrix engine"
            )


# ---------------------------------------------------------------------------
# Array kernels (leading axes are batch axes)
# ---------------------------------------------------------------------------


def _apply_1q(vecs: np.ndarray, op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    lead = vecs.shape[:-1]
    v = vecs.reshape(lead + (1 << (n - 1 - qubit), 2, 1 << qubit))
    v0, v1 = v[..., 0, :], v[..., 1, :]
    out = np.empty(v.shape, dtype=complex)
    out[..., 0, :] = op[0, 0] * v0 + op[0, 1] * v1
    out[..., 1, :] = op[1, 0] * v0 + op[1, 1] * v1
    return out.reshape(vecs.shape)


def _apply_mixer(vecs: np.ndarray, beta: float, n: int) -> np.ndarray:
    c, s = math.cos(beta), math.sin(beta)
    lead = vecs.shape[:-1]
    out = vecs
    for q in range(n):
        v = out.reshape(lead + (1 << (n - 1 - q), 2, 1 << q))
        out = (c * v - 1j * s * v[..., ::-1, :]).reshape(vecs.shape)
    return out


def _apply_round(vecs, diag, gamma, beta, n):
    return _apply_mixer(vecs * np.exp(-1j * gamma * diag), beta, n)


def _ideal_state(diag: np.ndarray, angles: AngleSchedule, n: int) -> np.ndarray:
    psi = np.full(1 << n, 2.0 ** (-n / 2), dtype=complex)
    for g, b in zip(angles.gammas, angles.betas):
        psi = _apply_round(psi, diag, g, b, n)
    return psi


def _trajectories(diag, angles, kraus_ops, choices, n):
    """Evolve one trajectory per row of ``choices``.

    ``choices[r, (k-1)*n + q]`` is 0 for "no noise" or ``j`` (1-based) for
    inserting ``K_j`` on qubit ``q`` after round ``k``.
    """
    batch = choices.shape[0]
    # index 0 of the stack is the "no noise" identity
    stack = np.stack([I2] + [np.asarray(k, dtype=complex) for k in kraus_ops])
    # rows stay one shared vector until the first insertion
    vecs = np.full((1, 1 << n), 2.0 ** (-n / 2), dtype=complex)
    for k, (g, b) in enumerate(zip(angles.gammas, angles.betas)):
        vecs = _apply_round(vecs, diag, g, b, n)
        for q in range(n):
            col = choices[:, k * n + q]
            if not col.any():
                continue
            if vecs.shape[0] != batch:
                vecs = np.broadcast_to(vecs, (batch, vecs.shape[1]))
            ops = stack[col]
            v = vecs.reshape(batch, 1 << (n - 1 - q), 2, 1 << q)
            v0, v1 = v[:, :, 0, :], v[:, :, 1, :]
            o = ops[:, :, :, None, None]
            out = np.empty_like(v)
            out[:, :, 0, :] = o[:, 0, 0] * v0 + o[:, 0, 1] * v1
            out[:, :, 1, :] = o[:, 1, 0] * v0 + o[:, 1, 1] * v1
            vecs = out.reshape(batch, -1)
    if vecs.shape[0] != batch:
        vecs = np.broadcast_to(vecs, (batch, vecs.shape[1]))
    return np.ascontiguousarray(vecs)


def _conjugate_1q(rho: np.ndarray, op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    a, b = 1 << (n - 1 - qubit), 1 << qubit
    t = rho.reshape(a, 2, b, a, 2, b)
    t = np.einsum("ij,xjyukv->xiyukv", op, t)
    t = np.einsum("xiyukv,lk->xiyulv", t, op.conj())
    return t.reshape(rho.shape)


def _channel(rho, kraus_ops, p, qubit, n):
    if p == 0.0:
        return rho
    acc = np.zeros_like(rho)
    for op in kraus_ops:
        acc += _conjugate_1q(rho, op, qubit, n)
    return (1.0 - p) * rho + (p / len(kraus_ops)) * acc


def _unitary_round_dm(rho, diag, gamma, beta, n):
    # U rho: columns of rho are the vectors; then (U rho) U^dagger row-wise.
    left = _apply_round(rho.T, diag, gamma, beta, n).T
    return _apply_round(left.conj(), diag, gamma, beta, n).conj()


def _noisy_matrix(diag, angles, noise, n, channel=None):
    channel = channel or _channel
    psi0 = np.full(1 << n, 2.0 ** (-n / 2), dtype=complex)
    rho = np.outer(psi0, psi0.conj())
    for g, b in zip(angles.gammas, angles.betas):
        rho = _unitary_round_dm(rho, diag, g, b, n)
        for q in range(n):
            rho = channel(rho, noise.kraus_ops, noise.p, q, n)
    return rho


def _check_diag(diag, dim):
    diag = np.asarray(diag, dtype=float)
    if diag.shape != (dim,):
        raise ValidationError(f"diagonal length {diag.shape} does not match dimension {dim}")
    return diag


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def plus_state(n: int) -> PureState:
    _check_n(n, MAX_PURE_QUBITS, "pure-state")
    return PureState(n, np.full(1 << n, 2.0 ** (-n / 2), dtype=complex))


def apply_cost_layer(state: PureState, diag, gamma: float) -> PureState:
    diag = _check_diag(diag, state.amplitudes.size)
    return PureState(state.n_qubits, state.amplitudes * np.exp(-1j * gamma * diag))


def apply_mixer_layer(state: PureState, beta: float) -> PureState:
    return PureState(state.n_qubits, _apply_mixer(state.amplitudes, beta, state.n_qubits))


def qaoa_state(instance: IsingInstance, angles: AngleSchedule) -> PureState:
    """Ideal ``|psi_d> = U(gamma, beta)|+>^n``."""
    n = instance.n_qubits
    _check_n(n, MAX_PURE_QUBITS, "pure-state")
    return PureState(n, _ideal_state(diagonal(instance), angles, n))


def expected_cost_pure(state: PureState, diag) -> float:
    diag = _check_diag(diag, state.amplitudes.size)
    return float(np.dot(np.abs(state.amplitudes) ** 2, diag))


def apply_local_channel(rho: DensityMatrix, noise: NoiseModel, qubit: int) -> DensityMatrix:
    n = rho.n_qubits
    if isinstance(qubit, bool) or not isinstance(qubit, (int, np.integer)) or not 0 <= qubit < n:
        raise ValidationError(f"qubit {qubit!r} out of range [0, {n})")
    return DensityMatrix(n, _channel(rho.matrix, noise.kraus_ops, noise.p, int(qubit), n))


def noisy_state(instance: IsingInstance, angles: AngleSchedule, noise: NoiseModel) -> DensityMatrix:
    """Density matrix after ``d`` rounds, each followed by a full noise layer.

    No noise acts on the initial ``|+>`` preparation.
    """
    n = instance.n_qubits
    _check_n(n, MAX_DENSITY_QUBITS, "density-matrix")
    diag = diagonal(instance)
    psi0 = plus_state(n)
    rho = psi0.projector()
    for g, b in zip(angles.gammas, angles.betas):
        rho = DensityMatrix(n, _unitary_round_dm(rho.matrix, diag, g, b, n))
        for q in range(n):
            rho = apply_local_channel(rho, noise, q)
    return rho


def fidelity(rho: DensityMatrix, pure: PureState) -> float:
    """Overlap ``<psi|rho|psi>``."""
    psi = pure.amplitudes
    if rho.matrix.shape[0] != psi.size:
        raise ValidationError("dimension mismatch between density matrix and state")
    return float(np.vdot(psi, rho.matrix @ psi).real)


def expected_cost_dm(rho: DensityMatrix, diag) -> float:
    diag = _check_diag(diag, rho.matrix.shape[0])
    return float(np.dot(np.diagonal(rho.matrix).real, diag))


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b`` (accepts DensityMatrix or arrays)."""
    a = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    b = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


class MonteCarloEstimate(NamedTuple):
    cost_mean: float
    fidelity_mean: float
    cost_stderr: float
    fidelity_stderr: float


def sample_noise_choices(rng: np.random.Generator, batch: int, n_slots: int, p: float, n_kraus: int):
    """Per-slot draw: 0 with probability ``1-p``, else a uniform Kraus index in ``1..M``."""
    hit = rng.random((batch, n_slots)) < p
    j = rng.integers(1, n_kraus + 1, size=(batch, n_slots))
    return np.where(hit, j, 0)


def monte_carlo(
    instance: IsingInstance,
    angles: AngleSchedule,
    noise: NoiseModel,
    trials: int,
    seed: int = 0,
    jobs: int = 1,
) -> MonteCarloEstimate:
    """Trajectory estimate of the noisy cost and fidelity.

    Trials are split into fixed chunks of ``TRAJECTORY_CHUNK``; chunk ``c``
    draws from ``default_rng([seed, c])``, so results do not depend on ``jobs``.
    """
    noise.require_unitary()
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    n = instance.n_qubits
    _check_n(n, MAX_PURE_QUBITS, "pure-state")
    diag = diagonal(instance)
    ideal = _ideal_state(diag, angles, n)
    n_slots = n * angles.depth

    def run_chunk(c):
        size = min(TRAJECTORY_CHUNK, trials - c * TRAJECTORY_CHUNK)
        rng = np.random.default_rng([seed, c])
        choices = sample_noise_choices(rng, size, n_slots, noise.p, noise.n_kraus)
        vecs = _trajectories(diag, angles, noise.kraus_ops, choices, n)
        probs = np.abs(vecs) ** 2
        return probs @ diag, np.abs(vecs @ ideal.conj()) ** 2

    n_chunks = -(-trials // TRAJECTORY_CHUNK)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run_chunk, range(n_chunks)))
    else:
        parts = [run_chunk(c) for c in range(n_chunks)]
    costs = np.concatenate([c for c, _ in parts])
    fids = np.concatenate([f for _, f in parts])
    if trials > 1:
        cost_se = float(np.std(costs, ddof=1) / math.sqrt(trials))
        fid_se = float(np.std(fids, ddof=1) / math.sqrt(trials))
    else:
        cost_se = fid_se = float("nan")
    return MonteCarloEstimate(float(costs.mean()), float(fids.mean()), cost_se, fid_se)
