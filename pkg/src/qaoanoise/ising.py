"""Diagonal Ising-type cost Hamiltonians.

Conventions used throughout the package:

* bit ``i`` of a basis index ``z`` is qubit ``i`` (bit 0 is least significant);
* the spin of qubit ``i`` is ``s_i(z) = +1`` if that bit is 0 and ``-1`` if it is 1,
  i.e. ``Z|0> = +|0>``;
* bitstrings are printed most-significant qubit first, so ``"01"`` on two
  qubits means qubit 0 is in state 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ResourceLimitError, ValidationError

MAX_DIAGONAL_QUBITS = 24
ENSEMBLES = ("pm1", "uniform", "ring")


@dataclass(frozen=True)
class IsingInstance:
    """Cost Hamiltonian ``sum h_i Z_i + sum J_ij Z_i Z_j + sum c_S prod_{i in S} Z_i``.

    Term lists are normalised to sorted tuples so that two instances holding
    the same terms compare equal regardless of input order.
    """

    n_qubits: int
    fields: tuple = ()
    couplings: tuple = ()
    higher_order: tuple = ()
    _diag_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_qubits
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise ValidationError(f"n_qubits must be a positive integer, got {n!r}")
        object.__setattr__(self, "n_qubits", int(n))

        def check_index(i):
            if isinstance(i, bool) or not isinstance(i, (int, np.integer)):
                raise ValidationError(f"qubit index must be an integer, got {i!r}")
            if not 0 <= i < n:
                raise ValidationError(f"qubit index {i} out of range [0, {n})")
            return int(i)

        fields = []
        for entry in self.fields:
            i, h = entry
            fields.append((check_index(i), float(h)))
        seen = [i for i, _ in fields]
        if len(set(seen)) != len(seen):
            raise ValidationError("duplicate field index")

        couplings = []
        for entry in self.couplings:
            i, j, coeff = entry
            i, j = check_index(i), check_index(j)
            if not i < j:
                raise ValidationError(f"coupling ({i}, {j}) must satisfy i < j")
            couplings.append((i, j, float(coeff)))
        pairs = [(i, j) for i, j, _ in couplings]
        if len(set(pairs)) != len(pairs):
            raise ValidationError("duplicate coupling pair")

        higher = []
        for entry in self.higher_order:
            subset, coeff = entry
            idx = tuple(check_index(i) for i in subset)
            if len(idx) < 3:
                raise ValidationError("higher-order terms need at least 3 qubits")
            if list(idx) != sorted(set(idx)):
                raise ValidationError(f"higher-order subset {idx} must be sorted and distinct")
            higher.append((idx, float(coeff)))
        subsets = [s for s, _ in higher]
        if len(set(subsets)) != len(subsets):
            raise ValidationError("duplicate higher-order subset")

        object.__setattr__(self, "fields", tuple(sorted(fields)))
        object.__setattr__(self, "couplings", tuple(sorted(couplings)))
        object.__setattr__(self, "higher_order", tuple(sorted(higher)))

    @property
    def dimension(self) -> int:
        return 1 << self.n_qubits

    @cached_property
    def is_integer_valued(self) -> bool:
        """True when every diagonal entry is an integer (makes ``gamma`` 2*pi-periodic)."""
        d = diagonal(self)
        return bool(np.all(d == np.round(d)))

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n_qubits,
            "fields": [[i, h] for i, h in self.fields],
            "couplings": [[i, j, c] for i, j, c in self.couplings],
            "higher_order": [[list(s), c] for s, c in self.higher_order],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IsingInstance":
        if not isinstance(data, dict) or "n" not in data:
            raise ValidationError("instance document must be an object with key 'n'")
        unknown = set(data) - {"n", "fields", "couplings", "higher_order"}
        if unknown:
            raise ValidationError(f"unknown instance keys: {sorted(unknown)}")
        try:
            fields = [(i, h) for i, h in data.get("fields", [])]
            couplings = [(i, j, c) for i, j, c in data.get("couplings", [])]
            higher = [(tuple(s), c) for s, c in data.get("higher_order", [])]
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed term list: {exc}") from None
        return cls(data["n"], fields, couplings, higher)


def _spin(z: np.ndarray, i: int) -> np.ndarray:
    return 1 - 2 * ((z >> i) & 1).astype(np.int8)


def diagonal(instance: IsingInstance) -> np.ndarray:
    """Dense diagonal of the cost Hamiltonian, length ``2**n``.

    The result is cached on the instance and returned read-only.
    """
    cached = instance._diag_cache.get("diag")
    if cached is not None:
        return cached
    n = instance.n_qubits
    if n > MAX_DIAGONAL_QUBITS:
        raise ResourceLimitError(f"n={n} exceeds dense diagonal cap of {MAX_DIAGONAL_QUBITS} qubits")
    z = np.arange(1 << n, dtype=np.int64)
    diag = np.zeros(1 << n, dtype=float)
    for i, h in instance.fields:
        diag += h * _spin(z, i)
    for i, j, coeff in instance.couplings:
        # s_i s_j = -1 exactly when the two bits differ
        diag += coeff * (1 - 2 * (((z >> i) ^ (z >> j)) & 1))
    for subset, coeff in instance.higher_order:
        parity = np.zeros_like(z)
        for i in subset:
            parity ^= (z >> i) & 1
        diag += coeff * (1 - 2 * parity)
    diag.setflags(write=False)
    instance._diag_cache["diag"] = diag
    return diag


def ground_energy(instance: IsingInstance, max_qubits: int = MAX_DIAGONAL_QUBITS) -> tuple[float, str]:
    """Minimum diagonal entry and its bitstring (smallest basis index on ties)."""
    if instance.n_qubits > max_qubits:
        raise ResourceLimitError(f"n={instance.n_qubits} exceeds ground-energy cap of {max_qubits}")
    diag = diagonal(instance)
    z = int(np.argmin(diag))
    return float(diag[z]), format(z, f"0{instance.n_qubits}b")


def random_instance(n: int, ensemble: str = "pm1", seed: int = 0) -> IsingInstance:
    """Draw a reproducible instance.

    ``pm1``: all-pairs couplings uniform in {-1, +1}, no fields.
    ``uniform``: all-pairs couplings and all fields uniform in [-1, 1].
    ``ring``: nearest-neighbour cycle with couplings in {-1, +1}.
    """
    if ensemble not in ENSEMBLES:
        raise ValidationError(f"unknown ensemble {ensemble!r}; expected one of {ENSEMBLES}")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if ensemble == "pm1":
        signs = rng.choice([-1.0, 1.0], size=len(pairs))
        return IsingInstance(n, (), [(i, j, s) for (i, j), s in zip(pairs, signs)])
    if ensemble == "uniform":
        h = rng.uniform(-1.0, 1.0, size=n)
        J = rng.uniform(-1.0, 1.0, size=len(pairs))
        return IsingInstance(
            n, list(enumerate(h)), [(i, j, c) for (i, j), c in zip(pairs, J)]
        )
    ring = sorted({tuple(sorted((i, (i + 1) % n))) for i in range(n) if n > 1})
    signs = rng.choice([-1.0, 1.0], size=len(ring))
    return IsingInstance(n, (), [(i, j, s) for (i, j), s in zip(ring, signs)])


def dumps(instance: IsingInstance) -> str:
    return json.dumps(instance.to_dict(), indent=2)


def loads(text: str) -> IsingInstance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"instance file is not valid JSON: {exc}") from None
    return IsingInstance.from_dict(data)


def save_instance(instance: IsingInstance, path) -> Path:
    path = Path(path)
    path.write_text(dumps(instance) + "\n")
    return path


def load_instance(path) -> IsingInstance:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read instance file {path}: {exc.strerror}") from None
    try:
        return loads(text)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
