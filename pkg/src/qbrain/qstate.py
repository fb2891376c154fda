"""Pure-state algebra for small registers of two-state tubulin qubits.

Basis convention: bit ``i`` of an amplitude index is the state of qubit ``i``;
0 is the ``|a>`` conformation and 1 is the ``|b>`` conformation.  A ket label
such as ``"01"`` lists qubits in order, so ``"01"`` means qubit 0 in 0 and
qubit 1 in 1, i.e. index ``0b10 == 2``.

Time is in seconds and energies in rad/s (hbar = 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-10
UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12
ZERO_NORM = 1e-14

# Tunneling rate giving a 1e-11 s conformational flip time.
FLIP_TIME = 1e-11
DEFAULT_DELTA = 1.0 / FLIP_TIME


class StateError(ValueError):
    """Invalid state, operator or argument."""


class NormDriftError(ArithmeticError):
    """A state lost normalization beyond tolerance."""


@dataclass(frozen=True, eq=False)
class PureState:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if self.num_qubits < 1:
            raise StateError(f"num_qubits must be >= 1, got {self.num_qubits}")
        if amps.shape != (1 << self.num_qubits,):
            raise StateError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise StateError("amplitudes must be finite")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def _trusted(cls, num_qubits: int, amps: np.ndarray) -> PureState:
        # internal fast path for kernels whose output is finite and normalized
        obj = object.__new__(cls)
        object.__setattr__(obj, "num_qubits", num_qubits)
        object.__setattr__(obj, "amplitudes", amps)
        return obj

    def check_norm(self, tol: float = NORM_TOL) -> None:
        drift = abs(float(np.sum(self.probabilities())) - 1.0)
        if drift > tol:
            raise NormDriftError(f"norm drift {drift:.3e} exceeds {tol:.0e}")


def make_state(num_qubits: int, amplitudes: Sequence[complex]) -> PureState:
    """Build a normalized state; the input only needs to be proportional."""
    amps = np.array(amplitudes, dtype=complex).reshape(-1)
    if num_qubits < 1:
        raise StateError(f"num_qubits must be >= 1, got {num_qubits}")
    if amps.size != 1 << num_qubits:
        raise StateError(f"expected {1 << num_qubits} amplitudes, got {amps.size}")
    if not np.all(np.isfinite(amps)):
        raise StateError("amplitudes must be finite")
    norm = np.sqrt(np.sum(np.abs(amps) ** 2))
    if norm < ZERO_NORM:
        raise StateError(f"cannot normalize vector of norm {norm:.3e}")
    return PureState(num_qubits, amps / norm)


def basis_state(num_qubits: int, index: int) -> PureState:
    if not 0 <= index < 1 << num_qubits:
        raise StateError(f"basis index {index} out of range for {num_qubits} qubits")
    amps = np.zeros(1 << num_qubits, dtype=complex)
    amps[index] = 1.0
    return PureState(num_qubits, amps)


def ket_index(label: str) -> int:
    """Index of a ket label like ``"011"`` (first character is qubit 0)."""
    if not label or set(label) - {"0", "1"}:
        raise StateError(f"bad ket label {label!r}")
    return sum(1 << i for i, ch in enumerate(label) if ch == "1")


def from_kets(terms: dict[str, complex]) -> PureState:
    """State from ``{"00": c0, "11": c1, ...}``; normalized on the way out."""
    sizes = {len(k) for k in terms}
    if len(sizes) != 1:
        raise StateError("all ket labels must have the same length")
    n = sizes.pop()
    amps = np.zeros(1 << n, dtype=complex)
    for label, c in terms.items():
        amps[ket_index(label)] += c
    return make_state(n, amps)


def random_state(num_qubits: int, rng: np.random.Generator) -> PureState:
    amps = rng.normal(size=1 << num_qubits) + 1j * rng.normal(size=1 << num_qubits)
    return make_state(num_qubits, amps)


def probability(state: PureState, basis_index: int) -> float:
    if not 0 <= basis_index < state.dim:
        raise StateError(f"basis index {basis_index} out of range [0, {state.dim})")
    return float(abs(state.amplitudes[basis_index]) ** 2)


def inner_product(a: PureState, b: PureState) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.num_qubits != b.num_qubits:
        raise StateError(f"qubit count mismatch: {a.num_qubits} vs {b.num_qubits}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def tensor_product(a: PureState, b: PureState) -> PureState:
    """``a`` occupies the low qubits, ``b`` the high ones.

    The amplitude of joint index ``i + (j << a.num_qubits)`` is ``a[i] * b[j]``,
    which keeps ket labels concatenating left to right.
    """
    amps = np.kron(b.amplitudes, a.amplitudes)
    return make_state(a.num_qubits + b.num_qubits, amps)


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateError(f"operator must be square, got shape {m.shape}")
        d = m.shape[0]
        if d < 2 or d & (d - 1):
            raise StateError(f"operator dimension {d} is not a power of 2")
        if not np.all(np.isfinite(m)):
            raise StateError("operator entries must be finite")
        err = np.max(np.abs(m.conj().T @ m - np.eye(d)))
        if err > UNITARY_TOL:
            raise StateError(f"operator is not unitary (max |U^dag U - I| = {err:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.dim.bit_length() - 1

    @classmethod
    def from_high_first(cls, matrix) -> UnitaryOperator:
        """Operator written in the textbook ``(|1>, |0>)`` column order.

        Reversing that order is flipping every bit, i.e. reversing both axes.
        """
        m = np.asarray(matrix, dtype=complex)
        return cls(m[::-1, ::-1])


def apply_operator(u: UnitaryOperator, state: PureState,
                   target_qubits: Sequence[int]) -> PureState:
    """Apply ``u`` to the listed qubits; bit k of u's index is ``target_qubits[k]``."""
    targets = [int(q) for q in target_qubits]
    n, k = state.num_qubits, len(targets)
    if u.dim != 1 << k:
        raise StateError(f"operator of dim {u.dim} cannot act on {k} qubits")
    if len(set(targets)) != k:
        raise StateError(f"duplicate target qubits {targets}")
    if any(not 0 <= q < n for q in targets):
        raise StateError(f"target qubits {targets} out of range for {n} qubits")

    # C-order reshape puts qubit q on axis n-1-q; likewise for u's in/out axes.
    psi = state.amplitudes.reshape((2,) * n)
    op = u.matrix.reshape((2,) * (2 * k))
    state_axes = [n - 1 - targets[k - 1 - j] for j in range(k)]
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), state_axes))
    out = np.moveaxis(out, list(range(k)), state_axes)
    return PureState(n, out.reshape(-1))


def pauli_hamiltonian(num_qubits: int, bias=0.0, tunneling=DEFAULT_DELTA,
                      coupling: float | None = None,
                      edges: Iterable[tuple[int, int]] = ()) -> np.ndarray:
    """H = sum eps_i Z_i + delta_i X_i + sum_{(i,j)} J Z_i Z_j.

    ``bias`` and ``tunneling`` may be scalars or per-qubit sequences;
    ``coupling`` defaults to 0.1 * mean tunneling.  Z|0> = +|0>.
    """
    n = num_qubits
    eps = np.broadcast_to(np.asarray(bias, dtype=float), (n,))
    delta = np.broadcast_to(np.asarray(tunneling, dtype=float), (n,))
    if coupling is None:
        coupling = 0.1 * float(np.mean(delta))
    dim = 1 << n
    idx = np.arange(dim)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)   # (dim, n) of +-1
    diag = z @ eps
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise StateError(f"bad coupling edge ({i}, {j})")
        diag = diag + coupling * z[:, i] * z[:, j]
    h = np.diag(diag).astype(complex)
    for q in range(n):
        h[idx ^ (1 << q), idx] += delta[q]
    return h


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = m.shape[0] if m.ndim == 2 else 0
        if m.ndim != 2 or m.shape != (d, d) or d < 2 or d & (d - 1):
            raise StateError(f"Hamiltonian must be 2^k square, got shape {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * scale:
            raise StateError("Hamiltonian is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        evals, evecs = np.linalg.eigh(m)
        object.__setattr__(self, "_eig", (evals, evecs))

    @classmethod
    def tubulin(cls, num_qubits: int, bias=0.0, tunneling=DEFAULT_DELTA,
                coupling: float | None = None, edges=()) -> Hamiltonian:
        return cls(pauli_hamiltonian(num_qubits, bias, tunneling, coupling, edges))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def propagator(self, dt: float) -> np.ndarray:
        """exp(-i H dt) by eigendecomposition."""
        evals, evecs = self._eig
        return (evecs * np.exp(-1j * evals * dt)) @ evecs.conj().T


def schrodinger_step(h: Hamiltonian, state: PureState, dt: float) -> PureState:
    if h.dim != state.dim:
        raise StateError(f"Hamiltonian dim {h.dim} does not match state dim {state.dim}")
    if not dt > 0:
        raise StateError(f"dt must be positive, got {dt}")
    return PureState(state.num_qubits, h.propagator(dt) @ state.amplitudes)


def evolve(h: Hamiltonian, state: PureState, dt: float, steps: int) -> PureState:
    """Repeated ``schrodinger_step`` sharing one propagator."""
    if h.dim != state.dim:
        raise StateError(f"Hamiltonian dim {h.dim} does not match state dim {state.dim}")
    if not dt > 0:
        raise StateError(f"dt must be positive, got {dt}")
    u = h.propagator(dt)
    psi = state.amplitudes
    for _ in range(steps):
        psi = u @ psi
    return PureState(state.num_qubits, psi)


@lru_cache(maxsize=256)
def _bit_mask(num_qubits: int, qubit: int) -> np.ndarray:
    mask = ((np.arange(1 << num_qubits) >> qubit) & 1).astype(bool)
    mask.setflags(write=False)
    return mask


def qubit_probability(state: PureState, qubit: int) -> float:
    """Probability that ``qubit`` reads 1."""
    if not 0 <= qubit < state.num_qubits:
        raise StateError(f"qubit {qubit} out of range for {state.num_qubits} qubits")
    a = state.amplitudes[_bit_mask(state.num_qubits, qubit)]
    return float(np.vdot(a, a).real)


def project(state: PureState, qubit: int, outcome: int) -> tuple[float, PureState]:
    """Project ``qubit`` onto ``outcome``; returns (branch probability, renormalized state)."""
    if not 0 <= qubit < state.num_qubits:
        raise StateError(f"qubit {qubit} out of range for {state.num_qubits} qubits")
    if outcome not in (0, 1):
        raise StateError(f"outcome must be 0 or 1, got {outcome}")
    mask = _bit_mask(state.num_qubits, qubit)
    amps = state.amplitudes * (mask if outcome else ~mask)
    p = float(np.vdot(amps, amps).real)
    if p < ZERO_NORM:
        raise StateError(f"outcome {outcome} on qubit {qubit} has zero probability")
    amps /= np.sqrt(p)
    amps.setflags(write=False)
    return p, PureState._trusted(state.num_qubits, amps)


def measure_qubit(state: PureState, qubit: int,
                  rng: np.random.Generator) -> tuple[int, PureState]:
    """Projective Z measurement; draws exactly one uniform from ``rng``."""
    p1 = qubit_probability(state, qubit)
    bit = 1 if rng.random() < p1 else 0
    # Guard the p ~ 0 edge so a rounding-level branch is never selected.
    if bit == 1 and p1 < ZERO_NORM:
        bit = 0
    elif bit == 0 and 1.0 - p1 < ZERO_NORM:
        bit = 1
    return bit, project(state, qubit, bit)[1]


def sample_sequential(state: PureState, qubits: Sequence[int], shots: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Outcomes of measuring ``qubits`` in order on ``shots`` fresh copies of ``state``.

    Returns an int array of shape (shots, len(qubits)).  Consumes ``rng``
    exactly as ``shots`` rounds of successive ``measure_qubit`` calls would, so
    both paths give identical outcomes for the same seed.
    """
    qubits = [int(q) for q in qubits]
    if any(not 0 <= q < state.num_qubits for q in qubits) or len(set(qubits)) != len(qubits):
        raise StateError(f"bad qubit list {qubits}")
    k = len(qubits)
    idx = np.arange(state.dim)
    key = np.zeros(state.dim, dtype=np.int64)
    for j, q in enumerate(qubits):
        key |= ((idx >> q) & 1) << j
    # prefix marginals: mass[j][m] = P(first j outcomes spell m)
    joint = np.bincount(key, weights=state.probabilities(), minlength=1 << k)
    mass = [None] * (k + 1)
    mass[k] = joint
    for j in range(k - 1, -1, -1):
        mass[j] = mass[j + 1][: 1 << j] + mass[j + 1][1 << j:]
    u = rng.random((shots, k))
    out = np.zeros((shots, k), dtype=np.int64)
    prefix = np.zeros(shots, dtype=np.int64)
    for j in range(k):
        total = mass[j][prefix]
        p1 = np.divide(mass[j + 1][prefix | (1 << j)], total,
                       out=np.zeros(shots), where=total > 0)
        bit = u[:, j] < p1
        bit &= ~(p1 < ZERO_NORM)
        bit |= (1.0 - p1) < ZERO_NORM
        out[:, j] = bit
        prefix |= bit.astype(np.int64) << j
    return out


def sample_basis(state: PureState, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` full-register outcomes (basis indices) without collapsing."""
    cdf = np.cumsum(state.probabilities())
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(shots), side="right").clip(0, state.dim - 1)


# -- text serialization -----------------------------------------------------

def dumps_state(state: PureState) -> str:
    lines = [f"n={state.num_qubits}"]
    for i, c in enumerate(state.amplitudes):
        if c != 0:
            lines.append(f"{i} {c.real:.17g} {c.imag:.17g}")
    return "\n".join(lines) + "\n"


def loads_state(text: str) -> PureState:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or not rows[0].startswith("n="):
        raise StateError("state text must start with 'n=<qubits>'")
    try:
        n = int(rows[0][2:])
    except ValueError:
        raise StateError(f"bad header {rows[0]!r}") from None
    if n < 1:
        raise StateError(f"bad qubit count {n}")
    amps = np.zeros(1 << n, dtype=complex)
    for ln in rows[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise StateError(f"bad amplitude line {ln!r}")
        try:
            i, re, im = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise StateError(f"bad amplitude line {ln!r}") from None
        if not 0 <= i < amps.size:
            raise StateError(f"index {i} out of range")
        amps[i] = complex(re, im)
    return make_state(n, amps)
