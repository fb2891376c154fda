"""Bipartite entanglement diagnostics for pure states."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .qstate import PureState, StateError, project

FACTOR_TOL = 1e-9


@dataclass(frozen=True)
class BipartiteSplit:
    left: tuple[int, ...]
    right: tuple[int, ...]

    def __post_init__(self):
        left, right = tuple(sorted(set(self.left))), tuple(sorted(set(self.right)))
        if not left or not right:
            raise StateError("both sides of a split must be nonempty")
        if set(left) & set(right):
            raise StateError(f"split sides overlap: {left} / {right}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def of(cls, num_qubits: int, left) -> BipartiteSplit:
        left = set(left)
        return cls(tuple(left), tuple(q for q in range(num_qubits) if q not in left))

    @property
    def num_qubits(self) -> int:
        return len(self.left) + len(self.right)

    def __str__(self):
        return ",".join(map(str, self.left)) + "|" + ",".join(map(str, self.right))


def all_splits(num_qubits: int) -> list[BipartiteSplit]:
    """Every bipartition once, with qubit 0 on the left."""
    rest = range(1, num_qubits)
    out = []
    for r in range(0, num_qubits - 1):
        for extra in itertools.combinations(rest, r):
            out.append(BipartiteSplit.of(num_qubits, (0,) + extra))
    return out


@dataclass(frozen=True)
class SchmidtSpectrum:
    coefficients: tuple[float, ...]

    @property
    def weights(self) -> np.ndarray:
        return np.square(self.coefficients)

    @property
    def rank(self) -> int:
        return int(np.sum(np.asarray(self.coefficients) >= FACTOR_TOL))


def amplitude_matrix(state: PureState, split: BipartiteSplit) -> np.ndarray:
    """Reshape amplitudes to (2^|left|, 2^|right|); row/column bits follow the sorted qubit lists."""
    n = state.num_qubits
    if split.num_qubits != n or set(split.left + split.right) != set(range(n)):
        raise StateError(f"split {split} does not cover {n} qubits")
    psi = state.amplitudes.reshape((2,) * n)
    # axis for qubit q is n-1-q; put the most significant qubit of each side first
    order = [n - 1 - q for q in reversed(split.left)] + [n - 1 - q for q in reversed(split.right)]
    return psi.transpose(order).reshape(1 << len(split.left), 1 << len(split.right))


def schmidt_decompose(state: PureState, split: BipartiteSplit) -> SchmidtSpectrum:
    s = np.linalg.svd(amplitude_matrix(state, split), compute_uv=False)
    return SchmidtSpectrum(tuple(float(x) for x in s))


def schmidt_form(state: PureState, split: BipartiteSplit):
    """(coefficients, left vectors as columns, right vectors as rows)."""
    u, s, vh = np.linalg.svd(amplitude_matrix(state, split), full_matrices=False)
    return s, u, vh


def is_factorizable(state: PureState, split: BipartiteSplit, tol: float = FACTOR_TOL) -> bool:
    if not tol > 0:
        raise StateError(f"tol must be positive, got {tol}")
    c = schmidt_decompose(state, split).coefficients
    return len(c) < 2 or c[1] < tol


def entanglement_entropy(spectrum: SchmidtSpectrum) -> float:
    """Von Neumann entropy of either reduced state, in bits."""
    lam = spectrum.weights
    lam = lam[lam > 1e-300]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def conditional_collapse(state: PureState, qubit: int, outcome: int) -> PureState:
    """Post-measurement state given that ``qubit`` read ``outcome``."""
    return project(state, qubit, outcome)[1]


def marginal(state: PureState, qubits) -> np.ndarray:
    """Outcome distribution of ``qubits``; entry j has bit k equal to qubit ``qubits[k]``."""
    qubits = list(qubits)
    idx = np.arange(state.dim)
    key = np.zeros(state.dim, dtype=int)
    for k, q in enumerate(qubits):
        key |= ((idx >> q) & 1) << k
    return np.bincount(key, weights=state.probabilities(), minlength=1 << len(qubits))


def report(state: PureState, split: BipartiteSplit, tol: float = FACTOR_TOL) -> dict:
    spec = schmidt_decompose(state, split)
    return {
        "split": {"left": list(split.left), "right": list(split.right)},
        "coefficients": [float(f"{c:.15g}") for c in spec.coefficients],
        "entropy_bits": float(f"{entanglement_entropy(spec):.15g}"),
        "factorizable": is_factorizable(state, split, tol),
    }


def report_line(state: PureState, split: BipartiteSplit, tol: float = FACTOR_TOL) -> str:
    return json.dumps(report(state, split, tol), sort_keys=True)
