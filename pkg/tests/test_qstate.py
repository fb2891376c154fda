import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qbrain.qstate import (
    DEFAULT_DELTA, Hamiltonian, NormDriftError, PureState, StateError, UnitaryOperator,
    apply_operator, basis_state, dumps_state, evolve, from_kets, inner_product, ket_index,
    loads_state, make_state, measure_qubit, pauli_hamiltonian, probability, project,
    qubit_probability, random_state, sample_basis, sample_sequential, schrodinger_step,
    tensor_product,
)

SQ5 = math.sqrt(5)
HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def sample_psi():
    # (2/sqrt5)|1> + (1/sqrt5)|0>, index order (|0>, |1>)
    return make_state(1, [1 / SQ5, 2 / SQ5])


def full_operator(u, targets, n):
    """Brute-force 2^n matrix of u acting on ``targets`` (bit k of u <-> targets[k])."""
    dim = 1 << n
    big = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        sub_in = sum(((col >> q) & 1) << k for k, q in enumerate(targets))
        rest = col
        for q in targets:
            rest &= ~(1 << q)
        for sub_out in range(u.shape[0]):
            row = rest | sum(((sub_out >> k) & 1) << q for k, q in enumerate(targets))
            big[row, col] += u[sub_out, sub_in]
    return big


def random_unitary(k, rng):
    z = rng.normal(size=(1 << k, 1 << k)) + 1j * rng.normal(size=(1 << k, 1 << k))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# -- construction ---------------------------------------------------------------

def test_make_state_normalizes_example():
    psi = sample_psi()
    assert abs(psi.amplitudes[1]) ** 2 == pytest.approx(0.8, abs=1e-12)
    assert abs(psi.amplitudes[0]) ** 2 == pytest.approx(0.2, abs=1e-12)
    # proportional input gives the same state
    assert np.allclose(make_state(1, [1, 2]).amplitudes, psi.amplitudes, atol=1e-15)


def test_make_state_basis():
    s = make_state(1, [1, 0])
    assert s.amplitudes.tolist() == [1, 0]


def test_make_state_unnormalized():
    s = make_state(2, [1, 1, 0, 1])
    norm = math.sqrt(sum(abs(x) ** 2 for x in [1, 1, 0, 1]))
    assert norm == pytest.approx(math.sqrt(3))
    for i in (0, 1, 3):
        assert s.amplitudes[i] == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert s.amplitudes[2] == 0


@pytest.mark.parametrize("amps", [[0, 0], [1e-16, 0]])
def test_make_state_rejects_zero_norm(amps):
    with pytest.raises(StateError):
        make_state(1, amps)


def test_make_state_rejects_bad_length():
    with pytest.raises(StateError):
        make_state(2, [1, 0, 0])
    with pytest.raises(StateError):
        make_state(1, [np.nan, 1])


def test_states_are_immutable():
    s = sample_psi()
    with pytest.raises(ValueError):
        s.amplitudes[0] = 1


def test_ket_labels_follow_qubit_order():
    assert ket_index("00") == 0
    assert ket_index("10") == 1
    assert ket_index("01") == 2
    assert ket_index("011") == 6
    with pytest.raises(StateError):
        ket_index("0a")


# -- probability / inner product -------------------------------------------------

def test_probability_examples():
    assert probability(sample_psi(), 1) == pytest.approx(0.8, abs=1e-12)
    assert probability(basis_state(1, 0), 0) == 1.0
    uniform = make_state(3, np.ones(8))
    outcomes = [probability(uniform, i) for i in range(8)]
    assert outcomes == pytest.approx([0.125] * 8, abs=1e-15)
    with pytest.raises(StateError):
        probability(uniform, 8)


def test_inner_product_examples():
    zero, one = basis_state(1, 0), basis_state(1, 1)
    assert inner_product(zero, zero) == 1
    assert inner_product(one, zero) == 0
    amp = inner_product(one, sample_psi())
    assert amp == pytest.approx(2 / SQ5, abs=1e-15)
    assert abs(amp) ** 2 == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(StateError):
        inner_product(zero, basis_state(2, 0))


def test_inner_product_conjugate_linear_first_argument():
    rng = np.random.default_rng(3)
    a, b = random_state(2, rng), random_state(2, rng)
    assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)))
    ia = PureState(2, 1j * a.amplitudes)
    assert inner_product(ia, b) == pytest.approx(-1j * inner_product(a, b))


# -- tensor product --------------------------------------------------------------

def test_tensor_product_gives_X_state():
    plus = make_state(1, [1, 1])
    x = tensor_product(basis_state(1, 0), plus)
    expected = from_kets({"00": 1, "01": 1})
    assert np.allclose(x.amplitudes, expected.amplitudes, atol=1e-15)
    assert x.num_qubits == 2


def test_tensor_product_basis():
    s = tensor_product(basis_state(1, 0), basis_state(1, 0))
    assert s.amplitudes.tolist() == [1, 0, 0, 0]


def test_tensor_product_amplitudes_by_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(100):
        na, nb = rng.integers(1, 4, size=2)
        a, b = random_state(int(na), rng), random_state(int(nb), rng)
        ab = tensor_product(a, b)
        assert abs(ab.norm() - 1) < 1e-10
        for i in range(a.dim):
            for j in range(b.dim):
                assert ab.amplitudes[i + (j << a.num_qubits)] == pytest.approx(
                    a.amplitudes[i] * b.amplitudes[j], abs=1e-14)


# -- operators --------------------------------------------------------------------

def test_hadamard_like_operator_example():
    a = UnitaryOperator.from_high_first(HADAMARD)
    out = apply_operator(a, sample_psi(), [0])
    assert out.amplitudes[1] == pytest.approx(3 / math.sqrt(10), abs=1e-12)
    assert out.amplitudes[0] == pytest.approx(1 / math.sqrt(10), abs=1e-12)


def test_identity_leaves_state_unchanged():
    psi = random_state(3, np.random.default_rng(0))
    out = apply_operator(UnitaryOperator(np.eye(4)), psi, [2, 0])
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def test_operator_applied_twice_is_identity():
    a = UnitaryOperator.from_high_first(HADAMARD)
    # 2x2 matrix-product oracle
    assert np.allclose(a.matrix @ a.matrix, np.eye(2), atol=1e-15)
    psi = sample_psi()
    twice = apply_operator(a, apply_operator(a, psi, [0]), [0])
    assert np.allclose(twice.amplitudes, psi.amplitudes, atol=1e-12)


def test_apply_operator_matches_brute_force_matrix():
    rng = np.random.default_rng(5)
    for _ in range(60):
        n = int(rng.integers(1, 5))
        k = int(rng.integers(1, n + 1))
        targets = [int(q) for q in rng.permutation(n)[:k]]
        u = random_unitary(k, rng)
        psi = random_state(n, rng)
        got = apply_operator(UnitaryOperator(u), psi, targets).amplitudes
        want = full_operator(u, targets, n) @ psi.amplitudes
        assert np.allclose(got, want, atol=1e-12)


def test_apply_operator_validation():
    psi = basis_state(2, 0)
    h = UnitaryOperator(HADAMARD)
    with pytest.raises(StateError):
        apply_operator(h, psi, [2])
    with pytest.raises(StateError):
        apply_operator(UnitaryOperator(np.eye(4)), psi, [0, 0])
    with pytest.raises(StateError):
        apply_operator(h, psi, [0, 1])
    with pytest.raises(StateError):
        UnitaryOperator(np.array([[1, 1], [0, 1]]))
    with pytest.raises(StateError):
        UnitaryOperator(np.eye(3))


def test_eigenvalue_action():
    rng = np.random.default_rng(8)
    for _ in range(20):
        k = int(rng.integers(1, 4))
        u = random_unitary(k, rng)
        evals, evecs = np.linalg.eig(u)
        for j in range(len(evals)):
            v = make_state(k, evecs[:, j])
            out = apply_operator(UnitaryOperator(u), v, list(range(k)))
            assert np.allclose(out.amplitudes, evals[j] * v.amplitudes, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_unitaries_preserve_inner_products(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_state(n, rng), random_state(n, rng)
    k = int(rng.integers(1, n + 1))
    targets = [int(q) for q in rng.permutation(n)[:k]]
    u = UnitaryOperator(random_unitary(k, rng))
    ua, ub = apply_operator(u, a, targets), apply_operator(u, b, targets)
    assert abs(inner_product(ua, ub) - inner_product(a, b)) < 1e-9
    assert abs(ua.norm() - 1) < 1e-10
    h = Hamiltonian(pauli_hamiltonian(n, rng.normal(size=n), rng.normal(size=n), 0.3,
                                      [(i, i + 1) for i in range(n - 1)]))
    ha, hb = schrodinger_step(h, a, 0.7), schrodinger_step(h, b, 0.7)
    assert abs(inner_product(ha, hb) - inner_product(a, b)) < 1e-9


# -- Hamiltonian and evolution ---------------------------------------------------

PAULI_X = np.array([[0, 1], [1, 0]])
PAULI_Z = np.diag([1, -1])


def kron_list(ops):
    """Kron with qubit 0 as the last (least significant) factor."""
    out = np.eye(1)
    for op in reversed(ops):
        out = np.kron(out, op)
    return out


def test_hamiltonian_matches_kron_construction():
    n, eps, delta, j = 3, [0.3, -0.2, 0.5], [1.0, 0.7, 1.3], 0.4
    edges = [(0, 1), (1, 2)]
    want = np.zeros((8, 8), dtype=complex)
    for q in range(n):
        ops = [np.eye(2)] * n
        ops[q] = eps[q] * PAULI_Z + delta[q] * PAULI_X
        want += kron_list(ops)
    for a, b in edges:
        ops = [np.eye(2)] * n
        ops[a], ops[b] = PAULI_Z, PAULI_Z
        want += j * kron_list(ops)
    got = pauli_hamiltonian(n, eps, delta, j, edges)
    assert np.allclose(got, want, atol=1e-15)
    h = Hamiltonian(got)
    assert np.max(np.abs(h.matrix - h.matrix.conj().T)) < 1e-12


def test_hamiltonian_default_coupling_is_tenth_of_delta():
    h = pauli_hamiltonian(2, 0.0, 2.0, None, [(0, 1)])
    assert h[0, 0].real == pytest.approx(0.2)


def test_non_hermitian_rejected():
    with pytest.raises(StateError):
        Hamiltonian(np.array([[0, 1], [0, 0]]))


def test_zero_hamiltonian_leaves_state():
    psi = random_state(2, np.random.default_rng(1))
    out = schrodinger_step(Hamiltonian(np.zeros((4, 4))), psi, 1.0)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-15)


def test_single_qubit_flip_matches_closed_form():
    h = Hamiltonian.tubulin(1, bias=0.0, tunneling=DEFAULT_DELTA)
    assert 1 / DEFAULT_DELTA == pytest.approx(1e-11)
    a = basis_state(1, 0)
    for t in np.linspace(1e-13, 3e-11, 25):
        # exp(-i D X t) = cos(Dt) I - i sin(Dt) X
        closed = np.array([math.cos(DEFAULT_DELTA * t), -1j * math.sin(DEFAULT_DELTA * t)])
        out = schrodinger_step(h, a, t)
        assert np.allclose(out.amplitudes, closed, atol=1e-10)
        assert probability(out, 1) == pytest.approx(math.sin(DEFAULT_DELTA * t) ** 2, abs=1e-10)
    flip = schrodinger_step(h, a, math.pi / (2 * DEFAULT_DELTA))
    assert probability(flip, 1) == pytest.approx(1.0, abs=1e-12)


def test_propagator_matches_pade_expm():
    rng = np.random.default_rng(2)
    m = pauli_hamiltonian(3, rng.normal(size=3), rng.normal(size=3), 0.5, [(0, 1), (1, 2), (0, 2)])
    h = Hamiltonian(m)
    assert np.allclose(h.propagator(0.37), expm(-1j * m * 0.37), atol=1e-12)


def test_diagonal_hamiltonian_keeps_probabilities():
    h = Hamiltonian.tubulin(3, bias=[1.0, 2.0, -0.5], tunneling=0.0, coupling=0.3,
                            edges=[(0, 1), (1, 2)])
    psi = random_state(3, np.random.default_rng(4))
    out = schrodinger_step(h, psi, 2.5)
    assert np.allclose(out.probabilities(), psi.probabilities(), atol=1e-12)


def test_norm_drift_over_1000_steps():
    rng = np.random.default_rng(6)
    for n in (1, 3, 5):
        h = Hamiltonian.tubulin(n, bias=rng.normal(size=n) * 1e10, edges=[(i, i + 1) for i in range(n - 1)])
        psi = random_state(n, rng)
        s = psi
        for _ in range(1000):
            s = schrodinger_step(h, s, 1e-13)
        assert abs(s.norm() - 1) <= 1e-10
        s.check_norm()
        assert np.allclose(evolve(h, psi, 1e-13, 1000).amplitudes, s.amplitudes, atol=1e-10)


def test_schrodinger_validation():
    h = Hamiltonian.tubulin(1)
    with pytest.raises(StateError):
        schrodinger_step(h, basis_state(2, 0), 1e-12)
    with pytest.raises(StateError):
        schrodinger_step(h, basis_state(1, 0), 0.0)


def test_check_norm_raises_on_drift():
    bad = PureState(1, np.array([1.0, 0.1]))
    with pytest.raises(NormDriftError):
        bad.check_norm()


# -- measurement ------------------------------------------------------------------

def test_measure_sample_state_frequency():
    rng = np.random.default_rng(2024)
    psi = sample_psi()
    ones = sum(measure_qubit(psi, 0, rng)[0] for _ in range(100_000))
    assert ones / 100_000 == pytest.approx(0.8, abs=0.01)


def test_measure_basis_state_is_certain():
    rng = np.random.default_rng(0)
    zero = basis_state(1, 0)
    for _ in range(100):
        bit, post = measure_qubit(zero, 0, rng)
        assert bit == 0
        assert np.array_equal(post.amplitudes, zero.amplitudes)


def test_measure_collapse_is_repeatable():
    rng = np.random.default_rng(1)
    for _ in range(200):
        psi = random_state(3, rng)
        q = int(rng.integers(3))
        bit, post = measure_qubit(psi, q, rng)
        assert abs(post.norm() - 1) < 1e-10
        assert qubit_probability(post, q) == pytest.approx(float(bit), abs=1e-12)
        assert all(measure_qubit(post, q, rng)[0] == bit for _ in range(5))


def test_four_qubit_sequential_measurement_matches_enumeration():
    rng = np.random.default_rng(77)
    psi = random_state(4, rng)
    shots = 100_000
    counts = np.zeros(16)
    for _ in range(shots):
        s, idx = psi, 0
        for q in range(4):
            bit, s = measure_qubit(s, q, rng)
            idx |= bit << q
        counts[idx] += 1
    exact = [abs(psi.amplitudes[i]) ** 2 for i in range(16)]
    assert 0.5 * np.sum(np.abs(counts / shots - exact)) < 0.02


def test_sample_sequential_reproduces_measure_qubit_stream():
    for n in (1, 2, 3, 4):
        psi = random_state(n, np.random.default_rng(n))
        order = [int(q) for q in np.random.default_rng(n + 10).permutation(n)]
        fast = sample_sequential(psi, order, 3000, np.random.default_rng(99))
        rng = np.random.default_rng(99)
        slow = []
        for _ in range(3000):
            s, row = psi, []
            for q in order:
                bit, s = measure_qubit(s, q, rng)
                row.append(bit)
            slow.append(row)
        assert np.array_equal(fast, np.array(slow))


def test_sample_basis_distribution():
    psi = random_state(3, np.random.default_rng(12))
    idx = sample_basis(psi, 100_000, np.random.default_rng(13))
    freq = np.bincount(idx, minlength=8) / 100_000
    assert 0.5 * np.sum(np.abs(freq - psi.probabilities())) < 0.02


def test_measurement_determinism():
    psi = random_state(3, np.random.default_rng(0))
    a = sample_sequential(psi, [0, 1, 2], 500, np.random.default_rng(42))
    b = sample_sequential(psi, [0, 1, 2], 500, np.random.default_rng(42))
    assert np.array_equal(a, b)
    ra, rb = np.random.default_rng(5), np.random.default_rng(5)
    assert [measure_qubit(psi, 1, ra)[0] for _ in range(100)] == \
        [measure_qubit(psi, 1, rb)[0] for _ in range(100)]


def test_project_rejects_impossible_outcome():
    with pytest.raises(StateError):
        project(basis_state(2, 0), 1, 1)


# -- text format ------------------------------------------------------------------

def test_state_text_round_trip():
    psi = random_state(3, np.random.default_rng(21))
    text = dumps_state(psi)
    assert text.splitlines()[0] == "n=3"
    assert len(text.splitlines()) == 9
    back = loads_state(text)
    assert np.allclose(back.amplitudes, psi.amplitudes, atol=1e-15)


def test_state_text_skips_zero_amplitudes():
    text = dumps_state(from_kets({"00": 1, "11": 1}))
    lines = text.splitlines()
    assert lines[0] == "n=2"
    assert [ln.split()[0] for ln in lines[1:]] == ["0", "3"]
    assert len(lines[1].split()[1].replace("0.", "").rstrip("0")) >= 15


@pytest.mark.parametrize("text", ["", "x=1\n", "n=1\n0 1\n", "n=1\n5 1 0\n", "n=1\n"])
def test_state_text_rejects_malformed(text):
    with pytest.raises(StateError):
        loads_state(text)
