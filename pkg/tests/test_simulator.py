import numpy as np
import pytest

from forgesim.errors import CoverageError, DataError
from forgesim.forging import default_basis_states, default_schedule
from forgesim.simulator import (
    Circuit,
    NoiseModel,
    State,
    all_bases,
    assemble_bloch,
    brickwork_circuit,
    circuit_output_state,
    exact_bloch,
    hop_matrix,
    prep_circuit_phi,
    prepare_phi,
    sample_counts,
    tomography,
)


def test_hop_matrix_is_unitary_and_number_conserving():
    number = np.diag([0.0, 1.0, 1.0, 2.0])
    for theta in (-1.3, 0.0, 0.4, np.pi / 2):
        u = hop_matrix(theta)
        assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
        assert np.allclose(u @ number - number @ u, 0.0, atol=1e-12)
    # theta=0 is not the identity: the gate keeps its -1 phase on |11>
    assert np.allclose(hop_matrix(0.0), np.diag([1.0, 1.0, 1.0, -1.0]), atol=1e-12)
    u = hop_matrix(0.3)
    assert np.isclose(u[1, 1], np.cos(0.3)) and np.isclose(u[2, 1], np.sin(0.3))


def test_prep_circuit_matches_exact_superposition():
    rng = np.random.default_rng(7)
    n = 4
    for p in range(4):
        for _ in range(6):
            perm = rng.permutation(n)
            x_k = "".join("1" if q in perm[:2] else "0" for q in range(n))
            x_l = "".join("1" if q in perm[1:3] else "0" for q in range(n))
            circ = prep_circuit_phi(x_k, x_l, p)
            got = circuit_output_state(circ)
            want = prepare_phi(x_k, x_l, p)
            assert np.allclose(got.amplitudes, want.amplitudes, atol=1e-12)
    # diagonal case: plain product state
    same = prep_circuit_phi("1100", "1100", 0)
    assert np.allclose(
        circuit_output_state(same).amplitudes, prepare_phi("1100", "1100", 0).amplitudes
    )


def test_superposition_rejects_bad_pairs():
    with pytest.raises(DataError):
        prepare_phi("110", "100", 0)
    with pytest.raises(DataError):
        prepare_phi("110", "110", 1)
    with pytest.raises(DataError):
        prep_circuit_phi("11", "110", 0)
    with pytest.raises(DataError):
        prep_circuit_phi("110", "110", 2)


def test_six_mode_pair_circuit_entangling_count():
    """Full forged-pair circuit at m=6: one CX in the superposition fan-out
    plus six hop gates at three CX each gives 19 entangling gates."""
    x0, x1 = default_basis_states(6, 3)
    schedule = default_schedule(6)
    assert len(schedule) == 6
    circ = prep_circuit_phi(x0, x1, 0)
    brickwork_circuit(circ, np.full(len(schedule), 0.3), schedule)
    assert circ.two_qubit_equivalent_count() == 19


def test_gate_validation():
    circ = Circuit(4)
    with pytest.raises(DataError):
        circ.hop(0.2, 0, 2)   # non-adjacent
    with pytest.raises(DataError):
        circ.cx(1, 1)
    with pytest.raises(DataError):
        circ.x(4)


def test_exact_bloch_known_states():
    zero = exact_bloch(State.from_bitstring("0"))
    assert np.allclose(zero.a, [1.0, 0.0, 0.0, 1.0], atol=1e-12)
    plus = exact_bloch(State(1, np.array([1.0, 1.0]) / np.sqrt(2.0)))
    assert np.allclose(plus.a, [1.0, 1.0, 0.0, 0.0], atol=1e-12)
    assert np.isclose(plus.purity(), 1.0, atol=1e-12)
    two = exact_bloch(State.from_bitstring("01"))
    # qubit 0 is |0>, qubit 1 is |1>; Z digits live at 4^q * 3
    assert np.isclose(two.a[3], 1.0)
    assert np.isclose(two.a[12], -1.0)
    assert np.isclose(two.a[15], -1.0)
    assert two.a[0] == 1.0


def test_all_bases_order_and_count():
    assert all_bases(1) == ["X", "Y", "Z"]
    bases = all_bases(2)
    assert len(bases) == 9 and len(set(bases)) == 9
    assert bases[:4] == ["XX", "YX", "ZX", "XY"]


def test_sample_counts_deterministic_and_unbiased():
    circ = Circuit(2).h(0).cx(0, 1)
    noise = NoiseModel(shots=40_000, seed=11)
    counts = sample_counts(circ, "ZZ", noise)
    assert counts == sample_counts(circ, "ZZ", noise)
    assert sum(counts.values()) == noise.shots
    # Bell state: only 00 and 11, each near half
    assert set(counts) == {"00", "11"}
    assert abs(counts["00"] / noise.shots - 0.5) < 5 * np.sqrt(0.25 / noise.shots)
    other = sample_counts(circ, "ZZ", NoiseModel(shots=40_000, seed=12))
    assert other != counts


def test_depolarizing_leaks_particle_number():
    circ = Circuit(3).x(0).x(1).hop(0.4, 1, 2)
    clean = sample_counts(circ, "ZZZ", NoiseModel(shots=5000, seed=0))
    assert all(k.count("1") == 2 for k in clean)
    noisy = sample_counts(circ, "ZZZ", NoiseModel(depol2=0.3, shots=5000, seed=0))
    assert any(k.count("1") != 2 for k in noisy)


def test_readout_flip_marginals():
    circ = Circuit(2)
    p01 = 0.08
    noise = NoiseModel(readout_p01=p01, shots=60_000, seed=5)
    counts = sample_counts(circ, "ZZ", noise)
    tol = 5 * np.sqrt(p01 * (1 - p01) / noise.shots)
    for q in range(2):
        ones = sum(c for k, c in counts.items() if k[q] == "1")
        assert abs(ones / noise.shots - p01) < tol


def test_pauli_insertions_after_gate():
    circ = Circuit(2).cx(0, 1)
    base = circuit_output_state(circ)
    # ZZ insertion is diagonal: |00> picks up no sign
    inserted = circ.apply(State.from_bitstring("00"), insertions={0: 15})
    assert np.allclose(inserted.amplitudes, base.amplitudes, atol=1e-12)
    # XX insertion flips both qubits
    flipped = circ.apply(State.from_bitstring("00"), insertions={0: 5})
    assert np.isclose(abs(flipped.amplitudes[3]), 1.0)


def test_tomography_exact_path_equals_statevector():
    circ = Circuit(2).h(0).hop(0.7, 0, 1)
    direct = exact_bloch(circuit_output_state(circ))
    tomo = tomography(circ)
    assert np.allclose(tomo.a, direct.a, atol=1e-12)
    assert np.allclose(tomo.sigma, 0.0)


def test_sampled_tomography_within_errorbars():
    circ = Circuit(2).h(0).hop(0.9, 0, 1)
    exact = tomography(circ)
    sampled = tomography(circ, noise=NoiseModel(shots=20_000, seed=3))
    resid = np.abs(sampled.a - exact.a)
    assert np.all(resid <= 5.0 * sampled.sigma + 1e-9)
    assert sampled.sigma[1:].max() > 0


def test_assemble_bloch_requires_full_coverage():
    counts = {"Z": {"0": 100}}
    with pytest.raises(CoverageError):
        assemble_bloch(counts, 1)


def test_postselection_applies_to_computational_basis_only():
    counts = {
        "Z": {"0": 500, "1": 500},
        "X": {"0": 300, "1": 300},
        "Y": {"0": 300, "1": 300},
    }
    vec = assemble_bloch(counts, 1, postselect_weight=1)
    assert np.isclose(vec.a[3], -1.0)
    assert np.isclose(vec.a[1], 0.0) and np.isclose(vec.a[2], 0.0)


def test_qasm_text_roundtrip_tokens():
    circ = Circuit(2).x(0).h(1).s_power(3, 0).hop(0.25, 0, 1).cx(1, 0)
    text = circ.qasm_text()
    assert text.startswith("qreg q[2];")
    for token in ("x q[0];", "h q[1];", "spow(3) q[0];", "hop(0.25) q[0],q[1];", "cx q[1],q[0];"):
        assert token in text
