import numpy as np
import pytest
from helpers import H2_FCIDUMP, pair_expectation_direct, random_ansatz, random_integrals

from forgesim.errors import DataError
from forgesim.fci import build_hamiltonian_dense_fock, fci_solve
from forgesim.forging import (
    EFAnsatz,
    GroundConfig,
    assembled_wavefunction,
    build_ef_circuit,
    default_basis_states,
    default_schedule,
    ef_expectation,
    ef_matrix_element,
    hf_pair_energy,
    measurement_set_exact,
    measurement_set_sampled,
    optimal_lambda,
    optimize_ground_state,
    schmidt_matrix,
)
from forgesim.integrals import cholesky_eri, parse_fcidump
from forgesim.operators import build_hamiltonian_tensor
from forgesim.paulis import PauliSum
from forgesim.simulator import NoiseModel


def _random_pauli_sum(m, seed, n_terms=6):
    rng = np.random.default_rng(seed)
    out = PauliSum.zero(m)
    for _ in range(n_terms):
        label = "".join(rng.choice(list("IXYZ"), size=m))
        coef = complex(rng.normal(), rng.normal())
        out = out + PauliSum.from_label(label, coef)
    return out.pruned()


@pytest.mark.parametrize("m", [2, 3])
def test_matrix_element_reconstruction(m):
    """The four-phase record combination must reproduce <u_k|op|u_l> exactly,
    pinning the reconstruction weights against the statevector."""
    ansatz = random_ansatz(m, seed=m)
    ms = measurement_set_exact(ansatz)
    u = [ansatz.half_state(k).amplitudes for k in range(ansatz.k)]
    op = _random_pauli_sum(m, seed=5 * m)
    dense = op.to_dense()
    for k in range(ansatz.k):
        for l in range(ansatz.k):
            want = np.vdot(u[k], dense @ u[l])
            got, sigma = ef_matrix_element(op, ms, k, l)
            assert abs(got - want) < 1e-10
            assert sigma == 0.0


def test_expectation_matches_doubled_register_oracle():
    m = 3
    ansatz = random_ansatz(m, seed=2)
    ms = measurement_set_exact(ansatz)
    ints = random_integrals(m, seed=8)
    h_op = build_hamiltonian_tensor(ints, cholesky_eri(ints))
    psi = assembled_wavefunction(ansatz).amplitudes.reshape(2**m, 2**m)
    want = pair_expectation_direct(h_op, psi)
    assert abs(want.imag) < 1e-10
    got, sigma = ef_expectation(h_op, ms, ansatz.lam)
    assert abs(got - want.real) < 1e-10
    assert sigma == 0.0


def test_assembled_wavefunction_is_normalized():
    ansatz = random_ansatz(4, seed=9)
    psi = assembled_wavefunction(ansatz)
    assert np.isclose(np.linalg.norm(psi.amplitudes), 1.0, atol=1e-12)


def test_schmidt_matrix_eigenpair_consistency():
    ints = parse_fcidump(H2_FCIDUMP)
    ansatz = random_ansatz(2, seed=4)
    ms = measurement_set_exact(ansatz)
    h_op = build_hamiltonian_tensor(ints, cholesky_eri(ints))
    h, sig = schmidt_matrix(h_op, ms)
    assert np.allclose(h, h.T, atol=1e-10)
    assert np.allclose(sig, 0.0)
    lam, eps = optimal_lambda(h)
    assert lam[0] >= 0.0
    assert np.isclose(lam @ h @ lam, eps, atol=1e-12)
    value, _ = ef_expectation(h_op, ms, lam)
    assert np.isclose(value, eps, atol=1e-10)
    # the eigenvalue is the variational optimum over normalized lam
    rng = np.random.default_rng(0)
    for _ in range(20):
        trial = rng.normal(size=len(lam))
        trial /= np.linalg.norm(trial)
        assert trial @ h @ trial >= eps - 1e-12


def test_optimal_lambda_rejects_asymmetry():
    with pytest.raises(DataError):
        optimal_lambda(np.array([[0.0, 1.0], [0.5, 0.0]]))


def test_hf_pair_energy_is_determinant_diagonal():
    for seed in (0, 1):
        ints = random_integrals(3, seed=seed, n_up=2, n_dn=2)
        m = ints.norb
        mask = sum(1 << i for i in range(ints.n_up))
        idx = mask + (mask << m)
        want = build_hamiltonian_dense_fock(ints)[idx, idx] + ints.e0
        assert np.isclose(hf_pair_energy(ints), want, atol=1e-10)


def test_default_layout_six_modes():
    assert default_basis_states(6, 3) == ["111000", "110100"]
    assert default_schedule(6) == [(0, 1), (3, 4), (1, 2), (4, 5), (0, 1), (3, 4)]
    assert default_schedule(2) == [(0, 1), (0, 1)]


def test_ansatz_validation():
    good = dict(
        m=2, basis_states=("10", "01"), theta=np.zeros(2),
        lam=np.array([1.0, 0.0]), schedule=((0, 1), (0, 1)),
    )
    EFAnsatz(**good)
    with pytest.raises(DataError):
        EFAnsatz(**{**good, "basis_states": ("10", "10")})
    with pytest.raises(DataError):
        EFAnsatz(**{**good, "basis_states": ("10", "11")})
    with pytest.raises(DataError):
        EFAnsatz(**{**good, "lam": np.array([1.0, 1.0])})
    with pytest.raises(DataError):
        EFAnsatz(**{**good, "theta": np.zeros(1)})
    with pytest.raises(DataError):
        EFAnsatz(**{**good, "basis_states": ("102", "011")})


def test_ground_state_optimization_reaches_fci():
    """K=2 at two modes spans the full singlet sector, so the variational
    minimum must land on the exact ground energy."""
    ints = parse_fcidump(H2_FCIDUMP)
    fci = fci_solve(ints, n_roots=1)
    cfg = GroundConfig(seed=0, restarts=3, max_iter=200)
    res = optimize_ground_state(ints, cfg)
    assert res.converged
    assert abs(res.energy - fci.energies[0]) < 1e-8
    assert res.ansatz.lam[0] >= 0
    again = optimize_ground_state(ints, GroundConfig(seed=0, restarts=3, max_iter=200))
    assert again.energy == res.energy
    assert np.array_equal(again.ansatz.theta, res.ansatz.theta)
    assert res.trace, "optimizer must record its trace"
    row = res.trace[0]
    assert {"iteration", "energy", "grad_norm"} <= set(row)


def test_sampled_measurement_set_layout():
    ansatz = random_ansatz(2, seed=1)
    noise = NoiseModel(shots=500, seed=7)
    ms = measurement_set_sampled(ansatz, noise)
    ms.validate()
    assert ms.mode == "sampled"
    assert ms.meta == {"shots": 500, "seed": 7}
    keys = set(ms.records)
    assert keys == {(0, 0, 0), (1, 1, 0)} | {(0, 1, p) for p in range(4)}
    with pytest.raises(DataError):
        ms.record(1, 0, 2)
    rec = ms.record(0, 1, 3)
    assert rec.sigma.max() > 0


def test_ef_circuit_provenance_tags():
    ansatz = random_ansatz(2, seed=0)
    circ = build_ef_circuit(ansatz, 0, 1, 2)
    assert circ.provenance == (0, 1, 2)
    other = build_ef_circuit(ansatz, 0, 1, 3)
    assert circ.seed_tag != other.seed_tag
