import numpy as np
import pytest
from helpers import H2_FCIDUMP

from forgesim.errors import ConditioningError, DataError
from forgesim.fci import fci_solve
from forgesim.forging import (
    GroundConfig,
    ef_expectation,
    hamiltonian_for_ansatz,
    measurement_set_exact,
    measurement_set_sampled,
    optimize_ground_state,
)
from forgesim.integrals import parse_fcidump
from forgesim.operators import build_excitations, build_s2_tensor
from forgesim.qse import (
    QSEMatrices,
    assemble_qse_matrices,
    estimate_with_uncertainty,
    qse_full_solve,
    solve_qse,
    spin_project,
)


@pytest.fixture(scope="module")
def h2_setup():
    ints = parse_fcidump(H2_FCIDUMP)
    res = optimize_ground_state(ints, GroundConfig(seed=0, restarts=2, max_iter=200))
    h_op, ints_rot, _ = hamiltonian_for_ansatz(ints, res.ansatz)
    return ints, res.ansatz, h_op


def test_exact_assembly_structure(h2_setup):
    ints, ansatz, h_op = h2_setup
    exc = build_excitations(2, range(1), range(1, 2))
    ms = measurement_set_exact(ansatz)
    mats = assemble_qse_matrices(exc, h_op, build_s2_tensor(2), ms, ansatz.lam)
    assert mats.mode == "exact"
    assert mats.size == 4
    assert mats.labels[0] == "I"
    assert np.allclose(mats.h_sigma, 0.0) and np.allclose(mats.m_sigma, 0.0)
    assert np.allclose(mats.h, mats.h.T, atol=1e-12)
    assert np.isclose(mats.m[0, 0], 1.0, atol=1e-12)
    energy, _ = ef_expectation(h_op, ms, ansatz.lam)
    assert np.isclose(mats.h[0, 0], energy, atol=1e-10)
    assert mats.diagnostics["asymmetry"]["H"] < 1e-10


def test_qse_spectrum_matches_exact_diagonalization(h2_setup):
    """Four excitations on two modes span the whole (1,1) sector, so the
    projected eigenproblem must return the complete exact spectrum."""
    ints, ansatz, h_op = h2_setup
    fci = fci_solve(ints)
    exc = build_excitations(2, range(1), range(1, 2))
    ms = measurement_set_exact(ansatz)
    mats = assemble_qse_matrices(exc, h_op, build_s2_tensor(2), ms, ansatz.lam)
    res = qse_full_solve(mats)
    got = np.sort([st.energy for st in res.states]) + ints.e0
    assert np.allclose(got, fci.energies, atol=1e-8)
    by_energy = sorted(res.states, key=lambda st: st.energy)
    for st, s2_ref in zip(by_energy, fci.s2):
        assert abs(st.spin - s2_ref) < 1e-6
        assert st.s == round(0.5 * (-1 + np.sqrt(1 + 4 * s2_ref)))
        assert not st.unstable and not st.flagged
    singlets = res.energies(s=0)
    assert len(singlets) == 3 and len(res.energies(s=1)) == 1


def test_duplicated_excitation_trips_conditioning_guard(h2_setup):
    ints, ansatz, h_op = h2_setup
    exc = build_excitations(2, range(1), range(1, 2))
    exc = list(exc) + [exc[1]]
    ms = measurement_set_exact(ansatz)
    mats = assemble_qse_matrices(exc, h_op, build_s2_tensor(2), ms, ansatz.lam)
    with pytest.raises(ConditioningError) as err:
        spin_project(mats)
    assert err.value.min_eigenvalue < 1e-8


def test_solve_qse_orders_and_signs():
    h = np.array([[2.0, -1.0], [-1.0, 2.0]])
    evals, vecs = solve_qse(h)
    assert np.allclose(evals, [1.0, 3.0])
    for i in range(2):
        j = np.argmax(np.abs(vecs[:, i]))
        assert vecs[j, i] > 0
    with pytest.raises(DataError):
        solve_qse(np.array([[0.0, 1.0], [0.5, 0.0]]))


def _mats_1x1(h, m, s2, hs, ms_, ss):
    one = lambda v: np.array([[float(v)]])
    return QSEMatrices(
        h=one(h), m=one(m), s2=one(s2),
        h_sigma=one(hs), m_sigma=one(ms_), s2_sigma=one(ss),
        labels=["I"],
    )


def test_uncertainty_closed_form_single_state():
    mats = _mats_1x1(2.0, 0.5, 0.0, 0.1, 0.05, 0.0)
    stats = estimate_with_uncertainty(mats, np.array([1.0]))
    eps = 2.0 / 0.5
    assert np.isclose(stats["energy"], eps)
    want = np.sqrt((0.1 / 0.5) ** 2 + (eps * 0.05 / 0.5) ** 2)
    assert np.isclose(stats["energy_sigma"], want, atol=1e-12)
    assert not stats["unstable"]
    shaky = _mats_1x1(2.0, 0.5, 0.0, 0.1, 0.2, 0.0)
    assert estimate_with_uncertainty(shaky, np.array([1.0]))["unstable"]


def test_measured_assembly_consistent_with_exact(h2_setup):
    ints, ansatz, h_op = h2_setup
    exc = build_excitations(2, range(1), range(1, 2))
    s2_op = build_s2_tensor(2)
    exact = assemble_qse_matrices(
        exc, h_op, s2_op, measurement_set_exact(ansatz), ansatz.lam
    )
    from forgesim.simulator import NoiseModel

    sampled_ms = measurement_set_sampled(ansatz, NoiseModel(shots=20_000, seed=5))
    meas = assemble_qse_matrices(exc, h_op, s2_op, sampled_ms, ansatz.lam)
    assert meas.mode == "sampled"
    for got, sig, ref in (
        (meas.h, meas.h_sigma, exact.h),
        (meas.m, meas.m_sigma, exact.m),
        (meas.s2, meas.s2_sigma, exact.s2),
    ):
        assert np.all(np.abs(got - ref) <= 6.0 * sig + 1e-9)
    assert meas.h_sigma.max() > 0
    # same records feed both index orders, so the logged asymmetry is tiny
    assert meas.diagnostics["asymmetry"]["H"] >= 0.0


def test_unassignable_spin_lands_in_flagged_block():
    mats = QSEMatrices(
        h=np.diag([1.0, 2.0]),
        m=np.eye(2),
        s2=np.diag([0.0, 0.9]),
        h_sigma=np.zeros((2, 2)),
        m_sigma=np.zeros((2, 2)),
        s2_sigma=np.zeros((2, 2)),
        labels=["I", "x"],
    )
    res = qse_full_solve(mats, tol=0.3)
    assert [b.s for b in res.blocks] == [0, None]
    assert res.blocks[-1].flagged
    flagged = [st for st in res.states if st.flagged]
    assert len(flagged) == 1 and flagged[0].s is None
    assert res.states[-1].flagged
