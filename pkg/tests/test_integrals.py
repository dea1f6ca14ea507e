import numpy as np
import pytest
from helpers import H2_AUX, H2_FCIDUMP, random_integrals

from forgesim.errors import DataError, ParseError
from forgesim.fci import build_hamiltonian_dense_fock, fci_solve, sector_basis
from forgesim.integrals import (
    cholesky_eri,
    freeze_core,
    load_aux,
    parse_fcidump,
    parse_fcidump_text,
    rotate_homo_lumo,
    save_aux,
    write_fcidump,
)


def test_parse_bundled_sample():
    ints = parse_fcidump(H2_FCIDUMP)
    assert ints.norb == 2 and ints.n_up == 1 and ints.n_dn == 1
    assert ints.h[0, 0] == pytest.approx(-1.2524635735)
    assert ints.h[0, 1] == 0.0
    assert ints.eri[0, 0, 1, 1] == pytest.approx(0.6634730706)
    # 8-fold symmetry expansion of the single stored (12|12) value
    v = ints.eri[0, 1, 0, 1]
    for pattern in [(1, 0, 0, 1), (0, 1, 1, 0), (1, 0, 1, 0)]:
        assert ints.eri[pattern] == pytest.approx(v)
    assert ints.e0 == pytest.approx(1.0 / 1.401)


def test_parse_fortran_exponents_and_orbital_energies():
    text = """&FCI NORB=1,NELEC=2,MS2=0,
&END
 1.0D0   1   1   1   1
-0.5d0   1   1   0   0
 0.33    1   0   0   0
 7.0D-1  0   0   0   0
"""
    ints = parse_fcidump_text(text)
    assert ints.h[0, 0] == pytest.approx(-0.5)
    assert ints.eri[0, 0, 0, 0] == pytest.approx(1.0)
    assert ints.e0 == pytest.approx(0.7)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as err:
        parse_fcidump_text("no header here\n")
    assert err.value.line == 1
    bad_dupe = """&FCI NORB=1,NELEC=2,MS2=0,
&END
 1.0   1   1   1   1
 2.0   1   1   1   1
"""
    with pytest.raises(ParseError) as err:
        parse_fcidump_text(bad_dupe)
    assert err.value.line == 4
    with pytest.raises(ParseError):
        parse_fcidump_text("&FCI NELEC=2,MS2=0\n&END\n")  # missing NORB
    with pytest.raises(ParseError):
        parse_fcidump_text("&FCI NORB=1,NELEC=3,MS2=0\n&END\n")  # odd pairing
    with pytest.raises(ParseError):
        parse_fcidump_text("&FCI NORB=1,NELEC=2,MS2=0\n&END\n nan 1 1 1 1\n")


def test_write_parse_round_trip(tmp_path):
    ints = random_integrals(3, seed=5)
    path = tmp_path / "roundtrip.fcidump"
    write_fcidump(ints, path)
    back = parse_fcidump(path)
    assert np.allclose(back.h, ints.h, atol=1e-14)
    assert np.allclose(back.eri, ints.eri, atol=1e-14)
    assert back.e0 == pytest.approx(ints.e0)
    assert (back.n_up, back.n_dn) == (ints.n_up, ints.n_dn)


def test_freeze_core_matches_restricted_diagonalization():
    """Freezing orbital 0 must reproduce the full-space spectrum restricted
    to determinants where orbital 0 stays doubly occupied."""
    ints = random_integrals(3, n_up=2, n_dn=2, seed=9)
    frozen = freeze_core(ints, 1)
    assert frozen.norb == 2 and frozen.n_up == 1

    dense = build_hamiltonian_dense_fock(ints)
    basis = sector_basis(3, 2, 2)
    m = 3
    core_bits = (1 << 0) | (1 << m)
    keep = [mask for mask in basis if mask & core_bits == core_bits]
    sub = dense[np.ix_(keep, keep)]
    ref = np.linalg.eigvalsh(np.real(sub)) + ints.e0

    got = fci_solve(frozen).energies
    assert np.allclose(got, ref, atol=1e-9)


def test_rotation_preserves_fci_spectrum():
    ints = random_integrals(3, n_up=1, n_dn=1, seed=2)
    rot = rotate_homo_lumo(ints, 0.37)
    e_plain = fci_solve(ints).energies
    e_rot = fci_solve(rot).energies
    assert np.allclose(e_plain, e_rot, atol=1e-9)


def test_cholesky_reconstructs_eri():
    ints = random_integrals(3, seed=1)
    chol = cholesky_eri(ints, tol=1e-12)
    recon = np.einsum("gab,gcd->abcd", chol.factors, chol.factors)
    assert np.max(np.abs(recon - ints.eri)) < 1e-10
    assert chol.residual_max < 1e-10


def test_cholesky_rejects_non_psd():
    m = 2
    eri = np.zeros((m,) * 4)
    eri[0, 0, 0, 0] = -1.0  # negative diagonal of the supermatrix
    with pytest.raises(DataError):
        cholesky_eri(eri)


def test_aux_round_trip(tmp_path):
    aux = load_aux(H2_AUX)
    assert aux.n_active == 2 and aux.n_atom == 2
    path = tmp_path / "aux.json"
    save_aux(aux, path)
    back = load_aux(path)
    assert np.allclose(back.dipole_mo, aux.dipole_mo)
    assert np.allclose(back.mo_coeff, aux.mo_coeff)
    assert np.allclose(back.overlap_ao, aux.overlap_ao)


def test_aux_validation_errors(tmp_path):
    import json

    with open(H2_AUX) as fh:
        data = json.load(fh)
    data["unknown_field"] = 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    with pytest.raises(DataError):
        load_aux(bad)

    del data["unknown_field"]
    data["C"] = [[1.0, 0.0], [0.0, 1.0]]  # not S-orthonormal for this overlap
    bad.write_text(json.dumps(data))
    with pytest.raises(DataError):
        load_aux(bad)
