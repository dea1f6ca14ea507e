"""Shared fixtures: random problem instances and bundled sample paths."""

from importlib.resources import files

import numpy as np

from forgesim.forging import EFAnsatz, default_basis_states, default_schedule
from forgesim.integrals import MolecularIntegrals

H2_FCIDUMP = str(files("forgesim") / "data" / "h2_sto3g.fcidump")
H2_AUX = str(files("forgesim") / "data" / "h2_sto3g_aux.json")


def random_integrals(m, n_up=None, n_dn=None, seed=0, n_factors=None):
    """Random Hermitian one-body part plus a manifestly PSD two-body tensor
    built from symmetric factors, so pivoted Cholesky always succeeds."""
    rng = np.random.default_rng(seed)
    if n_factors is None:
        n_factors = m + 1
    lmats = rng.normal(size=(n_factors, m, m))
    lmats = (lmats + lmats.transpose(0, 2, 1)) / 2.0
    eri = np.einsum("gab,gcd->abcd", lmats, lmats, optimize=True)
    h = rng.normal(size=(m, m))
    h = (h + h.T) / 2.0
    if n_up is None:
        n_up = max(1, m // 2)
    if n_dn is None:
        n_dn = n_up
    return MolecularIntegrals(
        norb=m, n_up=n_up, n_dn=n_dn, e0=float(rng.normal()), h=h, eri=eri,
        source=f"random(m={m}, seed={seed})",
    ).validate()


def random_ansatz(m, n_occ=None, seed=0, k=2):
    rng = np.random.default_rng(seed)
    if n_occ is None:
        n_occ = max(1, m // 2)
    schedule = default_schedule(m)
    lam = rng.normal(size=k)
    lam /= np.linalg.norm(lam)
    return EFAnsatz(
        m=m,
        basis_states=default_basis_states(m, n_occ, k=k),
        theta=rng.uniform(-np.pi / 2, np.pi / 2, size=len(schedule)),
        lam=lam,
        phi=0.0,
        schedule=schedule,
    )


def pair_expectation_direct(op, psi_mat):
    """Oracle <Psi|Op|Psi> straight from the doubled-register state matrix."""
    acted = op.apply_pair(psi_mat)
    return complex(np.vdot(psi_mat.reshape(-1), acted.reshape(-1)))
