"""Exact diagonalization oracle in the fixed-particle-number sector.

Everything here works directly with fermionic determinants encoded as
2m-bit occupation masks (spin-up modes 0..m-1, spin-down modes m..2m-1),
with no dependence on the Pauli-algebra code paths it is used to validate.
Signs follow the convention that mode operators anticommute in ascending
mode order, i.e. applying a ladder operator on mode p picks up the parity
of the occupied modes below p.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import DataError

__all__ = [
    "ladder_dense",
    "build_hamiltonian_dense_fock",
    "build_s2_dense_fock",
    "build_number_dense_fock",
    "sector_basis",
    "FCIResult",
    "fci_solve",
]

_DENSE_SECTOR_LIMIT = 6000


# ----------------------------------------------------------------------
# dense full-Fock ladder matrices (for small cross-checks)


def ladder_dense(n_modes):
    """Dense annihilation matrices a_0 .. a_{n-1} on the full 2^n Fock space."""
    if n_modes > 12:
        raise DataError("dense Fock ladder matrices limited to 12 modes")
    sminus = np.array([[0.0, 1.0], [0.0, 0.0]])
    z = np.array([[1.0, 0.0], [0.0, -1.0]])
    out = []
    for p in range(n_modes):
        chain = np.eye(1)
        for _ in range(p):
            chain = np.kron(z, chain)
        mat = np.kron(sminus, chain)
        mat = np.kron(np.eye(2 ** (n_modes - 1 - p)), mat)
        out.append(mat)
    return out


def build_hamiltonian_dense_fock(ints):
    """Full-Fock electronic Hamiltonian (without e0) from dense ladders; m <= 3."""
    m = ints.norb
    a = ladder_dense(2 * m)
    dim = 4**m
    h1 = np.zeros((dim, dim))
    for s in (0, m):
        for p in range(m):
            for r in range(m):
                if ints.h[p, r] != 0.0:
                    h1 += ints.h[p, r] * (a[p + s].T @ a[r + s])
    h2 = np.zeros((dim, dim))
    for s1 in (0, m):
        for s2 in (0, m):
            for p in range(m):
                for r in range(m):
                    for q in range(m):
                        for t in range(m):
                            v = ints.eri[p, r, q, t]
                            if v == 0.0:
                                continue
                            h2 += 0.5 * v * (
                                a[p + s1].T @ a[q + s2].T @ a[t + s2] @ a[r + s1]
                            )
    return h1 + h2


def build_s2_dense_fock(m):
    a = ladder_dense(2 * m)
    dim = 4**m
    splus = np.zeros((dim, dim))
    nup = np.zeros((dim, dim))
    ndn = np.zeros((dim, dim))
    for p in range(m):
        splus += a[p].T @ a[p + m]
        nup += a[p].T @ a[p]
        ndn += a[p + m].T @ a[p + m]
    sz = 0.5 * (nup - ndn)
    return splus.T @ splus + sz @ sz + sz


def build_number_dense_fock(m):
    a = ladder_dense(2 * m)
    return sum(mat.T @ mat for mat in a)


# ----------------------------------------------------------------------
# sector determinant basis


def sector_basis(m, n_up, n_dn):
    """Global occupation masks of the (n_up, n_dn) sector, ascending."""
    ups = [sum(1 << q for q in c) for c in combinations(range(m), n_up)]
    dns = [sum(1 << q for q in c) for c in combinations(range(m), n_dn)]
    return sorted(u | (d << m) for u in ups for d in dns)


def _apply_ladder(mask, ops):
    """Apply [(mode, dagger), ...] right to left; returns (sign, mask) or None."""
    sign = 1
    for mode, dagger in reversed(ops):
        bit = 1 << mode
        if dagger:
            if mask & bit:
                return None
        else:
            if not (mask & bit):
                return None
        if (mask & (bit - 1)).bit_count() & 1:
            sign = -sign
        mask ^= bit
    return sign, mask


def _excitation_columns(basis, index_of, p, r):
    """Sparse action of a†_p a_r on the sector: (rows, cols, signs)."""
    rows, cols, signs = [], [], []
    for col, mask in enumerate(basis):
        hit = _apply_ladder(mask, [(p, True), (r, False)])
        if hit is None:
            continue
        sign, new = hit
        row = index_of.get(new)
        if row is None:
            continue
        rows.append(row)
        cols.append(col)
        signs.append(sign)
    return rows, cols, signs


def _excitation_stack(basis, index_of, m):
    """Dense spin-summed excitation matrices Etot[p, r] on the sector."""
    d = len(basis)
    etot = np.zeros((m, m, d, d))
    for p in range(m):
        for r in range(m):
            for mode_p, mode_r in ((p, r), (p + m, r + m)):
                rows, cols, signs = _excitation_columns(basis, index_of, mode_p, mode_r)
                etot[p, r, rows, cols] += signs
    return etot


@dataclass
class FCIResult:
    """Spectrum of the sector Hamiltonian with spin labels and RDM access."""

    energies: np.ndarray        # absolute, e0 included
    vectors: np.ndarray         # (dim, n_states)
    s2: np.ndarray
    basis: list
    m: int
    n_up: int
    n_dn: int
    e0: float

    @property
    def n_states(self):
        return len(self.energies)

    def rdm(self, a, b=None):
        """Spin-summed one-body (transition) density matrix <A| a†_p a_r |B>."""
        if b is None:
            b = a
        va = self.vectors[:, a]
        vb = self.vectors[:, b]
        index_of = {mask: i for i, mask in enumerate(self.basis)}
        out = np.zeros((self.m, self.m))
        for p in range(self.m):
            for r in range(self.m):
                acc = 0.0
                for mode_p, mode_r in ((p, r), (p + self.m, r + self.m)):
                    rows, cols, signs = _excitation_columns(
                        self.basis, index_of, mode_p, mode_r
                    )
                    if rows:
                        acc += float(np.sum(np.asarray(signs) * va[rows] * vb[cols]))
                out[p, r] = acc
        return out


def _sector_hamiltonian(ints, basis, index_of):
    m = ints.norb
    d = len(basis)
    etot = _excitation_stack(basis, index_of, m)
    h1 = np.einsum("pr,prAB->AB", ints.h, etot)
    g = np.einsum("prqs,qsAB->prAB", ints.eri, etot)
    h2 = np.zeros((d, d))
    for p in range(m):
        for r in range(m):
            h2 += etot[p, r] @ g[p, r]
    k = np.einsum("pqqs->ps", ints.eri)
    h2 -= np.einsum("ps,psAB->AB", k, etot)
    return h1 + 0.5 * h2


def _sector_s2(m, n_up, n_dn, basis, index_of):
    """S^2 = S-S+ + Sz^2 + Sz on the sector.

    S+ raises Sz, so it maps into the (n_up+1, n_dn-1) sector; the product
    S-S+ needs that rectangular hop rather than a same-sector action."""
    d = len(basis)
    sz = 0.5 * (n_up - n_dn)
    out = (sz * sz + sz) * np.eye(d)
    if n_dn == 0 or n_up == m:
        return out
    up_basis = sector_basis(m, n_up + 1, n_dn - 1)
    up_index = {mask: i for i, mask in enumerate(up_basis)}
    splus = np.zeros((len(up_basis), d))
    for p in range(m):
        for col, mask in enumerate(basis):
            hit = _apply_ladder(mask, [(p, True), (p + m, False)])
            if hit is None:
                continue
            sign, new = hit
            splus[up_index[new], col] += sign
    return out + splus.T @ splus


def fci_solve(ints, n_roots=None):
    """All (or the lowest n_roots) exact eigenstates of the active-space
    Hamiltonian in the (n_up, n_dn) sector, with definite S² inside any
    degenerate energy cluster and a deterministic state order."""
    m, n_up, n_dn = ints.norb, ints.n_up, ints.n_dn
    dim = comb(m, n_up) * comb(m, n_dn)
    if dim > 200_000:
        raise DataError(f"sector of {dim} determinants exceeds the supported size")
    if dim > _DENSE_SECTOR_LIMIT:
        raise DataError(
            f"sector of {dim} determinants is too large for the dense solver"
        )
    basis = sector_basis(m, n_up, n_dn)
    index_of = {mask: i for i, mask in enumerate(basis)}
    ham = _sector_hamiltonian(ints, basis, index_of)
    ham = 0.5 * (ham + ham.T)
    s2mat = _sector_s2(m, n_up, n_dn, basis, index_of)
    evals, vecs = np.linalg.eigh(ham)

    # rotate degenerate clusters to simultaneous S² eigenstates
    s2_vals = np.zeros(dim)
    start = 0
    tol = 1e-9
    while start < dim:
        stop = start + 1
        while stop < dim and abs(evals[stop] - evals[start]) <= tol * max(
            1.0, abs(evals[start])
        ):
            stop += 1
        block = vecs[:, start:stop]
        if stop - start > 1:
            sub = block.T @ s2mat @ block
            sub = 0.5 * (sub + sub.T)
            sv, su = np.linalg.eigh(sub)
            block = block @ su
            order = np.argsort(sv, kind="stable")
            block = block[:, order]
            sv = sv[order]
            vecs[:, start:stop] = block
            s2_vals[start:stop] = sv
        else:
            s2_vals[start] = float(block[:, 0] @ s2mat @ block[:, 0])
        start = stop

    # deterministic sign: largest-magnitude component positive
    for i in range(dim):
        j = int(np.argmax(np.abs(vecs[:, i])))
        if vecs[j, i] < 0:
            vecs[:, i] = -vecs[:, i]

    if n_roots is not None:
        evals = evals[:n_roots]
        vecs = vecs[:, :n_roots]
        s2_vals = s2_vals[:n_roots]
    return FCIResult(
        energies=evals + ints.e0,
        vectors=vecs,
        s2=s2_vals,
        basis=basis,
        m=m,
        n_up=n_up,
        n_dn=n_dn,
        e0=ints.e0,
    )
