"""Jordan-Wigner images and tensor-factor operators.

Spin-up spin-orbitals map to qubits 0..m-1 of the first register half,
spin-down to the second half. Every operator the forged estimator consumes
is kept as a list of factor pairs (A_mu, B_mu), one PauliSum per half, so
cross-register expectation values reduce to products of half-register
matrix elements.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .paulis import PauliSum

__all__ = [
    "TensorFactorOp",
    "jw_annihilation",
    "jw_creation",
    "jw_one_body",
    "jw_excitation_pair",
    "jw_map",
    "build_hamiltonian_tensor",
    "build_one_body_tensor",
    "build_s2_tensor",
    "build_number_tensor",
    "build_excitations",
    "op_product",
    "exchange_matrix",
]


def jw_annihilation(p, m):
    """a_p on m modes: Z-chain on qubits below p times (X_p + iY_p)/2."""
    if not (0 <= p < m):
        raise DataError(f"mode {p} out of range for m={m}")
    chain = (1 << p) - 1
    xm = 1 << p
    return PauliSum(m, {(xm, chain): 0.5, (xm, chain | xm): 0.5j})


def jw_creation(p, m):
    return jw_annihilation(p, m).adjoint()


def jw_one_body(x):
    """JW image of sum_pr x_pr a†_p a_r on m = x.shape[0] qubits."""
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DataError(f"one-body coefficient matrix must be square, got {x.shape}")
    m = x.shape[0]
    out = PauliSum.zero(m)
    for p in range(m):
        for r in range(m):
            c = x[p, r]
            if c == 0:
                continue
            out = out + c * (jw_creation(p, m) * jw_annihilation(r, m))
    return out.pruned()


def jw_excitation_pair(m, a, i, b, j):
    """Normal-ordered same-register double excitation a†_a a†_b a_j a_i."""
    return (
        jw_creation(a, m)
        * jw_creation(b, m)
        * jw_annihilation(j, m)
        * jw_annihilation(i, m)
    ).pruned()


def jw_map(x, kind="one_body", indices=None):
    """Dispatcher over the JW builders.

    kind="one_body": x is the m×m coefficient matrix.
    kind="excitation": x is the mode count, indices=(a, i).
    kind="excitation_pair": x is the mode count, indices=(a, i, b, j).
    """
    if kind == "one_body":
        return jw_one_body(x)
    if kind == "excitation":
        a, i = indices
        m = int(x)
        e = np.zeros((m, m))
        e[a, i] = 1.0
        return jw_one_body(e)
    if kind == "excitation_pair":
        a, i, b, j = indices
        return jw_excitation_pair(int(x), a, i, b, j)
    raise DataError(f"unknown jw_map kind {kind!r}")


class TensorFactorOp:
    """Operator on a doubled register as sum_mu A_mu (x) B_mu.

    A_mu acts on the spin-up half (first m qubits of the combined register),
    B_mu on the spin-down half. Immutable once built.
    """

    __slots__ = ("m", "factors", "label", "_dense_halves")

    def __init__(self, m, factors, label=None):
        self.m = int(m)
        for a, b in factors:
            if a.n != self.m or b.n != self.m:
                raise DataError("factor halves must match the per-half qubit count")
        self.factors = tuple((a, b) for a, b in factors)
        self.label = label
        self._dense_halves = None

    @classmethod
    def identity(cls, m):
        return cls(m, [(PauliSum.identity(m), PauliSum.identity(m))], label="I")

    def __len__(self):
        return len(self.factors)

    def adjoint(self):
        return TensorFactorOp(self.m, [(a.adjoint(), b.adjoint()) for a, b in self.factors])

    def dense_halves(self):
        if self._dense_halves is None:
            self._dense_halves = [(a.to_dense(), b.to_dense()) for a, b in self.factors]
        return self._dense_halves

    def dense(self):
        """Full 4^m-dimensional matrix; spin-up half is the low index block."""
        dim = 2**self.m
        out = np.zeros((dim * dim, dim * dim), dtype=complex)
        for da, db in self.dense_halves():
            out += np.kron(db, da)
        return out

    def apply_pair(self, psi_mat):
        """Apply to a doubled-register state laid out as Psi[i_down, i_up]."""
        out = np.zeros_like(psi_mat, dtype=complex)
        for da, db in self.dense_halves():
            out += db @ psi_mat @ da.T
        return out

    def to_json_factors(self):
        return [
            {"up": a.to_json_terms(), "down": b.to_json_terms()} for a, b in self.factors
        ]

    def __repr__(self):
        tag = f" {self.label!r}" if self.label else ""
        return f"TensorFactorOp(m={self.m}, factors={len(self.factors)}{tag})"


def op_product(x, y):
    """Factor-wise product: (A_mu (x) B_mu)(C_nu (x) D_nu) = A_mu C_nu (x) B_mu D_nu."""
    if x.m != y.m:
        raise DataError("tensor operators act on different half sizes")
    factors = []
    for a, b in x.factors:
        for c, d in y.factors:
            up = (a * c).pruned()
            dn = (b * d).pruned()
            if up.terms and dn.terms:
                factors.append((up, dn))
    return TensorFactorOp(x.m, factors)


def exchange_matrix(eri):
    """K_pr = sum_q (pq|qr) from chemist-ordered eri[p,r,q,s]."""
    return np.einsum("pqqr->pr", eri)


def build_hamiltonian_tensor(ints, chol):
    """Electronic Hamiltonian in forged form: A(x)1 + 1(x)A + sum_g L^g (x) L^g.

    A = JW(h - K/2) + (1/2) sum_g JW(L^g)^2 with K the exchange contraction.
    The core-energy constant e0 is not included; add it to expectation values.
    """
    m = ints.norb
    if chol.factors.shape[1:] != (m, m):
        raise DataError(
            f"Cholesky factors for {chol.factors.shape[1]} orbitals, integrals have {m}"
        )
    k = exchange_matrix(ints.eri)
    a = jw_one_body(ints.h - 0.5 * k)
    l_ops = [jw_one_body(chol.factors[g]) for g in range(chol.factors.shape[0])]
    for lop in l_ops:
        a = a + 0.5 * (lop * lop)
    a = a.pruned()
    ident = PauliSum.identity(m)
    factors = [(a, ident), (ident, a)]
    factors.extend((lop, lop) for lop in l_ops)
    return TensorFactorOp(m, factors, label="H")


def build_one_body_tensor(x):
    """B(x)1 + 1(x)B for a spin-summed one-body operator with MO matrix x."""
    b = jw_one_body(x)
    m = b.n
    ident = PauliSum.identity(m)
    return TensorFactorOp(m, [(b, ident), (ident, b)], label="one_body")


def build_number_tensor(m):
    return build_one_body_tensor(np.eye(m))


def build_s2_tensor(m):
    """Total-spin operator S^2 = S_-S_+ + S_z^2 + S_z in forged form.

    S_-S_+ contributes N_down - sum_pq E_pq (x) E_qp; the transposed index on
    the down half is fixed by the dense ladder oracle. The S_z pieces expand
    into number-operator polynomials and vanish on S_z = 0 states.
    """
    nhat = jw_one_body(np.eye(m))
    nsq = (nhat * nhat).pruned()
    ident = PauliSum.identity(m)
    factors = [
        # N_down + (N_down^2)/4 - N_down/2
        (ident, (nhat + 0.25 * nsq - 0.5 * nhat).pruned()),
        # (N_up^2)/4 + N_up/2
        ((0.25 * nsq + 0.5 * nhat).pruned(), ident),
        # -(N_up N_down)/2
        (nhat, -0.5 * nhat),
    ]
    for p in range(m):
        for q in range(m):
            e_pq = np.zeros((m, m))
            e_pq[p, q] = 1.0
            e_qp = np.zeros((m, m))
            e_qp[q, p] = 1.0
            factors.append((jw_one_body(e_pq), -1.0 * jw_one_body(e_qp)))
    return TensorFactorOp(m, factors, label="S2")


def build_excitations(m, occ, virt):
    """QSE expansion basis: identity, spin singles, and doubles.

    Same-spin doubles keep a<b, i<j only; the discarded orderings are equal
    up to sign and would make the overlap metric exactly singular. Ordering:
    identity, up singles, down singles, up-up, down-down, mixed.
    """
    occ = sorted(int(i) for i in occ)
    virt = sorted(int(a) for a in virt)
    if set(occ) & set(virt):
        raise DataError("occupied and virtual index sets overlap")
    for idx in occ + virt:
        if not (0 <= idx < m):
            raise DataError(f"orbital index {idx} out of range for m={m}")
    ident = PauliSum.identity(m)
    ops = [TensorFactorOp.identity(m)]

    def e_single(a, i):
        x = np.zeros((m, m))
        x[a, i] = 1.0
        return jw_one_body(x)

    for a in virt:
        for i in occ:
            ops.append(TensorFactorOp(m, [(e_single(a, i), ident)], label=f"u:{a}<-{i}"))
    for a in virt:
        for i in occ:
            ops.append(TensorFactorOp(m, [(ident, e_single(a, i))], label=f"d:{a}<-{i}"))
    pairs_v = [(a, b) for ai, a in enumerate(virt) for b in virt[ai + 1 :]]
    pairs_o = [(i, j) for ii, i in enumerate(occ) for j in occ[ii + 1 :]]
    for a, b in pairs_v:
        for i, j in pairs_o:
            ops.append(
                TensorFactorOp(
                    m,
                    [(jw_excitation_pair(m, a, i, b, j), ident)],
                    label=f"uu:{a}{b}<-{i}{j}",
                )
            )
    for a, b in pairs_v:
        for i, j in pairs_o:
            ops.append(
                TensorFactorOp(
                    m,
                    [(ident, jw_excitation_pair(m, a, i, b, j))],
                    label=f"dd:{a}{b}<-{i}{j}",
                )
            )
    for a in virt:
        for i in occ:
            for b in virt:
                for j in occ:
                    ops.append(
                        TensorFactorOp(
                            m,
                            [(e_single(a, i), e_single(b, j))],
                            label=f"ud:{a}<-{i},{b}<-{j}",
                        )
                    )
    return ops
