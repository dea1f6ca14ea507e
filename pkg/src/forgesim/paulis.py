"""Pauli-string algebra on a fixed qubit register.

Strings are held in symplectic form: a pair of integer bitmasks (x, z) where
bit q of x turns on an X factor on qubit q, bit q of z turns on a Z factor,
and both together mean Y.  Coefficients always multiply the true Pauli string
(Y carries its factor of i internally), so a sum with real coefficients is
Hermitian.

Conventions used throughout the package:

* qubit 0 is the least significant bit of a basis-state index, and the
  leftmost character of a string label ("XYZ" acts with X on qubit 0),
* the flattened Pauli index of a string is sum_q digit_q * 4**q with
  digits I=0, X=1, Y=2, Z=3.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

AXES = "IXYZ"

# digit lookup by (x_bit + 2 * z_bit)
_DIGIT_OF_XZ = (0, 1, 3, 2)
# inverse: (x_bit, z_bit) by digit
_XZ_OF_DIGIT = ((0, 0), (1, 0), (1, 1), (0, 1))

_SINGLE_DENSE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PRUNE_TOL = 1e-14


def popcount(values):
    """Per-element bit count of a non-negative integer array."""
    arr = np.asarray(values, dtype=np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(arr).astype(np.int64)
    out = arr.copy()
    out = out - ((out >> np.uint64(1)) & np.uint64(0x5555555555555555))
    out = (out & np.uint64(0x3333333333333333)) + (
        (out >> np.uint64(2)) & np.uint64(0x3333333333333333)
    )
    out = (out + (out >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((out * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)


def parity(values):
    """(-1)-exponent parity of the bit count, as 0/1."""
    return popcount(values) & 1


def mask_to_label(x, z, n):
    chars = []
    for q in range(n):
        chars.append(AXES[_DIGIT_OF_XZ[((x >> q) & 1) + 2 * ((z >> q) & 1)]])
    return "".join(chars)


def label_to_mask(label):
    """Parse a label like "XIZY" (leftmost char = qubit 0) into (x, z)."""
    x = z = 0
    for q, ch in enumerate(label):
        d = AXES.find(ch)
        if d < 0:
            raise DataError(f"bad Pauli axis {ch!r} in label {label!r}")
        xb, zb = _XZ_OF_DIGIT[d]
        x |= xb << q
        z |= zb << q
    return x, z


def pauli_index(x, z, n):
    """Flattened index of the string, base-4 digits with qubit 0 least significant."""
    idx = 0
    for q in range(n):
        idx += _DIGIT_OF_XZ[((x >> q) & 1) + 2 * ((z >> q) & 1)] * 4**q
    return idx


def index_to_mask(idx, n):
    x = z = 0
    for q in range(n):
        xb, zb = _XZ_OF_DIGIT[(idx // 4**q) % 4]
        x |= xb << q
        z |= zb << q
    return x, z


def index_masks(n):
    """(x, z) masks for every Pauli index 0 .. 4**n - 1, as two int arrays."""
    idx = np.arange(4**n, dtype=np.int64)
    x = np.zeros(4**n, dtype=np.int64)
    z = np.zeros(4**n, dtype=np.int64)
    for q in range(n):
        digit = (idx // 4**q) % 4
        xb = np.array([d[0] for d in _XZ_OF_DIGIT])[digit]
        zb = np.array([d[1] for d in _XZ_OF_DIGIT])[digit]
        x |= xb << q
        z |= zb << q
    return x, z


def _mul_masks(x1, z1, c1, x2, z2, c2):
    # sigma(x,z) = i^{|x&z|} X^x Z^z; see module docstring for the phase rule.
    x3 = x1 ^ x2
    z3 = z1 ^ z2
    k = (
        int(x1 & z1).bit_count()
        + int(x2 & z2).bit_count()
        - int(x3 & z3).bit_count()
        + 2 * int(z1 & x2).bit_count()
    ) % 4
    return x3, z3, c1 * c2 * (1j) ** k


class PauliSum:
    """A complex-weighted sum of Pauli strings on n qubits."""

    __slots__ = ("n", "terms")

    def __init__(self, n, terms=None):
        self.n = n
        self.terms = dict(terms) if terms else {}

    # construction -----------------------------------------------------

    @classmethod
    def identity(cls, n, coef=1.0):
        return cls(n, {(0, 0): complex(coef)})

    @classmethod
    def zero(cls, n):
        return cls(n)

    @classmethod
    def from_label(cls, label, coef=1.0):
        x, z = label_to_mask(label)
        return cls(len(label), {(x, z): complex(coef)})

    def copy(self):
        return PauliSum(self.n, self.terms)

    # bookkeeping ------------------------------------------------------

    def __len__(self):
        return len(self.terms)

    def items(self):
        """Terms in canonical (flattened Pauli index) order."""
        return sorted(self.terms.items(), key=lambda kv: pauli_index(kv[0][0], kv[0][1], self.n))

    def pruned(self, tol=PRUNE_TOL):
        """Copy without terms whose coefficient magnitude is at or below tol."""
        return PauliSum(self.n, {k: c for k, c in self.terms.items() if abs(c) > tol})

    # algebra ----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("register size mismatch")
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return PauliSum(self.n, out)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            if other.n != self.n:
                raise ValueError("register size mismatch")
            out = {}
            for (x1, z1), c1 in self.terms.items():
                for (x2, z2), c2 in other.terms.items():
                    x3, z3, c3 = _mul_masks(x1, z1, c1, x2, z2, c2)
                    key = (x3, z3)
                    out[key] = out.get(key, 0.0) + c3
            return PauliSum(self.n, out).pruned()
        return PauliSum(self.n, {k: c * other for k, c in self.terms.items()})

    def __rmul__(self, scalar):
        return PauliSum(self.n, {k: c * scalar for k, c in self.terms.items()})

    def adjoint(self):
        """Hermitian conjugate (Pauli strings are self-adjoint, so conjugate coefficients)."""
        return PauliSum(self.n, {k: np.conj(c) for k, c in self.terms.items()})

    def is_hermitian(self, tol=1e-12):
        return all(abs(c.imag) <= tol for c in self.terms.values())

    # dense / vector forms ----------------------------------------------

    def to_dense(self):
        dim = 2**self.n
        out = np.zeros((dim, dim), dtype=complex)
        idx = np.arange(dim)
        for (x, z), c in self.terms.items():
            phase = c * (1j) ** int(x & z).bit_count() * np.where(parity(idx & z), -1.0, 1.0)
            out[idx ^ x, idx] += phase
        return out

    def coef_vector(self):
        """Length 4**n complex vector of coefficients in canonical Pauli order."""
        vec = np.zeros(4**self.n, dtype=complex)
        for (x, z), c in self.terms.items():
            vec[pauli_index(x, z, self.n)] = c
        return vec

    # state action -------------------------------------------------------

    def apply(self, statevec):
        vec = np.asarray(statevec, dtype=complex)
        idx = np.arange(vec.size)
        out = np.zeros_like(vec)
        for (x, z), c in self.terms.items():
            phase = c * (1j) ** int(x & z).bit_count() * np.where(parity(idx & z), -1.0, 1.0)
            out[idx ^ x] += phase * vec
        return out

    def expectation(self, statevec):
        """<psi| self |psi> for a statevector (need not be normalised)."""
        vec = np.asarray(statevec, dtype=complex)
        return complex(np.vdot(vec, self.apply(vec)))

    def matrix_element(self, bra, ket):
        return complex(np.vdot(np.asarray(bra, dtype=complex), self.apply(ket)))

    # io -----------------------------------------------------------------

    def to_json_terms(self):
        return [
            {"pauli": mask_to_label(x, z, self.n), "re": float(c.real), "im": float(c.imag)}
            for (x, z), c in self.items()
        ]

    def __repr__(self):
        parts = [f"({c:.6g})*{mask_to_label(x, z, self.n)}" for (x, z), c in self.items()[:6]]
        more = "" if len(self.terms) <= 6 else f" ... ({len(self.terms)} terms)"
        return f"PauliSum[n={self.n}: " + " + ".join(parts) + more + "]"


# dense <-> coefficient transforms --------------------------------------

def _transform_tensors():
    # T[d] = sigma_d^T / 2 so that coef_d = sum_{r,c} T[d,r,c] M[r,c]
    t = np.stack([_SINGLE_DENSE[a].T / 2.0 for a in AXES])
    tinv = np.stack([_SINGLE_DENSE[a] for a in AXES])
    return t, tinv


_T_FWD, _T_INV = _transform_tensors()


def dense_to_coefs(mat, n):
    """Coefficients c with mat = sum_i c_i sigma_i, flattened in canonical order.

    Runs in O(n 4^n) via one qubit-at-a-time contraction.
    """
    mat = np.asarray(mat, dtype=complex)
    w = mat.reshape((2,) * (2 * n))
    # axes: rows (qubit n-1 .. 0) then cols (qubit n-1 .. 0)
    letters = "abcdefghijklmnopqrstuvwx"
    rows = letters[:n]              # rows[i] is qubit n-1-i
    cols = letters[n : 2 * n]
    digs = letters[2 * n : 3 * n]
    operands = [w]
    script = rows + cols
    for i in range(n):
        operands.append(_T_FWD)
        script += "," + digs[i] + rows[i] + cols[i]
    script += "->" + digs  # digit axes MSB-first, so flat index matches pauli_index
    out = np.einsum(script, *operands, optimize=True)
    return out.reshape(4**n)


def coefs_to_dense(coefs, n):
    """Inverse of dense_to_coefs."""
    coefs = np.asarray(coefs, dtype=complex).reshape((4,) * n)
    letters = "abcdefghijklmnopqrstuvwx"
    rows = letters[:n]
    cols = letters[n : 2 * n]
    digs = letters[2 * n : 3 * n]
    operands = [coefs]
    script = digs
    for i in range(n):
        operands.append(_T_INV)
        script += "," + digs[i] + rows[i] + cols[i]
    script += "->" + rows + cols
    out = np.einsum(script, *operands, optimize=True)
    return out.reshape(2**n, 2**n)
