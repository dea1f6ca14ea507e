"""Statevector simulator for the forged m-qubit circuit family.

Qubit 0 is the least significant bit of the state index and the leftmost
character of bitstring/Pauli labels. Measurement bases are strings over XYZ
with one letter per qubit; a basis rotation maps the chosen axis onto Z
before sampling.

Shot noise uses a trajectory method: depolarizing errors after two-qubit
gates are drawn as explicit Pauli insertions grouped by error pattern, so
memory stays at one statevector per distinct pattern. Readout errors act as
a tensored single-qubit channel on outcome probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CoverageError, DataError
from .paulis import PauliSum, dense_to_coefs, index_masks, mask_to_label, popcount

__all__ = [
    "State",
    "Circuit",
    "NoiseModel",
    "BlochVector",
    "hop_matrix",
    "prepare_phi",
    "prep_circuit_phi",
    "brickwork_circuit",
    "apply_hop_gate",
    "expval_pauli",
    "sample_counts",
    "measure_counts_sweep",
    "circuit_output_state",
    "tomography",
    "assemble_bloch",
    "exact_bloch",
    "all_bases",
    "basis_index",
]

_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAULI_1Q = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def _s_power_matrix(p):
    return np.diag([1.0, 1j ** (p % 4)])


def hop_matrix(theta):
    """Two-qubit hop gate: identity on |00>, Givens rotation on {|01>,|10>},
    phase -1 on |11>. |01> -> cos(t)|01> + sin(t)|10>. Clifford at theta=0."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, -s, 0],
            [0, s, c, 0],
            [0, 0, 0, -1],
        ],
        dtype=complex,
    )


def _apply_1q(amps, n, q, mat):
    # amps: (..., 2**n); qubit q occupies axis (n-1-q) after reshape
    lead = amps.shape[:-1]
    t = amps.reshape(lead + (2,) * n)
    ax = len(lead) + (n - 1 - q)
    t = np.moveaxis(np.tensordot(mat, t, axes=([1], [ax])), 0, ax)
    return np.ascontiguousarray(t).reshape(lead + (2**n,))


def _apply_2q(amps, n, q1, q2, mat4):
    lead = amps.shape[:-1]
    t = amps.reshape(lead + (2,) * n)
    a1 = len(lead) + (n - 1 - q1)
    a2 = len(lead) + (n - 1 - q2)
    m = mat4.reshape(2, 2, 2, 2)  # [new1, new2, old1, old2]
    t = np.tensordot(m, t, axes=([2, 3], [a1, a2]))
    t = np.moveaxis(t, [0, 1], [a1, a2])
    return np.ascontiguousarray(t).reshape(lead + (2**n,))


class State:
    """Normalized n-qubit statevector."""

    __slots__ = ("n", "amplitudes")

    def __init__(self, n, amplitudes, check=True):
        self.n = int(n)
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.shape != (2**self.n,):
            raise DataError(f"amplitude vector has shape {amps.shape}, expected ({2**self.n},)")
        if check:
            norm = np.linalg.norm(amps)
            if abs(norm - 1.0) > 1e-12:
                raise DataError(f"state norm {norm!r} deviates from 1 beyond 1e-12")
        self.amplitudes = amps

    @classmethod
    def from_bitstring(cls, bits):
        n = len(bits)
        amps = np.zeros(2**n, dtype=complex)
        amps[_bits_to_index(bits)] = 1.0
        return cls(n, amps, check=False)

    def inner(self, other):
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"State(n={self.n})"


def _bits_to_index(bits):
    # leftmost character is qubit 0 (least significant)
    idx = 0
    for q, b in enumerate(bits):
        if b == "1":
            idx |= 1 << q
        elif b != "0":
            raise DataError(f"bad bit {b!r} in bitstring {bits!r}")
    return idx


def _index_to_bits(idx, n):
    return "".join("1" if (idx >> q) & 1 else "0" for q in range(n))


@dataclass(frozen=True)
class _Gate:
    name: str
    qubits: tuple
    param: float | int | None = None


class Circuit:
    """Gate list on n qubits. Gates: x, h, s_power, cx, hop."""

    def __init__(self, n, provenance=None, seed_tag=()):
        self.n = int(n)
        self.gates = []
        self.provenance = provenance  # (k, l, p) for forged-pair circuits
        self.seed_tag = tuple(int(t) for t in seed_tag)

    def _check(self, *qubits):
        for q in qubits:
            if not (0 <= q < self.n):
                raise DataError(f"qubit index {q} out of range for n={self.n}")
        if len(set(qubits)) != len(qubits):
            raise DataError("gate qubits must be distinct")

    def x(self, q):
        self._check(q)
        self.gates.append(_Gate("x", (q,)))
        return self

    def h(self, q):
        self._check(q)
        self.gates.append(_Gate("h", (q,)))
        return self

    def s_power(self, p, q):
        self._check(q)
        if p % 4:
            self.gates.append(_Gate("s_power", (q,), int(p % 4)))
        return self

    def cx(self, c, t):
        self._check(c, t)
        self.gates.append(_Gate("cx", (c, t)))
        return self

    def hop(self, theta, q1, q2):
        self._check(q1, q2)
        if abs(q1 - q2) != 1:
            raise DataError(f"hop gate requires adjacent qubits, got ({q1}, {q2})")
        self.gates.append(_Gate("hop", (q1, q2), float(theta)))
        return self

    def two_qubit_gates(self):
        return [i for i, g in enumerate(self.gates) if g.name in ("cx", "hop")]

    def two_qubit_equivalent_count(self):
        # hop compiles to 3 entangling gates, cx to 1
        return sum(3 if g.name == "hop" else 1 for g in self.gates if g.name in ("cx", "hop"))

    def apply(self, state, insertions=None):
        """Run the circuit on `state`; `insertions` maps gate index -> pair-Pauli
        index 1..15 inserted after that (two-qubit) gate."""
        if state.n != self.n:
            raise DataError("state/circuit qubit count mismatch")
        amps = state.amplitudes.copy()
        amps = self._run(amps, insertions)
        return State(self.n, amps, check=False)

    def _run(self, amps, insertions=None):
        n = self.n
        for i, g in enumerate(self.gates):
            if g.name == "x":
                amps = _apply_1q(amps, n, g.qubits[0], _X)
            elif g.name == "h":
                amps = _apply_1q(amps, n, g.qubits[0], _H.astype(complex))
            elif g.name == "s_power":
                amps = _apply_1q(amps, n, g.qubits[0], _s_power_matrix(g.param))
            elif g.name == "cx":
                c, t = g.qubits
                # control = first qubit of the pair
                mat = np.array(
                    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
                )
                amps = _apply_2q(amps, n, c, t, mat)
            elif g.name == "hop":
                amps = _apply_2q(amps, n, g.qubits[0], g.qubits[1], hop_matrix(g.param))
            else:
                raise DataError(f"unknown gate {g.name!r}")
            if insertions and i in insertions:
                pp = insertions[i]
                q1, q2 = self.gates[i].qubits
                amps = _apply_1q(amps, n, q1, _PAULI_1Q[pp // 4])
                amps = _apply_1q(amps, n, q2, _PAULI_1Q[pp % 4])
        return amps

    def qasm_text(self):
        lines = [f"qreg q[{self.n}];"]
        for g in self.gates:
            if g.name == "hop":
                lines.append(f"hop({g.param:.12g}) q[{g.qubits[0]}],q[{g.qubits[1]}];")
            elif g.name == "cx":
                lines.append(f"cx q[{g.qubits[0]}],q[{g.qubits[1]}];")
            elif g.name == "s_power":
                lines.append(f"spow({g.param}) q[{g.qubits[0]}];")
            else:
                lines.append(f"{g.name} q[{g.qubits[0]}];")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return f"Circuit(n={self.n}, gates={len(self.gates)}, provenance={self.provenance})"


def apply_hop_gate(state, q1, q2, theta):
    if q1 == q2:
        raise DataError("hop gate needs two distinct qubits")
    for q in (q1, q2):
        if not (0 <= q < state.n):
            raise DataError(f"qubit index {q} out of range")
    amps = _apply_2q(state.amplitudes, state.n, q1, q2, hop_matrix(theta))
    return State(state.n, amps, check=False)


# ----------------------------------------------------------------------
# superposition-state preparation


def prepare_phi(x_k, x_l, p):
    """Exact amplitudes of (|x_k> + i^p |x_l>)/sqrt(2); plain |x_k> when k=l, p=0."""
    if len(x_k) != len(x_l):
        raise DataError("bitstrings must have equal length")
    if x_k.count("1") != x_l.count("1"):
        raise DataError(
            f"Hamming-weight mismatch between {x_k!r} and {x_l!r} breaks number post-selection"
        )
    n = len(x_k)
    ik, il = _bits_to_index(x_k), _bits_to_index(x_l)
    amps = np.zeros(2**n, dtype=complex)
    if ik == il:
        if p % 4 == 0:
            amps[ik] = 1.0
        else:
            amps[ik] = (1.0 + 1j ** (p % 4)) / np.sqrt(2.0)
            # (1+i^p)/sqrt(2) has unit modulus only for p=0 mod 4; reject otherwise
            raise DataError("superposition of identical bitstrings is only defined for p=0")
    else:
        amps[ik] = 1.0 / np.sqrt(2.0)
        amps[il] = (1j ** (p % 4)) / np.sqrt(2.0)
    return State(n, amps, check=False)


def prep_circuit_phi(x_k, x_l, p, provenance=None, seed_tag=()):
    """Gate-based preparation of (|x_k> + i^p |x_l>)/sqrt(2) from |0...0>:
    Hadamard + phase on a pivot qubit of the differing region, a CX fan-out
    across the remaining differing bits, then X on the bits set in x_k."""
    if len(x_k) != len(x_l):
        raise DataError("bitstrings must have equal length")
    if x_k.count("1") != x_l.count("1"):
        raise DataError("Hamming-weight mismatch")
    n = len(x_k)
    circ = Circuit(n, provenance=provenance, seed_tag=seed_tag)
    diff = [q for q in range(n) if x_k[q] != x_l[q]]
    if diff:
        pivot = diff[0]
        circ.h(pivot)
        circ.s_power(p, pivot)
        for q in diff[1:]:
            circ.cx(pivot, q)
    elif p % 4:
        raise DataError("superposition of identical bitstrings is only defined for p=0")
    for q in range(n):
        if x_k[q] == "1":
            circ.x(q)
    return circ


def brickwork_circuit(circ, theta, schedule):
    """Append the hop-gate brickwork given per-slot angles."""
    if len(theta) != len(schedule):
        raise ConfigError(
            f"{len(theta)} angles supplied for a schedule of {len(schedule)} hop gates"
        )
    for angle, (q1, q2) in zip(theta, schedule):
        circ.hop(angle, q1, q2)
    return circ


# ----------------------------------------------------------------------
# Pauli expectations


def expval_pauli(state, op):
    """<psi| op |psi>; real scalar for Hermitian op."""
    if op.n != state.n:
        raise DataError(f"operator on {op.n} qubits applied to {state.n}-qubit state")
    val = op.expectation(state.amplitudes)
    if op.is_hermitian():
        return float(val.real)
    return val


# ----------------------------------------------------------------------
# noise model


@dataclass(frozen=True)
class NoiseModel:
    """Synthetic noise: per-qubit readout flips, depolarizing after each
    two-qubit gate, and a shot budget per measurement basis."""

    readout_p01: float = 0.0   # P(read 1 | true 0)
    readout_p10: float = 0.0   # P(read 0 | true 1)
    depol2: float = 0.0
    shots: int = 100_000
    seed: int = 0

    def __post_init__(self):
        for name in ("readout_p01", "readout_p10", "depol2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name}={v} outside [0, 1]")
        if self.shots < 0:
            raise ConfigError("shots must be nonnegative")

    def assignment_matrix(self):
        """Exact single-qubit assignment matrix A[measured, true]."""
        return np.array(
            [
                [1.0 - self.readout_p01, self.readout_p10],
                [self.readout_p01, 1.0 - self.readout_p10],
            ]
        )

    def rng_for(self, circuit, basis_idx, purpose=0):
        seq = np.random.SeedSequence(
            [int(self.seed)] + list(circuit.seed_tag) + [int(basis_idx), int(purpose)]
        )
        return np.random.Generator(np.random.Philox(seq))


# ----------------------------------------------------------------------
# sampling


def all_bases(n):
    """All 3^n measurement bases in a fixed order (X<Y<Z per qubit, qubit 0 fastest)."""
    letters = "XYZ"
    out = []
    for idx in range(3**n):
        rem = idx
        chars = []
        for _ in range(n):
            chars.append(letters[rem % 3])
            rem //= 3
        out.append("".join(chars))
    return out


def basis_index(basis):
    letters = {"X": 0, "Y": 1, "Z": 2}
    idx = 0
    for q, ch in enumerate(basis):
        try:
            idx += letters[ch] * 3**q
        except KeyError:
            raise DataError(f"bad basis letter {ch!r}") from None
    return idx


def _rotate_to_basis(amps, n, basis):
    sdg = _s_power_matrix(3)
    for q, ch in enumerate(basis):
        if ch == "X":
            amps = _apply_1q(amps, n, q, _H.astype(complex))
        elif ch == "Y":
            amps = _apply_1q(amps, n, q, _H.astype(complex) @ sdg)
        elif ch != "Z":
            raise DataError(f"bad basis letter {ch!r}")
    return amps


def _apply_readout_channel(probs, n, noise):
    a = noise.assignment_matrix()
    if np.allclose(a, np.eye(2)):
        return probs
    return _apply_1q_all(probs, n, a)


def _apply_1q_all(vec, n, mat):
    # apply the same real 2x2 to every qubit axis of a (..., 2**n) real array
    out = vec
    for q in range(n):
        out = _apply_1q(out.astype(float) if out.dtype != float else out, n, q, mat)
    return out.real if np.iscomplexobj(out) else out


def _draw_error_patterns(circuit, noise, rng, shots):
    """Group shots by depolarizing-error pattern.

    Returns list of (pattern, count) where pattern is a tuple of
    (gate_index, pair_pauli_index) pairs, empty for the clean trajectory.
    Exactly reproduces iid per-gate Bernoulli(p) errors with uniform
    non-identity pair Paulis.
    """
    g2 = circuit.two_qubit_gates()
    p = noise.depol2
    if p == 0.0 or not g2 or shots == 0:
        return [((), shots)]
    ng = len(g2)
    # distribution of the number of erring gates per shot
    pmf = np.array([_binom_pmf(ng, c, p) for c in range(ng + 1)])
    pmf = pmf / pmf.sum()
    counts_by_c = rng.multinomial(shots, pmf)
    patterns = {}
    if counts_by_c[0]:
        patterns[()] = int(counts_by_c[0])
    for c in range(1, ng + 1):
        nc = int(counts_by_c[c])
        if nc == 0:
            continue
        if c == 1:
            gates = rng.integers(0, ng, size=nc)
            subsets = gates[:, None]
        else:
            # uniform c-subsets of gate slots, one per shot
            subsets = np.empty((nc, c), dtype=np.int64)
            for row in range(nc):
                subsets[row] = np.sort(rng.choice(ng, size=c, replace=False))
        paulis = rng.integers(1, 16, size=(nc, c))
        for row in range(nc):
            key = tuple(
                (int(g2[subsets[row, j]]), int(paulis[row, j])) for j in range(c)
            )
            patterns[key] = patterns.get(key, 0) + 1
    return sorted(patterns.items())


def _binom_pmf(n, k, p):
    from math import comb

    return comb(n, k) * p**k * (1.0 - p) ** (n - k)


def _pattern_state(circuit, pattern, cache):
    if pattern not in cache:
        insertions = dict(pattern)
        amps = np.zeros(2**circuit.n, dtype=complex)
        amps[0] = 1.0
        cache[pattern] = circuit._run(amps, insertions if insertions else None)
    return cache[pattern]


def sample_counts(circuit, basis, noise, _state_cache=None):
    """Histogram of n_s bitstring outcomes of `circuit` measured in `basis`.

    Deterministic under a fixed NoiseModel seed; independent RNG stream per
    (circuit, basis) so results do not depend on execution order.
    """
    if len(basis) != circuit.n:
        raise DataError(f"basis {basis!r} does not match circuit on {circuit.n} qubits")
    n = circuit.n
    bidx = basis_index(basis)
    rng = noise.rng_for(circuit, bidx)
    cache = _state_cache if _state_cache is not None else {}
    patterns = _draw_error_patterns(circuit, noise, rng, noise.shots)
    hist = np.zeros(2**n, dtype=np.int64)
    for pattern, count in patterns:
        if count == 0:
            continue
        amps = _pattern_state(circuit, pattern, cache)
        amps = _rotate_to_basis(amps, n, basis)
        probs = np.abs(amps) ** 2
        probs = _apply_readout_channel(probs, n, noise)
        probs = np.clip(probs, 0.0, None)
        probs = probs / probs.sum()
        hist += rng.multinomial(count, probs)
    return {_index_to_bits(i, n): int(c) for i, c in enumerate(hist) if c}


# ----------------------------------------------------------------------
# Bloch vectors and tomography


@dataclass
class BlochVector:
    """Pauli expectation vector a (length 4^n) with per-entry standard errors."""

    n: int
    a: np.ndarray
    sigma: np.ndarray
    provenance: tuple | None = None

    def copy(self):
        return BlochVector(self.n, self.a.copy(), self.sigma.copy(), self.provenance)

    def norm_non_identity(self):
        return float(np.linalg.norm(self.a[1:]))

    def purity(self):
        return (1.0 + self.norm_non_identity() ** 2) / 2**self.n


def exact_bloch(state, provenance=None):
    """Exact Bloch vector of a pure state; zero uncertainty."""
    rho = np.outer(state.amplitudes, state.amplitudes.conj())
    coefs = dense_to_coefs(rho, state.n) * 2**state.n
    if np.max(np.abs(coefs.imag)) > 1e-10:
        raise DataError("density-matrix Pauli coefficients unexpectedly complex")
    a = coefs.real.copy()
    a[0] = 1.0
    return BlochVector(state.n, a, np.zeros(4**state.n), provenance)


def _wht(v):
    v = np.array(v, dtype=float)
    h = 1
    size = len(v)
    while h < size:
        v = v.reshape(-1, 2, h)
        top = v[:, 0, :] + v[:, 1, :]
        bot = v[:, 0, :] - v[:, 1, :]
        v = np.stack([top, bot], axis=1).reshape(size)
        h *= 2
    return v


def _counts_to_weights(counts, n):
    w = np.zeros(2**n)
    for bits, c in counts.items():
        w[_bits_to_index(bits)] += c
    return w


def _submasks(s):
    # all submasks of s, including 0 and s
    out = []
    t = s
    while True:
        out.append(t)
        if t == 0:
            break
        t = (t - 1) & s
    return out


def assemble_bloch(
    counts_by_basis,
    n,
    postselect_weight=None,
    calibration=None,
    provenance=None,
):
    """Pool per-basis histograms into a Bloch vector.

    Each Pauli string is estimated in every compatible basis (those matching
    its letters on its support); estimates are averaged and their delta-method
    variances combined. Hamming-weight filtering applies only to the all-Z
    basis, the one basis whose outcomes carry the conserved particle number.
    Readout inversion enters through per-qubit linear functionals equivalent
    to the tensored assignment-matrix inverse.
    """
    dim = 4**n
    acc = np.zeros(dim)
    var = np.zeros(dim)
    nbases = np.zeros(dim, dtype=np.int64)
    full = (1 << n) - 1
    digit_of = {"X": 1, "Y": 2, "Z": 3}

    if calibration is not None:
        alpha, beta = calibration.inversion_functionals(n)
    else:
        alpha, beta = np.zeros(n), np.ones(n)

    z_only = "Z" * n
    for basis, counts in counts_by_basis.items():
        w = _counts_to_weights(counts, n)
        if postselect_weight is not None and basis == z_only:
            keep = popcount(np.arange(2**n)) == postselect_weight
            w = w * keep
        w1 = _wht(w)
        total = w1[0]
        if total <= 0:
            continue
        plain = calibration is None
        for s in range(1, 2**n):
            # Pauli index selected by the basis letters on support s
            idx = 0
            ok = True
            for q in range(n):
                if (s >> q) & 1:
                    idx += digit_of[basis[q]] * 4**q
            if plain:
                est = w1[s] / total
                v = max((1.0 - est * est) / total, 0.0)
            else:
                est = 0.0
                m2 = 0.0
                for t in _submasks(s):
                    kap = 1.0
                    gam = 1.0
                    rem = s & ~t
                    for q in range(n):
                        bit = 1 << q
                        if t & bit:
                            kap *= beta[q]
                            gam *= 2.0 * alpha[q] * beta[q]
                        elif rem & bit:
                            kap *= alpha[q]
                            gam *= alpha[q] ** 2 + beta[q] ** 2
                    est += kap * w1[t]
                    m2 += gam * w1[t]
                est /= total
                v = max((m2 / total - est * est) / total, 0.0)
            acc[idx] += est
            var[idx] += v
            nbases[idx] += 1

    missing = [i for i in range(1, dim) if nbases[i] == 0]
    if missing:
        masks_x, masks_z = index_masks(n)
        labels = [mask_to_label(int(masks_x[i]), int(masks_z[i]), n) for i in missing[:8]]
        raise CoverageError(
            f"{len(missing)} Pauli entries received no valid basis data, e.g. {labels}"
        )
    a = np.zeros(dim)
    sig = np.zeros(dim)
    a[0] = 1.0
    nz = nbases > 0
    a[nz] = acc[nz] / nbases[nz]
    sig[nz] = np.sqrt(var[nz]) / nbases[nz]
    return BlochVector(n, a, sig, provenance)


def measure_counts_sweep(circuit, noise):
    """Sample every one of the 3^n bases with noise.shots shots each."""
    if circuit.n > 8:
        raise ConfigError("tomography sweeps 3^n bases; n > 8 unsupported")
    if noise.shots == 0:
        raise ConfigError("measurement with a noise model requires shots > 0")
    cache = {}
    return {
        basis: sample_counts(circuit, basis, noise, _state_cache=cache)
        for basis in all_bases(circuit.n)
    }


def circuit_output_state(circuit):
    amps = np.zeros(2**circuit.n, dtype=complex)
    amps[0] = 1.0
    return State(circuit.n, circuit._run(amps), check=False)


def tomography(circuit, noise=None, postselect_weight=None, calibration=None):
    """Estimate all 4^n Pauli expectations of the circuit's output state.

    noise=None runs the exact statevector path (zero uncertainty); otherwise
    every one of the 3^n bases is sampled with noise.shots shots.
    """
    if noise is None:
        return exact_bloch(circuit_output_state(circuit), provenance=circuit.provenance)
    counts_by_basis = measure_counts_sweep(circuit, noise)
    return assemble_bloch(
        counts_by_basis,
        circuit.n,
        postselect_weight=postselect_weight,
        calibration=calibration,
        provenance=circuit.provenance,
    )
