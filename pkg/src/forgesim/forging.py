"""Forged-wavefunction expectation values and the variational ground state.

The doubled-register state is |Psi> = sum_k lam_k U(theta)|x_k> (x) U(theta)|x_k>
with one register per spin species. Cross-register expectations reduce to
products of half-register matrix elements X_kl, each reconstructed from
tomography of the four superposition preparations (|x_k> + i^p |x_l>)/sqrt(2).

The p-weights used here are (-i)^p / 2: with normalized superposition states
the sum over p then returns X_kl exactly, which the statevector oracle tests
pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, DataError
from .integrals import cholesky_eri, rotate_homo_lumo
from .operators import build_hamiltonian_tensor, exchange_matrix, jw_one_body
from .simulator import (
    State,
    apply_hop_gate,
    brickwork_circuit,
    exact_bloch,
    prep_circuit_phi,
    prepare_phi,
)

__all__ = [
    "EFAnsatz",
    "MeasurementSet",
    "default_basis_states",
    "default_schedule",
    "build_ef_circuit",
    "measurement_set_exact",
    "measurement_set_sampled",
    "assembled_wavefunction",
    "ef_matrix_element",
    "ef_expectation",
    "schmidt_matrix",
    "optimal_lambda",
    "hf_pair_energy",
    "optimize_ground_state",
    "hamiltonian_for_ansatz",
    "OptimizeResult",
]

P_WEIGHTS = np.array([1.0, -1.0j, -1.0, 1.0j]) / 2.0


def default_basis_states(m, n_occ, k=2):
    """HF determinant plus the HOMO->LUMO pair excitation."""
    if not (0 < n_occ < m):
        raise ConfigError(f"n_occ={n_occ} must be strictly between 0 and m={m}")
    x0 = "1" * n_occ + "0" * (m - n_occ)
    if k == 1:
        return [x0]
    if k == 2:
        x1 = "1" * (n_occ - 1) + "01" + "0" * (m - n_occ - 1)
        return [x0, x1]
    raise ConfigError("default basis states are defined for k in {1, 2}")


def default_schedule(m):
    """Three brickwork layers of hop gates. For m >= 4 the qubits split into
    two blocks that the gates never couple; smaller registers use one block."""
    if m < 2:
        return []
    if m < 4:
        blocks = [list(range(m))]
    else:
        half = (m + 1) // 2
        blocks = [list(range(half)), list(range(half, m))]
    schedule = []
    for layer in range(3):
        off = layer % 2
        for block in blocks:
            for i in range(off, len(block) - 1, 2):
                schedule.append((block[i], block[i + 1]))
    return schedule


@dataclass
class EFAnsatz:
    """Forged ansatz: Schmidt basis bitstrings, hop angles, Schmidt
    coefficients, and the frontier-orbital rotation angle."""

    m: int
    basis_states: tuple
    theta: np.ndarray
    lam: np.ndarray
    phi: float = 0.0
    schedule: tuple = ()

    def __post_init__(self):
        self.basis_states = tuple(self.basis_states)
        self.theta = np.asarray(self.theta, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        self.schedule = tuple((int(a), int(b)) for a, b in self.schedule)
        self.validate()

    def validate(self):
        if len(self.basis_states) != len(set(self.basis_states)):
            raise DataError("basis bitstrings must be distinct")
        weights = {s.count("1") for s in self.basis_states}
        if len(weights) != 1:
            raise DataError("basis bitstrings must share one Hamming weight")
        for s in self.basis_states:
            if len(s) != self.m or set(s) - {"0", "1"}:
                raise DataError(f"bad basis bitstring {s!r} for m={self.m}")
        if abs(np.sum(self.lam**2) - 1.0) > 1e-12:
            raise DataError("Schmidt coefficients must satisfy sum lam^2 = 1")
        if len(self.lam) != len(self.basis_states):
            raise DataError("one Schmidt coefficient per basis state required")
        if len(self.theta) != len(self.schedule):
            raise DataError("one hop angle per schedule slot required")

    @property
    def k(self):
        return len(self.basis_states)

    @property
    def n_occ(self):
        return self.basis_states[0].count("1")

    def half_state(self, k):
        """U(theta)|x_k> on one register."""
        state = State.from_bitstring(self.basis_states[k])
        for angle, (q1, q2) in zip(self.theta, self.schedule):
            state = apply_hop_gate(state, q1, q2, angle)
        return state


def build_ef_circuit(ansatz, k, l, p):
    """Gate sequence preparing (|x_k> + i^p |x_l>)/sqrt(2) and applying the
    hop-gate brickwork. Diagonal records use k = l, p = 0."""
    circ = prep_circuit_phi(
        ansatz.basis_states[k],
        ansatz.basis_states[l],
        p,
        provenance=(k, l, p),
        seed_tag=(1, k, l, p),
    )
    return brickwork_circuit(circ, ansatz.theta, ansatz.schedule)


def _record_keys(k):
    keys = [(i, i, 0) for i in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            keys.extend((i, j, p) for p in range(4))
    return keys


@dataclass
class MeasurementSet:
    """Bloch-vector records for every forged circuit of an ansatz."""

    mode: str
    m: int
    ansatz: EFAnsatz
    records: dict
    states: dict | None = None
    meta: dict = field(default_factory=dict)

    def validate(self):
        for key in _record_keys(self.ansatz.k):
            if key not in self.records:
                raise DataError(f"measurement set missing record {key}")

    def record(self, k, l, p):
        try:
            return self.records[(k, l, p)]
        except KeyError:
            raise DataError(f"measurement set missing record {(k, l, p)}") from None


def _forged_state(ansatz, k, l, p):
    state = prepare_phi(ansatz.basis_states[k], ansatz.basis_states[l], p)
    for angle, (q1, q2) in zip(ansatz.theta, ansatz.schedule):
        state = apply_hop_gate(state, q1, q2, angle)
    return state


def measurement_set_exact(ansatz):
    """Zero-uncertainty records from the statevector, plus the states."""
    records = {}
    states = {}
    for key in _record_keys(ansatz.k):
        state = _forged_state(ansatz, *key)
        states[key] = state
        records[key] = exact_bloch(state, provenance=key)
    return MeasurementSet("exact", ansatz.m, ansatz, records, states=states)


def measurement_set_sampled(ansatz, noise):
    """Raw finite-shot records: full tomography of every forged circuit."""
    from .simulator import tomography

    records = {}
    for key in _record_keys(ansatz.k):
        circ = build_ef_circuit(ansatz, *key)
        records[key] = tomography(circ, noise)
    return MeasurementSet(
        "sampled",
        ansatz.m,
        ansatz,
        records,
        meta={"shots": noise.shots, "seed": noise.seed},
    )


def assembled_wavefunction(ansatz, states=None):
    """The doubled-register statevector sum_k lam_k u_k (x) u_k (up register
    in the low index bits)."""
    dim = 2**ansatz.m
    psi = np.zeros((dim, dim), dtype=complex)  # [i_down, i_up]
    for k in range(ansatz.k):
        u = (
            states[(k, k, 0)].amplitudes
            if states is not None
            else ansatz.half_state(k).amplitudes
        )
        psi += ansatz.lam[k] * np.outer(u, u)
    return State(2 * ansatz.m, psi.reshape(-1), check=False)


# ----------------------------------------------------------------------
# forged matrix elements


def _pair_vectors(ms, k, l):
    """Complex record combinations g^{kl} with g^{kl}_i carrying the Pauli-i
    matrix element <u_k|sigma_i|u_l>, plus the matching variance vectors."""
    if k == l:
        rec = ms.record(k, k, 0)
        return rec.a.astype(complex), rec.sigma**2 * np.ones_like(rec.a)
    lo, hi = (k, l) if k < l else (l, k)
    recs = [ms.record(lo, hi, p) for p in range(4)]
    w = P_WEIGHTS if k < l else P_WEIGHTS.conj()
    g = sum(w[p] * recs[p].a for p in range(4))
    var = sum(np.abs(w[p]) ** 2 * recs[p].sigma ** 2 for p in range(4))
    return g, var


def ef_matrix_element(op, ms, k, l):
    """X_kl = <x_k| U† op U |x_l> from the stored records, with a combined
    standard error on the complex value."""
    if op.n != ms.m:
        raise DataError("operator register size does not match the measurement set")
    c = op.coef_vector()
    g, var = _pair_vectors(ms, k, l)
    value = complex(np.dot(c, g))
    sigma = float(np.sqrt(np.sum(np.abs(c) ** 2 * var)))
    return value, sigma


def _coef_matrix(ops, dim):
    out = np.zeros((len(ops), dim), dtype=complex)
    for i, op in enumerate(ops):
        out[i] = op.coef_vector()
    return out


def _expectation_with_gradient(op, ms, lam, weights=None):
    """Forged expectation of a tensor-factor operator.

    Returns (value, variance) with the variance from first-order propagation
    through every independent Bloch record. `weights` overrides the lam_k
    lam_l pair weights (used for single Schmidt-matrix entries).
    """
    kk = ms.ansatz.k
    dim = 4**ms.m
    if weights is None:
        lam = np.asarray(lam, dtype=float)
        if len(lam) != kk:
            raise DataError("Schmidt coefficient count mismatch")
        if abs(np.sum(lam**2) - 1.0) > 1e-10:
            raise DataError("Schmidt coefficients must be normalized")
        weights = np.outer(lam, lam)

    a_coefs = _coef_matrix([a for a, _ in op.factors], dim)
    b_coefs = _coef_matrix([b for _, b in op.factors], dim)

    g = np.zeros((kk, kk, dim), dtype=complex)
    for k in range(kk):
        for l in range(kk):
            g[k, l], _ = _pair_vectors(ms, k, l)
    akl = np.einsum("fi,kli->fkl", a_coefs, g)
    bkl = np.einsum("fi,kli->fkl", b_coefs, g)
    value = complex(np.einsum("kl,fkl,fkl->", weights, akl, bkl))

    # d(value)/d(g^{kl}_i), then chain rule onto the independent records
    d = np.einsum("kl,fi,fkl->kli", weights, a_coefs, bkl) + np.einsum(
        "kl,fi,fkl->kli", weights, b_coefs, akl
    )
    var = 0.0
    for k in range(kk):
        rec = ms.record(k, k, 0)
        var += float(np.sum((d[k, k].real**2) * rec.sigma**2))
    for k in range(kk):
        for l in range(k + 1, kk):
            for p in range(4):
                rec = ms.record(k, l, p)
                grad = P_WEIGHTS[p] * d[k, l] + np.conj(P_WEIGHTS[p]) * d[l, k]
                var += float(np.sum((grad.real**2) * rec.sigma**2))
    return value, var


def ef_expectation(op, ms, lam):
    """<Psi| op |Psi> = sum_kl lam_k lam_l A_kl B_kl summed over factors."""
    value, var = _expectation_with_gradient(op, ms, lam)
    return float(value.real), float(np.sqrt(var))


def _reference_preserved(x0, schedule):
    # hop gates acting on equal bits leave the determinant invariant up to phase
    return all(x0[q1] == x0[q2] for q1, q2 in schedule)


def _classical_pair_energy(op, bits):
    """<x x| op |x x> for a computational product state; no quantum data."""
    state = State.from_bitstring(bits)
    total = 0.0
    for a, b in op.factors:
        va = a.expectation(state.amplitudes)
        vb = b.expectation(state.amplitudes)
        total += (va * vb).real
    return total


def schmidt_matrix(h_op, ms):
    """h_kl = <e_k|H|e_l> for the forged basis pair states, with per-entry
    standard errors. When the brickwork preserves the first reference
    determinant, h_00 is evaluated classically and carries zero uncertainty.
    """
    kk = ms.ansatz.k
    h = np.zeros((kk, kk))
    sig = np.zeros((kk, kk))
    for k in range(kk):
        for l in range(kk):
            w = np.zeros((kk, kk))
            w[k, l] = 1.0
            value, var = _expectation_with_gradient(h_op, ms, None, weights=w)
            h[k, l] = value.real
            sig[k, l] = np.sqrt(var)
    if _reference_preserved(ms.ansatz.basis_states[0], ms.ansatz.schedule):
        h[0, 0] = _classical_pair_energy(h_op, ms.ansatz.basis_states[0])
        sig[0, 0] = 0.0
    return h, sig


def optimal_lambda(h):
    """Lowest eigenpair of the Schmidt matrix; lambda sign fixed by λ₀ ≥ 0."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DataError("Schmidt matrix must be square")
    if np.max(np.abs(h - h.T)) > 1e-8:
        raise DataError("Schmidt matrix asymmetric beyond 1e-8")
    evals, vecs = np.linalg.eigh(0.5 * (h + h.T))
    lam = vecs[:, 0]
    if lam[0] < 0 or (lam[0] == 0 and lam[np.argmax(np.abs(lam))] < 0):
        lam = -lam
    return lam, float(evals[0])


def hf_pair_energy(ints):
    """Closed-shell single-determinant energy of the active space (with e0)."""
    occ = range(ints.n_up)
    e = ints.e0 + 2.0 * sum(ints.h[i, i] for i in occ)
    for i in occ:
        for j in occ:
            e += 2.0 * ints.eri[i, i, j, j] - ints.eri[i, j, j, i]
    return float(e)


def hamiltonian_for_ansatz(ints, ansatz, chol_tol=1e-10):
    """Tensor-factor Hamiltonian in the ansatz's rotated orbital frame."""
    ints_rot = rotate_homo_lumo(ints, ansatz.phi) if ansatz.phi else ints
    chol = cholesky_eri(ints_rot, tol=chol_tol)
    return build_hamiltonian_tensor(ints_rot, chol), ints_rot, chol


# ----------------------------------------------------------------------
# ground-state optimization


@dataclass
class OptimizeResult:
    ansatz: EFAnsatz
    energy: float
    energy_sigma: float
    converged: bool
    trace: list
    traces: list
    fun_evals: int


@dataclass
class GroundConfig:
    seed: int = 0
    restarts: int = 8
    max_iter: int = 300
    fd_step: float = 1e-4
    chol_tol: float = 1e-10
    optimize_phi: bool = True
    schedule: tuple | None = None
    basis_states: tuple | None = None


class _Objective:
    """Exact-mode EF energy as a function of (theta, phi); the Schmidt
    coefficients are resolved by the inner eigensolve at every point."""

    def __init__(self, ints, basis_states, schedule, cfg):
        self.ints = ints
        self.basis_states = basis_states
        self.schedule = schedule
        self.cfg = cfg
        self.m = ints.norb
        self._dense_cache = {}
        self._memo = {}
        self.evals = 0

    def _denses(self, phi):
        key = round(float(phi), 14)
        if key not in self._dense_cache:
            ints_rot = rotate_homo_lumo(self.ints, phi) if phi else self.ints
            chol = cholesky_eri(ints_rot, tol=self.cfg.chol_tol)
            k = exchange_matrix(ints_rot.eri)
            a_dense = jw_one_body(ints_rot.h - 0.5 * k).to_dense()
            dim = 2**self.m
            if chol.factors.shape[0]:
                l_dense = np.stack([jw_one_body(g).to_dense() for g in chol.factors])
                for ld in l_dense:
                    a_dense += 0.5 * (ld @ ld)
            else:
                l_dense = np.zeros((0, dim, dim), dtype=complex)
            if len(self._dense_cache) > 8:
                self._dense_cache.clear()
            self._dense_cache[key] = (a_dense, l_dense)
        return self._dense_cache[key]

    def _half_states(self, theta):
        states = []
        for bits in self.basis_states:
            st = State.from_bitstring(bits)
            for angle, (q1, q2) in zip(theta, self.schedule):
                st = apply_hop_gate(st, q1, q2, angle)
            states.append(st.amplitudes)
        return np.stack(states)

    def schmidt(self, x):
        theta, phi = self._unpack(x)
        a_dense, l_dense = self._denses(phi)
        us = self._half_states(theta)
        kk = us.shape[0]
        if len(l_dense):
            lmat = np.einsum("ka,gab,lb->gkl", us.conj(), l_dense, us, optimize=True)
        else:
            lmat = np.zeros((0, kk, kk), dtype=complex)
        h = np.sum(lmat**2, axis=0).real.copy()
        for k in range(kk):
            h[k, k] += 2.0 * float(np.vdot(us[k], a_dense @ us[k]).real)
        return 0.5 * (h + h.T)

    def _unpack(self, x):
        if self.cfg.optimize_phi:
            return np.asarray(x[:-1], dtype=float), float(x[-1])
        return np.asarray(x, dtype=float), 0.0

    def __call__(self, x):
        key = tuple(np.round(x, 15))
        if key in self._memo:
            return self._memo[key]
        h = self.schmidt(x)
        _, eps = optimal_lambda(h)
        value = eps + self.ints.e0
        if len(self._memo) > 4096:
            self._memo.clear()
        self._memo[key] = value
        self.evals += 1
        return value

    def gradient(self, x):
        step = self.cfg.fd_step
        g = np.zeros(len(x))
        for i in range(len(x)):
            xp = np.array(x, dtype=float)
            xm = np.array(x, dtype=float)
            xp[i] += step
            xm[i] -= step
            g[i] = (self(xp) - self(xm)) / (2.0 * step)
        return g


def optimize_ground_state(ints, config=None):
    """Variational minimum of the forged energy over (theta, phi) with the
    Schmidt coefficients eigensolved at every objective call. Exact-mode
    objective; L-BFGS-B with central-difference gradients and multi-start."""
    cfg = config or GroundConfig()
    if isinstance(cfg, dict):
        cfg = GroundConfig(**cfg)
    m = ints.norb
    if ints.n_up != ints.n_dn:
        raise ConfigError("the forged ansatz assumes equal spin populations")
    basis_states = tuple(cfg.basis_states or default_basis_states(m, ints.n_up))
    schedule = tuple(cfg.schedule or default_schedule(m))
    obj = _Objective(ints, basis_states, schedule, cfg)
    n_theta = len(schedule)
    n_par = n_theta + (1 if cfg.optimize_phi else 0)

    root = np.random.SeedSequence(cfg.seed)
    best = None
    traces = []
    for start, child in enumerate(root.spawn(max(cfg.restarts, 1))):
        if start == 0:
            x0 = np.zeros(n_par)
        else:
            rng = np.random.Generator(np.random.Philox(child))
            x0 = rng.uniform(-np.pi / 2, np.pi / 2, size=n_par)
        trace = []
        last_g = {"norm": np.nan}

        def jac(x, _obj=obj, _last=last_g):
            g = _obj.gradient(x)
            _last["norm"] = float(np.linalg.norm(g))
            return g

        def callback(xk, _obj=obj, _trace=trace, _last=last_g):
            theta, phi = _obj._unpack(xk)
            _trace.append(
                {
                    "iteration": len(_trace) + 1,
                    "energy": _obj(xk),
                    "grad_norm": _last["norm"],
                    "theta": theta.tolist(),
                    "phi": phi,
                }
            )

        res = minimize(
            obj,
            x0,
            jac=jac,
            method="L-BFGS-B",
            callback=callback,
            options={"maxiter": cfg.max_iter, "ftol": 1e-13, "gtol": 1e-9},
        )
        traces.append(trace)
        if best is None or res.fun < best[0].fun:
            best = (res, trace, start)

    res, trace, start = best
    theta, phi = obj._unpack(res.x)
    h = obj.schmidt(res.x)
    lam, eps = optimal_lambda(h)
    ansatz = EFAnsatz(
        m=m,
        basis_states=basis_states,
        theta=theta,
        lam=lam,
        phi=phi,
        schedule=schedule,
    )
    return OptimizeResult(
        ansatz=ansatz,
        energy=float(eps + ints.e0),
        energy_sigma=0.0,
        converged=bool(res.success),
        trace=trace,
        traces=traces,
        fun_evals=obj.evals,
    )
