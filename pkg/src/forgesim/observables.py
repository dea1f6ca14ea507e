"""One-body density matrices, dipole spectra, and atomic charges.

Transition density matrices between subspace-expanded states come from the
same forged measurement records used for the eigenproblem; no re-measurement
happens per state. Downstream analyses (dipole structure factor, population
analysis) are plain numpy on top.

Charge-gauge convention: dipole integrals are electronic position matrix
elements, so weights are electronic-only; nuclear terms cancel out of every
inelastic line and are not added to the elastic one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .forging import _expectation_with_gradient
from .integrals import rotation_matrix
from .operators import TensorFactorOp, build_one_body_tensor, jw_one_body, op_product

__all__ = [
    "RDM",
    "Peak",
    "SpectrumPeaks",
    "AtomicCharges",
    "compute_rdm",
    "dsf_peaks",
    "broaden",
    "atomic_charges",
    "dipole_sq_expectation",
    "rotate_one_body",
]

HARTREE_EV = 27.211386245988


def rotate_one_body(x, phi, homo, lumo):
    """Matrix of a one-body operator in the Givens-rotated orbital basis."""
    x = np.asarray(x, dtype=float)
    r = rotation_matrix(x.shape[0], phi, homo, lumo)
    return r @ x @ r.T


def _combined_op(excitations, coeffs):
    """Linear combination sum_nu c_nu E_nu as a single tensor-factor op."""
    coeffs = np.asarray(coeffs)
    if len(coeffs) != len(excitations):
        raise DataError(
            f"coefficient vector length {len(coeffs)} != {len(excitations)} operators"
        )
    factors = []
    for c, op in zip(coeffs, excitations):
        if abs(c) < 1e-14:
            continue
        for fa, fb in op.factors:
            factors.append((fa * complex(c), fb))
    if not factors:
        raise DataError("combined operator is zero")
    return TensorFactorOp(m=excitations[0].m, factors=factors, label="combo")


def _op_sum(ops):
    factors = []
    for op in ops:
        factors.extend(op.factors)
    return TensorFactorOp(m=ops[0].m, factors=factors, label="sum")


@dataclass
class RDM:
    """Spin-summed one-body (transition) density matrix in the rotated
    active-orbital basis, with elementwise uncertainties."""

    values: np.ndarray
    sigma: np.ndarray
    pair: tuple
    phi: float = 0.0
    homo: int = 0
    lumo: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.values.shape[0]

    def unrotated(self):
        """Density matrix back in the untouched MO basis."""
        if self.phi == 0.0:
            return self.values.copy()
        r = rotation_matrix(self.m, self.phi, self.homo, self.lumo)
        return r.T @ self.values @ r


def _unit_matrix(m, p, r):
    e = np.zeros((m, m))
    e[p, r] = 1.0
    return e


def _psi_matrix(ms, lam):
    dim = 2**ms.m
    psi = np.zeros((dim, dim), dtype=complex)
    for k in range(ms.ansatz.k):
        u = ms.states[(k, k, 0)].amplitudes
        psi += lam[k] * np.outer(u, u)
    return psi


def compute_rdm(ms, lam, c_A, c_B, excitations, pair=("A", "B")):
    """rho_pr = <Phi_A| sum_s a+_ps a_rs |Phi_B> for subspace states
    Phi = sum_nu c_nu E_nu |Psi>.

    Same-state matrices are Hermitized and rescaled so the trace equals the
    particle number; transition matrices get their global phase fixed by
    making the largest element real positive."""
    lam = np.asarray(lam, dtype=float)
    c_A = np.asarray(c_A)
    c_B = np.asarray(c_B)
    m = ms.m
    same = c_A.shape == c_B.shape and np.allclose(c_A, c_B)
    values = np.zeros((m, m), dtype=complex)
    sigma = np.zeros((m, m))

    if ms.mode == "exact" and ms.states is not None:
        psi = _psi_matrix(ms, lam)
        w_a = sum(
            complex(c) * op.apply_pair(psi)
            for c, op in zip(c_A, excitations)
            if abs(c) > 1e-14
        )
        w_b = w_a if same else sum(
            complex(c) * op.apply_pair(psi)
            for c, op in zip(c_B, excitations)
            if abs(c) > 1e-14
        )
        for p in range(m):
            for r in range(m):
                b = jw_one_body(_unit_matrix(m, p, r)).to_dense()
                # up spins act on the column index, down spins on the row
                acted = w_b @ b.T + b @ w_b
                values[p, r] = np.vdot(w_a.reshape(-1), acted.reshape(-1))
    else:
        e_a = _combined_op(excitations, c_A)
        e_b = e_a if same else _combined_op(excitations, c_B)
        for p in range(m):
            for r in range(m):
                op = build_one_body_tensor(_unit_matrix(m, p, r))
                t = op_product(e_a.adjoint(), op_product(op, e_b))
                val, var = _expectation_with_gradient(t, ms, lam)
                values[p, r] = val
                sigma[p, r] = np.sqrt(var)

    n_particles = 2 * ms.ansatz.n_occ
    if same:
        values = 0.5 * (values + values.conj().T)
        sigma = 0.5 * np.sqrt(sigma**2 + sigma.T**2)
        trace = values.trace().real
        if abs(trace) < 1e-12:
            raise DataError("density matrix trace vanished; cannot rescale")
        scale = n_particles / trace
        values = values * scale
        sigma = sigma * abs(scale)
    else:
        idx = np.unravel_index(np.argmax(np.abs(values)), values.shape)
        peak = values[idx]
        if abs(peak) > 1e-14:
            values = values * (abs(peak) / peak)

    return RDM(
        values=values,
        sigma=sigma,
        pair=tuple(pair),
        phi=ms.ansatz.phi,
        homo=ms.ansatz.n_occ - 1,
        lumo=ms.ansatz.n_occ,
        meta={"mode": ms.mode, "rescaled": bool(same)},
    )


@dataclass
class Peak:
    omega: float          # excitation energy, Hartree
    omega_sigma: float
    weight: float         # squared transition dipole, Bohr^2
    spin: float
    label: str
    elastic: bool = False


@dataclass
class SpectrumPeaks:
    peaks: list

    def total_weight(self, include_elastic=True):
        return sum(p.weight for p in self.peaks if include_elastic or not p.elastic)


def dsf_peaks(rdms, dipole_mo, energies, energy_sigmas=None, spins=None,
              labels=None, ground_index=0):
    """Dipole line spectrum: weight |<A|mu|0>|^2 at omega = eps_A - eps_0.

    rdms are transition density matrices <A|E_pr|0> aligned with energies;
    the A=0 entry gives the elastic line, flagged rather than dropped."""
    if dipole_mo is None:
        raise DataError("dipole matrices are required for the structure factor")
    dipole_mo = np.asarray(dipole_mo, dtype=float)
    if dipole_mo.ndim != 3 or dipole_mo.shape[0] != 3:
        raise DataError("dipole matrices must have shape (3, m, m)")
    n = len(rdms)
    if len(energies) != n:
        raise DataError("one energy per density matrix is required")
    energies = np.asarray(energies, dtype=float)
    sig = np.zeros(n) if energy_sigmas is None else np.asarray(energy_sigmas, dtype=float)
    e0, s0 = energies[ground_index], sig[ground_index]
    peaks = []
    for a in range(n):
        rho = rdms[a].unrotated() if isinstance(rdms[a], RDM) else np.asarray(rdms[a])
        if rho.shape != dipole_mo.shape[1:]:
            raise DataError("density matrix and dipole dimensions differ")
        weight = float(sum(abs(np.sum(dipole_mo[ax] * rho)) ** 2 for ax in range(3)))
        peaks.append(
            Peak(
                omega=float(energies[a] - e0),
                omega_sigma=float(np.sqrt(sig[a] ** 2 + s0**2)),
                weight=weight,
                spin=float(spins[a]) if spins is not None else 0.0,
                label=labels[a] if labels is not None else f"state{a}",
                elastic=a == ground_index,
            )
        )
    return SpectrumPeaks(peaks=peaks)


def broaden(peaks, grid, floor=2e-4, include_elastic=False):
    """Gaussian-broadened spectrum on a frequency grid.

    Per-peak width is the larger of the floor (0.2 mHa default) and the
    peak's own energy uncertainty. Elastic weight is excluded by default and
    reported separately by callers that want it."""
    if floor <= 0:
        raise ConfigError("broadening floor must be positive")
    if isinstance(grid, tuple):
        start, stop, step = grid
        if step <= 0:
            raise ConfigError("grid step must be positive")
        omega = np.arange(start, stop + 0.5 * step, step)
    else:
        omega = np.asarray(grid, dtype=float)
        if omega.size > 1 and np.any(np.diff(omega) <= 0):
            raise ConfigError("grid must be strictly increasing")
    intensity = np.zeros_like(omega)
    plist = peaks.peaks if isinstance(peaks, SpectrumPeaks) else list(peaks)
    for pk in plist:
        if pk.elastic and not include_elastic:
            continue
        width = max(floor, pk.omega_sigma)
        intensity += (
            pk.weight
            / (width * np.sqrt(2.0 * np.pi))
            * np.exp(-0.5 * ((omega - pk.omega) / width) ** 2)
        )
    return omega, intensity


@dataclass
class AtomicCharges:
    q: np.ndarray
    sigma: np.ndarray
    method: str

    @property
    def total(self):
        return float(np.sum(self.q))


def _lowdin_half(s):
    evals, vecs = np.linalg.eigh(s)
    if evals.min() <= 0:
        raise DataError(f"overlap matrix not positive definite (min eig {evals.min():.3e})")
    return (vecs * np.sqrt(evals)) @ vecs.T


def _population_charges(rho_mo, aux, method):
    nf, m = aux.n_frozen, aux.n_active
    if rho_mo.shape != (m, m):
        raise DataError(
            f"density matrix is {rho_mo.shape}, auxiliary data expects ({m}, {m})"
        )
    padded = np.zeros((nf + m, nf + m))
    padded[:nf, :nf] = 2.0 * np.eye(nf)
    padded[nf:, nf:] = rho_mo
    p_ao = aux.mo_coeff @ padded @ aux.mo_coeff.T
    if method == "mulliken":
        pops = np.diag(p_ao @ aux.overlap_ao)
    elif method == "lowdin":
        x = aux.orthogonalizer if aux.orthogonalizer is not None else _lowdin_half(aux.overlap_ao)
        pops = np.diag(x @ p_ao @ x.T)
    else:
        raise ConfigError(f"unknown population method {method!r}")
    per_atom = np.bincount(aux.ao_to_atom, weights=pops, minlength=aux.n_atom)
    return np.asarray(aux.charges_nuc, dtype=float) - per_atom


def atomic_charges(rdm, aux, method="mulliken", n_samples=100, seed=0):
    """Partial charges from a same-state density matrix.

    The active-space matrix is taken back to the plain MO basis, padded with
    doubly occupied frozen orbitals, and transformed to the AO basis before
    the population analysis. Uncertainties come from Gaussian resampling of
    the matrix elements (Hermitian-symmetrized), 100 draws by default."""
    aux.validate()
    if isinstance(rdm, RDM):
        rho_mo = rdm.unrotated().real
        elem_sigma = rdm.sigma
    else:
        rho_mo = np.asarray(rdm, dtype=float)
        elem_sigma = np.zeros_like(rho_mo)
    q = _population_charges(rho_mo, aux, method)
    if not np.any(elem_sigma):
        return AtomicCharges(q=q, sigma=np.zeros_like(q), method=method)
    rng = np.random.default_rng(seed)
    draws = np.empty((n_samples, len(q)))
    for i in range(n_samples):
        noise = rng.normal(size=rho_mo.shape) * elem_sigma
        sample = rho_mo + 0.5 * (noise + noise.T)
        draws[i] = _population_charges(sample, aux, method)
    return AtomicCharges(q=q, sigma=draws.std(axis=0, ddof=1), method=method)


def dipole_sq_expectation(ms, lam, coeffs, excitations, dipole_mo):
    """<Phi| mu . mu |Phi> for the subspace state with coefficients c.

    The completeness sum rule compares this against the summed line weights
    whenever the expansion spans the full symmetry sector."""
    lam = np.asarray(lam, dtype=float)
    dipole_mo = np.asarray(dipole_mo, dtype=float)
    ansatz = ms.ansatz
    d_rot = [
        rotate_one_body(dipole_mo[ax], ansatz.phi, ansatz.n_occ - 1, ansatz.n_occ)
        for ax in range(3)
    ]
    if ms.mode == "exact" and ms.states is not None:
        psi = _psi_matrix(ms, lam)
        w0 = sum(
            complex(c) * op.apply_pair(psi)
            for c, op in zip(coeffs, excitations)
            if abs(c) > 1e-14
        )
        total = 0.0
        for ax in range(3):
            v = build_one_body_tensor(d_rot[ax]).apply_pair(w0)
            total += float(np.vdot(v.reshape(-1), v.reshape(-1)).real)
        return total, 0.0
    e0 = _combined_op(excitations, coeffs)
    ops = [build_one_body_tensor(d) for d in d_rot]
    musq = _op_sum([op_product(op, op) for op in ops])
    t = op_product(e0.adjoint(), op_product(musq, e0))
    val, var = _expectation_with_gradient(t, ms, lam)
    return float(val.real), float(np.sqrt(var))
