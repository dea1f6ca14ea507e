"""Subspace expansion on top of the forged ground state.

The excitation operators span a subspace around |Psi>; Hamiltonian, metric,
and total-spin matrices over that subspace are estimated through the same
forged measurement records, spin-projected by a generalized eigensolve of
(S, M), and diagonalized per spin block. Energies here exclude the constant
core term e0; report layers add it back.

Uncertainties follow the first-order Rayleigh-quotient propagation with the
coefficients held fixed at the mean-matrix solution; they are indicative
rather than strict confidence intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConditioningError, DataError
from .forging import _expectation_with_gradient, assembled_wavefunction
from .operators import op_product

__all__ = [
    "QSEMatrices",
    "SpinBlock",
    "QSEState",
    "QSEResult",
    "assemble_qse_matrices",
    "spin_project",
    "solve_qse",
    "estimate_with_uncertainty",
    "qse_full_solve",
]


@dataclass
class QSEMatrices:
    """H, M (overlap metric), S (total spin) over the excitation subspace."""

    h: np.ndarray
    m: np.ndarray
    s2: np.ndarray
    h_sigma: np.ndarray
    m_sigma: np.ndarray
    s2_sigma: np.ndarray
    labels: list
    mode: str = "exact"
    diagnostics: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.h.shape[0]


def _symmetrize(mat, sig):
    sym = 0.5 * (mat + mat.T)
    ssym = 0.5 * np.sqrt(sig**2 + sig.T**2)
    asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    return sym, ssym, asym


def _assemble_exact(excitations, h_op, s2_op, ms, lam):
    m = ms.m
    dim = 2**m
    psi = np.zeros((dim, dim), dtype=complex)
    for k in range(ms.ansatz.k):
        u = ms.states[(k, k, 0)].amplitudes
        psi += lam[k] * np.outer(u, u)
    w = np.stack([op.apply_pair(psi).reshape(-1) for op in excitations])
    hw = np.stack(
        [h_op.apply_pair(wv.reshape(dim, dim)).reshape(-1) for wv in w]
    )
    sw = np.stack(
        [s2_op.apply_pair(wv.reshape(dim, dim)).reshape(-1) for wv in w]
    )
    mmat = w.conj() @ w.T
    hmat = w.conj() @ hw.T
    smat = w.conj() @ sw.T
    for name, arr in (("M", mmat), ("H", hmat), ("S", smat)):
        if np.max(np.abs(arr.imag)) > 1e-9:
            raise DataError(f"exact QSE matrix {name} has imaginary parts")
    zeros = np.zeros_like(mmat.real)
    return mmat.real, hmat.real, smat.real, zeros, zeros.copy(), zeros.copy()


def _assemble_measured(excitations, h_op, s2_op, ms, lam):
    k = len(excitations)
    adj = [op.adjoint() for op in excitations]
    h = np.zeros((k, k))
    mo = np.zeros((k, k))
    s2 = np.zeros((k, k))
    hs = np.zeros((k, k))
    ms_ = np.zeros((k, k))
    ss = np.zeros((k, k))
    for mu in range(k):
        for nu in range(k):
            t_m = op_product(adj[mu], excitations[nu])
            t_h = op_product(adj[mu], op_product(h_op, excitations[nu]))
            t_s = op_product(adj[mu], op_product(s2_op, excitations[nu]))
            for mat, sig, top in ((mo, ms_, t_m), (h, hs, t_h), (s2, ss, t_s)):
                value, var = _expectation_with_gradient(top, ms, lam)
                mat[mu, nu] = value.real
                sig[mu, nu] = np.sqrt(var)
    return mo, h, s2, ms_, hs, ss


def assemble_qse_matrices(excitations, h_op, s2_op, ms, lam):
    """Estimate H, M, S over the excitation subspace from the measurement
    set; entries are symmetrized and the raw asymmetry logged."""
    lam = np.asarray(lam, dtype=float)
    if ms.mode == "exact" and ms.states is not None:
        mo, h, s2, msig, hsig, ssig = _assemble_exact(excitations, h_op, s2_op, ms, lam)
    else:
        mo, h, s2, msig, hsig, ssig = _assemble_measured(excitations, h_op, s2_op, ms, lam)
    h, hsig, h_asym = _symmetrize(h, hsig)
    mo, msig, m_asym = _symmetrize(mo, msig)
    s2, ssig, s_asym = _symmetrize(s2, ssig)
    labels = [op.label or f"op{i}" for i, op in enumerate(excitations)]
    return QSEMatrices(
        h=h,
        m=mo,
        s2=s2,
        h_sigma=hsig,
        m_sigma=msig,
        s2_sigma=ssig,
        labels=labels,
        mode=ms.mode,
        diagnostics={"asymmetry": {"H": h_asym, "M": m_asym, "S": s_asym}},
    )


@dataclass
class SpinBlock:
    """One total-spin eigenspace of the subspace problem."""

    s: int | None              # spin quantum number, None if unassigned
    s2_values: np.ndarray      # generalized eigenvalues sigma_t in the block
    f: np.ndarray              # (K, d) transform, f^T M f = I
    h_block: np.ndarray        # (d, d) projected Hamiltonian
    flagged: bool = False
    metric_deviation: float = 0.0


def spin_project(mats, tol=0.3):
    """Group the generalized (S, M) eigenvectors by nearest s(s+1).

    Vectors farther than tol from every integer-spin value land in one
    flagged block. Near-singular metrics abort with the smallest eigenvalue
    reported; subspace truncation is deliberately not attempted."""
    m_eigs = np.linalg.eigvalsh(mats.m)
    if m_eigs[0] < 1e-8:
        raise ConditioningError(
            f"overlap metric nearly singular (min eigenvalue {m_eigs[0]:.3e})",
            min_eigenvalue=float(m_eigs[0]),
        )
    sigma, f = scipy.linalg.eigh(mats.s2, mats.m)
    assign = []
    for val in sigma:
        s_near = max(0, round(0.5 * (-1.0 + np.sqrt(max(0.0, 1.0 + 4.0 * val)))))
        target = s_near * (s_near + 1)
        assign.append(s_near if abs(val - target) <= tol else None)
    blocks = []
    seen = []
    for s in assign:
        if s not in seen:
            seen.append(s)
    for s in sorted((x for x in seen if x is not None)) + (
        [None] if None in seen else []
    ):
        idx = [i for i, a in enumerate(assign) if a == s]
        ft = f[:, idx]
        hb = ft.T @ mats.h @ ft
        mb = ft.T @ mats.m @ ft
        blocks.append(
            SpinBlock(
                s=s,
                s2_values=sigma[idx],
                f=ft,
                h_block=0.5 * (hb + hb.T),
                flagged=s is None,
                metric_deviation=float(np.max(np.abs(mb - np.eye(len(idx))))),
            )
        )
    return blocks


def solve_qse(block_h):
    """Ascending eigenpairs of a projected block; eigenvector signs fixed by
    making the largest-magnitude component positive."""
    block_h = np.asarray(block_h, dtype=float)
    if np.max(np.abs(block_h - block_h.T)) > 1e-8:
        raise DataError("projected block must be symmetric")
    evals, vecs = np.linalg.eigh(0.5 * (block_h + block_h.T))
    for i in range(vecs.shape[1]):
        j = int(np.argmax(np.abs(vecs[:, i])))
        if vecs[j, i] < 0:
            vecs[:, i] = -vecs[:, i]
    return evals, vecs


def _quotient_stats(num, num_sigma, den_mat, den_sigma, c):
    cc = np.outer(c, c)
    weight = 2.0 - np.eye(len(c))
    den = float(c @ den_mat @ c)
    val = float(c @ num @ c) / den
    dnum = cc * weight / den
    dden = -val * cc * weight / den
    var = 0.0
    iu = np.triu_indices(len(c))
    var += float(np.sum((dnum[iu] * num_sigma[iu]) ** 2))
    var += float(np.sum((dden[iu] * den_sigma[iu]) ** 2))
    den_var = float(np.sum((weight[iu] * cc[iu] * den_sigma[iu]) ** 2))
    return val, np.sqrt(var), den, np.sqrt(den_var)


def estimate_with_uncertainty(mats, c):
    """Rayleigh-quotient energy and spin for coefficient vector(s) c, with
    first-order uncertainties; flags states whose metric denominator is
    consistent with zero within 3 standard errors."""
    c = np.asarray(c, dtype=float)
    single = c.ndim == 1
    cols = c[:, None] if single else c
    out = []
    for i in range(cols.shape[1]):
        ci = cols[:, i]
        eps, deps, den, dden = _quotient_stats(mats.h, mats.h_sigma, mats.m, mats.m_sigma, ci)
        spin, dspin, _, _ = _quotient_stats(mats.s2, mats.s2_sigma, mats.m, mats.m_sigma, ci)
        out.append(
            {
                "energy": eps,
                "energy_sigma": deps,
                "spin": spin,
                "spin_sigma": dspin,
                "unstable": abs(den) <= 3.0 * dden,
            }
        )
    return out[0] if single else out


@dataclass
class QSEState:
    energy: float
    energy_sigma: float
    spin: float
    spin_sigma: float
    s: int | None
    block: int
    coefficients: np.ndarray
    unstable: bool = False
    flagged: bool = False


@dataclass
class QSEResult:
    states: list
    blocks: list
    matrices: QSEMatrices
    spin_tol: float

    def energies(self, s=None):
        vals = [st.energy for st in self.states if s is None or st.s == s]
        return np.array(vals)


def qse_full_solve(mats, tol=0.3):
    """Spin-project, diagonalize each block, and attach uncertainties."""
    blocks = spin_project(mats, tol=tol)
    states = []
    for bi, block in enumerate(blocks):
        evals, vecs = solve_qse(block.h_block)
        for i in range(len(evals)):
            c = block.f @ vecs[:, i]
            stats = estimate_with_uncertainty(mats, c)
            states.append(
                QSEState(
                    energy=stats["energy"],
                    energy_sigma=stats["energy_sigma"],
                    spin=stats["spin"],
                    spin_sigma=stats["spin_sigma"],
                    s=block.s,
                    block=bi,
                    coefficients=c,
                    unstable=stats["unstable"],
                    flagged=block.flagged,
                )
            )
    return QSEResult(states=states, blocks=blocks, matrices=mats, spin_tol=tol)
