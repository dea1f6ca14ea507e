"""Error mitigation: readout calibration/inversion, Hamming-weight
post-selection, imaginary-Pauli zeroing, Clifford add-and-subtract
correction, and purity rescaling.

Stage order in the full pipeline is fixed: postselect, readout-mitigate,
zero-imaginary, Clifford correct, purify. Each stage is a pure transform
and idempotent on inputs that are already clean. Output labels follow the
raw / roem / em naming: raw applies nothing, roem only the readout
inversion, em the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, MitigationError
from .forging import MeasurementSet, _record_keys, build_ef_circuit, measurement_set_exact
from .paulis import index_masks, popcount
from .simulator import (
    BlochVector,
    Circuit,
    all_bases,
    assemble_bloch,
    sample_counts,
)

__all__ = [
    "ReadoutCalibration",
    "MitigationFlags",
    "calibrate_readout",
    "mitigate_readout",
    "postselect",
    "zero_imaginary_paulis",
    "clifford_correct",
    "purify",
    "apply_record_pipeline",
    "ef_counts_sweep",
    "measurement_set_mitigated",
    "clifford_reference_ansatz",
]


@dataclass(frozen=True)
class ReadoutCalibration:
    """Per-qubit assignment matrices A_q[measured, true], estimated or exact."""

    p01: np.ndarray
    p10: np.ndarray
    shots: int = 0

    @property
    def n(self):
        return len(self.p01)

    def assignment_matrix(self, q):
        return np.array(
            [
                [1.0 - self.p01[q], self.p10[q]],
                [self.p01[q], 1.0 - self.p10[q]],
            ]
        )

    def inversion_functionals(self, n):
        """Coefficients (alpha_q, beta_q) of the per-shot functional
        f_q(z) = alpha_q + beta_q (-1)^z whose product over a Pauli support
        reproduces the tensored-inverse-mitigated Z expectations."""
        if n != self.n:
            raise DataError("calibration qubit count mismatch")
        delta = 1.0 - self.p01 - self.p10
        if np.any(np.abs(delta) < 1e-6):
            raise MitigationError("assignment matrix is singular (p01 + p10 = 1)")
        return (self.p01 - self.p10) / delta, 1.0 / delta


def calibrate_readout(noise, shots=None, n=None):
    """Estimate per-qubit assignment matrices from the two product-state
    calibration circuits (all |0> and all |1>) run under the noise model."""
    if n is None:
        raise DataError("calibrate_readout needs the qubit count n")
    shots = int(shots or noise.shots)
    if shots <= 0:
        raise DataError("calibration requires shots > 0")
    cal_noise = replace(noise, shots=shots)
    p01 = np.zeros(n)
    p10 = np.zeros(n)
    for variant in (0, 1):
        circ = Circuit(n, seed_tag=(2, variant, 0, 0))
        if variant == 1:
            for q in range(n):
                circ.x(q)
        counts = sample_counts(circ, "Z" * n, cal_noise)
        ones = np.zeros(n)
        for bits, c in counts.items():
            for q in range(n):
                if bits[q] == "1":
                    ones[q] += c
        if variant == 0:
            p01 = ones / shots
        else:
            p10 = 1.0 - ones / shots
    return ReadoutCalibration(p01=p01, p10=p10, shots=shots)


def _counts_vector(counts, n):
    w = np.zeros(2**n)
    for bits, c in counts.items():
        idx = 0
        for q, b in enumerate(bits):
            if b == "1":
                idx |= 1 << q
        w[idx] += c
    return w


def _index_bits(idx, n):
    return "".join("1" if (idx >> q) & 1 else "0" for q in range(n))


def mitigate_readout(counts, cal, support="full"):
    """Quasi-probability map from inverting the tensored assignment matrices.

    support="full" applies the exact per-qubit inverses over the whole
    outcome space (matrix-free, n single-qubit solves); the total mass of 1
    is preserved exactly because assignment columns are stochastic.
    support="neighborhood" instead solves the system restricted to the
    observed strings plus their Hamming-1 neighbors and renormalizes.
    """
    n = cal.n
    total = sum(counts.values())
    if total == 0:
        raise DataError("empty histogram")
    w = _counts_vector(counts, n) / total
    if support == "full":
        q = w.reshape((2,) * n)
        for qubit in range(n):
            inv = np.linalg.inv(cal.assignment_matrix(qubit))
            ax = n - 1 - qubit
            q = np.moveaxis(np.tensordot(inv, q, axes=([1], [ax])), 0, ax)
        q = q.reshape(-1)
    elif support == "neighborhood":
        observed = [i for i in range(2**n) if w[i] > 0]
        keep = set(observed)
        for i in observed:
            for qubit in range(n):
                keep.add(i ^ (1 << qubit))
        keep = sorted(keep)
        a_full = np.eye(1)
        for qubit in reversed(range(n)):
            a_full = np.kron(a_full, cal.assignment_matrix(qubit))
        sub = a_full[np.ix_(keep, keep)]
        sol = np.linalg.solve(sub, w[keep])
        q = np.zeros(2**n)
        q[keep] = sol / sol.sum()
    else:
        raise DataError(f"unknown support mode {support!r}")
    return {_index_bits(i, n): float(q[i]) for i in range(2**n) if q[i] != 0.0}


def postselect(counts, weight):
    """Retain only bitstrings of the given Hamming weight. May return an
    empty histogram (all shots lost); renormalization is deferred."""
    return {bits: c for bits, c in counts.items() if bits.count("1") == weight}


def _odd_y_mask(n):
    x, z = index_masks(n)
    return (popcount(x & z) & 1).astype(bool)


def zero_imaginary_paulis(bloch, p):
    """For p in {0, 2} the prepared superposition is real, so odd-Y Pauli
    expectations vanish identically; pin them (and their errors) to zero."""
    if p not in (0, 1, 2, 3):
        raise DataError("phase index p must be in 0..3")
    if p in (1, 3):
        return bloch.copy()
    out = bloch.copy()
    mask = _odd_y_mask(bloch.n)
    out.a[mask] = 0.0
    out.sigma[mask] = 0.0
    return out


def clifford_correct(value_hw_theta, value_hw_ref, value_ideal_ref):
    """Add-and-subtract correction against a classically computable
    reference point: value + (ideal_ref - hw_ref), uncertainties in
    quadrature. Inputs are (value, sigma) pairs; ideal_ref may be a scalar."""
    v, s = value_hw_theta
    vr, sr = value_hw_ref
    vi = value_ideal_ref[0] if isinstance(value_ideal_ref, tuple) else value_ideal_ref
    return v + vi - vr, float(np.hypot(s, sr))


def _clifford_correct_bloch(bloch, ref_hw, ref_ideal):
    out = bloch.copy()
    out.a = bloch.a + ref_ideal.a - ref_hw.a
    out.sigma = np.sqrt(bloch.sigma**2 + ref_hw.sigma**2)
    out.a[0] = 1.0
    out.sigma[0] = 0.0
    return out


def purify(bloch):
    """Scale the non-identity Bloch components onto the pure-state shell
    ||a||^2 = 2^n - 1; uncertainties scale by the same factor."""
    norm = bloch.norm_non_identity()
    if norm <= 0:
        raise MitigationError("cannot purify a degenerate (maximally mixed) estimate")
    scale = np.sqrt(2.0**bloch.n - 1.0) / norm
    out = bloch.copy()
    out.a[1:] *= scale
    out.sigma[1:] *= scale
    return out


# ----------------------------------------------------------------------
# pipeline over the forged circuit family


@dataclass(frozen=True)
class MitigationFlags:
    postselect: bool = False
    roem: bool = False
    zero_imag: bool = False
    clifford: bool = False
    purify: bool = False

    @classmethod
    def from_label(cls, label):
        if label == "raw":
            return cls()
        if label == "roem":
            return cls(roem=True)
        if label == "em":
            return cls(postselect=True, roem=True, zero_imag=True, clifford=True, purify=True)
        raise DataError(f"unknown mitigation label {label!r}")

    @property
    def label(self):
        if self == MitigationFlags():
            return "raw"
        if self == MitigationFlags(roem=True):
            return "roem"
        full = MitigationFlags(
            postselect=True, roem=True, zero_imag=True, clifford=True, purify=True
        )
        return "em" if self == full else "custom"

    def any(self):
        return self.postselect or self.roem or self.zero_imag or self.clifford or self.purify


def apply_record_pipeline(
    counts_by_basis,
    n,
    p_index,
    flags,
    weight=None,
    calibration=None,
    ref_hw=None,
    ref_ideal=None,
    provenance=None,
):
    """Assemble one record's Bloch vector with the selected stages.

    Post-selection filters the all-Z basis (the one whose outcomes carry a
    conserved Hamming weight); readout inversion enters the assembly as the
    per-shot functional form of the tensored inverse."""
    bloch = assemble_bloch(
        counts_by_basis,
        n,
        postselect_weight=weight if flags.postselect else None,
        calibration=calibration if flags.roem else None,
        provenance=provenance,
    )
    if flags.zero_imag:
        bloch = zero_imaginary_paulis(bloch, p_index)
    if flags.clifford:
        if ref_hw is None or ref_ideal is None:
            raise MitigationError("Clifford correction requires reference records")
        bloch = _clifford_correct_bloch(bloch, ref_hw, ref_ideal)
    if flags.purify:
        bloch = purify(bloch)
    return bloch


def ef_counts_sweep(ansatz, noise):
    """Raw tomography histograms for every (k, l, p) circuit of the ansatz."""
    from .simulator import measure_counts_sweep

    return {
        key: measure_counts_sweep(build_ef_circuit(ansatz, *key), noise)
        for key in _record_keys(ansatz.k)
    }


def measurement_set_mitigated(
    ansatz,
    noise,
    flags,
    calibration=None,
    counts_map=None,
    clifford_scope="entry",
):
    """Measurement set processed through the mitigation pipeline.

    clifford_scope="entry" corrects every Bloch entry against the theta=0
    Clifford point; "observable" defers the correction to derived scalars,
    storing the reference measurement sets in the metadata instead."""
    if isinstance(flags, str):
        flags = MitigationFlags.from_label(flags)
    if clifford_scope not in ("entry", "observable"):
        raise DataError(f"unknown clifford scope {clifford_scope!r}")
    weight = ansatz.basis_states[0].count("1")
    if flags.roem and calibration is None:
        calibration = calibrate_readout(noise, noise.shots, n=ansatz.m)
    if counts_map is None:
        counts_map = ef_counts_sweep(ansatz, noise)

    ref_hw_records = ref_ideal_records = None
    ref_ansatz = None
    if flags.clifford:
        ref_ansatz = clifford_reference_ansatz(ansatz)
        ref_ideal_records = measurement_set_exact(ref_ansatz).records
        if clifford_scope == "entry":
            ref_counts = (
                counts_map
                if not np.any(ansatz.theta)
                else ef_counts_sweep(ref_ansatz, noise)
            )
            ref_flags = MitigationFlags(
                postselect=flags.postselect,
                roem=flags.roem,
                zero_imag=flags.zero_imag,
            )
            ref_hw_records = {
                key: apply_record_pipeline(
                    ref_counts[key],
                    ansatz.m,
                    key[2],
                    ref_flags,
                    weight=weight,
                    calibration=calibration,
                    provenance=key,
                )
                for key in _record_keys(ansatz.k)
            }

    use_clifford = flags.clifford and clifford_scope == "entry"
    rec_flags = flags if use_clifford else replace(flags, clifford=False)
    records = {}
    for key in _record_keys(ansatz.k):
        records[key] = apply_record_pipeline(
            counts_map[key],
            ansatz.m,
            key[2],
            rec_flags,
            weight=weight,
            calibration=calibration,
            ref_hw=ref_hw_records[key] if use_clifford else None,
            ref_ideal=ref_ideal_records[key] if use_clifford else None,
            provenance=key,
        )

    meta = {
        "flags": flags,
        "label": flags.label,
        "clifford_scope": clifford_scope if flags.clifford else None,
        "shots": noise.shots,
        "seed": noise.seed,
    }
    ms = MeasurementSet(
        "mitigated" if flags.any() else "sampled",
        ansatz.m,
        ansatz,
        records,
        meta=meta,
    )
    if flags.clifford and clifford_scope == "observable":
        ref_ms_hw = measurement_set_mitigated(
            ref_ansatz,
            noise,
            replace(flags, clifford=False),
            calibration=calibration,
            counts_map=None,
        )
        meta["ref_hw_ms"] = ref_ms_hw
        meta["ref_ideal_ms"] = measurement_set_exact(ref_ansatz)
    return ms


def clifford_reference_ansatz(ansatz):
    """The theta=0 Clifford-point twin of an ansatz."""
    from .forging import EFAnsatz

    return EFAnsatz(
        m=ansatz.m,
        basis_states=ansatz.basis_states,
        theta=np.zeros_like(ansatz.theta),
        lam=ansatz.lam,
        phi=ansatz.phi,
        schedule=ansatz.schedule,
    )
