"""Molecular integral handling.

Electron-repulsion integrals are stored in chemist convention throughout:
eri[p, r, q, s] = (pr|qs) = integral of p(1) r(1) (1/r12) q(2) s(2), with the
8-fold real-orbital symmetry (pr|qs) = (rp|qs) = (pr|sq) = (qs|pr).

The FCIDUMP reader accepts the usual Fortran-namelist header, completes the
8-fold symmetry from whichever canonical entries are present, and rejects
conflicting duplicates, NaN/Inf values, and out-of-range indices with the
offending line number.
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError

__all__ = [
    "MolecularIntegrals",
    "CholeskyFactors",
    "AuxiliaryMatrices",
    "parse_fcidump",
    "parse_fcidump_text",
    "write_fcidump",
    "freeze_core",
    "rotate_homo_lumo",
    "cholesky_eri",
    "load_aux",
    "save_aux",
]


@dataclass
class MolecularIntegrals:
    """Second-quantised Hamiltonian data for one spatial-orbital basis."""

    norb: int
    n_up: int
    n_dn: int
    e0: float
    h: np.ndarray          # (norb, norb) one-body integrals
    eri: np.ndarray        # (norb,)*4 chemist-ordered two-body integrals
    source: str = ""

    def validate(self, tol=1e-10):
        if self.norb < 1:
            raise DataError("need at least one orbital")
        if not (0 <= self.n_up <= self.norb and 0 <= self.n_dn <= self.norb):
            raise DataError(
                f"electron counts ({self.n_up}, {self.n_dn}) do not fit in {self.norb} orbitals"
            )
        if self.h.shape != (self.norb, self.norb):
            raise DataError("one-body integral shape mismatch")
        if self.eri.shape != (self.norb,) * 4:
            raise DataError("two-body integral shape mismatch")
        if not np.all(np.isfinite(self.h)) or not np.all(np.isfinite(self.eri)):
            raise DataError("non-finite integral values")
        if np.max(np.abs(self.h - self.h.T)) > tol:
            raise DataError("one-body integrals not symmetric")
        for perm in [(1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)]:
            if np.max(np.abs(self.eri - np.transpose(self.eri, perm))) > tol:
                raise DataError("two-body integrals violate 8-fold symmetry")
        return self


@dataclass
class CholeskyFactors:
    """Pivoted Cholesky factors of the (pr|qs) supermatrix.

    eri[p,r,q,s] == sum_g factors[g,p,r] * factors[g,q,s] up to `residual_max`,
    and every factor matrix is symmetric.
    """

    factors: np.ndarray    # (gamma_count, norb, norb)
    tol: float
    residual_max: float

    @property
    def gamma_count(self):
        return self.factors.shape[0]


# ----------------------------------------------------------------------
# FCIDUMP io


_HEADER_KV = re.compile(r"([A-Za-z0-9_]+)\s*=\s*([^=]*?)(?=(?:,?\s*[A-Za-z0-9_]+\s*=)|$)")


def _canonical_eri_key(i, j, k, l):
    # 8-fold canonical representative of (ij|kl), 1-based index tuples
    ij = (i, j) if i >= j else (j, i)
    kl = (k, l) if k >= l else (l, k)
    return (ij, kl) if ij >= kl else (kl, ij)


def parse_fcidump_text(text, source="<string>"):
    """Parse FCIDUMP content from a string. See parse_fcidump for the file form."""
    lines = text.splitlines()
    # locate the namelist header: everything from &FCI (or &NAMELIST) to a bare / or &END
    header_parts = []
    body_start = None
    in_header = False
    for ln, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not in_header:
            if not stripped:
                continue
            if not stripped.upper().startswith("&"):
                raise ParseError("expected namelist header starting with '&'", line=ln)
            in_header = True
            # drop the leading &FCI token
            stripped = re.sub(r"^&\S*\s*", "", stripped)
        if in_header:
            end = None
            for token in ("&END", "/"):
                pos = stripped.upper().find(token)
                if pos >= 0 and (end is None or pos < end):
                    end = pos
            if end is not None:
                header_parts.append(stripped[:end])
                body_start = ln  # body begins after this line
                break
            header_parts.append(stripped)
    if body_start is None:
        raise ParseError("namelist header never terminated with '/' or '&END'", line=len(lines))

    header = " ".join(header_parts)
    fields = {}
    for m in _HEADER_KV.finditer(header):
        fields[m.group(1).upper()] = m.group(2).strip().rstrip(",").strip()

    def _int_field(name, required=True, default=None):
        if name not in fields:
            if required:
                raise ParseError(f"header missing {name}", line=1)
            return default
        try:
            return int(fields[name].split(",")[0])
        except ValueError as exc:
            raise ParseError(f"header field {name} is not an integer: {fields[name]!r}", line=1) from exc

    norb = _int_field("NORB")
    nelec = _int_field("NELEC")
    ms2 = _int_field("MS2", required=False, default=0)
    if norb < 1:
        raise ParseError(f"NORB must be positive, got {norb}", line=1)
    if (nelec + ms2) % 2 != 0 or nelec < 0:
        raise ParseError(f"inconsistent NELEC={nelec}, MS2={ms2}", line=1)
    n_up = (nelec + ms2) // 2
    n_dn = (nelec - ms2) // 2
    if not (0 <= n_dn <= n_up <= norb):
        raise ParseError(f"electron counts ({n_up},{n_dn}) do not fit in NORB={norb}", line=1)

    e0 = 0.0
    seen = {}
    h = np.zeros((norb, norb))
    eri = np.zeros((norb,) * 4)
    have_h = np.zeros((norb, norb), dtype=bool)

    for ln, raw in enumerate(lines[body_start:], start=body_start + 1):
        stripped = raw.strip()
        if not stripped:
            continue
        parts = stripped.replace("D", "E").replace("d", "e").split()
        if len(parts) != 5:
            raise ParseError(f"expected 'value i j k l', got {stripped!r}", line=ln)
        try:
            val = float(parts[0])
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError as exc:
            raise ParseError(f"could not parse {stripped!r}", line=ln) from exc
        if not np.isfinite(val):
            raise ParseError(f"non-finite value {parts[0]!r}", line=ln)
        for idx in (i, j, k, l):
            if idx < 0 or idx > norb:
                raise ParseError(f"orbital index {idx} outside 1..{norb}", line=ln)

        if i == j == k == l == 0:
            key = ("e0",)
        elif k == 0 and l == 0 and i > 0 and j > 0:
            key = ("h",) + tuple(sorted((i, j), reverse=True))
        elif j == 0 and k == 0 and l == 0 and i > 0:
            # orbital-energy line, tolerated and ignored
            continue
        elif min(i, j, k, l) > 0:
            key = ("eri",) + _canonical_eri_key(i, j, k, l)
        else:
            raise ParseError(f"unsupported index pattern {(i, j, k, l)}", line=ln)

        if key in seen and abs(seen[key][0] - val) > 1e-12:
            raise ParseError(
                f"conflicting duplicate for {key}: {seen[key][0]!r} (line {seen[key][1]}) vs {val!r}",
                line=ln,
            )
        seen[key] = (val, ln)

        if key[0] == "e0":
            e0 = val
        elif key[0] == "h":
            a, b = i - 1, j - 1
            h[a, b] = h[b, a] = val
            have_h[a, b] = have_h[b, a] = True
        else:
            a, b, c, d = i - 1, j - 1, k - 1, l - 1
            for p, r, q, s in [
                (a, b, c, d), (b, a, c, d), (a, b, d, c), (b, a, d, c),
                (c, d, a, b), (d, c, a, b), (c, d, b, a), (d, c, b, a),
            ]:
                eri[p, r, q, s] = val

    ints = MolecularIntegrals(
        norb=norb, n_up=n_up, n_dn=n_dn, e0=e0, h=h, eri=eri, source=source
    )
    return ints.validate()


def parse_fcidump(path):
    """Read an FCIDUMP file into MolecularIntegrals.

    Accepts D-exponent floats (1.0D-3), multiline headers, and orbital-energy
    lines (value i 0 0 0), which are ignored. Raises ParseError with the line
    number for malformed content, conflicting duplicates, NaN/Inf, and
    out-of-range indices.
    """
    with open(path) as fh:
        return parse_fcidump_text(fh.read(), source=str(path))


def write_fcidump(ints, path=None):
    """Emit canonical FCIDUMP text (unique 8-fold representatives only)."""
    ints.validate()
    lines = [
        f"&FCI NORB={ints.norb},NELEC={ints.n_up + ints.n_dn},MS2={ints.n_up - ints.n_dn},",
        " ORBSYM=" + ",".join(["1"] * ints.norb) + ",",
        " ISYM=1,",
        "&END",
    ]
    emitted = set()
    for i in range(ints.norb):
        for j in range(i + 1):
            for k in range(ints.norb):
                for l in range(k + 1):
                    key = _canonical_eri_key(i + 1, j + 1, k + 1, l + 1)
                    if key in emitted:
                        continue
                    emitted.add(key)
                    val = ints.eri[i, j, k, l]
                    if val != 0.0:
                        (a, b), (c, d) = key
                        lines.append(f"{val:23.16E} {a:3d} {b:3d} {c:3d} {d:3d}")
    for i in range(ints.norb):
        for j in range(i + 1):
            if ints.h[i, j] != 0.0:
                lines.append(f"{ints.h[i, j]:23.16E} {i + 1:3d} {j + 1:3d}   0   0")
    lines.append(f"{ints.e0:23.16E}   0   0   0   0")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# ----------------------------------------------------------------------
# active-space transformations


def freeze_core(ints, n_core):
    """Fold the lowest n_core doubly-occupied orbitals into the scalar offset.

    The core energy gains 2 h_ii + 2 (ii|jj) - (ij|ji) over core pairs, and the
    active one-body block gains the mean field of the core,
    h_pr += 2 (pr|ii) - (pi|ir). Equivalent (tested) to diagonalising the full
    problem restricted to determinants with a doubly-occupied core.
    """
    if n_core < 0 or n_core > min(ints.n_up, ints.n_dn):
        raise DataError(f"cannot freeze {n_core} core orbitals with ({ints.n_up},{ints.n_dn}) electrons")
    if n_core == 0:
        return ints
    core = range(n_core)
    act = slice(n_core, ints.norb)

    e0 = ints.e0
    for i in core:
        e0 += 2.0 * ints.h[i, i]
        for j in core:
            e0 += 2.0 * ints.eri[i, i, j, j] - ints.eri[i, j, j, i]

    h_act = ints.h[act, act].copy()
    for i in core:
        h_act += 2.0 * ints.eri[act, act, i, i] - ints.eri[act, i, i, act]

    out = MolecularIntegrals(
        norb=ints.norb - n_core,
        n_up=ints.n_up - n_core,
        n_dn=ints.n_dn - n_core,
        e0=e0,
        h=h_act,
        eri=ints.eri[act, act, act, act].copy(),
        source=ints.source,
    )
    return out.validate()


def rotation_matrix(norb, phi, homo, lumo):
    """Identity with a 2x2 Givens block mixing the homo/lumo pair."""
    r = np.eye(norb)
    c, s = np.cos(phi), np.sin(phi)
    r[homo, homo] = c
    r[homo, lumo] = -s
    r[lumo, homo] = s
    r[lumo, lumo] = c
    return r


def rotate_homo_lumo(ints, phi, homo=None, lumo=None):
    """Rotate the one- and two-body integrals by a homo-lumo Givens angle.

    new_p = sum_l R[p, l] old_l. The full-CI spectrum is invariant under any
    such rotation; only the variational ansatz sees the angle.
    """
    if homo is None:
        homo = ints.n_up - 1
    if lumo is None:
        lumo = ints.n_up
    if not (0 <= homo < ints.norb and 0 <= lumo < ints.norb) or homo == lumo:
        raise DataError(f"bad rotation pair ({homo}, {lumo}) for norb={ints.norb}")
    r = rotation_matrix(ints.norb, phi, homo, lumo)
    h = np.einsum("pa,qb,ab->pq", r, r, ints.h, optimize=True)
    eri = np.einsum("pa,rb,qc,sd,abcd->prqs", r, r, r, r, ints.eri, optimize=True)
    # exact symmetry restoration against float noise
    h = (h + h.T) / 2.0
    out = MolecularIntegrals(
        norb=ints.norb, n_up=ints.n_up, n_dn=ints.n_dn, e0=ints.e0,
        h=h, eri=eri, source=ints.source,
    )
    return out.validate(tol=1e-8)


# ----------------------------------------------------------------------
# pivoted Cholesky of the eri supermatrix


def cholesky_eri(ints_or_eri, tol=1e-10):
    """Pivoted incomplete Cholesky of V[(pr),(qs)] = (pr|qs).

    Stops when the largest Schur-complement diagonal drops to tol; the max
    absolute reconstruction error is then at most that diagonal (the residual
    of a PSD matrix peaks on its diagonal). Raises DataError if a diagonal
    falls below -1e-8, which signals a non-PSD input.
    """
    eri = ints_or_eri.eri if isinstance(ints_or_eri, MolecularIntegrals) else np.asarray(ints_or_eri)
    norb = eri.shape[0]
    v = eri.reshape(norb * norb, norb * norb)
    if np.max(np.abs(v - v.T)) > 1e-10:
        raise DataError("eri supermatrix not symmetric")

    d = np.diag(v).copy()
    cols = []
    for _ in range(norb * norb):
        if np.min(d) < -1e-8:
            raise DataError(f"eri supermatrix not positive semidefinite (diag {np.min(d):.3e})")
        piv = int(np.argmax(d))
        if d[piv] <= tol:
            break
        col = v[:, piv].copy()
        for c in cols:
            col -= c * c[piv]
        col /= np.sqrt(d[piv])
        cols.append(col)
        d -= col * col

    factors = np.zeros((len(cols), norb, norb))
    for g, c in enumerate(cols):
        mat = c.reshape(norb, norb)
        asym = np.max(np.abs(mat - mat.T)) if norb > 1 else 0.0
        if asym > 1e-8:
            raise DataError(f"Cholesky factor {g} not symmetric (dev {asym:.3e})")
        factors[g] = (mat + mat.T) / 2.0

    recon = np.einsum("gab,gcd->abcd", factors, factors, optimize=True) if cols else np.zeros_like(eri)
    residual = float(np.max(np.abs(eri - recon)))
    return CholeskyFactors(factors=factors, tol=tol, residual_max=residual)


# ----------------------------------------------------------------------
# auxiliary one-body data (dipoles, AO metadata) for observables


@dataclass
class AuxiliaryMatrices:
    """One-body matrices and AO bookkeeping that an FCIDUMP cannot carry."""

    dipole_mo: np.ndarray        # (3, m_active, m_active), charge-gauge position integrals
    mo_coeff: np.ndarray         # (n_ao, n_frozen + m_active) AO->MO coefficients
    overlap_ao: np.ndarray       # (n_ao, n_ao)
    ao_to_atom: np.ndarray       # (n_ao,) atom index per AO
    charges_nuc: np.ndarray      # (n_atom,) nuclear charges
    n_frozen: int = 0
    orthogonalizer: np.ndarray | None = None   # optional AO orthogonalization matrix
    source: str = ""

    @property
    def n_active(self):
        return self.dipole_mo.shape[1]

    @property
    def n_atom(self):
        return len(self.charges_nuc)

    def validate(self):
        if self.dipole_mo.ndim != 3 or self.dipole_mo.shape[0] != 3:
            raise DataError("dipole_mo must have shape (3, m, m)")
        m = self.dipole_mo.shape[1]
        if self.dipole_mo.shape != (3, m, m):
            raise DataError("dipole_mo must have shape (3, m, m)")
        for ax in range(3):
            if np.max(np.abs(self.dipole_mo[ax] - self.dipole_mo[ax].T)) > 1e-10:
                raise DataError("dipole_mo components must be symmetric")
        n_ao = self.overlap_ao.shape[0]
        if self.overlap_ao.shape != (n_ao, n_ao):
            raise DataError("overlap_ao must be square")
        if np.max(np.abs(self.overlap_ao - self.overlap_ao.T)) > 1e-10:
            raise DataError("overlap_ao must be symmetric")
        evals = np.linalg.eigvalsh(self.overlap_ao)
        if evals.min() <= 0:
            raise DataError(f"overlap_ao not positive definite (min eig {evals.min():.3e})")
        if self.mo_coeff.shape[0] != n_ao:
            raise DataError("mo_coeff row count != n_ao")
        if self.n_frozen < 0 or self.n_frozen + m != self.mo_coeff.shape[1]:
            raise DataError(
                f"mo_coeff has {self.mo_coeff.shape[1]} columns, expected n_frozen + m = {self.n_frozen + m}"
            )
        ortho_dev = np.max(np.abs(self.mo_coeff.T @ self.overlap_ao @ self.mo_coeff - np.eye(self.mo_coeff.shape[1])))
        if ortho_dev > 1e-8:
            raise DataError(f"MO coefficients not S-orthonormal (dev {ortho_dev:.3e})")
        if len(self.ao_to_atom) != n_ao:
            raise DataError("ao_to_atom length != n_ao")
        if np.any(self.ao_to_atom < 0) or np.any(self.ao_to_atom >= self.n_atom):
            raise DataError("ao_to_atom refers to unknown atoms")
        return self


def _decode_array(obj, name):
    if isinstance(obj, dict):
        try:
            raw = base64.b64decode(obj["b64"])
            arr = np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"])
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad packed array for {name!r}: {exc}") from exc
        return np.array(arr, dtype=float)
    return np.array(obj, dtype=float)


def _encode_array(arr):
    return np.asarray(arr).tolist()


def load_aux(path):
    """Load the auxiliary sidecar JSON (plain nested lists or b64-packed arrays)."""
    with open(path) as fh:
        data = json.load(fh)
    known = {"dipole_mo", "C", "S_ao", "ao_to_atom", "Z", "n_frozen", "orthogonalizer"}
    unknown = set(data) - known
    if unknown:
        raise DataError(f"unknown auxiliary fields: {sorted(unknown)}")
    missing = {"dipole_mo", "C", "S_ao", "ao_to_atom", "Z"} - set(data)
    if missing:
        raise DataError(f"auxiliary file missing fields: {sorted(missing)}")
    ortho = data.get("orthogonalizer")
    aux = AuxiliaryMatrices(
        dipole_mo=_decode_array(data["dipole_mo"], "dipole_mo"),
        mo_coeff=_decode_array(data["C"], "C"),
        overlap_ao=_decode_array(data["S_ao"], "S_ao"),
        ao_to_atom=np.array(data["ao_to_atom"], dtype=int),
        charges_nuc=np.array(data["Z"], dtype=float),
        n_frozen=int(data.get("n_frozen", 0)),
        orthogonalizer=None if ortho is None else _decode_array(ortho, "orthogonalizer"),
        source=str(path),
    )
    return aux.validate()


def save_aux(aux, path):
    data = {
        "dipole_mo": _encode_array(aux.dipole_mo),
        "C": _encode_array(aux.mo_coeff),
        "S_ao": _encode_array(aux.overlap_ao),
        "ao_to_atom": [int(a) for a in aux.ao_to_atom],
        "Z": [float(z) for z in aux.charges_nuc],
        "n_frozen": int(aux.n_frozen),
        "orthogonalizer": None if aux.orthogonalizer is None else _encode_array(aux.orthogonalizer),
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
