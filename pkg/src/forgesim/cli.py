"""Batch command-line driver.

Subcommands: ground, qse, spectrum, charges, scan, oracle. Every run is
seeded and reproducible: output files embed the config hash, mode,
mitigation label, and package version, and contain no timestamps, so a
repeated run with the same config is byte-identical.

Exit codes: 0 success, 1 configuration problem, 2 data problem,
3 optimizer failed to converge (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ForgesimError
from .fci import fci_solve
from .forging import (
    EFAnsatz,
    GroundConfig,
    ef_expectation,
    hamiltonian_for_ansatz,
    hf_pair_energy,
    measurement_set_exact,
    optimize_ground_state,
)
from .integrals import load_aux, parse_fcidump
from .mitigation import MitigationFlags, measurement_set_mitigated
from .observables import (
    HARTREE_EV,
    atomic_charges,
    broaden,
    compute_rdm,
    dipole_sq_expectation,
    dsf_peaks,
)
from .operators import build_excitations, build_s2_tensor
from .qse import assemble_qse_matrices, qse_full_solve
from .simulator import NoiseModel

__all__ = ["main"]

_MODES = ("exact", "sampled", "noisy")
_MITIGATIONS = ("raw", "roem", "em")

_DEFAULTS = {
    "fcidump": None,
    "aux": None,
    "out": "forgesim_out",
    "mode": "exact",
    "seed": 0,
    "shots": 100_000,
    "noise": {"p01": 0.02, "p10": 0.05, "depol2": 0.01},
    "mitigation": "raw",
    "clifford_scope": "entry",
    "optimizer": {
        "restarts": 8,
        "max_iter": 300,
        "fd_step": 1e-4,
        "optimize_phi": True,
        "chol_tol": 1e-10,
    },
    "spin_tol": 0.3,
    "qse": False,
    "ansatz": None,
    "n_roots": None,
    "broaden": {
        "start": 0.0,
        "stop": 2.0,
        "step": 1e-3,
        "floor": 2e-4,
        "include_elastic": False,
    },
    "charges_method": "mulliken",
    "scan": [],
    "workers": None,
}

_SCAN_ENTRY_KEYS = {"label", "fcidump", "aux"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _load_config_file(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return raw


def _merge_config(raw, args):
    cfg = json.loads(json.dumps(_DEFAULTS))  # deep copy
    _check_keys(raw, _DEFAULTS, "config")
    for key, val in raw.items():
        if key in ("noise", "optimizer", "broaden"):
            _check_keys(val, _DEFAULTS[key], f"config.{key}")
            cfg[key].update(val)
        else:
            cfg[key] = val
    for key in ("mode", "seed", "shots", "mitigation", "out"):
        arg = getattr(args, key, None)
        if arg is not None:
            cfg[key] = arg
    if cfg["mode"] not in _MODES:
        raise ConfigError(f"mode must be one of {_MODES}, got {cfg['mode']!r}")
    if cfg["mitigation"] not in _MITIGATIONS:
        raise ConfigError(
            f"mitigation must be one of {_MITIGATIONS}, got {cfg['mitigation']!r}"
        )
    if cfg["clifford_scope"] not in ("entry", "observable"):
        raise ConfigError(f"bad clifford_scope {cfg['clifford_scope']!r}")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer")
    if not isinstance(cfg["shots"], int) or cfg["shots"] <= 0:
        raise ConfigError("shots must be a positive integer")
    for entry in cfg["scan"]:
        _check_keys(entry, _SCAN_ENTRY_KEYS, "scan entry")
        if "label" not in entry or "fcidump" not in entry:
            raise ConfigError("each scan entry needs label and fcidump")
    return cfg


def _require_fcidump(cfg):
    if not cfg["fcidump"]:
        raise ConfigError("config needs an fcidump path")


def _meta(cfg, command):
    blob = json.dumps(cfg, sort_keys=True).encode()
    return {
        "command": command,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "mode": cfg["mode"],
        "mitigation": cfg["mitigation"],
        "clifford_scope": cfg["clifford_scope"],
        "seed": cfg["seed"],
        "version": __version__,
    }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _atomic_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path, obj):
    _atomic_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    _atomic_text(path, buf.getvalue())


def _load_ints(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"fcidump not found: {path}")
    return parse_fcidump(p)


def _ground_config(cfg):
    opt = cfg["optimizer"]
    return GroundConfig(
        seed=cfg["seed"],
        restarts=opt["restarts"],
        max_iter=opt["max_iter"],
        fd_step=opt["fd_step"],
        optimize_phi=opt["optimize_phi"],
        chol_tol=opt["chol_tol"],
    )


def _measurement_set(cfg, ansatz):
    """Exact, finite-shot, or noisy records per the run mode."""
    if cfg["mode"] == "exact":
        return measurement_set_exact(ansatz)
    noise_cfg = cfg["noise"] if cfg["mode"] == "noisy" else {"p01": 0.0, "p10": 0.0, "depol2": 0.0}
    noise = NoiseModel(
        readout_p01=noise_cfg["p01"],
        readout_p10=noise_cfg["p10"],
        depol2=noise_cfg["depol2"],
        shots=cfg["shots"],
        seed=cfg["seed"],
    )
    flags = MitigationFlags.from_label(cfg["mitigation"])
    return measurement_set_mitigated(
        ansatz, noise, flags, clifford_scope=cfg["clifford_scope"]
    )


def _ansatz_record(ansatz):
    return {
        "m": ansatz.m,
        "basis_states": list(ansatz.basis_states),
        "theta": np.asarray(ansatz.theta).tolist(),
        "phi": float(ansatz.phi),
        "lambda": np.asarray(ansatz.lam).tolist(),
        "schedule": [list(pair) for pair in ansatz.schedule],
    }


def _ansatz_from_record(d):
    return EFAnsatz(
        m=d["m"],
        basis_states=tuple(d["basis_states"]),
        theta=np.asarray(d["theta"], dtype=float),
        lam=np.asarray(d["lambda"], dtype=float),
        phi=float(d["phi"]),
        schedule=[tuple(pair) for pair in d["schedule"]],
    )


def _optimize(cfg, ints):
    if cfg["ansatz"]:
        record = cfg["ansatz"]
        if not isinstance(record, dict):
            path = Path(record)
            if not path.is_file():
                raise ConfigError(f"ansatz file not found: {path}")
            record = json.loads(path.read_text())
        ansatz = _ansatz_from_record(record["ansatz"] if "ansatz" in record else record)
        return ansatz, None
    result = optimize_ground_state(ints, _ground_config(cfg))
    return result.ansatz, result


def cmd_ground(cfg, out):
    _require_fcidump(cfg)
    ints = _load_ints(cfg["fcidump"])
    result = optimize_ground_state(ints, _ground_config(cfg))
    ansatz = result.ansatz
    meta = _meta(cfg, "ground")

    payload = {
        "ansatz": _ansatz_record(ansatz),
        "energy_statevector": result.energy,
        "converged": bool(result.converged),
        "fun_evals": result.fun_evals,
        "meta": meta,
    }
    _write_json(out / "ansatz.json", payload)

    energy, sigma = result.energy, 0.0
    if cfg["mode"] != "exact":
        h_op, ints_rot, _ = hamiltonian_for_ansatz(ints, ansatz)
        ms = _measurement_set(cfg, ansatz)
        val, sig = ef_expectation(h_op, ms, ansatz.lam)
        energy, sigma = ints_rot.e0 + val, sig
    _write_json(
        out / "ground.json",
        {
            "energy": energy,
            "energy_sigma": sigma,
            "energy_statevector": result.energy,
            "e0": ints.e0,
            "hf_pair_energy": hf_pair_energy(ints),
            "converged": bool(result.converged),
            "meta": meta,
        },
    )

    n_par = len(np.asarray(ansatz.theta))
    header = ["iteration", "energy", "grad_norm"] + [f"theta_{i}" for i in range(n_par)] + ["phi"]
    rows = []
    for rec in result.trace:
        theta = np.asarray(rec["theta"], dtype=float)
        rows.append(
            [rec["iteration"], rec["energy"], rec["grad_norm"], *theta.tolist(), rec["phi"]]
        )
    _write_csv(out / "trace.csv", header, rows)
    return 0 if result.converged else 3


def _qse_pipeline(cfg):
    """Shared ground + subspace-expansion pass used by qse/spectrum/charges."""
    _require_fcidump(cfg)
    ints = _load_ints(cfg["fcidump"])
    ansatz, opt_result = _optimize(cfg, ints)
    h_op, ints_rot, _ = hamiltonian_for_ansatz(ints, ansatz)
    m, n_occ = ansatz.m, ansatz.n_occ
    excitations = build_excitations(m, range(n_occ), range(n_occ, m))
    s2_op = build_s2_tensor(m)
    ms = _measurement_set(cfg, ansatz)
    mats = assemble_qse_matrices(excitations, h_op, s2_op, ms, ansatz.lam)
    solution = qse_full_solve(mats, tol=cfg["spin_tol"])
    return {
        "ints": ints,
        "ints_rot": ints_rot,
        "ansatz": ansatz,
        "opt_result": opt_result,
        "h_op": h_op,
        "excitations": excitations,
        "ms": ms,
        "mats": mats,
        "solution": solution,
    }


def _state_records(ctx):
    e0 = ctx["ints"].e0
    out = []
    for st in ctx["solution"].states:
        out.append(
            {
                "energy": e0 + st.energy,
                "energy_active": st.energy,
                "energy_sigma": st.energy_sigma,
                "spin": st.spin,
                "spin_sigma": st.spin_sigma,
                "s": st.s,
                "block": st.block,
                "unstable": bool(st.unstable),
                "flagged": bool(st.flagged),
                "coefficients": st.coefficients,
            }
        )
    return out


def cmd_qse(cfg, out):
    ctx = _qse_pipeline(cfg)
    mats = ctx["mats"]
    meta = _meta(cfg, "qse")
    _write_json(
        out / "qse.json",
        {
            "labels": mats.labels,
            "h": mats.h,
            "m": mats.m,
            "s2": mats.s2,
            "h_sigma": mats.h_sigma,
            "m_sigma": mats.m_sigma,
            "s2_sigma": mats.s2_sigma,
            "diagnostics": mats.diagnostics,
            "e0": ctx["ints"].e0,
            "states": _state_records(ctx),
            "ansatz": _ansatz_record(ctx["ansatz"]),
            "meta": meta,
        },
    )
    rdms = []
    for i, st in enumerate(ctx["solution"].states):
        rdm = compute_rdm(
            ctx["ms"], ctx["ansatz"].lam, st.coefficients, st.coefficients,
            ctx["excitations"], pair=(f"state{i}", f"state{i}"),
        )
        rdms.append({"state": i, "values": rdm.values, "sigma": rdm.sigma})
    _write_json(out / "rdms.json", {"rdms": rdms, "meta": meta})
    return 0


def cmd_spectrum(cfg, out):
    ctx = _qse_pipeline(cfg)
    if not cfg["aux"]:
        raise ConfigError("spectrum needs an auxiliary matrices file for dipoles")
    aux = load_aux(cfg["aux"])
    solution = ctx["solution"]
    ground = int(np.argmin([st.energy for st in solution.states]))
    trans, energies, sigmas, spins, labels = [], [], [], [], []
    for i, st in enumerate(solution.states):
        trans.append(
            compute_rdm(
                ctx["ms"], ctx["ansatz"].lam, st.coefficients,
                solution.states[ground].coefficients, ctx["excitations"],
                pair=(f"state{i}", f"state{ground}"),
            )
        )
        energies.append(st.energy)
        sigmas.append(st.energy_sigma)
        spins.append(st.spin)
        labels.append(f"state{i}")
    peaks = dsf_peaks(
        trans, aux.dipole_mo, energies, energy_sigmas=sigmas,
        spins=spins, labels=labels, ground_index=ground,
    )
    bcfg = cfg["broaden"]
    omega, intensity = broaden(
        peaks, (bcfg["start"], bcfg["stop"], bcfg["step"]),
        floor=bcfg["floor"], include_elastic=bcfg["include_elastic"],
    )
    rows = [
        [pk.omega, pk.omega * HARTREE_EV, pk.weight, pk.spin,
         "elastic" if pk.elastic else pk.label]
        for pk in peaks.peaks
    ]
    _write_csv(out / "peaks.csv", ["energy_Ha", "energy_eV", "weight", "spin", "label"], rows)
    _write_csv(out / "spectrum.csv", ["omega", "intensity"], np.column_stack([omega, intensity]).tolist())

    g = solution.states[ground]
    musq, musq_sigma = dipole_sq_expectation(
        ctx["ms"], ctx["ansatz"].lam, g.coefficients, ctx["excitations"], aux.dipole_mo
    )
    outside = [
        pk.label for pk in peaks.peaks
        if not pk.elastic and not (bcfg["start"] <= pk.omega <= bcfg["stop"])
    ]
    _write_json(
        out / "spectrum.json",
        {
            "total_weight": peaks.total_weight(include_elastic=True),
            "inelastic_weight": peaks.total_weight(include_elastic=False),
            "elastic_weight": sum(p.weight for p in peaks.peaks if p.elastic),
            "dipole_sq_expectation": musq,
            "dipole_sq_sigma": musq_sigma,
            "peaks_outside_grid": outside,
            "meta": _meta(cfg, "spectrum"),
        },
    )
    return 0


def cmd_charges(cfg, out):
    if not cfg["aux"]:
        raise ConfigError("charges needs an auxiliary matrices file")
    aux = load_aux(cfg["aux"])
    states = []
    if cfg["qse"]:
        ctx = _qse_pipeline(cfg)
        solution = ctx["solution"]
        ground = int(np.argmin([st.energy for st in solution.states]))
        rdm = compute_rdm(
            ctx["ms"], ctx["ansatz"].lam,
            solution.states[ground].coefficients,
            solution.states[ground].coefficients,
            ctx["excitations"], pair=("qse_ground", "qse_ground"),
        )
        states.append(("qse_ground", rdm))
        ansatz, ms = ctx["ansatz"], ctx["ms"]
        identity = [ctx["excitations"][0]]
    else:
        _require_fcidump(cfg)
        ints = _load_ints(cfg["fcidump"])
        ansatz, _ = _optimize(cfg, ints)
        ms = _measurement_set(cfg, ansatz)
        identity = build_excitations(ansatz.m, range(ansatz.n_occ), range(ansatz.n_occ, ansatz.m))[:1]
    ef_rdm = compute_rdm(ms, ansatz.lam, np.array([1.0]), np.array([1.0]), identity,
                         pair=("ef_ground", "ef_ground"))
    states.insert(0, ("ef_ground", ef_rdm))

    records = []
    for label, rdm in states:
        ch = atomic_charges(rdm, aux, method=cfg["charges_method"], seed=cfg["seed"])
        records.append(
            {"label": label, "q": ch.q, "sigma": ch.sigma,
             "method": ch.method, "total": ch.total}
        )
    _write_json(out / "charges.json", {"states": records, "meta": _meta(cfg, "charges")})
    return 0


def _scan_one(geom, cfg):
    sub = dict(cfg)
    sub["fcidump"] = geom["fcidump"]
    sub["aux"] = geom.get("aux")
    sub["scan"] = []
    sub["ansatz"] = None  # every geometry gets its own optimization
    ints = _load_ints(sub["fcidump"])
    fci = fci_solve(ints, n_roots=1)
    ansatz, opt_result = _optimize(sub, ints)
    row = {
        "label": str(geom["label"]),
        "e_fci": float(fci.energies[0]),
        "e_ef": float(opt_result.energy),
        "converged": bool(opt_result.converged),
    }
    if sub["qse"]:
        sub["ansatz"] = _ansatz_record(ansatz)
        ctx = _qse_pipeline(sub)
        energies = [st.energy for st in ctx["solution"].states]
        row["e_qse"] = ctx["ints"].e0 + float(np.min(energies))
    if sub["aux"]:
        aux = load_aux(sub["aux"])
        ms = _measurement_set(sub, ansatz)
        identity = build_excitations(
            ansatz.m, range(ansatz.n_occ), range(ansatz.n_occ, ansatz.m)
        )[:1]
        rdm = compute_rdm(ms, ansatz.lam, np.array([1.0]), np.array([1.0]), identity)
        ch = atomic_charges(rdm, aux, method=sub["charges_method"], seed=sub["seed"])
        row["charges"] = ch.q.tolist()
    return row


def _curve_stats(labels, e_method, e_ref):
    """Non-parallelity error and binding energy of a dissociation curve."""
    delta = np.asarray(e_method) - np.asarray(e_ref)
    npe = float(np.max(np.abs(delta - delta.mean()))) if len(delta) else 0.0
    r_order = np.argsort([float(x) for x in labels])
    e = np.asarray(e_method)
    binding = float(e[r_order[-1]] - e.min()) if len(e) else 0.0
    return npe, binding


def cmd_scan(cfg, out):
    if not cfg["scan"]:
        raise ConfigError("scan needs a non-empty scan manifest")
    workers = cfg["workers"]
    env = os.environ.get("FORGESIM_WORKERS")
    if env:
        try:
            workers = int(env)
        except ValueError as exc:
            raise ConfigError(f"FORGESIM_WORKERS must be an integer, got {env!r}") from exc
    geoms = cfg["scan"]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_one, geoms, [cfg] * len(geoms)))
    else:
        rows = [_scan_one(g, cfg) for g in geoms]

    meta = _meta(cfg, "scan")
    for row in rows:
        _write_json(out / f"scan_{row['label']}.json", {**row, "meta": meta})

    rows = sorted(rows, key=lambda r: float(r["label"]))
    labels = [r["label"] for r in rows]
    header = ["label", "e_fci", "e_ef"]
    if cfg["qse"]:
        header.append("e_qse")
    csv_rows = []
    for r in rows:
        line = [r["label"], r["e_fci"], r["e_ef"]]
        if cfg["qse"]:
            line.append(r["e_qse"])
        csv_rows.append(line)
    _write_csv(out / "scan.csv", header, csv_rows)

    e_fci = [r["e_fci"] for r in rows]
    summary = {"n_geometries": len(rows), "meta": meta}
    npe, binding = _curve_stats(labels, [r["e_ef"] for r in rows], e_fci)
    summary["ef"] = {"npe": npe, "binding": binding}
    _, binding_fci = _curve_stats(labels, e_fci, e_fci)
    summary["fci"] = {"npe": 0.0, "binding": binding_fci}
    if cfg["qse"]:
        npe_q, binding_q = _curve_stats(labels, [r["e_qse"] for r in rows], e_fci)
        summary["qse"] = {"npe": npe_q, "binding": binding_q}
    _write_json(out / "scan.json", summary)
    return 0


def cmd_oracle(cfg, out):
    _require_fcidump(cfg)
    ints = _load_ints(cfg["fcidump"])
    res = fci_solve(ints, n_roots=cfg["n_roots"])
    states = [
        {"energy": float(res.energies[i]), "spin": float(res.s2[i]),
         "s": int(round(0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * res.s2[i]))))}
        for i in range(res.n_states)
    ]
    gaps = {}
    singlets = [st["energy"] for st in states if st["spin"] < 0.1]
    if len(singlets) >= 2:
        gaps["s1_s0"] = singlets[1] - singlets[0]
    _write_json(
        out / "oracle.json",
        {
            "e0": ints.e0,
            "n_up": ints.n_up,
            "n_dn": ints.n_dn,
            "norb": ints.norb,
            "states": states,
            "gaps": gaps,
            "meta": _meta(cfg, "oracle"),
        },
    )
    return 0


_COMMANDS = {
    "ground": cmd_ground,
    "qse": cmd_qse,
    "spectrum": cmd_spectrum,
    "charges": cmd_charges,
    "scan": cmd_scan,
    "oracle": cmd_oracle,
}


def _parse_args(argv):
    parser = _Parser(prog="forgesim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON run configuration")
        p.add_argument("--mode", choices=_MODES, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--shots", type=int, default=None)
        p.add_argument("--mitigation", choices=_MITIGATIONS, default=None)
        p.add_argument("--out", default=None, help="output directory")
    return parser.parse_args(argv)


def main(argv=None):
    try:
        args = _parse_args(argv)
        raw = _load_config_file(args.config) if args.config else {}
        cfg = _merge_config(raw, args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        return int(_COMMANDS[args.command](cfg, out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ForgesimError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
