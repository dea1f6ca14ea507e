import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from helpers import H2_AUX, H2_FCIDUMP

from forgesim.cli import main
from forgesim.fci import fci_solve
from forgesim.integrals import parse_fcidump


def _write_config(tmp_path, name="config.json", **over):
    cfg = {
        "fcidump": str(H2_FCIDUMP),
        "optimizer": {"restarts": 2, "max_iter": 200},
    }
    cfg.update(over)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def _run(command, config, out):
    return main([command, "--config", str(config), "--out", str(out)])


def test_ground_exact_run_is_reproducible(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "run"
    assert _run("ground", cfg, out) == 0
    ground = json.loads((out / "ground.json").read_text())
    fci = fci_solve(parse_fcidump(H2_FCIDUMP), n_roots=1)
    assert abs(ground["energy"] - fci.energies[0]) < 1e-8
    assert ground["energy_sigma"] == 0.0
    assert ground["converged"] is True
    assert ground["hf_pair_energy"] > ground["energy"]
    meta = ground["meta"]
    assert meta["command"] == "ground" and meta["mode"] == "exact"
    assert len(meta["config_hash"]) == 64

    ansatz = json.loads((out / "ansatz.json").read_text())
    assert len(ansatz["ansatz"]["theta"]) == len(ansatz["ansatz"]["schedule"])

    with (out / "trace.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["iteration", "energy", "grad_norm"]
    assert len(rows) > 1

    before = {p.name: p.read_bytes() for p in out.iterdir()}
    assert _run("ground", cfg, out) == 0
    after = {p.name: p.read_bytes() for p in out.iterdir()}
    assert before == after


def test_ground_runs_without_aux(tmp_path):
    # aux data only matters for dipoles and charges
    cfg = _write_config(tmp_path)
    assert json.loads(cfg.read_text()).get("aux") is None
    assert _run("ground", cfg, tmp_path / "o") == 0


def test_unknown_config_keys_exit_1(tmp_path):
    cfg = _write_config(tmp_path, bogus=1)
    assert _run("ground", cfg, tmp_path / "o") == 1
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"fcidump": str(H2_FCIDUMP), "noise": {"p99": 0.1}}))
    assert _run("ground", nested, tmp_path / "o2") == 1


def test_missing_and_malformed_inputs(tmp_path):
    missing = _write_config(tmp_path, fcidump=str(tmp_path / "nope.fcidump"))
    assert _run("ground", missing, tmp_path / "o") == 1

    bad = tmp_path / "broken.fcidump"
    bad.write_text("&FCI NORB=2\nthis is not data\n")
    cfg = _write_config(tmp_path, name="bad.json", fcidump=str(bad))
    assert _run("ground", cfg, tmp_path / "o2") == 2

    assert main(["ground"]) == 1  # no fcidump configured at all


def test_nonconvergence_exit_code(tmp_path):
    # one L-BFGS iteration cannot finish a generic 3-orbital system
    from helpers import random_integrals
    from forgesim.integrals import write_fcidump

    ints = random_integrals(3, seed=5)
    dump = tmp_path / "r3.fcidump"
    dump.write_text(write_fcidump(ints))
    cfg = _write_config(
        tmp_path, fcidump=str(dump), optimizer={"restarts": 1, "max_iter": 1}
    )
    out = tmp_path / "o"
    assert _run("ground", cfg, out) == 3
    assert (out / "ground.json").is_file()
    assert json.loads((out / "ground.json").read_text())["converged"] is False


def test_qse_exact_matches_oracle(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "q"
    assert _run("qse", cfg, out) == 0
    data = json.loads((out / "qse.json").read_text())
    fci = fci_solve(parse_fcidump(H2_FCIDUMP))
    got = np.sort([st["energy"] for st in data["states"]])
    assert np.allclose(got, fci.energies, atol=1e-8)
    spins = sorted(round(st["spin"], 6) for st in data["states"])
    assert spins == [0.0, 0.0, 0.0, 2.0]
    assert data["labels"][0] == "I"
    assert data["meta"]["mitigation"] == "raw"
    assert not any(st["flagged"] or st["unstable"] for st in data["states"])
    rdms = json.loads((out / "rdms.json").read_text())
    assert len(rdms["rdms"]) == 4

    em = tmp_path / "q_em"
    assert main(["qse", "--config", str(cfg), "--out", str(em), "--mitigation", "em"]) == 0
    em_meta = json.loads((em / "qse.json").read_text())["meta"]
    assert em_meta["mitigation"] == "em"
    assert em_meta["config_hash"] != data["meta"]["config_hash"]


def test_spectrum_outputs(tmp_path):
    cfg = _write_config(tmp_path, aux=str(H2_AUX))
    out = tmp_path / "s"
    assert _run("spectrum", cfg, out) == 0

    with (out / "peaks.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["energy_Ha", "energy_eV", "weight", "spin", "label"]
    assert len(rows) == 5
    labels = [r[4] for r in rows[1:]]
    assert labels.count("elastic") == 1
    ha = np.array([float(r[0]) for r in rows[1:]])
    ev = np.array([float(r[1]) for r in rows[1:]])
    assert np.allclose(ev, ha * 27.211386245988, atol=1e-9)

    with (out / "spectrum.csv").open() as fh:
        srows = list(csv.reader(fh))
    assert srows[0] == ["omega", "intensity"]
    assert len(srows) > 100

    summary = json.loads((out / "spectrum.json").read_text())
    assert abs(summary["total_weight"] - summary["dipole_sq_expectation"]) < 1e-8
    assert summary["elastic_weight"] < 1e-10
    assert summary["peaks_outside_grid"] == []


def test_spectrum_requires_aux(tmp_path):
    cfg = _write_config(tmp_path)
    assert _run("spectrum", cfg, tmp_path / "o") == 1


def test_charges_outputs(tmp_path):
    cfg = _write_config(tmp_path, aux=str(H2_AUX), qse=True)
    out = tmp_path / "c"
    assert _run("charges", cfg, out) == 0
    data = json.loads((out / "charges.json").read_text())
    labels = [st["label"] for st in data["states"]]
    assert labels == ["ef_ground", "qse_ground"]
    for st in data["states"]:
        assert abs(st["total"]) < 1e-8
        assert max(abs(q) for q in st["q"]) < 1e-8
        assert st["method"] == "mulliken"


def test_scan_single_geometry(tmp_path):
    cfg = _write_config(
        tmp_path,
        scan=[{"label": "0.7414", "fcidump": str(H2_FCIDUMP), "aux": str(H2_AUX)}],
    )
    out = tmp_path / "scan"
    assert _run("scan", cfg, out) == 0
    summary = json.loads((out / "scan.json").read_text())
    assert summary["n_geometries"] == 1
    assert summary["ef"]["npe"] == 0.0
    point = json.loads((out / "scan_0.7414.json").read_text())
    assert abs(point["e_ef"] - point["e_fci"]) < 1e-8
    assert "charges" in point
    with (out / "scan.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["label", "e_fci", "e_ef"]
    assert len(rows) == 2


def test_scan_requires_manifest(tmp_path):
    cfg = _write_config(tmp_path)
    assert _run("scan", cfg, tmp_path / "o") == 1
    entry = _write_config(
        tmp_path, name="entry.json", scan=[{"fcidump": str(H2_FCIDUMP)}]
    )
    assert _run("scan", entry, tmp_path / "o2") == 1


def test_oracle_output(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "oracle"
    assert _run("oracle", cfg, out) == 0
    data = json.loads((out / "oracle.json").read_text())
    energies = [st["energy"] for st in data["states"]]
    assert energies == sorted(energies)
    assert len(energies) == 4
    assert data["states"][0]["s"] == 0
    assert data["gaps"]["s1_s0"] > 0
    fci = fci_solve(parse_fcidump(H2_FCIDUMP))
    assert np.allclose(energies, fci.energies, atol=1e-12)


def test_seed_flag_reaches_metadata(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "o"
    assert main(["oracle", "--config", str(cfg), "--out", str(out), "--seed", "42"]) == 0
    assert json.loads((out / "oracle.json").read_text())["meta"]["seed"] == 42


def test_module_entry_point(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "o"
    proc = subprocess.run(
        [sys.executable, "-m", "forgesim", "oracle", "--config", str(cfg), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "oracle.json").is_file()

    bad = subprocess.run(
        [sys.executable, "-m", "forgesim", "ground"],
        capture_output=True,
        text=True,
    )
    assert bad.returncode == 1
    assert "config error" in bad.stderr
