import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from deltamaps.cli import main
from deltamaps.domains import Domain, DomainSet, write_domains
from deltamaps.grid import build_grid
from deltamaps.ingest import Field, write_field
from deltamaps.network import DomainNetwork, Edge, write_network


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["gen-synthetic", "--out", str(out / "syn")]) == 0
    return out


def _noise_field(path, rows=6, cols=6, T=300, seed=0):
    rng = np.random.default_rng(seed)
    f = Field(build_grid(rows, cols), rng.standard_normal((rows * cols, T)))
    write_field(f, path)
    return path


def test_gen_synthetic_is_byte_identical(tmp_path, synth_dir):
    assert main(["gen-synthetic", "--out", str(tmp_path / "b")]) == 0
    for name in ("field.bin", "field.json", "ground_truth.json"):
        assert (tmp_path / "b" / name).read_bytes() == (synth_dir / "syn" / name).read_bytes()
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["parameters"]["rows"] == 50 and manifest["parameters"]["T"] == 1200


def test_gen_synthetic_invalid_radius(tmp_path, capsys):
    cfg = {"domains": [{"center": [5, 5], "r_core": 4, "r_outer": 3, "variance": 1,
                        "mixing": [[0, 1, 0]]}]}
    (tmp_path / "bad.json").write_text(json.dumps(cfg))
    assert main(["gen-synthetic", "--config", str(tmp_path / "bad.json"),
                 "--out", str(tmp_path / "o")]) == 2
    assert "r_core" in capsys.readouterr().err


def test_domains_network_analyze(tmp_path, synth_dir):
    field = str(synth_dir / "syn" / "field.json")
    assert main(["domains", "--field", field, "--delta", "0.55", "--K", "4",
                 "--out", str(tmp_path / "d")]) == 0
    doms = json.loads((tmp_path / "d" / "domains.json").read_text())
    assert len(doms["domains"]) == 5
    header = (tmp_path / "d" / "homogeneity_field.csv").read_text().splitlines()[0]
    assert header == "cell,row,col,local_homogeneity,is_seed,domains"

    assert main(["network", "--field", field, "--domains", str(tmp_path / "d" / "domains.json"),
                 "--tau-max", "20", "--q", "0.1", "--out", str(tmp_path / "n")]) == 0
    net = json.loads((tmp_path / "n" / "network.json").read_text())
    assert len(net["edges"]) == 3
    assert len(list((tmp_path / "n" / "correlograms").glob("*.csv"))) == 3

    assert main(["analyze", "--network", str(tmp_path / "n" / "network.json"),
                 "--domains", str(tmp_path / "d" / "domains.json"),
                 "--out", str(tmp_path / "a")]) == 0
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["triangles"] == []
    assert (tmp_path / "a" / "triangles.csv").read_text().splitlines() == [
        "a,b,c,consistent,lag_ab,lag_bc,lag_ac"]

    assert main(["network", "--field", field, "--domains", str(tmp_path / "d" / "domains.json"),
                 "--q", "0", "--out", str(tmp_path / "n0")]) == 0
    assert json.loads((tmp_path / "n0" / "network.json").read_text())["edges"] == []


def test_delta_and_alpha_conflict(tmp_path, capsys):
    f = _noise_field(tmp_path / "f.json")
    assert main(["domains", "--field", str(f), "--delta", "0.5", "--alpha", "0.01",
                 "--out", str(tmp_path / "o")]) == 2
    assert "mutually exclusive" in capsys.readouterr().err


def test_empty_seed_set_exit_code(tmp_path):
    f = _noise_field(tmp_path / "f.json")
    assert main(["domains", "--field", str(f), "--delta", "0.95",
                 "--out", str(tmp_path / "o")]) == 4
    doms = json.loads((tmp_path / "o" / "domains.json").read_text())
    assert doms["domains"] == []
    assert main(["pipeline", "--field", str(f), "--delta", "0.95",
                 "--out", str(tmp_path / "p")]) == 4


def test_no_signal_for_delta_estimation(tmp_path, capsys):
    f = _noise_field(tmp_path / "f.json", T=2000)
    code = main(["estimate-delta", "--field", str(f), "--alpha", "0.001", "--n-pairs", "200"])
    assert code == 4 and "no signal" in capsys.readouterr().err


def test_estimate_delta_prints_json(tmp_path, capsys, synth_dir):
    assert main(["estimate-delta", "--field", str(synth_dir / "syn" / "field.json")]) == 0
    est = json.loads(capsys.readouterr().out)
    assert {"delta", "alpha", "n_pairs_sampled", "n_significant"} <= set(est)
    assert 0 < est["delta"] < 1


def test_single_domain_network(tmp_path):
    f = _noise_field(tmp_path / "f.json")
    ds = DomainSet([Domain(0, (0, 1), (0,), (0,), 0.6, 0.6)], 0.5, 4, 36)
    write_domains(ds, tmp_path / "d.json")
    assert main(["network", "--field", str(f), "--domains", str(tmp_path / "d.json"),
                 "--out", str(tmp_path / "n")]) == 0
    net = json.loads((tmp_path / "n" / "network.json").read_text())
    assert net["edges"] == [] and len(net["nodes"]) == 1


def test_analyze_balanced_toy_and_missing_input(tmp_path, capsys):
    edges = [Edge(0, 1, False, 0, 0, 0, -0.5, -0.5, 0.01), Edge(1, 2, False, 0, 0, 0, 0.4, 0.4, 0.01)]
    nodes = [{"id": i, "strength": 0.0, "degree": 0} for i in range(3)]
    write_network(DomainNetwork(nodes, edges, 0.1, 5, 9), tmp_path / "n.json")
    assert main(["analyze", "--network", str(tmp_path / "n.json"), "--out", str(tmp_path / "a")]) == 0
    rows = (tmp_path / "a" / "nodes.csv").read_text().splitlines()
    assert rows[0] == "node,core,component,pole"
    poles = [r.split(",")[3] for r in rows[1:]]
    assert poles == ["0", "1", "1"]
    assert main(["analyze", "--network", str(tmp_path / "absent.json"),
                 "--out", str(tmp_path / "b")]) == 3
    assert "absent.json" in capsys.readouterr().err


def test_pipeline_manifest_hashes(tmp_path, synth_dir):
    out = tmp_path / "p"
    assert main(["pipeline", "--field", str(synth_dir / "syn" / "field.json"), "--delta", "0.55",
                 "--tau-max", "20", "--q", "0.1", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"deltamaps", "python", "numpy", "parameters", "timings_s", "outputs"} <= set(manifest)
    assert manifest["parameters"]["delta"] == 0.55
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert {"domains.json", "network.json", "report.json"} <= set(manifest["outputs"])


def test_overwrite_needs_force(tmp_path, synth_dir):
    field = str(synth_dir / "syn" / "field.json")
    args = ["domains", "--field", field, "--delta", "0.55", "--out", str(tmp_path / "d")]
    assert main(args) == 0
    assert main(args) == 2
    assert main(args + ["--force"]) == 0


def test_preprocess_subcommand(tmp_path):
    f = _noise_field(tmp_path / "f.json", T=48)
    assert main(["preprocess", "--field", str(f), "--period", "12",
                 "--out", str(tmp_path / "pp")]) == 0
    header = json.loads((tmp_path / "pp" / "field.json").read_text())
    assert header["preprocessing_log"] == ["deseasonalize(period=12)", "theil_sen_detrend",
                                           "center"]


def test_config_file_and_unknown_keys(tmp_path):
    f = _noise_field(tmp_path / "f.json")
    (tmp_path / "c.json").write_text(json.dumps({"delta": 0.95, "K": 4}))
    assert main(["domains", "--field", str(f), "--config", str(tmp_path / "c.json"),
                 "--out", str(tmp_path / "o")]) == 4
    (tmp_path / "bad.json").write_text(json.dumps({"dleta": 0.5}))
    assert main(["domains", "--field", str(f), "--config", str(tmp_path / "bad.json"),
                 "--out", str(tmp_path / "o2")]) == 2


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["domains"])
    assert exc.value.code == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "deltamaps.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
