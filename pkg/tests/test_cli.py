import json
import os
import subprocess
import sys

import numpy as np
import pytest

from topovae.cli import UsageError, main, resolve_seed
from topovae.data import Table, load_csv, load_table, save_table


@pytest.fixture(scope="module")
def osc(tmp_path_factory):
    """A short oscillator run shared by the eval and export tests."""
    d = tmp_path_factory.mktemp("osc")
    assert main(["generate", "--system", "oscillator", "--n", "400", "--seed", "7",
                 "--out", str(d)]) == 0
    assert main(["train", "--input", str(d / "data.csv"), "--term", "circle", "--tpv", "2",
                 "--gpv", "1", "--alpha", "1", "--beta", "1", "--gamma", "100",
                 "--iters", "3000", "--seed", "7", "--out", str(d)]) == 0
    return d


def test_generate_shapes(tmp_path):
    assert main(["generate", "--system", "oscillator", "--n", "1000", "--seed", "7",
                 "--out", str(tmp_path / "run1")]) == 0
    assert main(["generate", "--system", "qubit", "--n", "1000", "--seed", "7",
                 "--out", str(tmp_path / "run2")]) == 0
    a = load_csv(tmp_path / "run1" / "data.csv")
    b = load_csv(tmp_path / "run2" / "data.csv")
    assert (a.n, a.dim, b.n, b.dim) == (1000, 3, 1000, 5)
    assert load_table(tmp_path / "run1" / "data.labels.csv").columns == ("phase",)
    assert load_table(tmp_path / "run2" / "data.labels.csv").columns == ("theta", "phi")


def test_generate_usage_errors(tmp_path):
    assert main(["generate", "--system", "oscillator", "--n", "0", "--out", str(tmp_path)]) == 2
    assert main(["generate", "--system", "pendulum", "--out", str(tmp_path)]) == 2
    assert main(["generate", "--system", "orbit"]) == 2


def test_generate_is_idempotent(tmp_path):
    for name in ("a", "b"):
        main(["generate", "--system", "orbit", "--n", "50", "--seed", "3",
              "--out", str(tmp_path / name)])
    for f in ("data.csv", "data.labels.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TVAE_SEED", "11")
    assert resolve_seed(None) == 11
    assert resolve_seed(4) == 4
    main(["generate", "--system", "orbit", "--n", "20", "--out", str(tmp_path / "env")])
    main(["generate", "--system", "orbit", "--n", "20", "--seed", "11",
          "--out", str(tmp_path / "flag")])
    assert (tmp_path / "env" / "data.csv").read_bytes() == (tmp_path / "flag" / "data.csv").read_bytes()
    monkeypatch.setenv("TVAE_SEED", "eleven")
    with pytest.raises(UsageError):
        resolve_seed(None)
    assert main(["generate", "--system", "orbit", "--n", "20", "--out", str(tmp_path)]) == 2
    monkeypatch.delenv("TVAE_SEED")
    assert resolve_seed(None) == 0


def test_betti_prints_vector(tmp_path, capsys):
    main(["generate", "--system", "oscillator", "--n", "1000", "--seed", "7", "--out", str(tmp_path)])
    capsys.readouterr()
    out = tmp_path / "bars" / "barcode.json"
    assert main(["betti", "--input", str(tmp_path / "data.csv"), "--landmarks", "150",
                 "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "[1,1,0]"
    doc = json.loads(out.read_text())
    assert doc["betti"] == [1, 1, 0] and doc["diameter"] > 0
    assert any(iv["death"] is None for iv in doc["intervals"])
    assert (tmp_path / "bars" / "manifest.json").exists()


def test_betti_errors(tmp_path):
    assert main(["betti", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "b.json")]) == 2
    main(["generate", "--system", "qubit", "--n", "200", "--seed", "1", "--out", str(tmp_path)])
    assert main(["betti", "--input", str(tmp_path / "data.csv"), "--max-dim", "2",
                 "--max-simplices", "100", "--out", str(tmp_path / "b.json")]) == 3
    assert main(["betti", "--input", str(tmp_path / "data.csv"), "--max-dim", "3",
                 "--out", str(tmp_path / "b.json")]) == 2


def test_train_outputs(osc):
    loss = load_table(osc / "loss.csv")
    assert loss.columns == ("iteration", "total", "recon", "topo", "gpv")
    assert loss.values[-1, 0] == 3000
    ckpt = json.loads((osc / "checkpoint.json").read_text())
    assert ckpt["format"] == "TVAE1"
    assert ckpt["latent_layout"] == {"tpv": [0, 1], "gpv": [2], "term": "circle"}
    manifest = json.loads((osc / "manifest.json").read_text())
    assert set(manifest["stages"]) >= {"generate", "train"}
    assert manifest["stages"]["train"]["config"]["gamma"] == 100.0


def test_train_arity_mismatch(osc, tmp_path):
    assert main(["train", "--input", str(osc / "data.csv"), "--term", "sphere", "--tpv", "2",
                 "--out", str(tmp_path)]) == 2
    assert main(["train", "--input", str(osc / "data.csv"), "--term", "circle", "--tpv", "3",
                 "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "checkpoint.json").exists()


def test_train_system_from_term_without_header(tmp_path):
    # stripping the comment lines drops the system tag from the data
    main(["generate", "--system", "orbit", "--n", "100", "--seed", "2", "--out", str(tmp_path)])
    text = (tmp_path / "data.csv").read_text().splitlines()
    (tmp_path / "bare.csv").write_text("\n".join(line for line in text if not line.startswith("#")) + "\n")
    assert main(["train", "--input", str(tmp_path / "bare.csv"), "--term", "lemniscate",
                 "--iters", "5", "--batch-size", "50", "--out", str(tmp_path / "t")]) == 0
    cfg = json.loads((tmp_path / "t" / "checkpoint.json").read_text())["config"]
    assert cfg["system"] == "orbit" and cfg["beta"] == 100.0
    assert main(["train", "--input", str(tmp_path / "bare.csv"), "--iters", "5",
                 "--out", str(tmp_path / "t2")]) == 2


def test_eval_trained(osc, tmp_path):
    out = tmp_path / "ev"
    code = main(["eval", "--input", str(osc / "data.csv"), "--labels", str(osc / "data.labels.csv"),
                 "--checkpoint", str(osc / "checkpoint.json"), "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    assert code == 0 and report["passed"]
    assert abs(report["winding_number"]) == 1
    assert load_table(out / "latents.csv").values.shape == (400, 3)


def test_eval_untrained_exits_4(osc, tmp_path):
    assert main(["train", "--input", str(osc / "data.csv"), "--iters", "0",
                 "--out", str(tmp_path)]) == 0
    code = main(["eval", "--input", str(osc / "data.csv"), "--labels", str(osc / "data.labels.csv"),
                 "--checkpoint", str(tmp_path / "checkpoint.json"), "--out", str(tmp_path)])
    report = json.loads((tmp_path / "report.json").read_text())
    assert code == 4
    assert report["manifold_residual_mean"] > 0.05 and not report["passed"]


def test_eval_without_labels(osc, tmp_path):
    code = main(["eval", "--input", str(osc / "data.csv"),
                 "--checkpoint", str(osc / "checkpoint.json"), "--out", str(tmp_path)])
    report = json.loads((tmp_path / "report.json").read_text())
    assert code == 0 and report["winding_number"] is None


def test_eval_mismatch(osc, tmp_path):
    main(["generate", "--system", "qubit", "--n", "100", "--seed", "1", "--out", str(tmp_path)])
    assert main(["eval", "--input", str(tmp_path / "data.csv"),
                 "--checkpoint", str(osc / "checkpoint.json"), "--out", str(tmp_path)]) == 2
    main(["generate", "--system", "orbit", "--n", "100", "--seed", "1", "--out", str(tmp_path / "o")])
    assert main(["eval", "--input", str(tmp_path / "o" / "data.csv"),
                 "--checkpoint", str(osc / "checkpoint.json"), "--out", str(tmp_path)]) == 2


def test_export_oscillator(osc, tmp_path):
    run = tmp_path / "run"
    main(["eval", "--input", str(osc / "data.csv"), "--labels", str(osc / "data.labels.csv"),
          "--checkpoint", str(osc / "checkpoint.json"), "--out", str(run)])
    assert main(["export", "--run", str(run), "--out", str(tmp_path / "plots")]) == 0
    names = sorted(p.name for p in (tmp_path / "plots").iterdir())
    assert names == ["latent_scatter.csv", "latent_vs_v.csv", "latent_vs_x1.csv", "manifest.json"]
    t = load_table(tmp_path / "plots" / "latent_vs_x1.csv")
    np.testing.assert_array_equal(t.column("x1"), load_csv(osc / "data.csv").points[:, 0])


def test_export_qubit(tmp_path):
    d = tmp_path
    main(["generate", "--system", "qubit", "--n", "300", "--seed", "5", "--out", str(d)])
    main(["train", "--input", str(d / "data.csv"), "--iters", "0", "--out", str(d)])
    main(["eval", "--input", str(d / "data.csv"), "--labels", str(d / "data.labels.csv"),
          "--checkpoint", str(d / "checkpoint.json"), "--out", str(d)])
    # an untrained encoder is far from the sphere: no angles can be read off
    assert main(["export", "--run", str(d), "--out", str(d / "plots")]) == 4
    # a perfect encoder: latents are the Bloch vectors themselves
    labels = load_table(d / "data.labels.csv")
    th, ph = labels.column("theta"), labels.column("phi")
    bloch = np.column_stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th),
                             np.zeros_like(th)])
    save_table(Table(("z0", "z1", "z2", "z3"), bloch), d / "latents.csv")
    assert main(["export", "--run", str(d), "--out", str(d / "plots")]) == 0
    t = load_table(d / "plots" / "azimuth_compare.csv")
    assert t.columns == ("theta0", "phi0", "theta1", "phi1")
    np.testing.assert_allclose(t.column("theta1"), t.column("theta0"), atol=1e-12)
    dphi = np.angle(np.exp(1j * (t.column("phi1") - t.column("phi0"))))
    assert np.max(np.abs(dphi)) < 1e-9


def test_export_incomplete(tmp_path):
    assert main(["export", "--run", str(tmp_path), "--out", str(tmp_path / "o")]) == 2
    assert main(["export", "--run", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    main(["generate", "--system", "orbit", "--n", "20", "--out", str(tmp_path)])
    assert main(["export", "--run", str(tmp_path), "--out", str(tmp_path / "o")]) == 2


def test_one_manifest_per_directory(osc):
    assert [p.name for p in osc.iterdir() if "manifest" in p.name] == ["manifest.json"]
    doc = json.loads((osc / "manifest.json").read_text())
    assert doc["schema_version"] == 1 and doc["version"]
    for stage in doc["stages"].values():
        assert {"config", "seed", "inputs", "outputs", "duration_s"} <= set(stage)


def test_module_entry_point_and_threads(tmp_path):
    env = dict(os.environ, TVAE_SEED="1")
    proc = subprocess.run(
        [sys.executable, "-m", "topovae", "--threads", "1", "generate", "--system", "orbit",
         "--n", "10", "--out", str(tmp_path)],
        capture_output=True, text=True, env=env, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads((tmp_path / "manifest.json").read_text())["stages"]["generate"]["seed"] == 1
    bad = subprocess.run([sys.executable, "-m", "topovae", "--threads", "0", "generate"],
                         capture_output=True, text=True, check=False)
    assert bad.returncode == 2
