import json

import numpy as np
import pytest

from tctbundle.cli import EXIT_CHECK, EXIT_DATA, EXIT_OK, EXIT_USAGE, main, parse, read_config
from tctbundle.records import DatasetReader

SUBCOMMANDS = ("gen-rnd", "gen-sgs", "crb-table", "design-scan", "invert", "train", "predict",
               "evaluate", "diagnose")


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help(cmd, capsys):
    assert main([cmd, "--help"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "--seed" in out and "--config" in out


def test_usage_errors(capsys):
    assert main(["bogus"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err
    assert main([]) == EXIT_USAGE
    assert main(["gen-rnd", "--n", "10"]) == EXIT_USAGE
    assert main(["gen-rnd", "--n", "ten", "--out", "x"]) == EXIT_USAGE


def test_data_errors(tmp_path):
    assert main(["invert", "--input", str(tmp_path / "missing.bin"), "--out", str(tmp_path / "o")]) == EXIT_DATA
    (tmp_path / "junk.bin").write_bytes(b"not a dataset at all, really not one")
    assert main(["evaluate", "--input", str(tmp_path / "junk.bin")]) == EXIT_DATA


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# desk run\nseed = 9\nn = 1234   # bundles\nfixed-n0 = 50000\n")
    assert read_config(cfg) == {"seed": "9", "n": "1234", "fixed_n0": "50000"}
    ns = parse(["gen-rnd", "--config", str(cfg), "--out", "x"])
    assert (ns.seed, ns.n, ns.fixed_n0) == (9, 1234, 50000.0)
    ns = parse(["gen-rnd", "--config", str(cfg), "--seed", "4", "--out", "x"])
    assert (ns.seed, ns.n) == (4, 1234)
    # profile fills what neither the flags nor the file set
    assert parse(["gen-rnd", "--out", "x"]).n == 200_000
    assert parse(["gen-rnd", "--profile", "paper", "--out", "x"]).n == 14_000_000
    assert parse(["train", "--input", "i", "--out", "o"]).width_multiplier == 0.25
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 3\n")
    assert main(["crb-table", "--config", str(bad)]) == EXIT_USAGE
    bad.write_text("no equals sign\n")
    assert main(["crb-table", "--config", str(bad)]) == EXIT_USAGE
    flag = tmp_path / "flag.cfg"
    flag.write_text("equal-attenuation = true\n")
    assert parse(["gen-rnd", "--config", str(flag), "--out", "x"]).equal_attenuation is True


def test_workers_env(monkeypatch):
    monkeypatch.setenv("TCT_WORKERS", "3")
    assert parse(["crb-table"]).workers == 3


def test_crb_table(tmp_path):
    out = tmp_path / "t.json"
    assert main(["crb-table", "--format", "json", "--out", str(out)]) == EXIT_OK
    rows = json.loads(out.read_text())
    assert len(rows) == 6
    assert rows[2]["sigma_crb1"] == pytest.approx(np.sqrt(7) / 3 * np.exp(2) / np.sqrt(1e5))
    assert main(["crb-table", "--decomposition", "--out", str(tmp_path / "d.csv")]) == EXIT_OK
    assert (tmp_path / "d.csv").read_text().startswith("bin,lo,hi,x_c")


def test_design_scan(tmp_path):
    out = tmp_path / "d.json"
    assert main(["design-scan", "--designs", "canonical,identity3,single3", "--out", str(out)]) == EXIT_OK
    rows = json.loads(out.read_text())
    assert rows[0]["design"] == "single3"
    assert {r["design"] for r in rows} == {"canonical", "identity3", "single3"}
    assert main(["design-scan", "--designs", "nope"]) == EXIT_DATA


def test_invert_and_evaluate(tmp_path):
    d = str(tmp_path / "d.bin")
    assert main(["gen-rnd", "--n", "4000", "--seed", "3", "--fixed-n0", "100000", "--out", d]) == EXIT_OK
    for method in ("svd", "snn1", "endpoint-mle"):
        e = str(tmp_path / f"{method}.bin")
        assert main(["invert", "--input", d, "--method", method, "--out", e]) == EXIT_OK
        est = DatasetReader(e).read_all()
        assert len(est) == 4000 and np.all(np.isfinite(est["x_hat"]))
    out = tmp_path / "ev.json"
    assert main(["evaluate", "--input", d, "--estimates", str(tmp_path / "snn1.bin"), "--method", "snn1",
                 "--format", "json", "--out", str(out)]) == EXIT_OK
    js = json.loads(out.read_text())
    assert js["method"] == "snn1" and js["rows"]
    # inline inversion gives the same report
    out2 = tmp_path / "ev2.json"
    assert main(["evaluate", "--input", d, "--method", "snn1", "--format", "json", "--out", str(out2)]) == EXIT_OK
    assert out.read_bytes() == out2.read_bytes()


def test_crb_check_exit_code():
    # the published table disagrees with the closed form at x >= 2 (see the acceptance suite)
    assert main(["crb-table", "--check", "--out", "/dev/null"]) == EXIT_CHECK


def test_diagnose(tmp_path):
    d = str(tmp_path / "s.bin")
    assert main(["gen-sgs", "--rotations", "0:200:100", "--view-stride", "64", "--out", d]) == EXIT_OK
    out = tmp_path / "diag.json"
    assert main(["diagnose", "--input", d, "--out", str(out)]) == EXIT_OK
    js = json.loads(out.read_text())
    assert js["correlation"]["rho_adjacent_x2"] > 0.99
    assert js["dataset"]["n_bundles"] == 2 * 16 * 333


def _run_twice(tmp_path, name, argv_fn):
    outs = []
    for k in ("a", "b"):
        p = tmp_path / f"{name}_{k}"
        assert main(argv_fn(str(p))) == EXIT_OK
        outs.append(p.read_bytes())
    return outs


def test_seeded_subcommands_byte_identical(tmp_path):
    d = str(tmp_path / "d.bin")
    assert main(["gen-rnd", "--n", "3000", "--seed", "5", "--out", d]) == EXIT_OK
    cases = {
        "rnd": lambda o: ["gen-rnd", "--n", "3000", "--seed", "5", "--out", o],
        "sgs": lambda o: ["gen-sgs", "--rotations", "0:200:100", "--view-stride", "64", "--out", o],
        "crb": lambda o: ["crb-table", "--out", o],
        "inv": lambda o: ["invert", "--input", d, "--out", o],
        "ev": lambda o: ["evaluate", "--input", d, "--method", "svd", "--out", o],
        "train": lambda o: ["train", "--input", d, "--epochs", "1", "--batch-size", "256",
                            "--width-multiplier", "0.0625", "--out", o],
        "diag": lambda o: ["diagnose", "--input", d, "--out", o],
    }
    for name, fn in cases.items():
        a, b = _run_twice(tmp_path, name, fn)
        assert a == b, name
    ck = str(tmp_path / "train_a")
    a, b = _run_twice(tmp_path, "pred", lambda o: ["predict", "--checkpoint", ck, "--input", d, "--out", o])
    assert a == b
    a, b = _run_twice(tmp_path, "hyb", lambda o: ["predict", "--checkpoint", ck, "--input", d,
                                                   "--endpoint-mode", "analytic", "--out", o])
    assert a == b
