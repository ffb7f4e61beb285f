import hashlib
import json
from pathlib import Path

import pytest

from skfluct.cli import main, read_csv


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_var_rep_trivial_beta_zero(tmp_path):
    out = tmp_path / "vr.csv"
    code = main(["var-rep", "--n", "6", "--beta", "0", "--m", "120", "--t-nodes", "4",
                 "--seed", "1", "--out", str(out), "--resamples", "60"])
    assert code == 0
    schema, header, rows = read_csv(out, "skfluct.var_rep.v1")
    assert header == ["side", "estimate", "ci_lo", "ci_hi"]
    assert rows[0][0] == "lhs_var"
    assert abs(float(rows[1][1])) == 0.0  # rhs exactly zero at beta = 0


def test_var_rep_identity_and_determinism(tmp_path):
    args = ["var-rep", "--n", "6", "--beta", "0.6", "--m", "250", "--t-nodes", "8",
            "--seed", "9", "--resamples", "200"]
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(out1), "--threads", "1"]) == 0
    assert main(args + ["--out", str(out2), "--threads", "2"]) == 0
    assert _digest(out1) == _digest(out2)
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert manifest["outputs"][0]["sha256"] == _digest(out1)


def test_var_rep_capacity_error(tmp_path):
    code = main(["var-rep", "--n", "30", "--beta", "0.5", "--m", "120",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 1


def test_window_scan_shape_and_rerun_digest(tmp_path):
    out1, out2 = tmp_path / "w1.csv", tmp_path / "w2.csv"
    args = ["window-scan", "--c", "2", "--kind", "beta-sq", "--n-list", "9,12",
            "--m", "120", "--seed", "5", "--resamples", "100"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2), "--threads", "2"]) == 0
    schema, header, rows = read_csv(out1, "skfluct.window_scan.v1")
    assert len(rows) == 2
    assert header[:4] == ["n", "beta", "c_n", "var"]
    assert _digest(out1) == _digest(out2)


def test_window_scan_inadmissible(tmp_path):
    code = main(["window-scan", "--c", "100", "--n-list", "8", "--m", "120",
                 "--out", str(tmp_path / "w.csv")])
    assert code == 1
    assert not (tmp_path / "w.csv").exists()  # rejected before any work


def test_identities_passes_and_warns_for_n2(tmp_path, capsys):
    out = tmp_path / "id.csv"
    code = main(["identities", "--n", "6", "--beta", "0.5", "--t", "0.7", "--m", "250",
                 "--seed", "4", "--out", str(out), "--resamples", "200"])
    assert code == 0
    _, _, rows = read_csv(out, "skfluct.identities.v1")
    assert all(row[-1] == "1" for row in rows)

    code = main(["identities", "--n", "2", "--beta", "0.5", "--t", "0.5", "--m", "120",
                 "--seed", "4", "--out", str(tmp_path / "id2.csv"), "--resamples", "60"])
    assert code == 0
    assert "degenerate" in capsys.readouterr().err


def test_identities_beta_zero(tmp_path):
    code = main(["identities", "--n", "5", "--beta", "0", "--t", "0.5", "--m", "120",
                 "--seed", "1", "--out", str(tmp_path / "id0.csv")])
    assert code == 0


def test_clt_command(tmp_path):
    out = tmp_path / "clt.csv"
    code = main(["clt", "--n", "12", "--beta", "0.3", "--m", "300", "--stein-m", "120",
                 "--seed", "2", "--out", str(out), "--resamples", "200"])
    assert code == 0
    _, header, rows = read_csv(out, "skfluct.clt.v1")
    record = dict(zip(header, rows[0]))
    assert float(record["ks_pvalue"]) > 0.01
    assert float(record["ks"]) <= float(record["ks_limit"])


def test_mc_f_command(tmp_path):
    out = tmp_path / "mcf.csv"
    code = main(["mc-f", "--n", "10", "--beta", "0.5", "--disorders", "3",
                 "--sweeps", "2000", "--grid", "6", "--seed", "6", "--out", str(out)])
    assert code == 0
    _, _, rows = read_csv(out, "skfluct.mc_f.v1")
    assert len(rows) == 3
    assert all(abs(float(r[4])) <= 3.0 for r in rows)


def test_prop_scan_beta_zero(tmp_path):
    out = tmp_path / "ps.csv"
    code = main(["prop-scan", "--n", "8", "--beta", "0", "--t-list", "0,0.5,1",
                 "--m", "120", "--seed", "7", "--out", str(out)])
    assert code == 0
    _, _, rows = read_csv(out, "skfluct.prop_scan.v1")
    assert all(float(r[1]) == 0.0 for r in rows)


def test_usage_error_exit_code(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["var-rep", "--n", "not-an-int"])
    code = main(["var-rep", "--n", "6", "--beta", "0.5", "--m", "10",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 1  # m too small for CIs


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 6\nbeta = 0.0\nm = 120\nt_nodes = 4\nseed = 3\n")
    out1 = tmp_path / "c1.csv"
    assert main(["var-rep", "--config", str(cfg), "--out", str(out1), "--resamples", "60"]) == 0
    _, _, rows = read_csv(out1)
    assert float(rows[1][1]) == 0.0  # beta 0 from the file

    out2 = tmp_path / "c2.csv"
    assert main(["var-rep", "--config", str(cfg), "--beta", "0.5", "--out", str(out2),
                 "--resamples", "60"]) == 0
    _, _, rows = read_csv(out2)
    assert float(rows[1][1]) > 0.0  # flag overrides the file


def test_reader_rejects_unknown_schema(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("#schema=unknown.v9\na,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(bad)
    headerless = tmp_path / "no.csv"
    headerless.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(headerless)
    with pytest.raises(ValueError):
        read_csv(tmp_path / "bad.csv", "skfluct.var_rep.v1")


def test_csv_floats_round_trip(tmp_path):
    out = tmp_path / "vr.csv"
    main(["var-rep", "--n", "6", "--beta", "0.6", "--m", "150", "--t-nodes", "6",
          "--seed", "11", "--out", str(out), "--resamples", "60"])
    _, _, rows = read_csv(out)
    value = float(rows[0][1])
    assert repr(value) == rows[0][1]  # shortest round-trip serialization