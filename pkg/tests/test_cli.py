from __future__ import annotations

import csv
import json
import math
import subprocess
import sys


from lhvkit import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_eval_number():
    assert cli.eval_number("pi/4") == math.pi / 4
    assert cli.eval_number("2*pi") == 2 * math.pi
    assert cli.eval_number("-pi") == -math.pi
    assert cli.eval_number("0.5") == 0.5


def test_predict_csv(capsys):
    code, out, _ = run(capsys, "predict", "--state", "psi1", "--theta", "pi/4")
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert rows and set(rows[0]) == {"i", "j", "a", "b", "probability"}


def test_eval_chsh_aspect(capsys):
    code, out, _ = run(capsys, "eval", "--inequality", "chsh", "--convention", "aspect",
                       "--theta", "pi/4")
    rep = json.loads(out)
    assert code == 0 and abs(rep["value"] - 2 * math.sqrt(2)) < 1e-12 and rep["violated"]


def test_eval_models(capsys):
    _, out, _ = run(capsys, "eval", "--inequality", "eberhard", "--model", "M3")
    assert json.loads(out)["value"] == -0.5
    _, out, _ = run(capsys, "eval", "--inequality", "ch_ng", "--model", "M'", "--eta", "1")
    assert abs(json.loads(out)["value"]) < 1e-12
    _, out, _ = run(capsys, "eval", "--inequality", "eberhard", "--model", "M",
                    "--beta", "2.4", "--eta", "0.5")
    assert json.loads(out)["value"] >= 0


def test_build_model_and_appD_infeasible(capsys, tmp_path):
    code, _, _ = run(capsys, "build-model", "--model", "M''", "--beta", "2.5",
                     "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "model.csv").exists()
    code, _, err = run(capsys, "build-model", "--model", "appD", "--eta", "0.6")
    assert code == 1 and "S^A" in err


def test_usage_errors_exit_2(capsys):
    assert run(capsys, "reproduce", "fig99")[0] == 2
    assert run(capsys, "eval", "--inequality", "nope")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_eta_crit_command(capsys, tmp_path):
    code, out, _ = run(capsys, "eta-crit", "--state", "psi1", "--theta", "0.7",
                       "--out", str(tmp_path))
    assert code == 0
    assert 0.8 <= json.loads(out)["etaCrit"] <= 0.86
    assert (tmp_path / "trace.csv").exists() and (tmp_path / "model.csv").exists()


def test_synth_and_analyze(capsys, tmp_path):
    from lhvkit import analysis, quantum as q
    pred = q.scenario_prediction(q.make_giustina_state(3.0), q.giustina_settings(), "labels")
    rec = analysis.synthesize_record(pred, 0.7, 1e8)
    path = tmp_path / "rec.csv"
    path.write_text(rec.to_csv())
    code, out, _ = run(capsys, "analyze", "--record", str(path), "--state", "giustina",
                       "--r", "3", "--permute", "labels")
    res = json.loads(out)
    assert code == 0 and res["flags"] == [] and abs(res["etaA"] - 0.7) < 1e-9
    code, out, _ = run(capsys, "synth-counts", "--model", "M'", "--eta", "0.8",
                       "--trials", "1000", "--seed", "1")
    assert code == 0 and out.startswith("context,i,j,outcomeA,outcomeB,count")


def test_reproduce_is_deterministic(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "reproduce", "fig2", "--out", str(tmp_path / d), "--seed", "0")[0] == 0
    assert (tmp_path / "a" / "fig2.csv").read_bytes() == (tmp_path / "b" / "fig2.csv").read_bytes()
    prov = json.loads((tmp_path / "a" / "fig2.provenance.json").read_text())
    assert prov["figure"] == "fig2"


def test_reproduce_table_eta_row(capsys, tmp_path):
    assert run(capsys, "reproduce", "tableI", "--out", str(tmp_path))[0] == 0
    rows = list(csv.reader((tmp_path / "tableI.csv").read_text().splitlines()))
    assert rows[1][0] == "eta" and len(rows) == 2 + 1 + 41
    from lhvkit.lhv import table_header_etas
    hdr = table_header_etas("psi1")
    for theta, val in zip(hdr, rows[1][6:]):
        assert abs(float(val) - hdr[theta]) <= 0.02 + 1e-9


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "lhvkit.cli", "eval", "--model", "M3",
                        "--inequality", "eberhard"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["value"] == -0.5
