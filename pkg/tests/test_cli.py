import json

import pytest

from medianqs.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def result(out):
    return json.loads(out)["result"]


def test_zeta(capsys):
    code, out, _ = run(capsys, "zeta", "--f", "x")
    assert code == 0
    d = json.loads(out)
    assert abs(d["result"]["zeta"]) < 0.01
    assert d["manifest"]["subdiv"] == 6 and d["manifest"]["command"] == "zeta"
    assert run(capsys, "zeta", "--f", "3", "--subdiv", "2")[1] and result(run(capsys, "zeta", "--f", "3")[1])["zeta"] == 3
    assert abs(result(run(capsys, "zeta", "--f", "x^2+y^2")[1])["zeta"] - 1) < 0.01


def test_reeb_formats(capsys):
    code, out, _ = run(capsys, "reeb", "--f", "z", "--subdiv", "3", "--format", "dot")
    assert code == 0 and out.startswith("// {")
    assert out.count(" -- ") == 1
    code, out, _ = run(capsys, "reeb", "--f", "2*z^2+x+0.1*y*z", "--subdiv", "4")
    tree = result(out)
    assert len(tree["nodes"]) == 4 and len(tree["arcs"]) == 3
    total = sum(a["mass"] for a in tree["arcs"]) + sum(n["mass"] for n in tree["nodes"])
    assert total == pytest.approx(1.0, abs=1e-9)


def test_measure(capsys, tmp_path):
    csv = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "measure", "--f1", "x^2", "--f2", "y^2", "--T", "100", "--eps", "1", "--grid", "600",
                       "--trajectory-csv", str(csv), "--point", "0,0.6,0.8")
    rec = result(out)
    assert code == 0 and rec["verified"]
    assert rec["delta"] >= 0.385 - 0.03
    assert csv.read_text().startswith("t,x,y,z,H\n")
    code, out, _ = run(capsys, "measure", "--f1", "x", "--f2", "2*x", "--T", "10", "--eps", "1", "--grid", "300")
    assert code == 0 and result(out)["delta"] < 1e-5


@pytest.mark.parametrize(
    "argv",
    [
        ["measure", "--f1", "x", "--f2", "y", "--T", "1", "--eps", "0"],
        ["measure", "--f1", "x", "--f2", "y", "--T", "-1", "--eps", "1"],
        ["check", "--suite", "nope"],
        ["zeta", "--f", "x^2+*y"],
        ["zeta", "--f", "1/x"],
        ["zeta", "--f", "x", "--subdiv", "12"],
        ["asymptotic", "--f1", "x", "--f2", "y", "--tau-schedule", "1,2"],
        ["frobnicate"],
    ],
)
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("MEDIANQS_THREADS", "lots")
    assert run(capsys, "zeta", "--f", "x", "--subdiv", "2")[0] == 2
    monkeypatch.setenv("MEDIANQS_THREADS", "1")
    assert run(capsys, "zeta", "--f", "x", "--subdiv", "2")[0] == 0


def test_asymptotic(capsys):
    code, out, _ = run(capsys, "asymptotic", "--f1", "x", "--f2", "2*x", "--grid", "300")
    d = result(out)
    assert code == 0 and abs(d["deltaInfinity"]) < 1e-5 and "eRatio" not in d
    code, out, _ = run(capsys, "asymptotic", "--f1", "x^2", "--f2", "y^2", "--grid", "4000")
    d = result(out)
    assert d["deltaInfinity"] == pytest.approx(0.63, abs=0.02)
    assert d["eRatio"] == pytest.approx(1.26, abs=0.05)


def test_check_dynamics(capsys):
    code, out, _ = run(capsys, "check", "--suite", "dynamics", "--trials", "20")
    assert code == 0 and result(out)["pass"]


def test_check_quasistate_reports_witness(capsys):
    code, out, _ = run(capsys, "check", "--suite", "quasistate", "--trials", "5", "--subdiv", "4", "--tol", "0.05")
    names = [r["property"] for r in result(out)["results"]]
    assert "nonlinearity_witness" in names
    assert code in (0, 1)


def test_deterministic_output(capsys, tmp_path):
    outputs = []
    for i in range(2):
        path = tmp_path / f"run{i}.json"
        mesh = tmp_path / f"mesh{i}.json"
        assert main(["--output", str(path), "--mesh-json", str(mesh), "measure", "--f1", "x*y", "--f2", "z",
                     "--T", "20", "--eps", "1", "--grid", "200", "--subdiv", "3"]) == 0
        d = json.loads(path.read_text())
        d["manifest"].pop("wallClockSeconds")
        d["manifest"]["flags"].pop("mesh_json")
        outputs.append(json.dumps(d, sort_keys=True))
        assert json.loads(mesh.read_text())["subdiv"] == 3
    assert outputs[0] == outputs[1]
