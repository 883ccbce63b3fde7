import json

import numpy as np
import pytest

from flowgrad.cli import exit_code_for, main, parse_scenario, run_scenario
from flowgrad.errors import BlowUp, OutsideOverlap, ParseError, SingularGradient, ValidationError, VanishingField

MINIMAL_FLOW = {"command": "flow", "field": "rotation", "params": {"p": [0, 1, 0, 0], "lambda": 0.5}}

GRID = {"lower": [0, 0.5, -0.5, -0.5], "upper": [0, 1.5, 0.5, 0.5], "counts": [1, 3, 3, 3], "fd_steps": [1, 0.1, 0.1, 0.1]}


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def last_diagnostic(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def test_parse_minimal_flow_fills_defaults():
    s = parse_scenario(json.dumps(MINIMAL_FLOW))
    assert s.command == "flow" and s.chart == "cartesian" and s.metric == "minkowski"
    assert s.field_name == "rotation" and s.field_params == {}
    assert s.integrator["method"] == "rk4" and s.integrator["step_size"] is None
    assert s.params["s_total"] is None


def test_parse_unknown_field_names_the_key():
    doc = {**MINIMAL_FLOW, "field": {"name": "vortexx"}}
    with pytest.raises(ValidationError) as info:
        parse_scenario(json.dumps(doc))
    assert info.value.location == "field.name"
    assert "vortexx" in str(info.value)


@pytest.mark.parametrize(
    "patch, location",
    [
        ({"colour": "blue"}, "colour"),
        ({"command": "fly"}, "command"),
        ({"chart": "toroidal"}, "chart"),
        ({"integrator": {"step_size": 0}}, None),
        ({"integrator": {"stride": 1}}, "integrator.stride"),
        ({"outputs": {"pdf": "a.pdf"}}, "outputs.pdf"),
    ],
)
def test_parse_rejects_bad_documents(patch, location):
    with pytest.raises(ValidationError) as info:
        parse_scenario(json.dumps({**MINIMAL_FLOW, **patch}))
    if location is not None:
        assert info.value.location == location


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as info:
        parse_scenario('{\n  "command": "flow",\n  "field": rotation\n}')
    assert (info.value.line, info.value.column) == (3, 12)


def test_lemma3_scenario_round_trip():
    doc = {
        "command": "verify",
        "law": "lemma3",
        "metric": "euclidean",
        "field": {"name": "scaled_rotation", "params": {"alpha": 1.0}},
        "params": {"p": [0, 0.8, 0.3, -0.2], "lambda": 0.5, "N": 8},
    }
    s = parse_scenario(json.dumps(doc))
    assert s.params["N"] == 8 and s.params["tol"] == 1e-5
    again = parse_scenario(json.dumps(s.to_dict()))
    assert again == s


def test_exit_code_mapping():
    assert exit_code_for(ValidationError("x")) == 2
    assert exit_code_for(OutsideOverlap("x")) == 2
    assert exit_code_for(KeyError("x")) == 2
    assert exit_code_for(BlowUp("x")) == 3
    assert exit_code_for(SingularGradient("x")) == 3
    assert exit_code_for(VanishingField("x")) == 3
    assert exit_code_for(RuntimeError("x")) == 3


def test_run_flow_writes_outputs(tmp_path, capsys):
    doc = {**MINIMAL_FLOW, "outputs": {"csv": "orbit.csv", "report": "orbit.json"}}
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("FLOW endpoint=")
    report = json.loads((tmp_path / "orbit.json").read_text())
    assert report["endpoint"][1] == pytest.approx(np.cos(0.5), abs=1e-10)
    assert (tmp_path / "orbit.csv").read_text().count("\n") == report["samples"] + 1


def test_refgrad_at_zero_lambda_is_identity(tmp_path):
    out = tmp_path / "F.csv"
    assert main(["refgrad", "--field", "shear", "--p", "0,0.1,0.2,0", "--lambda", "0", "--which", "variational", "--csv", str(out)]) == 0
    header, row = out.read_text().splitlines()
    assert header.startswith("method,lambda,F00")
    values = [float(v) for v in row.split(",")[2:]]
    assert values == np.eye(4).ravel().tolist()


def test_zero_step_exits_2(capsys):
    code = main(["flow", "--field", "rotation", "--p", "0,1,0,0", "--lambda", "1", "--step", "0"])
    assert code == 2
    diag = last_diagnostic(capsys)
    assert diag["exit"] == 2 and diag["error"] == "ValidationError"


def test_unknown_field_exits_2_with_location(tmp_path, capsys):
    doc = {**MINIMAL_FLOW, "field": "vortexx"}
    assert main(["run", write(tmp_path, doc)]) == 2
    assert last_diagnostic(capsys)["location"] == "field.name"


def test_malformed_json_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"command": "flow",,}')
    assert main(["run", str(path)]) == 2
    diag = last_diagnostic(capsys)
    assert diag["error"] == "ParseError" and diag["line"] == 1


def test_missing_scenario_file_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.json")]) == 2
    assert last_diagnostic(capsys)["exit"] == 2


def test_numerical_failure_exits_3(capsys):
    code = main(["refgrad", "--field", "linear", "--param", "matrix=[[0,0,0,0],[0,-40,0,0],[0,0,0,0],[0,0,0,0]]",
                 "--p", "0,1,0,0", "--lambda", "1", "--which", "variational"])
    assert code == 3
    assert last_diagnostic(capsys)["error"] == "SingularGradient"


def test_law_failure_exits_1(tmp_path, capsys):
    doc = {"command": "grid-residual", "field": "rotation", "params": {"grid": GRID, "lambda": 0.5, "tol": 1e-9}}
    assert main(["run", write(tmp_path, doc)]) == 1
    assert capsys.readouterr().out.strip().endswith("FAIL")


def test_verify_lemma2_passes(capsys):
    code = main(["verify", "lemma2", "--field", "scaled_rotation", "--p", "0,0.8,0.3,0", "--lambda1", "0.3", "--lambda2", "0.4"])
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("LAW lemma2 residual=") and line.endswith("PASS")


def test_verify_lemma1_polar(capsys):
    extra = {"transform": {"name": "cartesian_to_cylindrical"}, "target": {"field": {"name": "radial", "params": {"chart": "cylindrical"}}}}
    code = main(["verify", "lemma1", "--field", "radial", "--p", "0,1,0,0.3", "--lambda", "0.5", "--extra", json.dumps(extra)])
    assert code == 0, capsys.readouterr().err


def test_verify_eulerian_with_convergence(capsys):
    extra = {"grid": GRID, "convergence": True}
    assert main(["verify", "eulerian", "--field", "rotation", "--lambda", "0.5", "--extra", json.dumps(extra)]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("CONVERGENCE ratio=")


def test_bch_command(tmp_path, capsys):
    X = [[0, 0.1, 0, 0], [-0.1, 0, 0, 0], [0, 0, 0, 0.05], [0, 0, 0, 0]]
    Y = [[0, 0, 0.1, 0], [0, 0, 0, 0], [-0.1, 0, 0, 0], [0, 0.02, 0, 0]]
    report = tmp_path / "bch.json"
    assert main(["bch", "--X", json.dumps(X), "--Y", json.dumps(Y), "--report", str(report)]) == 0
    record = json.loads(report.read_text())
    assert record["exp_mismatch"] < 1e-8
    assert main(["bch", "--X", json.dumps(X), "--Y", json.dumps(Y), "--degree", "7"]) == 2


def test_run_scenario_api_reports_files(tmp_path):
    s = parse_scenario(json.dumps({**MINIMAL_FLOW, "outputs": {"report": "r.json"}}))
    result = run_scenario(s, tmp_path)
    assert result.exit_code == 0 and set(result.files) == {"report"}


def test_reruns_are_byte_identical(tmp_path):
    doc = {
        "command": "refgrad",
        "field": {"name": "scaled_rotation", "params": {"alpha": 0.5}},
        "params": {"p": [0, 0.8, 0.3, 0], "lambda": 0.7},
        "outputs": {"csv": "F.csv", "report": "F.json"},
    }
    path = write(tmp_path, doc)
    for sub in ("a", "b"):
        assert main(["run", path, "--out", str(tmp_path / sub)]) == 0
    for name in ("F.csv", "F.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
