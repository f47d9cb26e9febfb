import json

import pytest

from conftest import FIXTURES
from systemp import cli

BIKEFORK = (FIXTURES / "bikefork_spec.json").read_text(encoding="utf-8")
VALID = "'''\npackage BikeFork {\n    part a;\n}\n'''"
BROKEN = "'''\npackage BikeFork {\n    alias a;\n    attribute b = (1;\n}\n'''"


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in ("SYSTEMP_PROVIDER", "SYSTEMP_MODEL", "SYSTEMP_BASE_URL", "SYSTEMP_API_KEY"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def request_file(tmp_path):
    path = tmp_path / "fork.txt"
    path.write_text("A bike fork made of aluminum.\n")
    return path


def script(tmp_path, *entries):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"entries": list(entries)}))
    return str(path)


def test_lint_clean(tmp_path, capsys):
    ok = tmp_path / "ok.sysml"
    ok.write_text((FIXTURES / "bikefork_skeleton.sysml").read_text())
    assert cli.main(["lint", str(ok)]) == 0
    assert capsys.readouterr().err == ""


def test_lint_empty_file(tmp_path):
    empty = tmp_path / "empty.sysml"
    empty.write_text("")
    assert cli.main(["lint", str(empty)]) == 0


def test_lint_errors(tmp_path, capsys):
    bad = tmp_path / "bad.sysml"
    bad.write_text("package P {\n    alias q;\n}\n")
    assert cli.main(["lint", str(bad)]) == 1
    assert capsys.readouterr().err == f"{bad}:2:5: error: Unexpected token 'alias'\n"


def test_lint_missing_file(tmp_path):
    assert cli.main(["lint", str(tmp_path / "nope.sysml")]) == 2


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main([])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        cli.main(["eval", "--arm", "sideways"])
    assert err.value.code == 2


def test_spec_command(tmp_path, request_file, capsys):
    path = script(tmp_path, {"agent": "specification", "content": "'''\n" + BIKEFORK + "'''"})
    assert cli.main(["spec", str(request_file), "--script", path]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(BIKEFORK)


def test_spec_empty_input(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("  \n")
    assert cli.main(["spec", str(empty)]) == 2


def test_spec_from_scenario_json(tmp_path, capsys):
    scenario = tmp_path / "fork.json"
    scenario.write_text(json.dumps({"type": "input", "content": "A fork."}))
    path = script(tmp_path, {"agent": "specification", "content": BIKEFORK})
    out = tmp_path / "spec.json"
    assert cli.main(["spec", str(scenario), "--script", path, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["Package"] == "BikeFork"


def test_spec_extraction_failure(tmp_path, request_file):
    path = script(tmp_path, {"agent": "specification", "content": "no"})
    assert cli.main(["spec", str(request_file), "--script", path]) == 2


def test_template_command(capsys):
    assert cli.main(["template", str(FIXTURES / "bikefork_spec.json")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("package BikeFork {\n    requirement Material {")


def test_template_package_doc(tmp_path):
    out = tmp_path / "skel.sysml"
    assert cli.main(["template", str(FIXTURES / "bikefork_spec.json"), "--package-doc", "--out", str(out)]) == 0
    assert "doc /* This is the package containing the requirements */" in out.read_text()
    assert cli.main(["lint", str(out)]) == 0


def test_template_llm_fallback(tmp_path, capsys):
    path = script(tmp_path, {"agent": "template", "content": "garbage"})
    assert cli.main(["template", str(FIXTURES / "bikefork_spec.json"), "--llm", "--script", path]) == 0
    captured = capsys.readouterr()
    assert "rendered directly" in captured.err
    assert captured.out.startswith("package BikeFork {")


def test_template_bad_spec(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"Package": "P"}')
    assert cli.main(["template", str(bad)]) == 2


def test_generate_two_steps(tmp_path, request_file):
    path = script(tmp_path, {"agent": "writer", "responses": [BROKEN, VALID]})
    out = tmp_path / "model.sysml"
    code = cli.main(["generate", str(request_file), "--spec", str(FIXTURES / "bikefork_spec.json"),
                     "--script", path, "--out", str(out)])
    assert code == 0
    assert out.read_text() == "package BikeFork {\n    part a;\n}\n"
    trace = json.loads((tmp_path / "model.sysml.trace.json").read_text())
    assert trace["error_counts"] == [2, 0]
    assert trace["arm"] == "with_template"


def test_generate_no_template(tmp_path, request_file):
    path = script(tmp_path, {"agent": "specification", "content": BIKEFORK},
                  {"agent": "writer", "content": VALID})
    trace = tmp_path / "t.json"
    code = cli.main(["generate", str(request_file), "--no-template", "--script", path,
                     "--out", str(tmp_path / "m.sysml"), "--trace", str(trace)])
    assert code == 0
    assert json.loads(trace.read_text())["arm"] == "without_template"


def test_generate_never_converges(tmp_path, request_file):
    path = script(tmp_path, {"agent": "writer", "content": BROKEN})
    out = tmp_path / "m.sysml"
    code = cli.main(["generate", str(request_file), "--spec", str(FIXTURES / "bikefork_spec.json"),
                     "--script", path, "--out", str(out)])
    assert code == 1
    assert len(json.loads((tmp_path / "m.sysml.trace.json").read_text())["traces"]) == 5


def test_generate_bad_max_iter(tmp_path, request_file):
    assert cli.main(["generate", str(request_file), "--max-iter", "0"]) == 2


def test_backend_error_exit_code(tmp_path, request_file):
    path = script(tmp_path, {"agent": "writer", "error": "auth"})
    code = cli.main(["generate", str(request_file), "--spec", str(FIXTURES / "bikefork_spec.json"),
                     "--script", path])
    assert code == 3


def test_missing_base_url_is_usage_error(request_file):
    assert cli.main(["spec", str(request_file), "--provider", "openai-compatible"]) == 2


def test_eval_bundled(capsys):
    assert cli.main(["eval"]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0] == "scenario_id,arm,iteration,error_count"
    cells = {tuple(line.split(",")[:2]) for line in lines[1:]}
    assert len(cells) == 10
    assert "with_template: 4/5 converged" in captured.err
    assert "without_template: 1/5 converged" in captured.err


def test_eval_single_arm_json(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["eval", "--arm", "with", "--format", "json", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert {r["arm"] for r in report["rows"]} == {"with_template"}


def test_eval_missing_scenarios(tmp_path):
    assert cli.main(["eval", "--scenarios", str(tmp_path / "missing")]) == 2


def test_eval_sentinel_cells(tmp_path):
    scenarios = tmp_path / "s.json"
    scenarios.write_text(json.dumps([{"type": "input", "id": "x", "content": "thing"}]))
    path = script(tmp_path, {"agent": "specification", "error": "backend"})
    assert cli.main(["eval", "--scenarios", str(scenarios), "--script", path]) == 1


def test_record_then_replay(tmp_path, request_file, capsys):
    path = script(tmp_path, {"agent": "specification", "content": BIKEFORK})
    cassette = tmp_path / "tape.json"
    assert cli.main(["spec", str(request_file), "--script", path, "--record", str(cassette)]) == 0
    first = capsys.readouterr().out
    assert cli.main(["spec", str(request_file), "--provider", "replay", "--cassette", str(cassette)]) == 0
    assert capsys.readouterr().out == first


def test_prompts_dir_override(tmp_path, request_file):
    prompts = tmp_path / "prompts"
    prompts.mkdir()
    (prompts / "p_rga.txt").write_text("custom extraction prompt\n")
    path = script(tmp_path, {"agent": "specification", "content": BIKEFORK})
    cassette = tmp_path / "tape.json"
    assert cli.main(["spec", str(request_file), "--script", path, "--record", str(cassette),
                     "--prompts-dir", str(prompts)]) == 0
    recorded = json.loads(cassette.read_text())
    assert recorded[0]["request"]["system_prompt"].startswith("custom extraction prompt\n\n###{")
