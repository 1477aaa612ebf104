import json

import pytest
from click.testing import CliRunner

from tracelink.cli import cli

from conftest import copy_workspace


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, ws, *args, **kwargs):
    return runner.invoke(cli, list(args), env={"TRACELINK_WORKSPACE": str(ws)},
                         catch_exceptions=False, **kwargs)


@pytest.fixture
def enacted_ws(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    assert invoke(runner, ws, "discover", str(ws)).exit_code == 0
    result = invoke(runner, ws, "enact", "wsn-iot.proc.json", "--bind", "pim=Input.pim.model.json")
    assert result.exit_code == 0, result.output
    return ws


def test_discover_empty_directory(tmp_path, runner):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = invoke(runner, empty, "discover", str(empty))
    assert result.exit_code == 0
    assert "registered 0 resources" in result.output
    assert (empty / "megamodel.json").exists()


def test_discover_counts(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    result = invoke(runner, ws, "discover", str(ws))
    assert result.exit_code == 0
    assert "Metamodel: 2" in result.output
    assert "TransformationM2M: 4" in result.output
    assert "registered 12 resources" in result.output


def test_discover_missing_directory(tmp_path, runner):
    result = runner.invoke(cli, ["discover", str(tmp_path / "nope")])
    assert result.exit_code == 1


def test_enact_writes_artifacts_and_summary(enacted_ws):
    ws = enacted_ws
    assert (ws / "out/GenContiki/Sink.c").exists()
    assert len(list((ws / "traces").glob("*.trace.json"))) == 8
    summary = json.loads((ws / "out/enactment.json").read_text())
    assert summary["process"] == "wsn-iot"
    assert summary["stages"] == [
        ["MapArduino", "MapContiki", "MapDataCollector", "MapRIOT"],
        ["GenArduino", "GenContiki", "GenGateway", "GenRIOT"],
    ]
    assert len(summary["traces"]) == 8


def test_enact_twice_is_stable(enacted_ws, runner):
    ws = enacted_ws
    first = (ws / "megamodel.json").read_bytes()
    sink_first = (ws / "out/GenContiki/Sink.c").read_bytes()
    result = invoke(runner, ws, "enact", "wsn-iot.proc.json", "--bind", "pim=Input.pim.model.json")
    assert result.exit_code == 0, result.output
    assert (ws / "megamodel.json").read_bytes() == first
    assert (ws / "out/GenContiki/Sink.c").read_bytes() == sink_first


def test_enact_missing_binding_names_pin(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    invoke(runner, ws, "discover", str(ws))
    result = invoke(runner, ws, "enact", "wsn-iot.proc.json")
    assert result.exit_code == 1
    assert "pim" in result.output


def test_enact_respects_lock(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    invoke(runner, ws, "discover", str(ws))
    (ws / ".tracelink.lock").write_text("")
    result = invoke(runner, ws, "enact", "wsn-iot.proc.json", "--bind", "pim=Input.pim.model.json")
    assert result.exit_code == 1
    assert "enactment" in result.output


def test_enact_no_augment(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    invoke(runner, ws, "discover", str(ws))
    result = invoke(runner, ws, "enact", "wsn-iot.proc.json",
                    "--bind", "pim=Input.pim.model.json", "--no-augment")
    assert result.exit_code == 0
    assert not (ws / "traces").exists()
    assert (ws / "out/GenContiki/Sink.c").exists()


def test_impact_text_report(enacted_ws, runner):
    result = invoke(runner, enacted_ws, "impact", "Input.pim.model.json",
                    "indirect[0].indirectdevice[0]")
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert lines[0] == "Input.pim.model.json:indirect[0].indirectdevice[0]"
    assert lines[1] == "=> out/MapContiki/contiki.model.json:networks[1].platforms[0]"
    assert lines[2].startswith("==> out/GenContiki/Sink.c:")
    assert (enacted_ws / "out/reports/impact.txt").read_text() == result.output


def test_impact_json_report(enacted_ws, runner):
    result = invoke(runner, enacted_ws, "impact", "Input.pim.model.json",
                    "indirect[0].indirectdevice[0]", "--format", "json")
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["kind"] == "impact"
    assert data["anchor"]["path"] == "indirect[0].indirectdevice[0]"
    assert len(data["layers"]) == 2


def test_impact_typo_suggests_nearest_path(enacted_ws, runner):
    result = invoke(runner, enacted_ws, "impact", "Input.pim.model.json",
                    "indirect[0].indirectdevce[0]")
    assert result.exit_code == 1
    assert "did you mean 'indirect[0].indirectdevice[0]'" in result.output


def test_origin_by_line_col(enacted_ws, runner):
    result = invoke(runner, enacted_ws, "origin", "out/GenContiki/Sink.c", "9:3")
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert lines[0].startswith("out/GenContiki/Sink.c:9:1")
    assert lines[1] == "=> out/MapContiki/contiki.model.json:networks[1].platforms[0]"
    assert lines[2] == "==> Input.pim.model.json:indirect[0].indirectdevice[0]"
    assert (enacted_ws / "out/reports/origin.txt").exists()


def test_origin_by_byte_offset(enacted_ws, runner):
    clean = (enacted_ws / "out/GenContiki/Sink.c").read_bytes()
    offset = clean.find(b'"sink-0')
    result = invoke(runner, enacted_ws, "origin", "out/GenContiki/Sink.c", f"@{offset}")
    assert result.exit_code == 0
    assert "indirect[0].indirectdevice[0]" in result.output


def test_origin_outside_spans(enacted_ws, runner):
    result = invoke(runner, enacted_ws, "origin", "out/GenContiki/Sink.c", "1:1")
    assert result.exit_code == 1


def test_mgm_show_and_dot(enacted_ws, runner):
    shown = invoke(runner, enacted_ws, "mgm", "show")
    assert shown.exit_code == 0
    assert "resources: 28  relations: 37" in shown.output
    dot = invoke(runner, enacted_ws, "mgm", "dot")
    assert dot.exit_code == 0
    assert dot.output.startswith("digraph megamodel {")
    as_json = invoke(runner, enacted_ws, "mgm", "show", "--format", "json")
    assert json.loads(as_json.output)["resources"]


def test_gtm_dot_with_slice(enacted_ws, runner):
    full = invoke(runner, enacted_ws, "gtm", "dot")
    assert full.exit_code == 0
    sliced = invoke(runner, enacted_ws, "gtm", "dot", "--around",
                    "Input.pim.model.json:indirect[0].indirectdevice[0]", "--radius", "2")
    assert sliced.exit_code == 0
    assert len(sliced.output.splitlines()) < len(full.output.splitlines())
    assert "Sink.c" in sliced.output


def test_trace_show(enacted_ws, runner):
    result = invoke(runner, enacted_ws, "trace", "show",
                    str(enacted_ws / "traces/MapContiki.trace.json"))
    assert result.exit_code == 0
    assert "rule=Device2Platform" in result.output
    as_json = invoke(runner, enacted_ws, "trace", "show",
                     str(enacted_ws / "traces/MapContiki.trace.json"), "--format", "json")
    assert json.loads(as_json.output)["id"] == "trace:MapContiki"


def test_augment_m2m_writes_augmented_file(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    result = invoke(runner, ws, "augment-m2m", str(ws / "MapContiki.m2m"))
    assert result.exit_code == 0
    out = ws / "MapContiki.m2m.aug.m2m"
    assert out.exists()
    assert "traced" in out.read_text()


def test_augment_m2c_writes_augmented_file(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    result = invoke(runner, ws, "augment-m2c", str(ws / "GenContiki.m2c"))
    assert result.exit_code == 0
    out = ws / "GenContiki.m2c.aug.m2c"
    assert out.exists()
    assert "{{" in out.read_text() and "path(" in out.read_text()


def test_run_m2m_with_augmented_file_writes_trace(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    invoke(runner, ws, "augment-m2m", str(ws / "MapContiki.m2m"))
    result = invoke(runner, ws, "run-m2m", str(ws / "MapContiki.m2m.aug.m2m"),
                    "--in", "pim=Input.pim.model.json", "--out", "contiki.model.json")
    assert result.exit_code == 0, result.output
    assert (ws / "contiki.model.json").exists()
    assert (ws / "contiki.model.json.trace.json").exists()


def test_run_m2m_bare_writes_no_trace(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    result = invoke(runner, ws, "run-m2m", str(ws / "MapContiki.m2m"),
                    "--in", "pim=Input.pim.model.json", "--out", "plain.model.json")
    assert result.exit_code == 0
    assert (ws / "plain.model.json").exists()
    assert not (ws / "plain.model.json.trace.json").exists()


def test_run_m2c_produces_clean_annotated_and_trace(tmp_path, runner):
    ws = copy_workspace(tmp_path)
    invoke(runner, ws, "run-m2m", str(ws / "MapContiki.m2m"),
           "--in", "pim=Input.pim.model.json", "--out", "contiki.model.json")
    result = invoke(runner, ws, "run-m2c", str(ws / "GenContiki.m2c"),
                    "--in", "contiki.model.json", "--out", "gen")
    assert result.exit_code == 0, result.output
    assert (ws / "gen/Sink.c").exists()
    assert (ws / "gen/Sink.c.annotated").exists()
    assert (ws / "traces/Sink.c.trace.json").exists()
    clean = (ws / "gen/Sink.c").read_text()
    annotated = (ws / "gen/Sink.c.annotated").read_text()
    assert "{{" not in clean and "{{" in annotated


def test_version_flag(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "tracelink" in result.output
