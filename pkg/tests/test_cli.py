"""Command line: full pipelines on the shipped fixtures, exit codes."""

from __future__ import annotations

import json
from pathlib import Path

from radstruct.model.jsonio import loads_decimal
from radstruct.workflow.cli import main

from conftest import FIXTURES


def _run(tmp_path: Path, *argv: str) -> tuple[int, str]:
    import contextlib
    import io

    out = io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(out):
        code = main(["--store", str(tmp_path / "store"), "--tokens", str(FIXTURES / "tokens.json"), *argv])
    return code, out.getvalue()


def _pipeline(tmp_path: Path, fixture: str, ingest_extra: list[str]) -> tuple[str, list[str]]:
    fx = FIXTURES / fixture
    code, out = _run(tmp_path, "ingest", str(fx / "ctx.json"), *ingest_extra, "--actor", "tok-system")
    assert code == 0, out
    session_id = out.strip().splitlines()[-1]
    outputs = []
    for argv in (
        ["parse", session_id, str(fx / "transcript.txt"), "--actor", "tok-system"],
        ["check", session_id],
        ["compare", session_id, "--actor", "tok-radiologist"],
        ["draft", session_id, "--actor", "tok-radiologist"],
        ["approve", session_id, "--actor", "tok-radiologist"],
        ["export", session_id, "--actor", "tok-radiologist"],
    ):
        code, out = _run(tmp_path, *argv)
        assert code == 0, (argv, out)
        outputs.append(out)
    return session_id, outputs


def test_ct_pipeline(tmp_path):
    fx = FIXTURES / "ct_nodule_followup"
    session_id, outputs = _pipeline(
        tmp_path,
        "ct_nodule_followup",
        ["--evidence", str(fx / "evidence.json"), "--registry", str(fx / "registry.json")],
    )
    export_paths = [Path(line) for line in outputs[-1].strip().splitlines()]
    assert all(p.exists() for p in export_paths)
    fhir = loads_decimal(export_paths[0].read_text())
    assert fhir["resourceType"] == "Bundle"
    code, out = _run(tmp_path, "replay", session_id)
    assert code == 0 and "replay verified" in out


def test_us_pipeline(tmp_path):
    fx = FIXTURES / "us_abdomen"
    session_id, outputs = _pipeline(
        tmp_path, "us_abdomen", ["--worksheet", str(fx / "worksheet.json")]
    )
    draft_output = outputs[3]
    assert "Right kidney measures 10.5 cm." in draft_output
    assert "Liver measures 15.2 cm." in draft_output


def test_pet_pipeline(tmp_path):
    fx = FIXTURES / "petct_response"
    session_id, outputs = _pipeline(
        tmp_path,
        "petct_response",
        ["--evidence", str(fx / "evidence.json"), "--registry", str(fx / "registry.json")],
    )
    assert "SUVmax 8.2" in outputs[3]
    export_paths = [Path(line) for line in outputs[-1].strip().splitlines()]
    sr = loads_decimal(export_paths[1].read_text())
    groups = sr["content"]["children"][0]["children"]
    nums = [c for g in groups for c in g["children"] if c["value_type"] == "NUM"]
    assert any(n["measured_value"]["unit"] == "{SUVbw}g/mL" for n in nums)


def test_export_before_approve_exits_3(tmp_path):
    fx = FIXTURES / "ct_nodule_followup"
    code, out = _run(tmp_path, "ingest", str(fx / "ctx.json"), "--actor", "tok-system")
    session_id = out.strip().splitlines()[-1]
    code, out = _run(tmp_path, "export", session_id, "--actor", "tok-radiologist")
    assert code == 3
    assert "blocked" in out


def test_unknown_session_exits_4(tmp_path):
    code, out = _run(tmp_path, "check", "RS-9999")
    assert code == 4


def test_invalid_ctx_exits_2(tmp_path):
    bad = tmp_path / "bad_ctx.json"
    bad.write_text(json.dumps({"study_uid": "", "modality": "CT", "exam_date": "2026-01-01"}))
    code, out = _run(tmp_path, "ingest", str(bad), "--actor", "tok-system")
    assert code == 2


def test_approve_by_sonographer_exits_3(tmp_path):
    fx = FIXTURES / "ct_nodule_followup"
    code, out = _run(
        tmp_path, "ingest", str(fx / "ctx.json"),
        "--evidence", str(fx / "evidence.json"), "--registry", str(fx / "registry.json"),
        "--actor", "tok-system",
    )
    session_id = out.strip().splitlines()[-1]
    _run(tmp_path, "parse", session_id, str(fx / "transcript.txt"), "--actor", "tok-system")
    code, out = _run(tmp_path, "approve", session_id, "--actor", "tok-sonographer")
    assert code == 3
