"""The ``engine`` command line.

Exit codes: 0 ok, 2 validation problem, 3 blocked by workflow rules,
4 not found.  Configuration comes from flags or the STORE_DIR,
TOKENS_FILE, TEMPLATES_DIR, LEXICONS_DIR, and POLICY_FILE environment
variables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from radstruct.errors import (
    ApprovalBlocked,
    CanonicalParseError,
    EngineError,
    ExportBlocked,
    Forbidden,
    InvalidTransition,
    ModelValidationError,
    NoTemplate,
    NotAcknowledgeable,
    SessionNotFound,
    Unauthorized,
)
from radstruct.model.jsonio import dumps_canonical, loads_decimal
from radstruct.parsing import load_default_lexicons, load_lexicons
from radstruct.policy import load_policy
from radstruct.templates import load_default_templates, load_templates
from radstruct.workflow.auth import TokenAuth
from radstruct.workflow.service import EngineService
from radstruct.workflow.store import SessionStore

_VALIDATION_ERRORS = (ModelValidationError, CanonicalParseError, NoTemplate)
_BLOCKED_ERRORS = (ApprovalBlocked, ExportBlocked, InvalidTransition, Forbidden, Unauthorized, NotAcknowledgeable)


def _build_service(args) -> EngineService:
    store_dir = args.store or os.environ.get("STORE_DIR", "./store")
    templates_dir = args.templates_dir or os.environ.get("TEMPLATES_DIR")
    lexicons_dir = args.lexicons_dir or os.environ.get("LEXICONS_DIR")
    policy_file = args.policy or os.environ.get("POLICY_FILE")
    templates = load_templates(templates_dir) if templates_dir else load_default_templates()
    lexicons = load_lexicons(lexicons_dir) if lexicons_dir else load_default_lexicons()
    policy = load_policy(policy_file)
    return EngineService(SessionStore(store_dir), templates, lexicons, policy)


def _auth(args) -> TokenAuth:
    tokens_file = args.tokens or os.environ.get("TOKENS_FILE")
    if tokens_file:
        return TokenAuth.from_file(tokens_file)
    return TokenAuth.single_user()


def _actor(args, auth: TokenAuth):
    return auth.authenticate(getattr(args, "actor", None) or "dev-radiologist")


def _print_issues(snapshot: dict) -> None:
    issues = snapshot.get("issues", [])
    if not issues:
        print("issues: none")
        return
    for issue in issues:
        print(f"  [{issue['severity'].upper():7s}] {issue['rule_id']} {issue['target']}: {issue['message']}")


def cmd_ingest(args, service: EngineService, auth: TokenAuth) -> int:
    ctx = loads_decimal(Path(args.ctx).read_text(encoding="utf-8"))
    evidence = []
    for path in args.evidence or []:
        loaded = loads_decimal(Path(path).read_text(encoding="utf-8"))
        evidence.extend(loaded if isinstance(loaded, list) else [loaded])
    for path in args.worksheet or []:
        loaded = loads_decimal(Path(path).read_text(encoding="utf-8"))
        evidence.extend(loaded if isinstance(loaded, list) else [loaded])
    snapshot = service.create_session(
        ctx,
        _actor(args, auth),
        evidence_objects=evidence,
        registry_file=Path(args.registry) if args.registry else None,
        allow_generic=args.generic,
    )
    print(snapshot["session_id"])
    return 0


def cmd_parse(args, service: EngineService, auth: TokenAuth) -> int:
    text = Path(args.transcript).read_text(encoding="utf-8")
    snapshot = service.submit_transcript(args.session_id, text, _actor(args, auth))
    print(f"state: {snapshot['state']}")
    print(f"findings: {len(snapshot['findings'])}")
    for item in snapshot["findings"]:
        finding = item["finding"]
        print(f"  {finding['finding_id']}: {finding['type']} ({finding['presence']})")
    flags = snapshot["extraction"]["safety_flags"]
    if flags:
        print("safety flags:")
        for flag in flags:
            print(f"  [{flag['reason']}] bytes {flag['start']}-{flag['end']}: {flag['note']}")
    _print_issues(snapshot)
    return 0


def cmd_check(args, service: EngineService, auth: TokenAuth) -> int:
    snapshot = service.snapshot(args.session_id)
    _print_issues(snapshot)
    errors = [i for i in snapshot.get("issues", []) if i["severity"] == "error"]
    return 0 if not errors else 3


def cmd_compare(args, service: EngineService, auth: TokenAuth) -> int:
    snapshot = service.confirm_comparison(args.session_id, _actor(args, auth))
    for row in snapshot["comparison_rows"]:
        d = row["display"]
        warnings = f" [{', '.join(row['warnings'])}]" if row["warnings"] else ""
        print(
            f"  {d['lesion_id']}: {d['location']} {d['current_size'] or '-'} vs "
            f"{d['prior_size'] or '-'} -> {d['status']}{warnings}"
        )
    return 0


def cmd_draft(args, service: EngineService, auth: TokenAuth) -> int:
    snapshot = service.draft(args.session_id, _actor(args, auth))
    for section in snapshot["report_sections"]:
        print(f"--- {section['name']}")
        if section["text"]:
            print(section["text"])
    notes = snapshot.get("composition_notes", [])
    for note in notes:
        print(f"note: {note}")
    _print_issues(snapshot)
    return 0


def cmd_approve(args, service: EngineService, auth: TokenAuth) -> int:
    snapshot = service.approve(args.session_id, _actor(args, auth))
    print(f"state: {snapshot['state']}")
    return 0


def cmd_export(args, service: EngineService, auth: TokenAuth) -> int:
    snapshot = service.export(args.session_id, _actor(args, auth))
    exports = snapshot["exports"]
    base = service.store.exports_dir(args.session_id)
    print(base / exports["fhir"])
    print(base / exports["sr"])
    return 0


def cmd_acknowledge(args, service: EngineService, auth: TokenAuth) -> int:
    snapshot = service.acknowledge_issue(args.session_id, args.issue_id, _actor(args, auth))
    print(f"acknowledged: {args.issue_id}")
    _print_issues(snapshot)
    return 0


def cmd_replay(args, service: EngineService, auth: TokenAuth) -> int:
    replayed = service.replay(args.session_id)
    print(f"replay verified: {len(service.events(args.session_id))} events -> state {replayed['state']}")
    return 0


def cmd_show(args, service: EngineService, auth: TokenAuth) -> int:
    print(dumps_canonical(service.snapshot(args.session_id)))
    return 0


def cmd_serve(args, service: EngineService, auth: TokenAuth) -> int:
    import uvicorn

    from radstruct.workflow.api import create_app

    app = create_app(service, auth, ui_dir=Path(args.ui_dir) if args.ui_dir else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="engine", description="Structured radiology reporting engine")
    parser.add_argument("--store", help="session store directory (or STORE_DIR)")
    parser.add_argument("--templates-dir", help="template directory (or TEMPLATES_DIR)")
    parser.add_argument("--lexicons-dir", help="lexicon directory (or LEXICONS_DIR)")
    parser.add_argument("--policy", help="policy file (or POLICY_FILE)")
    parser.add_argument("--tokens", help="tokens file (or TOKENS_FILE)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="create a session from a study context file")
    p.add_argument("ctx")
    p.add_argument("--evidence", action="append", help="evidence objects JSON (repeatable)")
    p.add_argument("--worksheet", action="append", help="worksheet evidence JSON (repeatable)")
    p.add_argument("--registry", help="lesion registry JSON")
    p.add_argument("--generic", action="store_true", help="allow the generic fallback template")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("parse", help="submit a transcript")
    p.add_argument("session_id")
    p.add_argument("transcript")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("check", help="print consistency issues")
    p.add_argument("session_id")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("compare", help="confirm lesion pairings and print the comparison table")
    p.add_argument("session_id")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("draft", help="confirm findings and compose the draft report")
    p.add_argument("session_id")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_draft)

    p = sub.add_parser("approve", help="sign off the session")
    p.add_argument("session_id")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_approve)

    p = sub.add_parser("export", help="write the FHIR and SR documents")
    p.add_argument("session_id")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("acknowledge", help="acknowledge a warning issue")
    p.add_argument("session_id")
    p.add_argument("issue_id")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_acknowledge)

    p = sub.add_parser("replay", help="verify the audit log reproduces the snapshot")
    p.add_argument("session_id")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("show", help="print the session snapshot document")
    p.add_argument("session_id")
    p.set_defaults(func=cmd_show)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", help="directory of built UI assets to serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        service = _build_service(args)
        auth = _auth(args)
        return args.func(args, service, auth)
    except SessionNotFound as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 4
    except _BLOCKED_ERRORS as exc:
        print(f"blocked: {exc.message}", file=sys.stderr)
        if isinstance(exc, ApprovalBlocked):
            for issue in exc.issues:
                print(f"  {issue['rule_id']} {issue['target']}: {issue['message']}", file=sys.stderr)
        return 3
    except _VALIDATION_ERRORS as exc:
        print(f"invalid: {exc.message}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
