"""Operator CLI: import cohort files, issue tokens, review recovery requests, serve.

Every command works against a data directory (--data-dir or $BIB_DATA_DIR)
holding the installed snapshot, the token table and the recovery log.
All commands offer --format=tsv for scripting, with stable column order.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone

from . import httpserver
from .cohort import (
    CohortSyntaxError,
    DatasetSnapshot,
    ValidationReport,
    format_timestamp,
    parse_cohort_file,
    validate_snapshot,
)
from .service import (
    SNAPSHOT_FILENAME,
    TOKEN_TABLE_FILENAME,
    InvalidSnapshot,
    ServiceState,
    StaleImport,
    UnknownMother,
    UnknownRequest,
)


def _eprint(*args) -> None:
    print(*args, file=sys.stderr)


def _locate_violations(text: str, report: ValidationReport) -> list[tuple[str, str, str]]:
    """Best-effort mapping of validation errors back to file lines."""
    section = None
    index: dict[tuple[str, str], int] = {}
    knot_lines: list[int] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("#"):
            section = line
            continue
        fields = [p.strip() for p in line.split(",")]
        if section == "#MOTHERS":
            index.setdefault(("mother", fields[0]), line_no)
        elif section == "#CHILDREN":
            index.setdefault(("child", fields[0]), line_no)
        elif section == "#MEASUREMENTS" and len(fields) >= 2:
            index.setdefault(("measurement", f"{fields[0]}@{fields[1]}"), line_no)
        elif section == "#REFERENCE":
            knot_lines.append(line_no)

    rows = []
    for locator, rule in report.errors:
        kind, _, key = locator.partition(" ")
        line_no = index.get((kind, key))
        if kind == "reference" and key.startswith("knot "):
            i = int(key.split()[1])
            line_no = knot_lines[i] if i < len(knot_lines) else None
        rows.append(("" if line_no is None else str(line_no), locator, rule))
    return rows


def _print_report(text: str, report: ValidationReport, fmt: str) -> None:
    for line_no, locator, rule in _locate_violations(text, report):
        if fmt == "tsv":
            print(f"error\t{line_no}\t{locator}\t{rule}")
        elif line_no:
            print(f"line {line_no}: {locator}: {rule}")
        else:
            print(f"{locator}: {rule}")


def cmd_import(args) -> int:
    try:
        with open(args.file, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        _eprint(f"cannot read {args.file}: {exc}")
        return 1

    try:
        snapshot = parse_cohort_file(raw)
    except CohortSyntaxError as exc:
        _eprint(f"syntax error: {exc}")
        return 1

    if args.stamp_now:
        now = datetime.now(timezone.utc).replace(microsecond=0)
        snapshot = DatasetSnapshot(
            update_date=now,
            mothers=snapshot.mothers,
            children=snapshot.children,
            measurements=snapshot.measurements,
            reference=snapshot.reference,
        )

    text = raw.decode("utf-8")
    report = validate_snapshot(snapshot)
    if not report.ok:
        _print_report(text, report, args.format)
        _eprint(f"validation failed: {len(report.errors)} error(s); snapshot unchanged")
        return 1

    os.makedirs(args.data_dir, exist_ok=True)
    state = ServiceState(args.data_dir)
    try:
        previous = state.swap_snapshot(snapshot)
    except StaleImport as exc:
        _eprint(f"stale import: {exc}")
        return 1
    except InvalidSnapshot as exc:
        _eprint(f"invalid snapshot: {exc}")
        return 1

    counts = (
        len(snapshot.mothers),
        len(snapshot.children),
        len(snapshot.measurements),
        len(snapshot.reference.knots),
    )
    stamp = format_timestamp(snapshot.update_date)
    prev = format_timestamp(previous) if previous is not None else "-"
    if args.format == "tsv":
        print(f"ok\t{counts[0]}\t{counts[1]}\t{counts[2]}\t{counts[3]}\t{stamp}\t{prev}")
    else:
        print(f"imported snapshot stamped {stamp} (previous: {prev})")
        print(f"mothers: {counts[0]}")
        print(f"children: {counts[1]}")
        print(f"measurements: {counts[2]}")
        print(f"reference knots: {counts[3]}")
    return 0


def cmd_token_issue(args) -> int:
    state = ServiceState(args.data_dir)
    if not state.has_snapshot():
        _eprint("no snapshot installed; import one first")
        return 1
    try:
        token = state.issue_token(args.mother_id)
    except UnknownMother:
        _eprint(f"unknown mother: {args.mother_id}")
        return 1
    # The one and only place a raw token is ever written out.
    if args.format == "tsv":
        print(f"{args.mother_id}\t{token}")
    else:
        print(f"token for {args.mother_id} (shown once, not stored): {token}")
    return 0


def cmd_recovery_list(args) -> int:
    state = ServiceState(args.data_dir)
    if args.handle is not None:
        try:
            state.recovery.mark_handled(args.handle)
        except UnknownRequest:
            _eprint(f"unknown request id: {args.handle}")
            return 1
    pending_only = not args.all
    rows = state.recovery.list(pending_only=pending_only)
    if args.format == "tsv":
        for r in rows:
            print(f"{r.request_id}\t{r.status}\t{format_timestamp(r.received_at)}\t{r.mother_hint}")
    else:
        if not rows:
            print("no requests" if args.all else "no pending requests")
        for r in rows:
            print(f"#{r.request_id} [{r.status}] {format_timestamp(r.received_at)} {r.mother_hint}")
    return 0


def cmd_serve(args) -> int:
    if not os.path.isdir(args.data_dir):
        _eprint(f"data directory does not exist: {args.data_dir}")
        return 1
    snapshot_path = os.path.join(args.data_dir, SNAPSHOT_FILENAME)
    if not os.path.exists(snapshot_path):
        _eprint(f"no installed snapshot at {snapshot_path}; run `bib-admin import` first")
        return 1
    token_path = args.token_table or os.path.join(args.data_dir, TOKEN_TABLE_FILENAME)
    if not os.path.exists(token_path):
        _eprint(f"no token table at {token_path}; run `bib-admin token issue` first")
        return 1

    try:
        state = ServiceState(
            args.data_dir, token_table_path=args.token_table, recovery_log_path=args.recovery_log
        )
        server = httpserver.make_server(state, args.port, host=args.host)
    except Exception as exc:
        _eprint(f"startup failed: {exc}")
        return 1
    print(f"serving on {args.host}:{server.server_address[1]} (data: {args.data_dir})")
    httpserver.serve_until_signalled(server)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bib-admin", description=__doc__)
    parser.add_argument(
        "--format", choices=("text", "tsv"), default="text", help="output format (default: text)"
    )
    data_dir_kwargs = dict(
        default=os.environ.get("BIB_DATA_DIR"),
        help="data directory (default: $BIB_DATA_DIR)",
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p_import = sub.add_parser("import", help="validate and install a cohort file")
    p_import.add_argument("file")
    p_import.add_argument("--stamp-now", action="store_true", help="restamp #UPDATE to now (UTC)")
    p_import.add_argument("--data-dir", **data_dir_kwargs)
    p_import.set_defaults(func=cmd_import)

    p_token = sub.add_parser("token", help="token management")
    token_sub = p_token.add_subparsers(dest="token_command", required=True)
    p_issue = token_sub.add_parser("issue", help="issue a fresh token for one mother")
    p_issue.add_argument("mother_id")
    p_issue.add_argument("--data-dir", **data_dir_kwargs)
    p_issue.set_defaults(func=cmd_token_issue)

    p_recovery = sub.add_parser("recovery", help="forgot-ID recovery queue")
    recovery_sub = p_recovery.add_subparsers(dest="recovery_command", required=True)
    p_list = recovery_sub.add_parser("list", help="list recovery requests")
    scope = p_list.add_mutually_exclusive_group()
    scope.add_argument("--pending", action="store_true", help="pending only (default)")
    scope.add_argument("--all", action="store_true", help="include handled requests")
    p_list.add_argument("--handle", type=int, metavar="ID", help="mark a request handled")
    p_list.add_argument("--data-dir", **data_dir_kwargs)
    p_list.set_defaults(func=cmd_recovery_list)

    p_serve = sub.add_parser("serve", help="run the service")
    p_serve.add_argument("--port", type=int, default=int(os.environ.get("BIB_PORT", "8080")))
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--data-dir", **data_dir_kwargs)
    p_serve.add_argument("--token-table", default=os.environ.get("BIB_TOKEN_TABLE"))
    p_serve.add_argument("--recovery-log", default=os.environ.get("BIB_RECOVERY_LOG"))
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "data_dir", None) is None:
        _eprint("no data directory: pass --data-dir or set $BIB_DATA_DIR")
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
