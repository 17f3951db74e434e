"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 storage error.
Most commands open the store directly (trusted local mode, agent by name);
`serve` starts the HTTP gateway.
"""

from __future__ import annotations

import argparse
import getpass
import json
import sys
from pathlib import Path

from .bundle import import_bundle
from .config import GatewayConfig
from .errors import (
    ErrConfig,
    ErrMalformedXML,
    ErrSchemaViolation,
    ErrStorage,
    ErrUnsupportedConstruct,
    ItemforgeError,
)
from .kernel import Kernel, KernelConfig
from .schema import compile_schema, validate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_STORAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _kernel(args, create: bool = False) -> Kernel:
    config = KernelConfig(fsync_mode=args.fsync)
    if create:
        return Kernel.create(args.store, config)
    return Kernel.open(args.store, config)


def _resolve(kernel: Kernel, ref: str) -> str:
    if ref.startswith("/"):
        return kernel.store.resolve_path(ref)
    return ref


def _agent_id(kernel: Kernel, name: str) -> str:
    return kernel.agents.get_by_name(name).agent_id


def cmd_init(args) -> int:
    kernel = _kernel(args, create=True)
    roots = kernel.store.manifest["roots"]
    print(f"store initialized at {args.store}")
    for kind, uuid in sorted(roots.items()):
        print(f"  {kind:16} {uuid}")
    return EXIT_OK


def cmd_serve(args) -> int:
    config = GatewayConfig.load(args.config) if args.config else GatewayConfig()
    config.store_path = args.store
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    if args.static_dir:
        config.static_dir = args.static_dir
    from .http_api import serve
    serve(config)
    return EXIT_OK


def cmd_import(args) -> int:
    kernel = _kernel(args)
    archive = Path(args.bundle).read_bytes()
    tags = import_bundle(kernel, archive, _agent_id(kernel, args.agent))
    for tag in tags:
        print(f"finalized version {tag.version} (event {tag.finalized_at})")
    return EXIT_OK


def cmd_ls(args) -> int:
    kernel = _kernel(args)
    for name, target in kernel.store.list_children(args.path):
        print(f"{name}\t{target or '-'}")
    return EXIT_OK


def cmd_create(args) -> int:
    kernel = _kernel(args)
    desc = _resolve(kernel, args.description)
    props = []
    for raw in args.prop or []:
        if "=" not in raw:
            print(f"error: --prop expects name=value, got {raw!r}", file=sys.stderr)
            return EXIT_USAGE
        name, value = raw.split("=", 1)
        props.append((name, value))
    item = kernel.descriptions.instantiate(
        desc, args.version, args.name, _agent_id(kernel, args.agent),
        initial_properties=props, under=args.under)
    print(item)
    return EXIT_OK


def cmd_exec(args) -> int:
    kernel = _kernel(args)
    item = _resolve(kernel, args.path)
    outcome = Path(args.outcome).read_text() if args.outcome else None
    event = kernel.execute(item, _agent_id(kernel, args.agent), args.activity,
                           args.transition, outcome=outcome)
    print(json.dumps(event.summary(), indent=2))
    return EXIT_OK


def cmd_history(args) -> int:
    from .query import history
    kernel = _kernel(args)
    item = _resolve(kernel, args.path)
    cursor = None
    while True:
        page = history(kernel, item, cursor=cursor, page_size=200)
        for ev in page.events:
            schema = f" {ev['schema'][0]}v{ev['schema'][1]}" if ev["schema"] else ""
            print(f"{ev['id']:6}  {ev['timestamp_ms']}  {ev['transition']:9} "
                  f"{ev['activity_path']}{schema}")
        if page.next_cursor is None:
            return EXIT_OK
        cursor = page.next_cursor


def cmd_lineage(args) -> int:
    from .query import lineage
    kernel = _kernel(args)
    record = lineage(kernel, _resolve(kernel, args.path))
    print(json.dumps(vars(record), indent=2))
    return EXIT_OK


def cmd_export(args) -> int:
    from .query import export_trace
    kernel = _kernel(args)
    archive = export_trace(kernel, _resolve(kernel, args.path))
    Path(args.out).write_bytes(archive)
    print(f"wrote {len(archive)} bytes to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        schema = compile_schema(Path(args.schema).read_text())
    except (ErrMalformedXML, ErrUnsupportedConstruct) as exc:
        print(f"schema rejected: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = validate(Path(args.document).read_text(), schema)
    if report.valid:
        print("valid")
        return EXIT_OK
    for path, rule, message in report.violations:
        print(f"{path}: {rule}: {message}")
    return EXIT_VALIDATION


def cmd_agent_add(args) -> int:
    kernel = _kernel(args)
    password = args.password or getpass.getpass("password: ")
    agent = kernel.agents.add(args.name, password, args.role or [])
    print(f"agent {agent.name} ({agent.agent_id}) roles={agent.roles}")
    return EXIT_OK


def cmd_agent_role(args) -> int:
    kernel = _kernel(args)
    agent = kernel.agents.set_roles(args.name, args.role or [])
    print(f"agent {agent.name} roles={agent.roles}")
    return EXIT_OK


def cmd_audit(args) -> int:
    kernel = _kernel(args)
    problems = kernel.audit()
    if not problems:
        print("audit clean")
        return EXIT_OK
    for p in problems:
        print(p)
    return EXIT_VALIDATION


def build_parser() -> _Parser:
    parser = _Parser(prog="itemforge",
                     description="event-sourced description-driven item kernel")
    parser.add_argument("--store", default="./store", help="store directory")
    parser.add_argument("--fsync", default="commit", choices=["commit", "batch"])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="create and bootstrap a new store")

    p = sub.add_parser("serve", help="run the HTTP gateway")
    p.add_argument("--config")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--static-dir", help="operator console assets")

    p = sub.add_parser("import", help="import a description bundle")
    p.add_argument("bundle")
    p.add_argument("--agent", default="system")

    p = sub.add_parser("ls", help="list directory children")
    p.add_argument("path")

    p = sub.add_parser("create", help="instantiate an item from a description")
    p.add_argument("description", help="description path or uuid")
    p.add_argument("version", type=int)
    p.add_argument("name")
    p.add_argument("--under", default="/items")
    p.add_argument("--prop", action="append", help="name=value initial property")
    p.add_argument("--agent", default="system")

    p = sub.add_parser("exec", help="execute one activity transition")
    p.add_argument("path", help="item path or uuid")
    p.add_argument("activity")
    p.add_argument("transition")
    p.add_argument("--outcome", help="XML document file")
    p.add_argument("--agent", default="system")

    p = sub.add_parser("history", help="print an item's event history")
    p.add_argument("path")

    p = sub.add_parser("lineage", help="print an item's description lineage")
    p.add_argument("path")

    p = sub.add_parser("export", help="export a provenance archive")
    p.add_argument("path")
    p.add_argument("out")

    p = sub.add_parser("validate", help="validate a document against a schema file")
    p.add_argument("schema")
    p.add_argument("document")

    p = sub.add_parser("audit", help="run the full-store invariant audit")

    agent = sub.add_parser("agent", help="manage agents")
    agent_sub = agent.add_subparsers(dest="agent_command", required=True)
    p = agent_sub.add_parser("add")
    p.add_argument("name")
    p.add_argument("--password")
    p.add_argument("--role", action="append")
    p = agent_sub.add_parser("role")
    p.add_argument("name")
    p.add_argument("--role", action="append")

    return parser


_COMMANDS = {
    "init": cmd_init, "serve": cmd_serve, "import": cmd_import, "ls": cmd_ls,
    "create": cmd_create, "exec": cmd_exec, "history": cmd_history,
    "lineage": cmd_lineage, "export": cmd_export, "validate": cmd_validate,
    "audit": cmd_audit,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "agent":
            handler = cmd_agent_add if args.agent_command == "add" else cmd_agent_role
            return handler(args)
        return _COMMANDS[args.command](args)
    except (ErrSchemaViolation, ErrMalformedXML, ErrUnsupportedConstruct) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        if isinstance(exc, ErrSchemaViolation):
            for path, rule, message in exc.violations:
                print(f"  {path}: {rule}: {message}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ErrStorage, ErrConfig) as exc:
        print(f"storage error: {exc}", file=sys.stderr)
        return EXIT_STORAGE
    except ItemforgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
