"""Command line entry points.

Four commands: `gateway` and `cloud` host the live services, `simulate`
runs scenario files against the in-process harness, and `admin` drives a
running control plane over its HTTP API, mirroring what the web admin
page can do.

Exit codes are uniform across commands: 0 success, 1 the work ran but
the outcome was not the expected one (scenario mismatches, lookups that
found nothing), 2 the request itself was invalid (bad flags, bad config,
bad scenario, rejected input), 3 the environment failed us (ports taken,
store corrupt, control plane unreachable, missing credentials).

Every flag with a SDBOOT_* environment variable falls back to it:
--token/SDBOOT_TOKEN, --url/SDBOOT_CLOUD_URL, --seed/SDBOOT_SEED.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import requests

from sdboot.cloud import StoreCorruption
from sdboot.gateway.config import ConfigError, GatewayConfig
from sdboot.scenario import (
    ScenarioInvalid,
    bundled_scenario_names,
    load_bundled,
    load_scenario,
    run_scenario,
)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _env(name: str) -> str | None:
    return os.environ.get(f"SDBOOT_{name}")


def _fail(code: int, message: str) -> int:
    print(f"sdboot: {message}", file=sys.stderr)
    return code


def _emit(payload, as_json: bool, text: str | None = None) -> None:
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif text is not None:
        print(text)


# -- gateway ----------------------------------------------------------------


def cmd_gateway(args) -> int:
    from sdboot.live import LiveGateway, PortBindFailure

    try:
        if args.config:
            data = json.loads(Path(args.config).read_text())
            cfg = GatewayConfig.from_dict(data)
        else:
            cfg = GatewayConfig()
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot read config: {exc}")
    except (json.JSONDecodeError, ConfigError) as exc:
        return _fail(EXIT_USAGE, f"bad gateway config: {exc}")
    try:
        gateway = LiveGateway(cfg, bind_ip=args.bind)
    except PortBindFailure as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    ports = f"dhcp={cfg.dhcp_port} tftp={cfg.tftp_port} dns={cfg.dns_port} http={cfg.http_port}"
    # flush: the daemon blocks in serve_forever, and a supervisor reading a
    # pipe would otherwise never see the startup line
    print(f"gateway serving on {args.bind} ({ports})", flush=True)
    gateway.serve_forever()
    return EXIT_OK


# -- cloud ------------------------------------------------------------------


def cmd_cloud(args) -> int:
    from sdboot.live import LiveCloud, PortBindFailure

    settings: dict = {}
    if args.config:
        try:
            settings = json.loads(Path(args.config).read_text())
        except OSError as exc:
            return _fail(EXIT_RUNTIME, f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            return _fail(EXIT_USAGE, f"bad cloud config: {exc}")
        if not isinstance(settings, dict):
            return _fail(EXIT_USAGE, "bad cloud config: expected a JSON object")
    store = args.store or settings.get("store_root")
    token = args.token or settings.get("admin_token") or _env("TOKEN")
    port = args.port if args.port is not None else settings.get("port", 8080)
    bind = args.bind or settings.get("bind_ip", "0.0.0.0")
    base_url = args.base_url or settings.get("base_url") or f"http://127.0.0.1:{port}"
    static_dir = args.static or settings.get("static_dir")
    if not store:
        return _fail(EXIT_USAGE, "a store path is required (--store or config store_root)")
    if not token:
        return _fail(EXIT_USAGE, "an admin token is required (--token, SDBOOT_TOKEN, or config)")
    try:
        cloud = LiveCloud(
            store_root=store,
            base_url=base_url,
            admin_token=token,
            port=int(port),
            bind_ip=bind,
            static_dir=static_dir,
            scrypt_n=settings.get("scrypt_n"),
        )
    except StoreCorruption as exc:
        return _fail(EXIT_RUNTIME, f"store refused: {exc}")
    except PortBindFailure as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    print(f"control plane serving on {bind}:{cloud.port}, store at {store}", flush=True)
    cloud.serve_forever()
    return EXIT_OK


# -- simulate ---------------------------------------------------------------


def _resolve_scenario(ref: str):
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        return load_scenario(path)
    return load_bundled(ref)


def cmd_simulate(args) -> int:
    if args.list:
        for name in bundled_scenario_names():
            print(name)
        return EXIT_OK
    if not args.scenario:
        return _fail(EXIT_USAGE, "a scenario is required (--scenario NAME_OR_PATH, or --list)")
    seed = args.seed
    if seed is None and _env("SEED"):
        try:
            seed = int(_env("SEED"))
        except ValueError:
            return _fail(EXIT_USAGE, f"SDBOOT_SEED is not an integer: {_env('SEED')!r}")
    try:
        spec = _resolve_scenario(args.scenario)
        report = run_scenario(spec, args.out, seed=seed)
    except ScenarioInvalid as exc:
        return _fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot run scenario: {exc}")
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for phase in report["phases"]:
            label = f"phase {phase['index']}"
            if phase["restarted_control_plane"]:
                label += " (control plane restarted)"
            for cname, row in sorted(phase["clients"].items()):
                if row["state"] == "Booted":
                    outcome = f"Booted {row['os_name']} in {row['boot_time']}s"
                else:
                    outcome = f"{row['state']}"
                    if row["failure_reason"]:
                        outcome += f" ({row['failure_reason']}: {row['failure_detail']})"
                print(f"{label} {cname}: {outcome}")
            for problem in phase["mismatches"]:
                print(f"{label} MISMATCH {problem}")
        print(f"report written to {Path(args.out) / 'report.json'}")
    return EXIT_OK if report["ok"] else EXIT_MISMATCH


# -- admin ------------------------------------------------------------------


DEFAULT_BOOT_TEMPLATE = """#!ipxe
echo Booting {{os_id}}
kernel {{base_url}}/files/{{os_id}}/vmlinuz
initrd {{base_url}}/files/{{os_id}}/initrd.img
boot
"""


class _AdminError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Admin:
    def __init__(self, url: str, token: str | None):
        self.url = url.rstrip("/")
        self.token = token

    def request(self, method: str, path: str, **kwargs):
        headers = kwargs.pop("headers", {})
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            response = requests.request(
                method, f"{self.url}{path}", headers=headers, timeout=30, **kwargs
            )
        except requests.RequestException as exc:
            raise _AdminError(EXIT_RUNTIME, f"cannot reach control plane at {self.url}: {exc}")
        if response.status_code >= 400:
            try:
                payload = response.json()
                detail = f"{payload.get('error')}: {payload.get('detail')}"
            except ValueError:
                detail = f"HTTP {response.status_code}"
            if response.status_code in (401, 403):
                raise _AdminError(EXIT_RUNTIME, detail)
            if response.status_code == 404:
                raise _AdminError(EXIT_MISMATCH, detail)
            raise _AdminError(EXIT_USAGE, detail)
        return response


def _fmt_user(user: dict) -> str:
    state = "active" if user["active"] else "deactivated"
    assigned = user["assigned_os"] or "-"
    return f"{user['username']:<20} {assigned:<18} {state}"


def _fmt_os(entry: dict) -> str:
    files = ", ".join(f["filename"] for f in entry.get("files", [])) or "-"
    return f"{entry['os_id']}  {entry['name']:<20} files: {files}"


def _fmt_log(entry: dict) -> str:
    flag = "ok" if entry["success"] else f"FAIL({entry['failure_reason']})"
    return (
        f"{entry['timestamp']:<12} {entry['username']:<16} {entry['mac']:<18}"
        f" {entry['client_ip']:<16} {flag}"
    )


def cmd_admin(args) -> int:
    token = args.token or _env("TOKEN")
    url = args.url or _env("CLOUD_URL") or "http://127.0.0.1:8080"
    admin = _Admin(url, token)
    try:
        return _run_admin(admin, args)
    except _AdminError as exc:
        return _fail(exc.code, str(exc))
    except OSError as exc:
        return _fail(EXIT_RUNTIME, str(exc))


def _run_admin(admin: _Admin, args) -> int:
    as_json = args.json
    if args.entity == "os":
        if args.action == "create":
            template = (
                Path(args.template).read_text() if args.template else DEFAULT_BOOT_TEMPLATE
            )
            body = {
                "name": args.name,
                "boot_template": template,
                "kernel_params": args.kernel_params,
            }
            created = admin.request("POST", "/api/os", json=body).json()
            _emit(created, as_json, f"created {created['os_id']} ({created['name']})")
        elif args.action == "list":
            entries = admin.request("GET", "/api/os").json()
            _emit(entries, as_json, "\n".join(_fmt_os(e) for e in entries) or "(no systems)")
        elif args.action == "show":
            entry = admin.request("GET", f"/api/os/{args.os_id}").json()
            _emit(entry, as_json, _fmt_os(entry))
        elif args.action == "upload":
            data = Path(args.path).read_bytes()
            uploaded = admin.request(
                "POST",
                f"/api/os/{args.os_id}/files?filename={args.filename}",
                data=data,
            ).json()
            _emit(
                uploaded, as_json,
                f"uploaded {uploaded['filename']} ({uploaded['size']} bytes,"
                f" sha256 {uploaded['digest'][:16]}...)",
            )
        return EXIT_OK

    if args.entity == "user":
        if args.action == "create":
            body = {"username": args.username, "password": args.password, "os_id": args.os}
            created = admin.request("POST", "/api/users", json=body).json()
            _emit(created, as_json, _fmt_user(created))
        elif args.action == "list":
            users = admin.request("GET", "/api/users").json()
            _emit(users, as_json, "\n".join(_fmt_user(u) for u in users) or "(no users)")
        elif args.action == "show":
            user = admin.request("GET", f"/api/users/{args.username}").json()
            _emit(user, as_json, _fmt_user(user))
        elif args.action == "deactivate":
            user = admin.request("DELETE", f"/api/users/{args.username}").json()
            _emit(user, as_json, _fmt_user(user))
        elif args.action == "assign":
            user = admin.request(
                "PUT", f"/api/users/{args.username}/os", json={"os_id": args.os_id}
            ).json()
            _emit(user, as_json, _fmt_user(user))
        return EXIT_OK

    if args.entity == "logs":
        params = {}
        if args.username:
            params["username"] = args.username
        if args.mac:
            params["mac"] = args.mac
        if args.failed:
            params["success"] = "false"
        if args.page:
            params["page"] = str(args.page)
        query = "&".join(f"{k}={v}" for k, v in params.items())
        path = "/api/logs" + (f"?{query}" if query else "")
        entries = admin.request("GET", path).json()
        _emit(entries, as_json, "\n".join(_fmt_log(e) for e in entries) or "(no entries)")
        return EXIT_OK

    return _fail(EXIT_USAGE, f"unknown admin entity {args.entity!r}")


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdboot",
        description="Software-defined network boot: gateway, control plane, simulator, admin.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gate = sub.add_parser("gateway", help="serve DHCP/TFTP/DNS and the portal on real sockets")
    gate.add_argument("--config", help="JSON gateway config file")
    gate.add_argument("--bind", default="0.0.0.0", help="address to bind")
    gate.set_defaults(fn=cmd_gateway)

    cloud = sub.add_parser("cloud", help="serve the control plane on a real socket")
    cloud.add_argument("--config", help="JSON config file")
    cloud.add_argument("--store", help="state directory (config: store_root)")
    cloud.add_argument("--token", help="admin bearer token (env SDBOOT_TOKEN)")
    cloud.add_argument("--port", type=int, help="HTTP port (default 8080)")
    cloud.add_argument("--bind", help="address to bind (default 0.0.0.0)")
    cloud.add_argument("--base-url", dest="base_url", help="public base URL in issued scripts")
    cloud.add_argument("--static", help="directory served at /admin")
    cloud.set_defaults(fn=cmd_cloud)

    sim = sub.add_parser("simulate", help="run a scenario in the simulator")
    sim.add_argument("--scenario", help="bundled scenario name or path to a JSON file")
    sim.add_argument("--seed", type=int, help="override the scenario seed (env SDBOOT_SEED)")
    sim.add_argument("--out", default="sdboot-out", help="output directory for report and traces")
    sim.add_argument("--json", action="store_true", help="print the full report as JSON")
    sim.add_argument("--list", action="store_true", help="list bundled scenarios and exit")
    sim.set_defaults(fn=cmd_simulate)

    admin = sub.add_parser("admin", help="administer a running control plane")
    admin.add_argument("--url", help="control plane base URL (env SDBOOT_CLOUD_URL)")
    admin.add_argument("--token", help="admin bearer token (env SDBOOT_TOKEN)")
    admin.add_argument("--json", action="store_true", help="print API responses as JSON")
    entity = admin.add_subparsers(dest="entity", required=True)

    os_cmd = entity.add_parser("os", help="manage OS definitions")
    os_act = os_cmd.add_subparsers(dest="action", required=True)
    create = os_act.add_parser("create")
    create.add_argument("name")
    create.add_argument("--template", help="boot template file (default template otherwise)")
    create.add_argument("--kernel-params", dest="kernel_params", default="")
    os_act.add_parser("list")
    show = os_act.add_parser("show")
    show.add_argument("os_id")
    upload = os_act.add_parser("upload")
    upload.add_argument("os_id")
    upload.add_argument("filename")
    upload.add_argument("path")

    user_cmd = entity.add_parser("user", help="manage users")
    user_act = user_cmd.add_subparsers(dest="action", required=True)
    ucreate = user_act.add_parser("create")
    ucreate.add_argument("username")
    ucreate.add_argument("password")
    ucreate.add_argument("--os", required=True, help="assigned OS id")
    user_act.add_parser("list")
    ushow = user_act.add_parser("show")
    ushow.add_argument("username")
    udeact = user_act.add_parser("deactivate")
    udeact.add_argument("username")
    uassign = user_act.add_parser("assign")
    uassign.add_argument("username")
    uassign.add_argument("os_id")

    logs = entity.add_parser("logs", help="query the boot-time auth log")
    logs.add_argument("--username")
    logs.add_argument("--mac")
    logs.add_argument("--failed", action="store_true", help="failures only")
    logs.add_argument("--page", type=int)

    admin.set_defaults(fn=cmd_admin)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize anything else
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
