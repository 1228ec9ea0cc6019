"""Declarative boot scenarios: a JSON description in, a verdict out.

A scenario file names the topology, the operating systems and users to
provision, the clients to power on, faults to inject, and the outcome
each client must reach. run_scenario() assembles the world, drives it
phase by phase, writes one trace file per client, and returns a report
ready for JSON output. Artifact bytes are synthesized deterministically
from the declared sizes, so a scenario file stays small while the
transfers it describes do not.

Simulations always run the cheap KDF parameters; the point is flow
coverage, not password-hashing throughput.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from sdboot.client import BootState, CredentialSource, FailureReason
from sdboot.harness import DEFAULT_APN, DEFAULT_WIFI, World, build_world
from sdboot.netsim import DROP, Datagram
from sdboot.wire import dhcp

SCHEMA_VERSION = 1

SIM_SCRYPT_N = 2**4


class ScenarioInvalid(Exception):
    """The scenario description cannot be run as written."""


# -- description ------------------------------------------------------------


@dataclass(frozen=True)
class ArtifactSpec:
    filename: str
    size: int


@dataclass(frozen=True)
class OsSpec:
    name: str
    files: tuple[ArtifactSpec, ...]
    kernel_params: str = ""
    template: str | None = None


@dataclass(frozen=True)
class UserSpec:
    username: str
    password: str
    os: str


@dataclass(frozen=True)
class ClientSpec:
    name: str
    mac: str
    logins: tuple[tuple[str, str], ...] = ()
    answers: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Expectation:
    state: str
    os: str | None = None
    reason: str | None = None


@dataclass(frozen=True)
class PhaseSpec:
    boot: tuple[str, ...]
    admin: tuple[dict, ...] = ()
    restart_control_plane: bool = False
    expect: dict[str, Expectation] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    upstream: str | None
    gateway_attached: bool
    wifi_ssid: str
    wifi_passphrase: str
    apn: str
    lan_latency: float
    lan_loss: float
    cloud_domain: str
    oses: tuple[OsSpec, ...]
    users: tuple[UserSpec, ...]
    clients: tuple[ClientSpec, ...]
    faults: tuple[dict, ...]
    phases: tuple[PhaseSpec, ...]


def _take(obj: dict, where: str, allowed: set[str]) -> None:
    if not isinstance(obj, dict):
        raise ScenarioInvalid(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioInvalid(f"{where}: unknown keys {sorted(unknown)}")


def _need(obj: dict, where: str, key: str):
    if key not in obj:
        raise ScenarioInvalid(f"{where}: missing required key {key!r}")
    return obj[key]


_FAULT_KEYS = {
    "drop_port": {"kind", "port", "segment"},
    "corrupt_from": {"kind", "ip", "min_size", "count"},
    "rogue_boot_server": {"kind", "ip", "boot_file"},
}

_ADMIN_OPS = {"deactivate_user", "assign_os"}

_STATES = {s.value for s in BootState}
_REASONS = {r.value for r in FailureReason}


def parse_scenario(data: dict) -> Scenario:
    """Validate a decoded scenario document. Everything that can be caught
    before building a world is caught here, with the path that is wrong."""
    _take(data, "scenario", {
        "name", "seed", "topology", "oses", "users", "clients", "faults",
        "phases", "expect",
    })
    name = _need(data, "scenario", "name")
    if not isinstance(name, str) or not name.strip():
        raise ScenarioInvalid("scenario: name must be a nonempty string")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioInvalid("scenario: seed must be a nonnegative integer")

    topo = data.get("topology", {})
    _take(topo, "topology", {
        "upstream", "gateway_attached", "wifi", "apn", "lan", "cloud_domain",
    })
    upstream = topo.get("upstream", "wired")
    if upstream not in ("wired", "wifi", "cellular", None):
        raise ScenarioInvalid(f"topology: unknown upstream kind {upstream!r}")
    wifi = topo.get("wifi", {})
    _take(wifi, "topology.wifi", {"ssid", "passphrase"})
    lan = topo.get("lan", {})
    _take(lan, "topology.lan", {"latency", "loss"})

    oses = []
    for i, entry in enumerate(data.get("oses", [])):
        where = f"oses[{i}]"
        _take(entry, where, {"name", "files", "kernel_params", "template"})
        os_name = _need(entry, where, "name")
        files = []
        declared = _need(entry, where, "files")
        if not declared:
            raise ScenarioInvalid(f"{where}: an OS needs at least one file")
        for j, f in enumerate(declared):
            fwhere = f"{where}.files[{j}]"
            _take(f, fwhere, {"filename", "size"})
            filename = _need(f, fwhere, "filename")
            size = _need(f, fwhere, "size")
            if not isinstance(filename, str) or not filename or "/" in filename:
                raise ScenarioInvalid(f"{fwhere}: bad filename {filename!r}")
            if not isinstance(size, int) or size < 1:
                raise ScenarioInvalid(f"{fwhere}: size must be a positive byte count")
            files.append(ArtifactSpec(filename, size))
        oses.append(OsSpec(
            name=os_name,
            files=tuple(files),
            kernel_params=entry.get("kernel_params", ""),
            template=entry.get("template"),
        ))
    os_names = [o.name for o in oses]
    if len(set(os_names)) != len(os_names):
        raise ScenarioInvalid("oses: duplicate OS names")

    users = []
    for i, entry in enumerate(data.get("users", [])):
        where = f"users[{i}]"
        _take(entry, where, {"username", "password", "os"})
        username = _need(entry, where, "username")
        target = _need(entry, where, "os")
        if target not in os_names:
            raise ScenarioInvalid(f"{where}: os {target!r} is not defined")
        users.append(UserSpec(username, _need(entry, where, "password"), target))
    usernames = [u.username for u in users]
    if len(set(usernames)) != len(usernames):
        raise ScenarioInvalid("users: duplicate usernames")

    clients = []
    for i, entry in enumerate(data.get("clients", [])):
        where = f"clients[{i}]"
        _take(entry, where, {"name", "mac", "logins", "answers"})
        cname = _need(entry, where, "name")
        mac = _need(entry, where, "mac")
        try:
            mac = dhcp.format_mac(dhcp.parse_mac(mac))
        except (ValueError, dhcp.DhcpError) as exc:
            raise ScenarioInvalid(f"{where}: bad mac {mac!r}: {exc}") from exc
        logins = []
        for j, pair in enumerate(entry.get("logins", [])):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ScenarioInvalid(f"{where}.logins[{j}]: expected [username, password]")
            if pair[0] not in usernames:
                raise ScenarioInvalid(f"{where}.logins[{j}]: user {pair[0]!r} is not defined")
            logins.append((str(pair[0]), str(pair[1])))
        answers = entry.get("answers", {})
        if not isinstance(answers, dict):
            raise ScenarioInvalid(f"{where}.answers: expected an object")
        clients.append(ClientSpec(cname, mac, tuple(logins), dict(answers)))
    if not clients:
        raise ScenarioInvalid("clients: at least one client is required")
    cnames = [c.name for c in clients]
    if len(set(cnames)) != len(cnames):
        raise ScenarioInvalid("clients: duplicate client names")
    macs = [c.mac for c in clients]
    if len(set(macs)) != len(macs):
        raise ScenarioInvalid("clients: duplicate MAC addresses")

    faults = []
    for i, entry in enumerate(data.get("faults", [])):
        where = f"faults[{i}]"
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ScenarioInvalid(f"{where}: expected an object with a kind")
        kind = entry["kind"]
        if kind not in _FAULT_KEYS:
            raise ScenarioInvalid(f"{where}: unknown fault kind {kind!r}")
        _take(entry, where, _FAULT_KEYS[kind])
        if kind == "drop_port" and "port" not in entry:
            raise ScenarioInvalid(f"{where}: drop_port needs a port")
        if kind == "corrupt_from" and "ip" not in entry:
            raise ScenarioInvalid(f"{where}: corrupt_from needs an ip")
        faults.append(dict(entry))

    def parse_expect(raw: dict, where: str) -> dict[str, Expectation]:
        out = {}
        for cname, expected in raw.items():
            ewhere = f"{where}.expect[{cname!r}]"
            if cname not in cnames:
                raise ScenarioInvalid(f"{ewhere}: client is not defined")
            _take(expected, ewhere, {"state", "os", "reason"})
            state = _need(expected, ewhere, "state")
            if state not in _STATES:
                raise ScenarioInvalid(f"{ewhere}: unknown state {state!r}")
            target = expected.get("os")
            if target is not None and target not in os_names:
                raise ScenarioInvalid(f"{ewhere}: os {target!r} is not defined")
            reason = expected.get("reason")
            if reason is not None and reason not in _REASONS:
                raise ScenarioInvalid(f"{ewhere}: unknown failure reason {reason!r}")
            out[cname] = Expectation(state=state, os=target, reason=reason)
        return out

    raw_phases = data.get("phases")
    if raw_phases is None:
        raw_phases = [{"boot": cnames, "expect": data.get("expect", {})}]
    elif "expect" in data:
        raise ScenarioInvalid("scenario: give expect per phase when phases are explicit")
    phases = []
    for i, entry in enumerate(raw_phases):
        where = f"phases[{i}]"
        _take(entry, where, {"boot", "admin", "restart_control_plane", "expect"})
        boot = entry.get("boot", [])
        for cname in boot:
            if cname not in cnames:
                raise ScenarioInvalid(f"{where}.boot: client {cname!r} is not defined")
        admin = []
        for j, op in enumerate(entry.get("admin", [])):
            owhere = f"{where}.admin[{j}]"
            if not isinstance(op, dict) or op.get("op") not in _ADMIN_OPS:
                raise ScenarioInvalid(f"{owhere}: unknown admin op {op!r}")
            if _need(op, owhere, "username") not in usernames:
                raise ScenarioInvalid(f"{owhere}: user {op['username']!r} is not defined")
            if op["op"] == "assign_os":
                if _need(op, owhere, "os") not in os_names:
                    raise ScenarioInvalid(f"{owhere}: os {op['os']!r} is not defined")
            admin.append(dict(op))
        phases.append(PhaseSpec(
            boot=tuple(boot),
            admin=tuple(admin),
            restart_control_plane=bool(entry.get("restart_control_plane", False)),
            expect=parse_expect(entry.get("expect", {}), where),
        ))
    if not any(p.boot for p in phases):
        raise ScenarioInvalid("phases: no phase boots any client")

    if upstream is None and (oses or users):
        raise ScenarioInvalid(
            "scenario: an isolated site has no control plane to hold OS definitions"
        )

    return Scenario(
        name=name.strip(),
        seed=seed,
        upstream=upstream,
        gateway_attached=bool(topo.get("gateway_attached", True)),
        wifi_ssid=wifi.get("ssid", DEFAULT_WIFI[0]),
        wifi_passphrase=wifi.get("passphrase", DEFAULT_WIFI[1]),
        apn=topo.get("apn", DEFAULT_APN),
        lan_latency=float(lan.get("latency", 0.001)),
        lan_loss=float(lan.get("loss", 0.0)),
        cloud_domain=topo.get("cloud_domain", "boot.cloud.example"),
        oses=tuple(oses),
        users=tuple(users),
        clients=tuple(clients),
        faults=tuple(faults),
        phases=tuple(phases),
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioInvalid(f"cannot read scenario file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"scenario file is not valid JSON: {exc}") from exc
    return parse_scenario(data)


def bundled_scenario_names() -> list[str]:
    files = resources.files("sdboot").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> Scenario:
    ref = resources.files("sdboot").joinpath("scenarios").joinpath(f"{name}.json")
    if not ref.is_file():
        known = ", ".join(bundled_scenario_names())
        raise ScenarioInvalid(f"no bundled scenario {name!r} (have: {known})")
    return parse_scenario(json.loads(ref.read_text()))


# -- synthetic artifacts ----------------------------------------------------


def synthetic_bytes(os_name: str, filename: str, size: int) -> bytes:
    """Deterministic filler for a declared artifact: the same OS and file
    names always produce the same bytes, so digests are reproducible
    without shipping megabytes of fixture data."""
    block = hashlib.sha256(f"{os_name}/{filename}".encode()).digest()
    return (block * (size // len(block) + 1))[:size]


def default_template(files: tuple[ArtifactSpec, ...]) -> str:
    lines = ["#!ipxe", "echo Booting {{os_id}}"]
    lines.append("kernel {{base_url}}/files/{{os_id}}/" + files[0].filename)
    for extra in files[1:]:
        lines.append("initrd {{base_url}}/files/{{os_id}}/" + extra.filename)
    lines.append("boot")
    return "\n".join(lines) + "\n"


# -- fault injection --------------------------------------------------------


def _apply_fault(world: World, fault: dict) -> None:
    kind = fault["kind"]
    if kind == "drop_port":
        port = fault["port"]
        segment = fault.get("segment")

        def drop(dgram: Datagram, seg_id: str):
            if segment is not None and seg_id != segment:
                return None
            return DROP if dgram.dst_port == port else None

        world.network.add_fault(drop)
    elif kind == "corrupt_from":
        ip = fault["ip"]
        min_size = fault.get("min_size", 1000)
        budget = {"left": fault.get("count", 1)}

        def corrupt(dgram: Datagram, seg_id: str):
            if budget["left"] < 1 or dgram.src_ip != ip or len(dgram.payload) <= min_size:
                return None
            budget["left"] -= 1
            mangled = dgram.payload[:-1] + bytes([dgram.payload[-1] ^ 0xFF])
            return replace(dgram, payload=mangled)

        world.network.add_fault(corrupt)
    elif kind == "rogue_boot_server":
        extras = {k: fault[k] for k in ("ip", "boot_file") if k in fault}
        world.add_rogue(**extras)


# -- running ----------------------------------------------------------------


def _session_row(client, os_name_by_id: dict[str, str], trace_rel: str) -> dict:
    s = client.session
    return {
        "state": s.state.value,
        "os_id": s.os_id,
        "os_name": os_name_by_id.get(s.os_id),
        "boot_time": round(s.boot_time, 6) if s.state is BootState.BOOTED else None,
        "failure_stage": s.failed_stage.value if s.failed_stage else None,
        "failure_reason": s.failure_reason.value if s.failure_reason else None,
        "failure_detail": s.failure_detail or None,
        "bootloader_digest": s.bootloader_digest,
        "artifacts": dict(sorted(s.artifacts.items())),
        "trace": trace_rel,
    }


def _check_expectation(cname: str, row: dict, want: Expectation) -> list[str]:
    problems = []
    if row["state"] != want.state:
        problems.append(
            f"{cname}: expected state {want.state}, got {row['state']}"
            + (f" ({row['failure_reason']}: {row['failure_detail']})"
               if row["failure_reason"] else "")
        )
    if want.os is not None and row["os_name"] != want.os:
        problems.append(f"{cname}: expected os {want.os!r}, got {row['os_name']!r}")
    if want.reason is not None and row["failure_reason"] != want.reason:
        problems.append(
            f"{cname}: expected failure reason {want.reason}, got {row['failure_reason']}"
        )
    return problems


def run_scenario(spec: Scenario, out_dir: str | Path, seed: int | None = None) -> dict:
    """Build the world a scenario describes, run every phase, and report.

    out_dir is owned by the run: the store and trace files live there and
    stale contents from a previous run are removed first. The returned
    report is also written to out_dir/report.json.
    """
    started = time.monotonic()
    seed = spec.seed if seed is None else seed
    out = Path(out_dir)
    for sub in ("store", "traces"):
        shutil.rmtree(out / sub, ignore_errors=True)
    (out / "traces").mkdir(parents=True, exist_ok=True)

    world = build_world(
        seed=seed,
        upstream=spec.upstream,
        gateway_attached=spec.gateway_attached,
        store_root=(out / "store") if spec.upstream else None,
        cloud_domain=spec.cloud_domain,
        wifi_ssid=spec.wifi_ssid,
        wifi_passphrase=spec.wifi_passphrase,
        apn=spec.apn,
        lan_latency=spec.lan_latency,
        lan_loss=spec.lan_loss,
        scrypt_n=SIM_SCRYPT_N,
    )
    for fault in spec.faults:
        _apply_fault(world, fault)

    os_id_by_name: dict[str, str] = {}
    for os_spec in spec.oses:
        template = os_spec.template or default_template(os_spec.files)
        os_id = world.service.create_os(os_spec.name, template, os_spec.kernel_params)
        os_id_by_name[os_spec.name] = os_id
        for artifact in os_spec.files:
            world.service.upload_file(
                os_id, artifact.filename,
                synthetic_bytes(os_spec.name, artifact.filename, artifact.size),
            )
    for user in spec.users:
        world.service.create_user(user.username, user.password, os_id_by_name[user.os])

    clients = {}
    for cs in spec.clients:
        clients[cs.name] = world.add_client(
            cs.name, cs.mac,
            CredentialSource(pairs=list(cs.logins), answers=dict(cs.answers)),
        )

    world.start()
    world.run()  # settle the gateway's connectivity probe before power-on

    os_name_by_id = {v: k for k, v in os_id_by_name.items()}
    phase_reports = []
    all_problems = []
    for index, phase in enumerate(spec.phases):
        if phase.restart_control_plane and world.service is not None:
            world.restart_control_plane()
        for op in phase.admin:
            if op["op"] == "deactivate_user":
                world.service.deactivate_user(op["username"])
            elif op["op"] == "assign_os":
                world.service.assign_os(op["username"], os_id_by_name[op["os"]])
        for cname in phase.boot:
            clients[cname].start_boot()
        world.run()
        rows = {}
        problems = []
        for cname in phase.boot:
            rel = f"traces/{cname}.jsonl"
            rows[cname] = _session_row(clients[cname], os_name_by_id, rel)
            want = phase.expect.get(cname)
            if want is not None:
                problems.extend(_check_expectation(cname, rows[cname], want))
        phase_reports.append({
            "index": index,
            "restarted_control_plane": phase.restart_control_plane,
            "clients": rows,
            "mismatches": problems,
        })
        all_problems.extend(problems)

    for cname, client in clients.items():
        client.trace.write(str(out / "traces" / f"{cname}.jsonl"))

    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": spec.name,
        "seed": seed,
        "ok": not all_problems,
        "phases": phase_reports,
        "auth_log_entries": (
            world.service.auth_log_count() if world.service is not None else 0
        ),
        "wall_seconds": round(time.monotonic() - started, 3),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
