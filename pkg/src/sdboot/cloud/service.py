"""Control-plane operations: OS definitions, users, boot-time auth, files,
and the authentication audit log."""

from __future__ import annotations

import hashlib
import hmac
import os
import random
import time
from dataclasses import dataclass, replace as dc_replace
from typing import Callable, Optional

from sdboot import bootscript
from sdboot.cloud.store import Store
from sdboot.wire.dhcp import format_mac, parse_mac

DEFAULT_SCRYPT_N = 2**14
SCRYPT_R = 8
SCRYPT_P = 1
DIGEST_LEN = 32
SALT_LEN = 16

PLACEHOLDER_BASE_URL = "{{base_url}}"
PLACEHOLDER_OS_ID = "{{os_id}}"


class CloudError(Exception):
    code = "error"
    http_status = 400


class BadTemplate(CloudError):
    code = "bad_template"


class DuplicateName(CloudError):
    code = "duplicate_name"
    http_status = 409


class NoSuchOs(CloudError):
    code = "no_such_os"
    http_status = 404


class EmptyFile(CloudError):
    code = "empty_file"


class DuplicateUser(CloudError):
    code = "duplicate_user"
    http_status = 409


class NoSuchUser(CloudError):
    code = "no_such_user"
    http_status = 404


class NotFound(CloudError):
    code = "not_found"
    http_status = 404


class BadRange(CloudError):
    code = "bad_range"
    http_status = 416


class Validation(CloudError):
    code = "validation"


@dataclass(frozen=True)
class OsDefinition:
    os_id: str
    name: str
    boot_template: str
    kernel_params: str
    created_at: float


@dataclass(frozen=True)
class StoredFile:
    os_id: str
    filename: str
    size: int
    digest: str
    uploaded_at: float


@dataclass(frozen=True)
class UserRecord:
    username: str
    assigned_os: str
    active: bool
    created_at: float


@dataclass(frozen=True)
class AuthLogEntry:
    id: int
    timestamp: float
    username: str
    mac: str
    client_ip: str
    success: bool
    failure_reason: Optional[str]


FAILURE_BAD_PASSWORD = "BadPassword"
FAILURE_NO_SUCH_USER = "NoSuchUser"
FAILURE_DEACTIVATED = "Deactivated"


def derive_os_id(name: str) -> str:
    """Stable id from the OS name, so identical seed data yields identical
    ids (and therefore identical scripts and traces) on every run."""
    return "os-" + hashlib.sha256(name.encode("utf-8")).hexdigest()[:12]


class CloudService:
    def __init__(
        self,
        store: Store,
        base_url: str = "http://boot.cloud.example",
        scrypt_n: int = DEFAULT_SCRYPT_N,
        now_fn: Callable[[], float] | None = None,
        rng: random.Random | None = None,
    ):
        self.store = store
        self.base_url = base_url.rstrip("/")
        self.scrypt_n = scrypt_n
        self.now_fn = now_fn or time.time
        self._rng = rng
        self.kdf_invocations = 0  # for timing-envelope checks in tests
        # the decoy credential keeps the unknown-user path doing the same
        # work as a real password check
        self._decoy_salt = b"\x00" * SALT_LEN
        self._decoy_digest = self._kdf(b"decoy-password", self._decoy_salt, self.scrypt_n)
        self.kdf_invocations = 0

    # -- helpers -------------------------------------------------------------

    def _salt(self) -> bytes:
        if self._rng is not None:
            return self._rng.randbytes(SALT_LEN)
        return os.urandom(SALT_LEN)

    def _kdf(self, password: bytes, salt: bytes, n: int) -> bytes:
        self.kdf_invocations += 1
        return hashlib.scrypt(
            password, salt=salt, n=n, r=SCRYPT_R, p=SCRYPT_P, dklen=DIGEST_LEN
        )

    def _algorithm_tag(self) -> str:
        return f"scrypt:{self.scrypt_n}:{SCRYPT_R}:{SCRYPT_P}"

    def _verify(self, presented: str, salt: bytes, digest: bytes, algorithm: str) -> bool:
        try:
            scheme, n, r, p = algorithm.split(":")
            if scheme != "scrypt" or int(r) != SCRYPT_R or int(p) != SCRYPT_P:
                return False
            computed = self._kdf(presented.encode("utf-8"), salt, int(n))
        except (ValueError, OverflowError):
            return False
        return hmac.compare_digest(computed, digest)

    def _substituted_template(self, template: str, os_id: str) -> str:
        return template.replace(PLACEHOLDER_BASE_URL, self.base_url).replace(
            PLACEHOLDER_OS_ID, os_id
        )

    # -- OS definitions ------------------------------------------------------

    def create_os(self, name: str, boot_template: str, kernel_params: str = "") -> str:
        name = name.strip()
        if not name:
            raise Validation("OS name must be nonempty")
        os_id = derive_os_id(name)
        try:
            script = bootscript.parse_script(
                self._substituted_template(boot_template, os_id)
            )
            script.validate()
        except bootscript.ScriptError as exc:
            raise BadTemplate(f"boot template rejected: {exc}") from exc
        with self.store.lock:
            existing = self.store.db.execute(
                "SELECT 1 FROM os_definitions WHERE name = ? OR os_id = ?", (name, os_id)
            ).fetchone()
            if existing:
                raise DuplicateName(f"an OS named {name!r} already exists")
            with self.store.db:
                self.store.db.execute(
                    "INSERT INTO os_definitions (os_id, name, boot_template,"
                    " kernel_params, created_at) VALUES (?, ?, ?, ?, ?)",
                    (os_id, name, boot_template, kernel_params, self.now_fn()),
                )
        return os_id

    def get_os(self, os_id: str) -> OsDefinition:
        row = self.store.db.execute(
            "SELECT * FROM os_definitions WHERE os_id = ?", (os_id,)
        ).fetchone()
        if row is None:
            raise NoSuchOs(f"no OS with id {os_id!r}")
        return OsDefinition(
            row["os_id"], row["name"], row["boot_template"],
            row["kernel_params"], row["created_at"],
        )

    def list_os(self) -> list[OsDefinition]:
        rows = self.store.db.execute(
            "SELECT * FROM os_definitions ORDER BY name"
        ).fetchall()
        return [
            OsDefinition(
                r["os_id"], r["name"], r["boot_template"], r["kernel_params"], r["created_at"]
            )
            for r in rows
        ]

    def list_files(self, os_id: str) -> list[StoredFile]:
        self.get_os(os_id)
        rows = self.store.db.execute(
            "SELECT * FROM os_files WHERE os_id = ? ORDER BY filename", (os_id,)
        ).fetchall()
        return [
            StoredFile(r["os_id"], r["filename"], r["size"], r["digest"], r["uploaded_at"])
            for r in rows
        ]

    # -- artifact files ------------------------------------------------------

    def upload_file(self, os_id: str, filename: str, data: bytes) -> str:
        self.get_os(os_id)
        if not data:
            raise EmptyFile(f"refusing empty upload for {filename!r}")
        if not filename or "/" in filename or "\\" in filename or filename.startswith("."):
            raise Validation(f"unacceptable filename {filename!r}")
        digest = hashlib.sha256(data).hexdigest()
        with self.store.lock:
            self.store.write_file(os_id, filename, data)
            with self.store.db:
                self.store.db.execute(
                    "INSERT INTO os_files (os_id, filename, size, digest, uploaded_at)"
                    " VALUES (?, ?, ?, ?, ?)"
                    " ON CONFLICT(os_id, filename) DO UPDATE SET"
                    " size = excluded.size, digest = excluded.digest,"
                    " uploaded_at = excluded.uploaded_at",
                    (os_id, filename, len(data), digest, self.now_fn()),
                )
        return digest

    def serve_file(
        self, os_id: str, filename: str, byte_range: tuple[int, int] | None = None
    ) -> tuple[bytes, int, str]:
        """Returns (body, total size, digest of the whole file). The digest
        always covers the complete file so ranged fetches can still verify
        the reassembled artifact."""
        row = self.store.db.execute(
            "SELECT digest, size FROM os_files WHERE os_id = ? AND filename = ?",
            (os_id, filename),
        ).fetchone()
        data = self.store.read_file(os_id, filename)
        if row is None or data is None:
            raise NotFound(f"no file {filename!r} for OS {os_id!r}")
        if byte_range is None:
            return data, len(data), row["digest"]
        start, end = byte_range
        if start < 0 or end < start or start >= len(data):
            raise BadRange(f"range {start}-{end} outside 0-{len(data) - 1}")
        return data[start : end + 1], len(data), row["digest"]

    # -- users ---------------------------------------------------------------

    def create_user(self, username: str, password: str, os_id: str) -> UserRecord:
        username = username.strip()
        if not username:
            raise Validation("username must be nonempty")
        if not password:
            raise Validation("password must be nonempty")
        self.get_os(os_id)
        salt = self._salt()
        digest = self._kdf(password.encode("utf-8"), salt, self.scrypt_n)
        with self.store.lock:
            existing = self.store.db.execute(
                "SELECT 1 FROM users WHERE username = ?", (username,)
            ).fetchone()
            if existing:
                raise DuplicateUser(f"user {username!r} already exists")
            created = self.now_fn()
            with self.store.db:
                self.store.db.execute(
                    "INSERT INTO users (username, salt, digest, algorithm,"
                    " assigned_os, active, created_at) VALUES (?, ?, ?, ?, ?, 1, ?)",
                    (username, salt, digest, self._algorithm_tag(), os_id, created),
                )
        return UserRecord(username, os_id, True, created)

    def get_user(self, username: str) -> UserRecord:
        row = self._user_row(username)
        if row is None:
            raise NoSuchUser(f"no user {username!r}")
        return UserRecord(
            row["username"], row["assigned_os"], bool(row["active"]), row["created_at"]
        )

    def list_users(self) -> list[UserRecord]:
        rows = self.store.db.execute("SELECT * FROM users ORDER BY username").fetchall()
        return [
            UserRecord(r["username"], r["assigned_os"], bool(r["active"]), r["created_at"])
            for r in rows
        ]

    def deactivate_user(self, username: str) -> UserRecord:
        with self.store.lock:
            user = self.get_user(username)
            with self.store.db:
                self.store.db.execute(
                    "UPDATE users SET active = 0 WHERE username = ?", (username,)
                )
        return dc_replace(user, active=False)

    def assign_os(self, username: str, os_id: str) -> UserRecord:
        with self.store.lock:
            user = self.get_user(username)
            self.get_os(os_id)
            with self.store.db:
                self.store.db.execute(
                    "UPDATE users SET assigned_os = ? WHERE username = ?",
                    (os_id, username),
                )
        return dc_replace(user, assigned_os=os_id)

    def _user_row(self, username: str):
        return self.store.db.execute(
            "SELECT * FROM users WHERE username = ?", (username,)
        ).fetchone()

    # -- boot-time surface ---------------------------------------------------

    def boot_entry(self) -> bootscript.Script:
        """The stateless login script every machine receives first."""
        return bootscript.Script(
            (
                bootscript.Echo("Enterprise network boot"),
                bootscript.Login(),
                bootscript.Chain(
                    f"{self.base_url}/auth"
                    "?username=${username}&password=${password}&mac=${net0/mac}"
                ),
            )
        )

    def authenticate_and_issue(
        self, username: str, password: str, mac: str, client_ip: str
    ) -> bootscript.Script:
        """Password check, audit entry, and the personalized boot script.
        Failures all look identical to the caller; the log keeps the real
        reason."""
        with self.store.lock:
            reason: str | None = None
            row = self._user_row(username)
            if row is None:
                # burn the same kdf work as a real check
                self._verify(
                    password, self._decoy_salt, self._decoy_digest, self._algorithm_tag()
                )
                reason = FAILURE_NO_SUCH_USER
            elif not self._verify(password, row["salt"], row["digest"], row["algorithm"]):
                reason = FAILURE_BAD_PASSWORD
            elif not row["active"]:
                reason = FAILURE_DEACTIVATED
            self._append_log(username, mac, client_ip, reason)
            if reason is not None:
                return self._failure_script()
            return self._issue_script(row["assigned_os"])

    def _issue_script(self, os_id: str) -> bootscript.Script:
        definition = self.get_os(os_id)
        text = self._substituted_template(definition.boot_template, os_id)
        script = bootscript.parse_script(text)
        if definition.kernel_params:
            statements = []
            for stmt in script.statements:
                if isinstance(stmt, bootscript.Kernel):
                    merged = f"{stmt.params} {definition.kernel_params}".strip()
                    stmt = bootscript.Kernel(stmt.url, merged)
                statements.append(stmt)
            script = bootscript.Script(tuple(statements))
        return script

    def _failure_script(self) -> bootscript.Script:
        return bootscript.Script(
            (
                bootscript.Echo("Authentication failed"),
                bootscript.Chain(f"{self.base_url}/boot"),
            )
        )

    def _append_log(self, username: str, mac: str, client_ip: str, reason: str | None) -> None:
        try:
            mac = format_mac(parse_mac(mac))
        except ValueError:
            pass  # keep the attacker-presented junk verbatim
        with self.store.lock, self.store.db:
            self.store.db.execute(
                "INSERT INTO auth_log (ts, username, mac, client_ip, success,"
                " failure_reason) VALUES (?, ?, ?, ?, ?, ?)",
                (self.now_fn(), username, mac, client_ip, reason is None, reason),
            )

    # -- audit log -----------------------------------------------------------

    def list_auth_log(
        self,
        username: str | None = None,
        mac: str | None = None,
        success: bool | None = None,
        page: int = 0,
        page_size: int = 50,
    ) -> list[AuthLogEntry]:
        clauses, params = [], []
        if username is not None:
            clauses.append("username = ?")
            params.append(username)
        if mac is not None:
            clauses.append("mac = ?")
            params.append(mac)
        if success is not None:
            clauses.append("success = ?")
            params.append(int(success))
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        rows = self.store.db.execute(
            f"SELECT * FROM auth_log {where} ORDER BY id DESC LIMIT ? OFFSET ?",
            (*params, page_size, page * page_size),
        ).fetchall()
        return [
            AuthLogEntry(
                r["id"], r["ts"], r["username"], r["mac"], r["client_ip"],
                bool(r["success"]), r["failure_reason"],
            )
            for r in rows
        ]

    def auth_log_count(self) -> int:
        return self.store.db.execute("SELECT COUNT(*) FROM auth_log").fetchone()[0]
