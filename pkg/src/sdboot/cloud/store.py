"""Durable state for the control plane.

Metadata lives in a single SQLite file, artifact bytes live under
files/<os_id>/<filename>. File writes are staged to a temp name and renamed
into place so a concurrent reader never sees a half-written artifact.
"""

from __future__ import annotations

import os
import sqlite3
import threading
from pathlib import Path

SCHEMA = """
CREATE TABLE IF NOT EXISTS os_definitions (
    os_id TEXT PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    boot_template TEXT NOT NULL,
    kernel_params TEXT NOT NULL DEFAULT '',
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS os_files (
    os_id TEXT NOT NULL REFERENCES os_definitions(os_id),
    filename TEXT NOT NULL,
    size INTEGER NOT NULL,
    digest TEXT NOT NULL,
    uploaded_at REAL NOT NULL,
    PRIMARY KEY (os_id, filename)
);
CREATE TABLE IF NOT EXISTS users (
    username TEXT PRIMARY KEY,
    salt BLOB NOT NULL,
    digest BLOB NOT NULL,
    algorithm TEXT NOT NULL,
    assigned_os TEXT NOT NULL REFERENCES os_definitions(os_id),
    active INTEGER NOT NULL DEFAULT 1,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS auth_log (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    ts REAL NOT NULL,
    username TEXT NOT NULL,
    mac TEXT NOT NULL,
    client_ip TEXT NOT NULL,
    success INTEGER NOT NULL,
    failure_reason TEXT
);
"""


class StoreCorruption(RuntimeError):
    pass


class Store:
    """One control-plane data directory. Mutations take `lock` so
    concurrent request handlers serialize their writes."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files_root = self.root / "files"
        self.files_root.mkdir(exist_ok=True)
        self.lock = threading.RLock()
        db_path = self.root / "metadata.sqlite3"
        self.db = sqlite3.connect(db_path, check_same_thread=False)
        self.db.row_factory = sqlite3.Row
        try:
            check = self.db.execute("PRAGMA quick_check").fetchone()[0]
        except sqlite3.DatabaseError as exc:
            raise StoreCorruption(f"metadata database unreadable: {exc}") from exc
        if check != "ok":
            raise StoreCorruption(f"metadata database failed its check: {check}")
        with self.db:
            self.db.executescript(SCHEMA)

    def close(self) -> None:
        self.db.close()

    # -- artifact files -----------------------------------------------------

    def file_path(self, os_id: str, filename: str) -> Path:
        return self.files_root / os_id / filename

    def write_file(self, os_id: str, filename: str, data: bytes) -> None:
        directory = self.files_root / os_id
        directory.mkdir(parents=True, exist_ok=True)
        final = directory / filename
        staged = directory / f".{filename}.staged-{os.getpid()}-{id(data):x}"
        staged.write_bytes(data)
        os.replace(staged, final)

    def read_file(self, os_id: str, filename: str) -> bytes | None:
        path = self.file_path(os_id, filename)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            return None
