"""HTTP routing for the control plane.

Boot-time endpoints (/boot, /auth, /files) are open; everything under /api
requires the admin bearer token. The handler is transport-neutral: the
simulation's datagram-stream server and the live TCP listener both feed it
decoded requests. Route shapes and JSON field names are documented in
docs/api.md and must not drift, since the admin UI and the client build
against them.
"""

from __future__ import annotations

import json
import mimetypes
import re
from pathlib import Path

from sdboot import bootscript
from sdboot.cloud import service as svc
from sdboot.wire.http import HttpRequest, HttpResponse, text_response

SCRIPT_CONTENT_TYPE = "text/plain; charset=utf-8"

_FILE_ROUTE = re.compile(r"^/files/([^/]+)/([^/]+)$")
_OS_ROUTE = re.compile(r"^/api/os/([^/]+)$")
_OS_FILES_ROUTE = re.compile(r"^/api/os/([^/]+)/files$")
_USER_ROUTE = re.compile(r"^/api/users/([^/]+)$")
_USER_OS_ROUTE = re.compile(r"^/api/users/([^/]+)/os$")
_RANGE = re.compile(r"^bytes=(\d+)-(\d*)$")


def json_response(status: int, payload) -> HttpResponse:
    body = json.dumps(payload, sort_keys=True).encode("utf-8")
    return HttpResponse(status, [("Content-Type", "application/json")], body)


def error_response(status: int, code: str, detail: str) -> HttpResponse:
    return json_response(status, {"error": code, "detail": detail})


def os_to_json(definition: svc.OsDefinition, files: list[svc.StoredFile]) -> dict:
    return {
        "os_id": definition.os_id,
        "name": definition.name,
        "boot_template": definition.boot_template,
        "kernel_params": definition.kernel_params,
        "created_at": definition.created_at,
        "files": [
            {
                "filename": f.filename,
                "size": f.size,
                "digest": f.digest,
                "uploaded_at": f.uploaded_at,
            }
            for f in files
        ],
    }


def user_to_json(user: svc.UserRecord) -> dict:
    return {
        "username": user.username,
        "assigned_os": user.assigned_os,
        "active": user.active,
        "created_at": user.created_at,
    }


def log_to_json(entry: svc.AuthLogEntry) -> dict:
    return {
        "id": entry.id,
        "timestamp": entry.timestamp,
        "username": entry.username,
        "mac": entry.mac,
        "client_ip": entry.client_ip,
        "success": entry.success,
        "failure_reason": entry.failure_reason,
    }


class CloudApi:
    def __init__(self, service: svc.CloudService, admin_token: str, static_dir: str | None = None):
        self.service = service
        self.admin_token = admin_token
        self.static_dir = Path(static_dir) if static_dir else None

    def handle(self, request: HttpRequest) -> HttpResponse:
        try:
            return self._route(request)
        except svc.CloudError as exc:
            return error_response(exc.http_status, exc.code, str(exc))

    # -- dispatch ------------------------------------------------------------

    def _route(self, request: HttpRequest) -> HttpResponse:
        path, method = request.path, request.method
        if path == "/boot":
            return self._script_response(self.service.boot_entry())
        if path == "/auth" and method in ("GET", "POST"):
            return self._auth(request)
        m = _FILE_ROUTE.match(path)
        if m and method == "GET":
            return self._serve_file(request, m.group(1), m.group(2))
        if path == "/admin" or path.startswith("/admin/"):
            return self._static(path)
        if path == "/api" or path.startswith("/api/"):
            denied = self._check_token(request)
            if denied:
                return denied
            return self._admin_route(request)
        return error_response(404, "not_found", f"no route for {path}")

    def _check_token(self, request: HttpRequest) -> HttpResponse | None:
        credential = request.header("authorization") or ""
        if credential == f"Bearer {self.admin_token}":
            return None
        return error_response(401, "unauthorized", "admin token required")

    def _admin_route(self, request: HttpRequest) -> HttpResponse:
        path, method = request.path, request.method
        if path == "/api/os":
            if method == "GET":
                return json_response(
                    200,
                    [
                        os_to_json(d, self.service.list_files(d.os_id))
                        for d in self.service.list_os()
                    ],
                )
            if method == "POST":
                body = self._json_body(request)
                os_id = self.service.create_os(
                    str(body.get("name", "")),
                    str(body.get("boot_template", "")),
                    str(body.get("kernel_params", "")),
                )
                return self._os_json(201, os_id)
            return error_response(405, "method_not_allowed", f"{method} /api/os")
        m = _OS_ROUTE.match(path)
        if m:
            if method != "GET":
                return error_response(405, "method_not_allowed", f"{method} {path}")
            return self._os_json(200, m.group(1))
        m = _OS_FILES_ROUTE.match(path)
        if m:
            if method != "POST":
                return error_response(405, "method_not_allowed", f"{method} {path}")
            filename = request.query.get("filename", "")
            digest = self.service.upload_file(m.group(1), filename, request.body)
            return json_response(
                201, {"filename": filename, "size": len(request.body), "digest": digest}
            )
        if path == "/api/users":
            if method == "GET":
                return json_response(200, [user_to_json(u) for u in self.service.list_users()])
            if method == "POST":
                body = self._json_body(request)
                user = self.service.create_user(
                    str(body.get("username", "")),
                    str(body.get("password", "")),
                    str(body.get("os_id", "")),
                )
                return json_response(201, user_to_json(user))
            return error_response(405, "method_not_allowed", f"{method} /api/users")
        m = _USER_OS_ROUTE.match(path)
        if m:
            if method != "PUT":
                return error_response(405, "method_not_allowed", f"{method} {path}")
            body = self._json_body(request)
            user = self.service.assign_os(m.group(1), str(body.get("os_id", "")))
            return json_response(200, user_to_json(user))
        m = _USER_ROUTE.match(path)
        if m:
            if method == "GET":
                return json_response(200, user_to_json(self.service.get_user(m.group(1))))
            if method == "DELETE":
                return json_response(200, user_to_json(self.service.deactivate_user(m.group(1))))
            return error_response(405, "method_not_allowed", f"{method} {path}")
        if path == "/api/logs":
            if method != "GET":
                return error_response(405, "method_not_allowed", f"{method} {path}")
            return self._logs(request)
        return error_response(404, "not_found", f"no route for {path}")

    # -- boot-time endpoints -------------------------------------------------

    def _script_response(self, script: bootscript.Script) -> HttpResponse:
        return text_response(200, bootscript.render_script(script), SCRIPT_CONTENT_TYPE)

    def _auth(self, request: HttpRequest) -> HttpResponse:
        fields = request.form()
        script = self.service.authenticate_and_issue(
            fields.get("username", ""),
            fields.get("password", ""),
            fields.get("mac", ""),
            request.client_ip,
        )
        return self._script_response(script)

    def _serve_file(self, request: HttpRequest, os_id: str, filename: str) -> HttpResponse:
        byte_range = None
        range_header = request.header("range")
        if range_header:
            m = _RANGE.match(range_header.strip())
            if m:  # unrecognized forms fall back to the whole file
                start = int(m.group(1))
                end = int(m.group(2)) if m.group(2) else None
                byte_range = (start, end)
        if byte_range is None:
            body, total, digest = self.service.serve_file(os_id, filename)
            return HttpResponse(
                200,
                [
                    ("Content-Type", "application/octet-stream"),
                    ("X-Artifact-Digest", digest),
                ],
                body,
            )
        start, end = byte_range
        if end is None:
            _, total, _ = self.service.serve_file(os_id, filename)
            end = total - 1
        body, total, digest = self.service.serve_file(os_id, filename, (start, end))
        return HttpResponse(
            206,
            [
                ("Content-Type", "application/octet-stream"),
                ("Content-Range", f"bytes {start}-{start + len(body) - 1}/{total}"),
                ("X-Artifact-Digest", digest),
            ],
            body,
        )

    # -- admin helpers -------------------------------------------------------

    def _json_body(self, request: HttpRequest) -> dict:
        if not request.body:
            return {}
        try:
            parsed = json.loads(request.body)
        except ValueError as exc:
            raise svc.Validation(f"request body is not JSON: {exc}") from exc
        if not isinstance(parsed, dict):
            raise svc.Validation("request body must be a JSON object")
        return parsed

    def _os_json(self, status: int, os_id: str) -> HttpResponse:
        definition = self.service.get_os(os_id)
        return json_response(status, os_to_json(definition, self.service.list_files(os_id)))

    def _logs(self, request: HttpRequest) -> HttpResponse:
        q = request.query
        success: bool | None = None
        if "success" in q:
            if q["success"] not in ("true", "false"):
                raise svc.Validation("success filter must be true or false")
            success = q["success"] == "true"
        try:
            page = int(q.get("page", "0"))
        except ValueError as exc:
            raise svc.Validation("page must be an integer") from exc
        entries = self.service.list_auth_log(
            username=q.get("username"), mac=q.get("mac"), success=success, page=page
        )
        return json_response(200, [log_to_json(e) for e in entries])

    # -- static assets -------------------------------------------------------

    def _static(self, path: str) -> HttpResponse:
        if self.static_dir is None:
            return error_response(404, "not_found", "no admin assets installed")
        rel = path.removeprefix("/admin").lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        root = self.static_dir.resolve()
        if root not in target.parents and target != root:
            return error_response(404, "not_found", "no such asset")
        if not target.is_file():
            return error_response(404, "not_found", f"no asset {rel!r}")
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        return HttpResponse(200, [("Content-Type", ctype)], target.read_bytes())
