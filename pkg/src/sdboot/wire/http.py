"""Tiny HTTP/1.0-style message codec.

One request and one response per connection, Content-Length framing only.
The same parser backs both the in-simulation byte-stream transport and the
live TCP listener, which keeps the two modes on one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import parse_qs, urlsplit

MAX_HEAD_BYTES = 64 * 1024
MAX_BODY_BYTES = 256 * 1024 * 1024

STATUS_REASONS = {
    200: "OK",
    204: "No Content",
    206: "Partial Content",
    302: "Found",
    400: "Bad Request",
    401: "Unauthorized",
    404: "Not Found",
    405: "Method Not Allowed",
    409: "Conflict",
    413: "Payload Too Large",
    416: "Range Not Satisfiable",
    500: "Internal Server Error",
}


class HttpCodecError(ValueError):
    pass


@dataclass
class HttpRequest:
    method: str
    target: str  # path plus optional query string
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""
    client_ip: str = ""  # filled in by the transport, not on the wire

    @property
    def path(self) -> str:
        return urlsplit(self.target).path

    @property
    def query(self) -> dict[str, str]:
        return {k: v[0] for k, v in parse_qs(urlsplit(self.target).query).items()}

    def header(self, name: str) -> str | None:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None

    def form(self) -> dict[str, str]:
        """Query parameters merged with an urlencoded body, body winning."""
        fields = dict(self.query)
        ctype = self.header("content-type") or ""
        if ctype.split(";")[0].strip() == "application/x-www-form-urlencoded":
            for k, v in parse_qs(self.body.decode("utf-8", "replace")).items():
                fields[k] = v[0]
        return fields

    def encode(self) -> bytes:
        headers = list(self.headers)
        if self.body and not any(k.lower() == "content-length" for k, _ in headers):
            headers.append(("Content-Length", str(len(self.body))))
        head = f"{self.method} {self.target} HTTP/1.0\r\n"
        head += "".join(f"{k}: {v}\r\n" for k, v in headers)
        return head.encode("latin-1") + b"\r\n" + self.body


@dataclass
class HttpResponse:
    status: int
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""

    def header(self, name: str) -> str | None:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None

    def encode(self) -> bytes:
        reason = STATUS_REASONS.get(self.status, "Unknown")
        headers = list(self.headers)
        if not any(k.lower() == "content-length" for k, _ in headers):
            headers.append(("Content-Length", str(len(self.body))))
        head = f"HTTP/1.0 {self.status} {reason}\r\n"
        head += "".join(f"{k}: {v}\r\n" for k, v in headers)
        return head.encode("latin-1") + b"\r\n" + self.body


def text_response(status: int, text: str, content_type: str = "text/plain; charset=utf-8") -> HttpResponse:
    return HttpResponse(status, [("Content-Type", content_type)], text.encode("utf-8"))


def decode_request(raw: bytes) -> HttpRequest:
    head, body = _split_head(raw)
    lines = head.split("\r\n")
    parts = lines[0].split(" ")
    if len(parts) != 3 or not parts[2].startswith("HTTP/"):
        raise HttpCodecError(f"bad request line: {lines[0]!r}")
    method, target, _version = parts
    headers = _parse_headers(lines[1:])
    length = _content_length(headers)
    if length > MAX_BODY_BYTES:
        raise HttpCodecError(f"declared body of {length} bytes exceeds the limit")
    if len(body) < length:
        raise HttpCodecError(f"body truncated: have {len(body)} of {length} bytes")
    return HttpRequest(method=method, target=target, headers=headers, body=body[:length])


def decode_response(raw: bytes) -> HttpResponse:
    head, body = _split_head(raw)
    lines = head.split("\r\n")
    parts = lines[0].split(" ", 2)
    if len(parts) < 2 or not parts[0].startswith("HTTP/"):
        raise HttpCodecError(f"bad status line: {lines[0]!r}")
    try:
        status = int(parts[1])
    except ValueError as exc:
        raise HttpCodecError(f"bad status code in {lines[0]!r}") from exc
    headers = _parse_headers(lines[1:])
    length = _content_length(headers)
    if len(body) < length:
        raise HttpCodecError(f"body truncated: have {len(body)} of {length} bytes")
    return HttpResponse(status=status, headers=headers, body=body[:length])


def _split_head(raw: bytes) -> tuple[str, bytes]:
    idx = raw.find(b"\r\n\r\n")
    if idx < 0 or idx > MAX_HEAD_BYTES:
        raise HttpCodecError("header terminator not found")
    return raw[:idx].decode("latin-1"), raw[idx + 4 :]


def _parse_headers(lines: list[str]) -> list[tuple[str, str]]:
    headers = []
    for line in lines:
        if not line:
            continue
        if ":" not in line:
            raise HttpCodecError(f"bad header line: {line!r}")
        key, value = line.split(":", 1)
        headers.append((key.strip(), value.strip()))
    return headers


def _content_length(headers: list[tuple[str, str]]) -> int:
    for key, value in headers:
        if key.lower() == "content-length":
            try:
                return int(value)
            except ValueError as exc:
                raise HttpCodecError(f"bad Content-Length: {value!r}") from exc
    return 0
