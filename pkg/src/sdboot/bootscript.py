"""The scripted-bootloader dialect spoken between gateway, control plane and
clients.

A script is a "#!ipxe" shebang followed by one statement per line, drawn from
a deliberately small vocabulary: echo, set, login, prompt, chain, kernel,
initrd, boot, menu, item, choose. Variables are written ${name}; values
substituted into URL positions are percent-encoded. Labels, goto and
conditionals are not part of the dialect.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from urllib.parse import quote

SHEBANG = "#!ipxe"

_VAR_RE = re.compile(r"\$\{([A-Za-z0-9_:./-]+)\}")
_VAR_NAME_RE = re.compile(r"^[A-Za-z0-9_:./-]+$")


class ScriptError(ValueError):
    """Base for script parse and substitution failures."""


class NoShebang(ScriptError):
    pass


class UnknownCommand(ScriptError):
    def __init__(self, line_no: int, word: str):
        super().__init__(f"line {line_no}: unknown command {word!r}")
        self.line_no = line_no


class MalformedArgs(ScriptError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class InvalidScript(ScriptError):
    pass


class UndefinedVariable(ScriptError):
    def __init__(self, name: str):
        super().__init__(f"undefined variable ${{{name}}}")
        self.name = name


@dataclass(frozen=True)
class Echo:
    text: str


@dataclass(frozen=True)
class Set:
    var: str
    value: str


@dataclass(frozen=True)
class Login:
    """Collects username and password into the variables of the same names."""


@dataclass(frozen=True)
class Prompt:
    var: str
    message: str
    masked: bool = False


@dataclass(frozen=True)
class Chain:
    url: str


@dataclass(frozen=True)
class Kernel:
    url: str
    params: str = ""


@dataclass(frozen=True)
class Initrd:
    url: str


@dataclass(frozen=True)
class Boot:
    pass


@dataclass(frozen=True)
class MenuStart:
    title: str


@dataclass(frozen=True)
class MenuItem:
    key: str
    label: str


@dataclass(frozen=True)
class Choose:
    var: str


Statement = (
    Echo | Set | Login | Prompt | Chain | Kernel | Initrd | Boot | MenuStart | MenuItem | Choose
)


@dataclass(frozen=True)
class Script:
    statements: tuple[Statement, ...]

    def validate(self) -> None:
        boot_at = None
        for i, stmt in enumerate(self.statements):
            if isinstance(stmt, Boot):
                if boot_at is not None:
                    raise InvalidScript("more than one boot statement")
                boot_at = i
        if boot_at is not None and boot_at != len(self.statements) - 1:
            raise InvalidScript("statements follow the boot statement")
        # kernel/initrd ordering is implied by "nothing follows boot", but a
        # script with neither is fine: portal and login scripts never boot

    def urls(self) -> list[str]:
        out = []
        for stmt in self.statements:
            if isinstance(stmt, (Chain, Kernel, Initrd)):
                out.append(stmt.url)
        return out


def parse_script(text: str) -> Script:
    lines = text.split("\n")
    if not lines or lines[0].strip() != SHEBANG:
        raise NoShebang(f"first line must be {SHEBANG!r}")
    statements: list[Statement] = []
    for line_no, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        word, _, rest = stripped.partition(" ")
        rest = rest.strip()
        statements.append(_parse_statement(line_no, word, rest))
    script = Script(tuple(statements))
    script.validate()
    return script


def _parse_statement(line_no: int, word: str, rest: str) -> Statement:
    if word == "echo":
        return Echo(rest)
    if word == "set":
        var, _, value = rest.partition(" ")
        if not var:
            raise MalformedArgs(line_no, "set needs a variable name")
        _check_var(line_no, var)
        return Set(var, value.strip())
    if word == "login":
        if rest:
            raise MalformedArgs(line_no, "login takes no arguments")
        return Login()
    if word == "prompt":
        masked = False
        if rest.startswith("--masked"):
            masked = True
            rest = rest[len("--masked") :].strip()
        var, _, message = rest.partition(" ")
        if not var:
            raise MalformedArgs(line_no, "prompt needs a variable name")
        _check_var(line_no, var)
        return Prompt(var, message.strip(), masked)
    if word == "chain":
        return Chain(_one_url(line_no, "chain", rest))
    if word == "kernel":
        url, _, params = rest.partition(" ")
        if not url:
            raise MalformedArgs(line_no, "kernel needs a URL")
        return Kernel(url, params.strip())
    if word == "initrd":
        return Initrd(_one_url(line_no, "initrd", rest))
    if word == "boot":
        if rest:
            raise MalformedArgs(line_no, "boot takes no arguments")
        return Boot()
    if word == "menu":
        if not rest:
            raise MalformedArgs(line_no, "menu needs a title")
        return MenuStart(rest)
    if word == "item":
        key, _, label = rest.partition(" ")
        if not key or not label.strip():
            raise MalformedArgs(line_no, "item needs a key and a label")
        return MenuItem(key, label.strip())
    if word == "choose":
        if not rest or " " in rest:
            raise MalformedArgs(line_no, "choose needs exactly one variable name")
        _check_var(line_no, rest)
        return Choose(rest)
    raise UnknownCommand(line_no, word)


def _one_url(line_no: int, word: str, rest: str) -> str:
    if not rest or " " in rest:
        raise MalformedArgs(line_no, f"{word} needs exactly one URL")
    return rest


def _check_var(line_no: int, name: str) -> None:
    if not _VAR_NAME_RE.match(name):
        raise MalformedArgs(line_no, f"bad variable name {name!r}")


def render_script(script: Script) -> str:
    script.validate()
    lines = [SHEBANG]
    for stmt in script.statements:
        lines.append(_render_statement(stmt))
    return "\n".join(lines) + "\n"


def _render_statement(stmt: Statement) -> str:
    if isinstance(stmt, Echo):
        return f"echo {stmt.text}".rstrip()
    if isinstance(stmt, Set):
        return f"set {stmt.var} {stmt.value}".rstrip()
    if isinstance(stmt, Login):
        return "login"
    if isinstance(stmt, Prompt):
        masked = "--masked " if stmt.masked else ""
        return f"prompt {masked}{stmt.var} {stmt.message}".rstrip()
    if isinstance(stmt, Chain):
        return f"chain {stmt.url}"
    if isinstance(stmt, Kernel):
        return f"kernel {stmt.url} {stmt.params}".rstrip()
    if isinstance(stmt, Initrd):
        return f"initrd {stmt.url}"
    if isinstance(stmt, Boot):
        return "boot"
    if isinstance(stmt, MenuStart):
        return f"menu {stmt.title}"
    if isinstance(stmt, MenuItem):
        return f"item {stmt.key} {stmt.label}"
    if isinstance(stmt, Choose):
        return f"choose {stmt.var}"
    raise TypeError(f"not a statement: {stmt!r}")


class VarEnv:
    """Variable bindings for substitution: client MAC, credentials, prompt
    answers. Lookups of unbound names raise UndefinedVariable."""

    def __init__(self, values: dict[str, str] | None = None):
        self.values: dict[str, str] = dict(values or {})

    def bind(self, name: str, value: str) -> None:
        self.values[name] = value

    def lookup(self, name: str) -> str:
        try:
            return self.values[name]
        except KeyError:
            raise UndefinedVariable(name) from None


def substitute_text(text: str, env: VarEnv, url_encode: bool) -> str:
    def repl(match: re.Match[str]) -> str:
        value = env.lookup(match.group(1))
        return quote(value, safe="") if url_encode else value

    return _VAR_RE.sub(repl, text)


def substitute(script: Script, env: VarEnv) -> Script:
    """Replace every ${var} placeholder. Values landing in URL positions are
    percent-encoded; free-text positions get the raw value."""
    out: list[Statement] = []
    for stmt in script.statements:
        if isinstance(stmt, Echo):
            out.append(Echo(substitute_text(stmt.text, env, url_encode=False)))
        elif isinstance(stmt, Set):
            out.append(Set(stmt.var, substitute_text(stmt.value, env, url_encode=False)))
        elif isinstance(stmt, Prompt):
            out.append(Prompt(stmt.var, substitute_text(stmt.message, env, url_encode=False), stmt.masked))
        elif isinstance(stmt, Chain):
            out.append(Chain(substitute_text(stmt.url, env, url_encode=True)))
        elif isinstance(stmt, Kernel):
            out.append(
                Kernel(
                    substitute_text(stmt.url, env, url_encode=True),
                    substitute_text(stmt.params, env, url_encode=False),
                )
            )
        elif isinstance(stmt, Initrd):
            out.append(Initrd(substitute_text(stmt.url, env, url_encode=True)))
        elif isinstance(stmt, MenuStart):
            out.append(MenuStart(substitute_text(stmt.title, env, url_encode=False)))
        elif isinstance(stmt, MenuItem):
            out.append(MenuItem(stmt.key, substitute_text(stmt.label, env, url_encode=False)))
        else:
            out.append(stmt)
    return Script(tuple(out))


def placeholders(script: Script) -> set[str]:
    names: set[str] = set()
    for line in render_script(script).split("\n"):
        names.update(_VAR_RE.findall(line))
    return names
