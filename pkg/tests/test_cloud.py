"""Control-plane service and HTTP API tests."""

import hashlib
import itertools
import json
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdboot import bootscript
from sdboot.cloud import (
    BadRange,
    BadTemplate,
    CloudApi,
    CloudService,
    DuplicateName,
    DuplicateUser,
    EmptyFile,
    NoSuchOs,
    NotFound,
    Store,
    StoreCorruption,
    Validation,
    derive_os_id,
)
from sdboot.cloud.service import (
    FAILURE_BAD_PASSWORD,
    FAILURE_DEACTIVATED,
    FAILURE_NO_SUCH_USER,
)
from sdboot.wire.http import HttpRequest

FAST_KDF = 2**4  # keep scrypt cheap in tests; production default is 2**14

TEMPLATE = """#!ipxe
echo Starting assigned system
kernel {{base_url}}/files/{{os_id}}/vmlinuz console=tty0
initrd {{base_url}}/files/{{os_id}}/core.gz
boot
"""


def make_service(tmp_path, subdir="store"):
    counter = itertools.count(1000)
    return CloudService(
        Store(tmp_path / subdir),
        base_url="http://boot.cloud.example",
        scrypt_n=FAST_KDF,
        now_fn=lambda: float(next(counter)),
        rng=random.Random(99),
    )


@pytest.fixture
def service(tmp_path):
    return make_service(tmp_path)


@pytest.fixture
def seeded(service):
    os_id = service.create_os("TinyCore", TEMPLATE, kernel_params="quiet")
    service.upload_file(os_id, "vmlinuz", b"\x7fELFkernel" * 100)
    service.upload_file(os_id, "core.gz", b"\x1f\x8binitrd" * 200)
    service.create_user("alice", "correct-horse", os_id)
    return service, os_id


class TestOsDefinitions:
    def test_create_and_get(self, service):
        os_id = service.create_os("TinyCore", TEMPLATE, "quiet")
        assert os_id == derive_os_id("TinyCore")
        definition = service.get_os(os_id)
        assert definition.name == "TinyCore"
        assert definition.kernel_params == "quiet"
        assert definition.boot_template == TEMPLATE

    def test_bad_template_rejected(self, service):
        with pytest.raises(BadTemplate):
            service.create_os("Broken", "#!ipxe\nfrobnicate now\n")

    def test_template_without_shebang_rejected(self, service):
        with pytest.raises(BadTemplate):
            service.create_os("NoShebang", "echo hi\n")

    def test_duplicate_name(self, service):
        service.create_os("TinyCore", TEMPLATE)
        with pytest.raises(DuplicateName):
            service.create_os("TinyCore", TEMPLATE)

    def test_empty_name(self, service):
        with pytest.raises(Validation):
            service.create_os("   ", TEMPLATE)

    def test_list_sorted_by_name(self, service):
        service.create_os("Zephyr", TEMPLATE)
        service.create_os("Alpine", TEMPLATE)
        assert [d.name for d in service.list_os()] == ["Alpine", "Zephyr"]


class TestFiles:
    def test_upload_and_serve(self, seeded):
        service, os_id = seeded
        data = b"\x7fELFkernel" * 100
        body, total, digest = service.serve_file(os_id, "vmlinuz")
        assert body == data
        assert total == len(data)
        assert digest == hashlib.sha256(data).hexdigest()

    def test_range_first_512(self, seeded):
        service, os_id = seeded
        body, total, digest = service.serve_file(os_id, "vmlinuz", (0, 511))
        assert body == (b"\x7fELFkernel" * 100)[:512]
        assert total == 1000
        # digest still covers the whole file, not the slice
        assert digest == hashlib.sha256(b"\x7fELFkernel" * 100).hexdigest()

    def test_range_beyond_end(self, seeded):
        service, os_id = seeded
        with pytest.raises(BadRange):
            service.serve_file(os_id, "vmlinuz", (5000, 6000))

    def test_missing_file(self, seeded):
        service, os_id = seeded
        with pytest.raises(NotFound):
            service.serve_file(os_id, "nonexistent")

    def test_empty_upload_rejected(self, seeded):
        service, os_id = seeded
        with pytest.raises(EmptyFile):
            service.upload_file(os_id, "empty.img", b"")

    def test_upload_to_unknown_os(self, service):
        with pytest.raises(NoSuchOs):
            service.upload_file("os-doesnotexist", "vmlinuz", b"data")

    def test_reupload_replaces(self, seeded):
        service, os_id = seeded
        digest = service.upload_file(os_id, "vmlinuz", b"new contents")
        body, total, served = service.serve_file(os_id, "vmlinuz")
        assert body == b"new contents"
        assert served == digest == hashlib.sha256(b"new contents").hexdigest()
        files = {f.filename: f for f in service.list_files(os_id)}
        assert files["vmlinuz"].size == len(b"new contents")

    def test_path_escape_rejected(self, seeded):
        service, os_id = seeded
        for name in ("../evil", "a/b", ".hidden", ""):
            with pytest.raises(Validation):
                service.upload_file(os_id, name, b"data")


class TestUsers:
    def test_create_and_duplicate(self, seeded):
        service, os_id = seeded
        with pytest.raises(DuplicateUser):
            service.create_user("alice", "other", os_id)

    def test_deactivate_keeps_row(self, seeded):
        service, _ = seeded
        user = service.deactivate_user("alice")
        assert user.active is False
        assert service.get_user("alice").active is False

    def test_assign_os(self, seeded):
        service, _ = seeded
        other = service.create_os("Alpine", TEMPLATE)
        assert service.assign_os("alice", other).assigned_os == other

    def test_assign_unknown_os(self, seeded):
        service, _ = seeded
        with pytest.raises(NoSuchOs):
            service.assign_os("alice", "os-bogus")

    def test_create_with_unknown_os(self, service):
        with pytest.raises(NoSuchOs):
            service.create_user("bob", "pw", "os-bogus")


class TestBootEntry:
    def test_chain_carries_credentials_and_mac(self, service):
        script = service.boot_entry()
        chain = [s for s in script.statements if isinstance(s, bootscript.Chain)]
        assert len(chain) == 1
        assert "username=${username}" in chain[0].url
        assert "mac=${net0/mac}" in chain[0].url

    def test_renders_and_reparses(self, service):
        text = bootscript.render_script(service.boot_entry())
        reparsed = bootscript.parse_script(text)
        assert reparsed == service.boot_entry()

    def test_stateless(self, service):
        assert service.boot_entry() == service.boot_entry()


class TestAuthenticate:
    def test_success_issues_assigned_os(self, seeded):
        service, os_id = seeded
        script = service.authenticate_and_issue(
            "alice", "correct-horse", "52:54:00:12:34:56", "10.0.50.100"
        )
        urls = script.urls()
        assert f"http://boot.cloud.example/files/{os_id}/vmlinuz" in urls
        assert f"http://boot.cloud.example/files/{os_id}/core.gz" in urls
        assert isinstance(script.statements[-1], bootscript.Boot)
        (entry,) = service.list_auth_log()
        assert entry.success is True
        assert entry.failure_reason is None
        assert entry.mac == "52:54:00:12:34:56"
        assert entry.client_ip == "10.0.50.100"

    def test_kernel_params_appended(self, seeded):
        service, _ = seeded
        script = service.authenticate_and_issue(
            "alice", "correct-horse", "52:54:00:12:34:56", "10.0.50.100"
        )
        (kernel,) = [s for s in script.statements if isinstance(s, bootscript.Kernel)]
        assert kernel.params == "console=tty0 quiet"

    def test_wrong_password_logged(self, seeded):
        service, _ = seeded
        script = service.authenticate_and_issue(
            "alice", "wrong", "52:54:00:12:34:56", "10.0.50.100"
        )
        assert any(
            isinstance(s, bootscript.Chain) and s.url.endswith("/boot")
            for s in script.statements
        )
        (entry,) = service.list_auth_log()
        assert entry.success is False
        assert entry.failure_reason == FAILURE_BAD_PASSWORD
        assert entry.mac == "52:54:00:12:34:56"

    def test_unknown_user_logged(self, seeded):
        service, _ = seeded
        service.authenticate_and_issue("mallory", "guess", "aa:bb:cc:dd:ee:ff", "1.2.3.4")
        (entry,) = service.list_auth_log()
        assert entry.failure_reason == FAILURE_NO_SUCH_USER

    def test_deactivated_user(self, seeded):
        service, _ = seeded
        service.deactivate_user("alice")
        service.authenticate_and_issue(
            "alice", "correct-horse", "52:54:00:12:34:56", "10.0.50.100"
        )
        (entry,) = service.list_auth_log()
        assert entry.failure_reason == FAILURE_DEACTIVATED

    def test_failure_scripts_identical(self, seeded):
        """A caller must not be able to tell NoSuchUser from BadPassword."""
        service, _ = seeded
        bad_pw = service.authenticate_and_issue("alice", "wrong", "m", "ip")
        no_user = service.authenticate_and_issue("nobody", "wrong", "m", "ip")
        assert bootscript.render_script(bad_pw) == bootscript.render_script(no_user)

    def test_kdf_work_uniform_across_failure_paths(self, seeded):
        service, _ = seeded
        before = service.kdf_invocations
        service.authenticate_and_issue("alice", "wrong", "m", "ip")
        bad_pw_cost = service.kdf_invocations - before
        before = service.kdf_invocations
        service.authenticate_and_issue("ghost", "wrong", "m", "ip")
        no_user_cost = service.kdf_invocations - before
        before = service.kdf_invocations
        service.authenticate_and_issue("alice", "correct-horse", "m", "ip")
        success_cost = service.kdf_invocations - before
        assert bad_pw_cost == no_user_cost == success_cost == 1

    def test_junk_mac_kept_verbatim(self, seeded):
        service, _ = seeded
        service.authenticate_and_issue("alice", "wrong", "not-a-mac!!", "ip")
        (entry,) = service.list_auth_log()
        assert entry.mac == "not-a-mac!!"


class TestAuthLog:
    def test_newest_first(self, seeded):
        service, _ = seeded
        service.authenticate_and_issue("alice", "correct-horse", "m1", "ip")
        service.authenticate_and_issue("alice", "wrong", "m2", "ip")
        entries = service.list_auth_log()
        assert [e.mac for e in entries] == ["m2", "m1"]

    def test_filter_success(self, seeded):
        service, _ = seeded
        service.authenticate_and_issue("alice", "correct-horse", "m1", "ip")
        service.authenticate_and_issue("alice", "wrong", "m2", "ip")
        failures = service.list_auth_log(success=False)
        assert len(failures) == 1 and failures[0].mac == "m2"

    def test_filter_username_and_mac(self, seeded):
        service, _ = seeded
        service.authenticate_and_issue("alice", "wrong", "m1", "ip")
        service.authenticate_and_issue("bob", "wrong", "m2", "ip")
        assert all(e.username == "bob" for e in service.list_auth_log(username="bob"))
        assert all(e.mac == "m1" for e in service.list_auth_log(mac="m1"))

    def test_empty_store(self, service):
        assert service.list_auth_log() == []

    def test_pagination_stable(self, seeded):
        service, _ = seeded
        for i in range(7):
            service.authenticate_and_issue("alice", "wrong", f"mac-{i}", "ip")
        page0 = service.list_auth_log(page=0, page_size=3)
        page1 = service.list_auth_log(page=1, page_size=3)
        page2 = service.list_auth_log(page=2, page_size=3)
        ids = [e.id for e in page0 + page1 + page2]
        assert ids == sorted(ids, reverse=True)
        assert len(ids) == 7

    def test_log_completeness_concurrent(self, seeded):
        service, _ = seeded
        per_thread, n_threads = 25, 8

        def hammer(tag):
            for i in range(per_thread):
                service.authenticate_and_issue(f"user-{tag}", "pw", f"mac-{tag}-{i}", "ip")

        threads = [threading.Thread(target=hammer, args=(t,)) for t in range(n_threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert service.auth_log_count() == per_thread * n_threads


class TestDurability:
    def test_restart_preserves_everything(self, tmp_path):
        service = make_service(tmp_path)
        os_id = service.create_os("TinyCore", TEMPLATE, "quiet")
        digest = service.upload_file(os_id, "vmlinuz", b"kernel bytes")
        service.create_user("alice", "pw", os_id)
        service.authenticate_and_issue("alice", "pw", "m", "ip")
        service.authenticate_and_issue("alice", "bad", "m", "ip")
        service.store.close()

        reopened = make_service(tmp_path)  # same directory, fresh process state
        assert reopened.get_os(os_id).name == "TinyCore"
        assert reopened.get_user("alice").assigned_os == os_id
        assert reopened.auth_log_count() == 2
        body, _, served_digest = reopened.serve_file(os_id, "vmlinuz")
        assert served_digest == digest == hashlib.sha256(body).hexdigest()
        # the password still verifies against the stored digest
        script = reopened.authenticate_and_issue("alice", "pw", "m", "ip")
        assert isinstance(script.statements[-1], bootscript.Boot)

    def test_corrupt_database_detected(self, tmp_path):
        store = Store(tmp_path / "store")
        store.close()
        db_file = tmp_path / "store" / "metadata.sqlite3"
        db_file.write_bytes(b"SQLite format 3\x00" + b"\xff" * 4096)
        with pytest.raises(StoreCorruption):
            Store(tmp_path / "store")

    def test_no_plaintext_passwords_anywhere(self, tmp_path):
        secret = b"hunter2-very-secret"
        service = make_service(tmp_path)
        os_id = service.create_os("TinyCore", TEMPLATE)
        service.create_user("alice", secret.decode(), os_id)
        service.authenticate_and_issue("alice", secret.decode(), "m", "ip")
        service.authenticate_and_issue("alice", "wrong-guess-xyz", "m", "ip")
        service.store.close()
        hits = []
        for path in (tmp_path / "store").rglob("*"):
            if path.is_file() and secret in path.read_bytes():
                hits.append(path)
            if path.is_file() and b"wrong-guess-xyz" in path.read_bytes():
                hits.append(path)
        assert hits == []


@settings(max_examples=40, deadline=None)
@given(
    assignments=st.lists(
        st.tuples(st.integers(0, 4), st.integers(0, 2)), min_size=1, max_size=8
    ),
    attempts=st.lists(
        st.tuples(st.integers(0, 5), st.booleans()), min_size=1, max_size=12
    ),
)
def test_issued_scripts_never_cross_os_boundaries(tmp_path_factory, assignments, attempts):
    """No sequence of user/OS assignments and auth attempts can produce a
    success script referencing another OS's files."""
    tmp = tmp_path_factory.mktemp("authz")
    service = make_service(tmp)
    os_ids = [service.create_os(f"OS-{i}", TEMPLATE) for i in range(3)]
    users = {}
    for user_idx, os_idx in assignments:
        name = f"user-{user_idx}"
        if name in users:
            service.assign_os(name, os_ids[os_idx])
        else:
            service.create_user(name, f"pw-{user_idx}", os_ids[os_idx])
        users[name] = os_ids[os_idx]
    for user_idx, correct in attempts:
        name = f"user-{user_idx}"
        password = f"pw-{user_idx}" if correct else "bad"
        script = service.authenticate_and_issue(name, password, "m", "ip")
        if name in users and correct:
            expected = users[name]
            for url in script.urls():
                if "/files/" in url:
                    assert f"/files/{expected}/" in url
        else:
            assert not any(isinstance(s, bootscript.Boot) for s in script.statements)


# -- HTTP layer --------------------------------------------------------------

TOKEN = "test-admin-token"


@pytest.fixture
def api(tmp_path):
    return CloudApi(make_service(tmp_path), admin_token=TOKEN)


def admin_req(method, target, body=b"", extra=()):
    headers = [("Authorization", f"Bearer {TOKEN}"), *extra]
    if isinstance(body, dict):
        body = json.dumps(body).encode()
        headers.append(("Content-Type", "application/json"))
    return HttpRequest(method, target, headers, body)


class TestApi:
    def test_users_without_token(self, api):
        resp = api.handle(HttpRequest("GET", "/api/users"))
        assert resp.status == 401
        assert json.loads(resp.body)["error"] == "unauthorized"

    def test_wrong_token(self, api):
        resp = api.handle(
            HttpRequest("GET", "/api/users", [("Authorization", "Bearer nope")])
        )
        assert resp.status == 401

    def test_create_then_list_os(self, api):
        resp = api.handle(
            admin_req("POST", "/api/os", {"name": "TinyCore", "boot_template": TEMPLATE})
        )
        assert resp.status == 201
        created = json.loads(resp.body)
        assert created["name"] == "TinyCore"
        listing = json.loads(api.handle(admin_req("GET", "/api/os")).body)
        assert [o["os_id"] for o in listing] == [created["os_id"]]

    def test_create_os_bad_template(self, api):
        resp = api.handle(
            admin_req("POST", "/api/os", {"name": "X", "boot_template": "nope"})
        )
        assert resp.status == 400
        assert json.loads(resp.body)["error"] == "bad_template"

    def test_upload_and_fetch_file(self, api):
        created = json.loads(
            api.handle(
                admin_req("POST", "/api/os", {"name": "TinyCore", "boot_template": TEMPLATE})
            ).body
        )
        os_id = created["os_id"]
        data = b"kernel-image-bytes" * 64
        up = api.handle(admin_req("POST", f"/api/os/{os_id}/files?filename=vmlinuz", data))
        assert up.status == 201
        uploaded = json.loads(up.body)
        assert uploaded == {
            "filename": "vmlinuz",
            "size": len(data),
            "digest": hashlib.sha256(data).hexdigest(),
        }
        # boot-time fetch needs no token
        got = api.handle(HttpRequest("GET", f"/files/{os_id}/vmlinuz"))
        assert got.status == 200
        assert got.body == data
        assert got.header("X-Artifact-Digest") == uploaded["digest"]

    def test_range_request(self, api):
        created = json.loads(
            api.handle(
                admin_req("POST", "/api/os", {"name": "TinyCore", "boot_template": TEMPLATE})
            ).body
        )
        os_id = created["os_id"]
        data = bytes(range(256)) * 8
        api.handle(admin_req("POST", f"/api/os/{os_id}/files?filename=img", data))
        got = api.handle(
            HttpRequest("GET", f"/files/{os_id}/img", [("Range", "bytes=0-511")])
        )
        assert got.status == 206
        assert got.body == data[:512]
        assert got.header("Content-Range") == f"bytes 0-511/{len(data)}"
        assert got.header("X-Artifact-Digest") == hashlib.sha256(data).hexdigest()
        tail = api.handle(
            HttpRequest("GET", f"/files/{os_id}/img", [("Range", "bytes=2000-")])
        )
        assert tail.status == 206
        assert tail.body == data[2000:]

    def test_unsatisfiable_range(self, api):
        created = json.loads(
            api.handle(
                admin_req("POST", "/api/os", {"name": "T", "boot_template": TEMPLATE})
            ).body
        )
        os_id = created["os_id"]
        api.handle(admin_req("POST", f"/api/os/{os_id}/files?filename=f", b"x" * 10))
        got = api.handle(
            HttpRequest("GET", f"/files/{os_id}/f", [("Range", "bytes=50-60")])
        )
        assert got.status == 416

    def test_boot_script_endpoint(self, api):
        resp = api.handle(HttpRequest("GET", "/boot"))
        assert resp.status == 200
        script = bootscript.parse_script(resp.body.decode())
        assert any(isinstance(s, bootscript.Login) for s in script.statements)

    def test_auth_endpoint_records_client_ip(self, api):
        created = json.loads(
            api.handle(
                admin_req("POST", "/api/os", {"name": "T", "boot_template": TEMPLATE})
            ).body
        )
        api.handle(
            admin_req(
                "POST",
                "/api/users",
                {"username": "alice", "password": "pw", "os_id": created["os_id"]},
            )
        )
        req = HttpRequest(
            "GET", "/auth?username=alice&password=pw&mac=52%3A54%3A00%3A01%3A02%3A03"
        )
        req.client_ip = "192.0.2.55"
        resp = api.handle(req)
        assert resp.status == 200
        bootscript.parse_script(resp.body.decode())
        logs = json.loads(api.handle(admin_req("GET", "/api/logs")).body)
        assert logs[0]["client_ip"] == "192.0.2.55"
        assert logs[0]["mac"] == "52:54:00:01:02:03"
        assert logs[0]["success"] is True

    def test_logs_filter_mirrors_service(self, api):
        created = json.loads(
            api.handle(
                admin_req("POST", "/api/os", {"name": "T", "boot_template": TEMPLATE})
            ).body
        )
        api.handle(
            admin_req(
                "POST",
                "/api/users",
                {"username": "alice", "password": "pw", "os_id": created["os_id"]},
            )
        )
        api.handle(HttpRequest("GET", "/auth?username=alice&password=pw&mac=m"))
        api.handle(HttpRequest("GET", "/auth?username=alice&password=no&mac=m"))
        failures = json.loads(api.handle(admin_req("GET", "/api/logs?success=false")).body)
        assert len(failures) == 1
        assert failures[0]["failure_reason"] == "BadPassword"
        mirror = api.service.list_auth_log(success=False)
        assert [e.id for e in mirror] == [f["id"] for f in failures]

    def test_user_lifecycle_over_http(self, api):
        created = json.loads(
            api.handle(
                admin_req("POST", "/api/os", {"name": "T", "boot_template": TEMPLATE})
            ).body
        )
        other = json.loads(
            api.handle(
                admin_req("POST", "/api/os", {"name": "U", "boot_template": TEMPLATE})
            ).body
        )
        api.handle(
            admin_req(
                "POST",
                "/api/users",
                {"username": "bob", "password": "pw", "os_id": created["os_id"]},
            )
        )
        moved = json.loads(
            api.handle(
                admin_req("PUT", "/api/users/bob/os", {"os_id": other["os_id"]})
            ).body
        )
        assert moved["assigned_os"] == other["os_id"]
        gone = json.loads(api.handle(admin_req("DELETE", "/api/users/bob")).body)
        assert gone["active"] is False
        listing = json.loads(api.handle(admin_req("GET", "/api/users")).body)
        assert listing[0] == {
            "username": "bob",
            "assigned_os": other["os_id"],
            "active": False,
            "created_at": listing[0]["created_at"],
        }

    def test_unknown_route(self, api):
        assert api.handle(HttpRequest("GET", "/nope")).status == 404
        assert api.handle(admin_req("GET", "/api/nope")).status == 404

    def test_method_not_allowed(self, api):
        assert api.handle(admin_req("DELETE", "/api/os")).status == 405

    def test_duplicate_os_conflict(self, api):
        api.handle(admin_req("POST", "/api/os", {"name": "T", "boot_template": TEMPLATE}))
        resp = api.handle(
            admin_req("POST", "/api/os", {"name": "T", "boot_template": TEMPLATE})
        )
        assert resp.status == 409

    def test_malformed_json_body(self, api):
        resp = api.handle(admin_req("POST", "/api/os", b"{not json"))
        assert resp.status == 400
        assert json.loads(resp.body)["error"] == "validation"

    def test_static_without_assets(self, api):
        assert api.handle(HttpRequest("GET", "/admin")).status == 404

    def test_static_serving(self, tmp_path):
        assets = tmp_path / "assets"
        assets.mkdir()
        (assets / "index.html").write_text("<h1>console</h1>")
        (assets / "app.js").write_text("console.log(1)")
        api = CloudApi(make_service(tmp_path), admin_token=TOKEN, static_dir=assets)
        index = api.handle(HttpRequest("GET", "/admin"))
        assert index.status == 200
        assert b"console" in index.body
        js = api.handle(HttpRequest("GET", "/admin/app.js"))
        assert js.status == 200
        assert "javascript" in (js.header("Content-Type") or "")
        escape = api.handle(HttpRequest("GET", "/admin/../secret"))
        assert escape.status == 404
