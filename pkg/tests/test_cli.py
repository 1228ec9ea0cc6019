"""Command dispatch, exit codes, and the admin client against a live control plane."""

import json

import pytest
import requests

from sdboot.cli import EXIT_MISMATCH, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from sdboot.live import LiveCloud

TOKEN = "cli-test-token"


def write_scenario(tmp_path, expect_state="Booted", name="cli-run"):
    doc = {
        "name": name,
        "seed": 2,
        "oses": [
            {"name": "Tiny Core Linux", "files": [
                {"filename": "vmlinuz", "size": 4096},
                {"filename": "core.gz", "size": 8192},
            ]},
        ],
        "users": [{"username": "theo", "password": "pw", "os": "Tiny Core Linux"}],
        "clients": [
            {"name": "pc1", "mac": "52:54:00:01:00:01", "logins": [["theo", "pw"]]},
        ],
        "expect": {"pc1": {"state": expect_state}},
    }
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return path


class TestSimulateCommand:
    def test_list_bundled(self, capsys):
        assert main(["simulate", "--list"]) == EXIT_OK
        assert "enterprise-demo" in capsys.readouterr().out

    def test_run_to_success(self, tmp_path, capsys):
        path = write_scenario(tmp_path)
        code = main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "pc1: Booted" in out
        assert (tmp_path / "out" / "report.json").exists()

    def test_json_report(self, tmp_path, capsys):
        path = write_scenario(tmp_path)
        code = main([
            "simulate", "--scenario", str(path), "--out", str(tmp_path / "out"), "--json",
        ])
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["schema_version"] == 1
        assert report["ok"] is True

    def test_expectation_mismatch_exits_one(self, tmp_path, capsys):
        path = write_scenario(tmp_path, expect_state="Failed")
        code = main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_MISMATCH
        assert "MISMATCH" in capsys.readouterr().out

    def test_invalid_scenario_exits_two(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"name": "x"}')
        assert main(["simulate", "--scenario", str(path)]) == EXIT_USAGE

    def test_no_scenario_exits_two(self, capsys):
        assert main(["simulate"]) == EXIT_USAGE

    def test_seed_env_fallback(self, tmp_path, capsys, monkeypatch):
        path = write_scenario(tmp_path)
        monkeypatch.setenv("SDBOOT_SEED", "9")
        code = main([
            "simulate", "--scenario", str(path), "--out", str(tmp_path / "out"), "--json",
        ])
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["seed"] == 9

    def test_unknown_command_exits_two(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE


@pytest.fixture
def cloud(tmp_path):
    live = LiveCloud(
        store_root=tmp_path / "store",
        base_url="http://127.0.0.1:0",
        admin_token=TOKEN,
        port=0,
        bind_ip="127.0.0.1",
        scrypt_n=2**4,
    )
    live.start()
    yield live
    live.close()


@pytest.fixture
def admin_env(cloud, monkeypatch):
    monkeypatch.setenv("SDBOOT_CLOUD_URL", f"http://127.0.0.1:{cloud.port}")
    monkeypatch.setenv("SDBOOT_TOKEN", TOKEN)
    return cloud


class TestAdminCommand:
    def test_os_create_and_upload_and_list(self, admin_env, tmp_path, capsys):
        assert main(["admin", "--json", "os", "create", "Tiny Core Linux"]) == EXIT_OK
        created = json.loads(capsys.readouterr().out)
        assert created["name"] == "Tiny Core Linux"
        os_id = created["os_id"]

        kernel = tmp_path / "vmlinuz"
        kernel.write_bytes(b"K" * 4096)
        assert main(["admin", "os", "upload", os_id, "vmlinuz", str(kernel)]) == EXIT_OK
        assert "uploaded vmlinuz" in capsys.readouterr().out

        assert main(["admin", "os", "list"]) == EXIT_OK
        assert "Tiny Core Linux" in capsys.readouterr().out

    def test_user_create_echoes_record(self, admin_env, capsys):
        main(["admin", "--json", "os", "create", "Alpine Linux"])
        os_id = json.loads(capsys.readouterr().out)["os_id"]
        code = main(["admin", "--json", "user", "create", "mira", "pw-9", "--os", os_id])
        assert code == EXIT_OK
        record = json.loads(capsys.readouterr().out)
        assert record["username"] == "mira"
        assert record["assigned_os"] == os_id
        assert record["active"] is True
        assert "password" not in record

    def test_duplicate_user_fails_cleanly(self, admin_env, capsys):
        main(["admin", "--json", "os", "create", "Kolibri OS"])
        os_id = json.loads(capsys.readouterr().out)["os_id"]
        main(["admin", "user", "create", "mira", "pw", "--os", os_id])
        capsys.readouterr()
        assert main(["admin", "user", "create", "mira", "pw", "--os", os_id]) == EXIT_USAGE
        assert "already exists" in capsys.readouterr().err

    def test_deactivate_then_show(self, admin_env, capsys):
        main(["admin", "--json", "os", "create", "Kolibri OS"])
        os_id = json.loads(capsys.readouterr().out)["os_id"]
        main(["admin", "user", "create", "theo", "pw", "--os", os_id])
        capsys.readouterr()
        assert main(["admin", "user", "deactivate", "theo"]) == EXIT_OK
        assert "deactivated" in capsys.readouterr().out
        assert main(["admin", "--json", "user", "show", "theo"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["active"] is False

    def test_logs_failed_filter(self, admin_env, capsys):
        base = f"http://127.0.0.1:{admin_env.port}"
        requests.post(
            f"{base}/auth",
            data={"username": "ghost", "password": "x", "mac": "52:54:00:00:00:09"},
        )
        assert main(["admin", "--json", "logs", "--failed"]) == EXIT_OK
        entries = json.loads(capsys.readouterr().out)
        assert len(entries) == 1
        assert entries[0]["success"] is False
        assert entries[0]["mac"] == "52:54:00:00:00:09"

    def test_missing_token_is_unauthorized(self, cloud, capsys, monkeypatch):
        monkeypatch.setenv("SDBOOT_CLOUD_URL", f"http://127.0.0.1:{cloud.port}")
        monkeypatch.delenv("SDBOOT_TOKEN", raising=False)
        assert main(["admin", "user", "list"]) == EXIT_RUNTIME
        assert "unauthorized" in capsys.readouterr().err

    def test_unknown_user_show_exits_one(self, admin_env, capsys):
        assert main(["admin", "user", "show", "nobody"]) == EXIT_MISMATCH

    def test_unreachable_control_plane(self, capsys, monkeypatch):
        monkeypatch.setenv("SDBOOT_CLOUD_URL", "http://127.0.0.1:1")
        monkeypatch.setenv("SDBOOT_TOKEN", TOKEN)
        assert main(["admin", "user", "list"]) == EXIT_RUNTIME
        assert "cannot reach" in capsys.readouterr().err


class TestCloudCommand:
    def test_missing_store_exits_two(self, capsys, monkeypatch):
        monkeypatch.delenv("SDBOOT_TOKEN", raising=False)
        assert main(["cloud", "--token", "t"]) == EXIT_USAGE

    def test_missing_token_exits_two(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("SDBOOT_TOKEN", raising=False)
        assert main(["cloud", "--store", str(tmp_path / "s")]) == EXIT_USAGE

    def test_corrupt_store_exits_three(self, tmp_path, capsys):
        root = tmp_path / "store"
        root.mkdir()
        (root / "metadata.sqlite3").write_bytes(b"garbage")
        code = main(["cloud", "--store", str(root), "--token", "t", "--port", "0"])
        assert code == EXIT_RUNTIME
        assert "store refused" in capsys.readouterr().err


class TestGatewayCommand:
    def test_bad_config_exits_two(self, tmp_path, capsys):
        path = tmp_path / "gw.json"
        path.write_text('{"unknown_knob": true}')
        assert main(["gateway", "--config", str(path)]) == EXIT_USAGE

    def test_unreadable_config_exits_three(self, tmp_path, capsys):
        assert main(["gateway", "--config", str(tmp_path / "absent.json")]) == EXIT_RUNTIME
