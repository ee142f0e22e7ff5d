"""Lifecycle CLI: state machine, exit codes, health gating, graceful drain."""

import json
import socket
import subprocess
import sys
import threading
import time

import httpx
import pytest

from taxon.artifact import serialize_pipeline
from taxon.pipeline import GridSearchSpec, grid_search
from synth import make_corpus

BASE_PORT = 18600


def _cli(*args, timeout=90):
    return subprocess.run(
        [sys.executable, "-m", "taxon.cli", *map(str, args)],
        capture_output=True,
        text=True,
        timeout=timeout,
    )


@pytest.fixture
def root(tmp_path):
    path = tmp_path / "taxon-home"
    yield path
    _cli("stop", "all", "--root", path)


def _ports(offset):
    return BASE_PORT + offset * 2, BASE_PORT + offset * 2 + 1


def _start(root, service, port, *extra):
    key = "train_port" if service == "train" else "classify_port"
    return _cli(
        "start", service, "--root", root,
        "--set", f"service.{key}={port}", "--timeout", 30, *extra,
    )


class TestStateMachine:
    def test_status_before_install_is_not_installed_exit_3(self, root):
        result = _cli("status", "train", "--root", root)
        assert result.returncode == 3
        assert "not-installed" in result.stdout

    def test_start_before_install_exit_3(self, root):
        assert _cli("start", "train", "--root", root).returncode == 3

    def test_stop_before_install_exit_3(self, root):
        assert _cli("stop", "train", "--root", root).returncode == 3

    def test_remove_before_install_exit_3(self, root):
        assert _cli("remove", "train", "--root", root).returncode == 3

    def test_install_reports_version_and_writes_bundle(self, root):
        result = _cli("install", "train", "--root", root)
        assert result.returncode == 0
        assert "installed version" in result.stdout
        assert (root / "train" / "MANIFEST.json").exists()
        assert (root / "train" / "config.ini").exists()
        assert (root / "train" / "data").is_dir()

    def test_install_twice_needs_force(self, root):
        _cli("install", "train", "--root", root)
        assert _cli("install", "train", "--root", root).returncode == 6
        assert _cli("install", "train", "--root", root, "--force").returncode == 0

    def test_stop_when_not_running_is_a_no_op(self, root):
        _cli("install", "train", "--root", root)
        result = _cli("stop", "train", "--root", root)
        assert result.returncode == 0
        assert "not running" in result.stdout

    def test_remove_preserves_data_unless_purged(self, root):
        _cli("install", "train", "--root", root)
        marker = root / "train" / "data" / "keep.json"
        marker.write_text("{}")
        assert _cli("remove", "train", "--root", root).returncode == 0
        assert marker.exists()
        assert not (root / "train" / "MANIFEST.json").exists()

        _cli("install", "train", "--root", root)
        assert _cli("remove", "train", "--root", root, "--purge").returncode == 0
        assert not (root / "train").exists()

    def test_usage_error_exit_2(self, root):
        assert _cli("start", "nonsense", "--root", root).returncode == 2
        assert _cli("frobnicate", "train", "--root", root).returncode == 2


class TestRunningLifecycle:
    def test_install_start_status_stop_cycle(self, root):
        port, _ = _ports(0)
        assert _cli("install", "train", "--root", root).returncode == 0
        started = _start(root, "train", port)
        assert started.returncode == 0, started.stdout + started.stderr
        try:
            status = _cli("status", "train", "--root", root)
            assert status.returncode == 0
            assert "running" in status.stdout
            assert "version 0.1.0" in status.stdout

            health = httpx.get(
                f"http://127.0.0.1:{port}/api/v1/health", timeout=5.0
            )
            assert health.status_code == 200

            second = _start(root, "train", port)
            assert second.returncode == 4  # already running
        finally:
            stopped = _cli("stop", "train", "--root", root)
        assert stopped.returncode == 0
        assert "stopped" in stopped.stdout
        after = _cli("status", "train", "--root", root)
        assert "stopped" in after.stdout

    def test_remove_while_running_refused(self, root):
        port, _ = _ports(1)
        _cli("install", "train", "--root", root)
        assert _start(root, "train", port).returncode == 0
        try:
            result = _cli("remove", "train", "--root", root)
            assert result.returncode == 6
            assert (root / "train" / "MANIFEST.json").exists()
        finally:
            _cli("stop", "train", "--root", root)

    def test_health_timeout_when_port_is_taken(self, root):
        port, _ = _ports(2)
        _cli("install", "classify", "--root", root)
        blocker = socket.socket()
        blocker.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        blocker.bind(("127.0.0.1", port))
        blocker.listen(1)
        try:
            result = _cli(
                "start", "classify", "--root", root,
                "--set", f"service.classify_port={port}", "--timeout", 10,
            )
            assert result.returncode == 5
            assert not (root / "classify" / "service.pid").exists()
        finally:
            blocker.close()

    def test_start_all_and_status_all(self, root):
        train_port, classify_port = _ports(3)
        assert _cli("install", "all", "--root", root).returncode == 0
        started = _cli(
            "start", "all", "--root", root,
            "--set", f"service.train_port={train_port}",
            "--set", f"service.classify_port={classify_port}",
            "--timeout", 30,
        )
        assert started.returncode == 0, started.stdout + started.stderr
        try:
            status = _cli("status", "all", "--root", root)
            assert status.stdout.count("running") == 2
        finally:
            result = _cli("stop", "all", "--root", root)
            assert result.returncode == 0

    def test_stop_drains_in_flight_classify(self, root, tmp_path):
        _, port = _ports(4)
        _cli("install", "classify", "--root", root)
        assert _start(root, "classify", port).returncode == 0
        base = f"http://127.0.0.1:{port}/api/v1"
        try:
            dataset = make_corpus(docs_per_class=8, seed=5)
            spec = GridSearchSpec(
                algorithm_grids={"gaussian_nb": ({"epsilon": 1e-9},)}, cv_folds=2
            )
            artifact, _ = grid_search(dataset, spec)
            blob = serialize_pipeline(artifact)
            assert httpx.post(f"{base}/model", content=blob).status_code == 200

            slow_log = "\n".join(
                f"filler line {i} with various words" for i in range(20000)
            )
            outcome = {}

            def slow_request():
                response = httpx.post(
                    f"{base}/classify",
                    json={"log": slow_log, "window_lines": 1},
                    timeout=60.0,
                )
                outcome["status"] = response.status_code
                outcome["windows"] = len(
                    response.json()["items"][0]["records"]
                )

            thread = threading.Thread(target=slow_request)
            thread.start()
            time.sleep(0.5)  # let the request reach the handler
            stopped = _cli("stop", "classify", "--root", root)
            thread.join(timeout=60)
            assert not thread.is_alive()
            assert stopped.returncode == 0
            assert outcome.get("status") == 200  # drained, not severed
            assert outcome.get("windows") == 20000
        finally:
            _cli("stop", "classify", "--root", root)

    def test_set_overrides_reach_the_service(self, root):
        port, _ = _ports(5)
        _cli("install", "train", "--root", root)
        started = _cli(
            "start", "train", "--root", root,
            "--set", f"service.train_port={port}",
            "--set", "training.labels=alpha,beta",
            "--timeout", 30,
        )
        assert started.returncode == 0
        try:
            labels = httpx.get(
                f"http://127.0.0.1:{port}/api/v1/labels", timeout=5.0
            ).json()
            assert labels == {"labels": ["alpha", "beta"], "pinned": True}
        finally:
            _cli("stop", "train", "--root", root)

    def test_bad_override_fails_fast(self, root):
        _cli("install", "train", "--root", root)
        result = _cli(
            "start", "train", "--root", root, "--set", "service.windwo_lines=5"
        )
        assert result.returncode == 1
        assert "windwo_lines" in result.stderr


class TestInstalledConfig:
    def test_config_file_round_trips_through_resolver(self, root):
        _cli("install", "train", "--root", root)
        from taxon.config import resolve_config, to_ini_text

        cfg = resolve_config(config_file=root / "train" / "config.ini")
        assert cfg.data_dir == str(root / "train" / "data")
        reparsed = resolve_config(config_file=root / "train" / "config.ini")
        assert to_ini_text(cfg) == to_ini_text(reparsed)

    def test_install_from_source_config(self, root, tmp_path):
        source = tmp_path / "site.ini"
        source.write_text("[classify]\nstorage_threshold = 0.9\n")
        result = _cli(
            "install", "classify", "--root", root, "--source", source
        )
        assert result.returncode == 0
        from taxon.config import resolve_config

        cfg = resolve_config(config_file=root / "classify" / "config.ini")
        assert cfg.storage_threshold == 0.9
        manifest = json.loads(
            (root / "classify" / "MANIFEST.json").read_text()
        )
        assert manifest["source"] == str(source)
