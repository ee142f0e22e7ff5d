"""Lifecycle CLI for the two services: install, remove, start, status, stop.

An install root holds one bundle directory per service:

    <root>/
      .lock                advisory lock serializing commands
      train/
        MANIFEST.json      version, source, installed_at
        config.ini         effective default configuration
        data/              survives remove unless --purge
        service.pid        present while running
        service.log
      classify/            same layout

``start`` spawns ``taxon run <service>`` detached and waits for /health;
``stop`` sends SIGTERM and gives in-flight requests a drain window before
escalating. Exit codes are part of the interface:

    0 success        3 not installed      5 health-check timeout
    1 other error    4 already running    6 invalid state for command
    2 usage error
"""

from __future__ import annotations

import argparse
import fcntl
import json
import os
import shutil
import signal
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import httpx

from . import __version__
from .config import ServiceConfig, resolve_config, to_ini_text, validate_config
from .errors import ConfigError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NOT_INSTALLED = 3
EXIT_ALREADY_RUNNING = 4
EXIT_HEALTH_TIMEOUT = 5
EXIT_INVALID_STATE = 6

SERVICES = ("train", "classify")
DEFAULT_ROOT = "~/.taxon"


def _root(args) -> Path:
    return Path(args.root or os.environ.get("TAXON_HOME") or DEFAULT_ROOT).expanduser()


def _targets(name: str) -> tuple[str, ...]:
    return SERVICES if name == "all" else (name,)


@contextmanager
def command_lock(root: Path):
    """Advisory lock so two taxon commands cannot race on one install root."""
    root.mkdir(parents=True, exist_ok=True)
    lock_path = root / ".lock"
    with lock_path.open("w") as fh:
        deadline = time.monotonic() + 10.0
        while True:
            try:
                fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
                break
            except BlockingIOError:
                if time.monotonic() > deadline:
                    raise SystemExit(
                        "another taxon command holds the lock on "
                        f"{root}; giving up"
                    )
                time.sleep(0.1)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


# -- bundle state ------------------------------------------------------------

def _bundle(root: Path, service: str) -> Path:
    return root / service


def _installed(root: Path, service: str) -> bool:
    return (_bundle(root, service) / "MANIFEST.json").exists()


def _pidfile(root: Path, service: str) -> Path:
    return _bundle(root, service) / "service.pid"


def _read_pidfile(root: Path, service: str) -> dict | None:
    path = _pidfile(root, service)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None


def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def _running(root: Path, service: str) -> dict | None:
    """The pidfile record when the process is live; clears stale files."""
    record = _read_pidfile(root, service)
    if record is None:
        return None
    if not _alive(record["pid"]):
        _pidfile(root, service).unlink(missing_ok=True)
        return None
    return record


def _service_port(cfg: ServiceConfig, service: str) -> int:
    return cfg.train_port if service == "train" else cfg.classify_port


def _load_bundle_config(root: Path, service: str) -> ServiceConfig:
    return resolve_config(config_file=_bundle(root, service) / "config.ini")


# -- commands ----------------------------------------------------------------

def cmd_install(args) -> int:
    root = _root(args)
    with command_lock(root):
        for service in _targets(args.target):
            bundle = _bundle(root, service)
            if _installed(root, service) and not args.force:
                print(f"{service}: already installed at {bundle} "
                      "(use --force to reinstall)")
                return EXIT_INVALID_STATE
            bundle.mkdir(parents=True, exist_ok=True)
            (bundle / "data").mkdir(exist_ok=True)

            if args.source and Path(args.source).is_file():
                cfg = resolve_config(config_file=args.source)
            else:
                cfg = ServiceConfig()
            cfg = validate_config(
                replace(
                    cfg,
                    data_dir=str(bundle / "data"),
                    export_path=cfg.export_path or str(bundle / "data" / "models"),
                )
            )
            (bundle / "config.ini").write_text(to_ini_text(cfg), encoding="utf-8")
            manifest = {
                "service": service,
                "version": __version__,
                "source": args.source or "built-in",
                "installed_at": datetime.now(timezone.utc).isoformat(),
            }
            (bundle / "MANIFEST.json").write_text(
                json.dumps(manifest, indent=2), encoding="utf-8"
            )
            print(f"{service}: installed version {__version__} at {bundle}")
    return EXIT_OK


def cmd_remove(args) -> int:
    root = _root(args)
    with command_lock(root):
        for service in _targets(args.target):
            if not _installed(root, service):
                print(f"{service}: not-installed")
                return EXIT_NOT_INSTALLED
            if _running(root, service):
                print(f"{service}: running; stop it before remove")
                return EXIT_INVALID_STATE
            bundle = _bundle(root, service)
            for name in ("MANIFEST.json", "config.ini", "service.log", "service.pid"):
                (bundle / name).unlink(missing_ok=True)
            if args.purge:
                shutil.rmtree(bundle, ignore_errors=True)
                print(f"{service}: removed (data purged)")
            else:
                print(f"{service}: removed (data preserved at {bundle / 'data'})")
    return EXIT_OK


def cmd_start(args) -> int:
    root = _root(args)
    with command_lock(root):
        for service in _targets(args.target):
            if not _installed(root, service):
                print(f"{service}: not-installed")
                return EXIT_NOT_INSTALLED
            if _running(root, service):
                print(f"{service}: already running")
                return EXIT_ALREADY_RUNNING

            bundle = _bundle(root, service)
            cfg = _effective_config(args, root, service)
            port = _service_port(cfg, service)
            command = [
                sys.executable, "-m", "taxon.cli", "run", service,
                "--root", str(root),
            ]
            if args.config:
                command += ["--config", args.config]
            for override in args.set or []:
                command += ["--set", override]
            log_handle = (bundle / "service.log").open("ab")
            process = subprocess.Popen(
                command,
                stdout=log_handle,
                stderr=subprocess.STDOUT,
                start_new_session=True,
            )
            log_handle.close()
            record = {
                "pid": process.pid,
                "port": port,
                "host": cfg.host,
                "started_at": datetime.now(timezone.utc).isoformat(),
                "version": __version__,
            }
            _pidfile(root, service).write_text(
                json.dumps(record), encoding="utf-8"
            )
            if not _wait_healthy(cfg.host, port, args.timeout, process):
                process.terminate()
                _pidfile(root, service).unlink(missing_ok=True)
                print(f"{service}: health check timed out after {args.timeout}s "
                      f"(see {bundle / 'service.log'})")
                return EXIT_HEALTH_TIMEOUT
            print(f"{service}: running (pid {process.pid}, port {port})")
    return EXIT_OK


def _effective_config(args, root: Path, service: str) -> ServiceConfig:
    explicit = getattr(args, "config", None)
    overrides = getattr(args, "set", None) or []
    if explicit:
        return resolve_config(config_file=explicit, flag_overrides=overrides)
    if os.environ.get("TAXON_CONFIG"):
        return resolve_config(flag_overrides=overrides)
    return resolve_config(
        config_file=_bundle(root, service) / "config.ini", flag_overrides=overrides
    )


def _wait_healthy(host: str, port: int, timeout: float, process) -> bool:
    deadline = time.monotonic() + timeout
    url = f"http://{host}:{port}/api/v1/health"
    while time.monotonic() < deadline:
        if process.poll() is not None:
            return False
        try:
            if httpx.get(url, timeout=1.0).status_code == 200:
                return True
        except httpx.HTTPError:
            pass
        time.sleep(0.1)
    return False


def cmd_status(args) -> int:
    root = _root(args)
    worst = EXIT_OK
    for service in _targets(args.target):
        if not _installed(root, service):
            print(f"{service}: not-installed")
            worst = EXIT_NOT_INSTALLED
            continue
        record = _running(root, service)
        if record is None:
            print(f"{service}: stopped (version {_manifest_version(root, service)})")
            continue
        started = datetime.fromisoformat(record["started_at"])
        uptime = (datetime.now(timezone.utc) - started).total_seconds()
        print(
            f"{service}: running (pid {record['pid']}, "
            f"version {record.get('version', '?')}, "
            f"uptime {uptime:.0f}s, port {record['port']})"
        )
    return worst


def _manifest_version(root: Path, service: str) -> str:
    try:
        manifest = json.loads(
            (_bundle(root, service) / "MANIFEST.json").read_text(encoding="utf-8")
        )
        return manifest.get("version", "?")
    except (OSError, json.JSONDecodeError):
        return "?"


def cmd_stop(args) -> int:
    root = _root(args)
    with command_lock(root):
        for service in _targets(args.target):
            if not _installed(root, service):
                print(f"{service}: not-installed")
                return EXIT_NOT_INSTALLED
            record = _running(root, service)
            if record is None:
                print(f"{service}: not running")
                continue
            pid = record["pid"]
            os.kill(pid, signal.SIGTERM)
            deadline = time.monotonic() + args.timeout
            while time.monotonic() < deadline and _alive(pid):
                time.sleep(0.05)
            if _alive(pid):
                os.kill(pid, signal.SIGKILL)
                print(f"{service}: did not drain within {args.timeout}s, killed")
            else:
                print(f"{service}: stopped")
            _pidfile(root, service).unlink(missing_ok=True)
    return EXIT_OK


def cmd_run(args) -> int:
    """Run one service in the foreground (what `start` spawns)."""
    import uvicorn

    root = _root(args)
    service = args.target
    cfg = _effective_config(args, root, service)
    data_dir = Path(cfg.data_dir)
    print(f"effective configuration:\n{to_ini_text(cfg)}", flush=True)
    if service == "train":
        from .train_service import create_train_app

        app = create_train_app(cfg, data_dir=data_dir)
        port = cfg.train_port
    else:
        from .classify_service import create_classify_app

        app = create_classify_app(cfg, data_dir=data_dir)
        port = cfg.classify_port
    uvicorn.run(app, host=cfg.host, port=port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taxon",
        description="Lifecycle tooling for the taxon training and "
        "classification services.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, func, targets=("train", "classify", "all")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("target", choices=targets)
        p.add_argument("--root", help="install root (default ~/.taxon or $TAXON_HOME)")
        p.set_defaults(func=func)
        return p

    p = add("install", "place a versioned service bundle and default config",
            cmd_install)
    p.add_argument("--source", help="local config path or registry reference")
    p.add_argument("--force", action="store_true", help="reinstall over existing")

    p = add("remove", "delete a service bundle (data preserved)", cmd_remove)
    p.add_argument("--purge", action="store_true", help="also delete data stores")

    p = add("start", "launch service(s) and wait for /health", cmd_start)
    p.add_argument("--config", help="explicit config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="config override (repeatable)")
    p.add_argument("--timeout", type=float, default=30.0,
                   help="seconds to wait for /health")

    add("status", "report per-service state", cmd_status)

    p = add("stop", "graceful shutdown, draining in-flight requests", cmd_stop)
    p.add_argument("--timeout", type=float, default=30.0,
                   help="drain window before hard kill")

    p = add("run", "run one service in the foreground", cmd_run,
            targets=("train", "classify"))
    p.add_argument("--config", help="explicit config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="config override (repeatable)")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
