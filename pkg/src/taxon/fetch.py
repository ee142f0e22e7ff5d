"""Retrieval of URI-referenced inputs: local paths and HTTP(S), capped and timed."""

from __future__ import annotations

from pathlib import Path
from urllib.parse import urlparse

import httpx

from .errors import FetchFailed

__all__ = ["fetch_uri"]


def fetch_uri(uri: str, timeout_seconds: float = 30.0, size_cap_mib: float = 64.0) -> str:
    """Return the text behind ``uri``; any failure becomes FetchFailed."""
    cap_bytes = int(size_cap_mib * 1024 * 1024)
    scheme = urlparse(uri).scheme
    if scheme in ("http", "https"):
        try:
            response = httpx.get(
                uri, timeout=timeout_seconds, follow_redirects=True
            )
        except httpx.HTTPError as exc:
            raise FetchFailed(f"fetching {uri}: {exc}") from exc
        if response.status_code >= 400:
            raise FetchFailed(f"fetching {uri}: HTTP {response.status_code}")
        if len(response.content) > cap_bytes:
            raise FetchFailed(
                f"fetching {uri}: {len(response.content)} bytes exceeds "
                f"the {size_cap_mib} MiB cap"
            )
        return response.content.decode("utf-8", errors="replace")
    path = Path(uri[len("file://"):] if scheme == "file" else uri)
    try:
        size = path.stat().st_size
    except OSError as exc:
        raise FetchFailed(f"reading {uri}: {exc}") from exc
    if size > cap_bytes:
        raise FetchFailed(
            f"reading {uri}: {size} bytes exceeds the {size_cap_mib} MiB cap"
        )
    try:
        return path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise FetchFailed(f"reading {uri}: {exc}") from exc
