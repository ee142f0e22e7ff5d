"""Deterministic log tokenization: word/char n-grams and failure-window extraction.

Everything here is a pure function over immutable inputs, so concurrent use
needs no locking.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterable, Optional

from .errors import NoParseableTimestamps

__all__ = [
    "TokenizerConfig",
    "LogSnippet",
    "tokenize",
    "extract_failure_window",
    "parse_leading_timestamp",
]

# Base words are maximal runs of alphanumeric-or-underscore characters
# (Unicode-aware); everything else delimits.
_WORD_RE = re.compile(r"\w+")
_WS_RE = re.compile(r"\s+")


def _now_utc_ms() -> datetime:
    """Current UTC time truncated to millisecond resolution."""
    now = datetime.now(timezone.utc)
    return now.replace(microsecond=now.microsecond // 1000 * 1000)


@dataclass(frozen=True)
class TokenizerConfig:
    """How raw log text becomes a token sequence.

    mode       -- "word" or "char" n-grams.
    n_min/n_max -- inclusive n-gram size range, 1 <= n_min <= n_max.
    lowercase  -- lowercase the text before anything else (default on; log
                  severity keywords are case-inconsistent across components).
    stop_words -- base words dropped before n-gram joining (word mode only).
    """

    mode: str = "word"
    n_min: int = 1
    n_max: int = 1
    lowercase: bool = True
    stop_words: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.mode not in ("word", "char"):
            raise ValueError(f"mode must be 'word' or 'char', got {self.mode!r}")
        if self.n_min < 1:
            raise ValueError(f"n_min must be >= 1, got {self.n_min}")
        if self.n_max < self.n_min:
            raise ValueError(f"n_max ({self.n_max}) must be >= n_min ({self.n_min})")
        if not isinstance(self.stop_words, frozenset):
            object.__setattr__(self, "stop_words", frozenset(self.stop_words))


@dataclass(frozen=True)
class LogSnippet:
    """A raw log as received: text is kept byte-for-byte, never normalized."""

    text: str
    source: Optional[str] = None
    received_at: datetime = field(default_factory=_now_utc_ms)


def tokenize(text: str, config: TokenizerConfig) -> list[str]:
    """Turn ``text`` into n-gram tokens per ``config``.

    Word mode: base words are maximal alphanumeric-or-underscore runs; stop
    words are removed before joining; each n in [n_min, n_max] contributes all
    contiguous n-word joins (single space joiner) in document order.

    Char mode: whitespace runs collapse to a single space, then each n
    contributes all contiguous substrings of length n in document order.

    Empty text yields an empty list.
    """
    if config.lowercase:
        text = text.lower()
    tokens: list[str] = []
    if config.mode == "word":
        words = _WORD_RE.findall(text)
        if config.stop_words:
            words = [w for w in words if w not in config.stop_words]
        for n in range(config.n_min, config.n_max + 1):
            if n == 1:
                tokens.extend(words)
            else:
                tokens.extend(
                    " ".join(words[i : i + n]) for i in range(len(words) - n + 1)
                )
    else:
        collapsed = _WS_RE.sub(" ", text)
        for n in range(config.n_min, config.n_max + 1):
            tokens.extend(
                collapsed[i : i + n] for i in range(len(collapsed) - n + 1)
            )
    return tokens


# -- failure-window extraction -------------------------------------------------

# ISO-8601 prefix, e.g. "2024-01-02T03:04:05.123Z" or "2024-01-02 03:04:05,123".
_ISO_RE = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})"
    r"(?:[.,](\d{1,6}))?"
    r"(Z|[+-]\d{2}:?\d{2})?"
)
# Syslog prefix, e.g. "Jan  5 03:04:05" (no year).
_SYSLOG_RE = re.compile(
    r"(Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec)\s+(\d{1,2}) (\d{2}):(\d{2}):(\d{2})"
)
_MONTHS = {
    m: i + 1
    for i, m in enumerate(
        ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
    )
}


def parse_leading_timestamp(line: str, year_hint: int) -> Optional[datetime]:
    """Parse a timestamp at the start of ``line`` (leading whitespace allowed).

    Recognizes ISO-8601 and syslog-style ``MMM dd HH:MM:SS`` prefixes; syslog
    lines carry no year, so ``year_hint`` supplies one. Naive timestamps are
    taken as UTC. Returns None when nothing parses.
    """
    stripped = line.lstrip()
    m = _ISO_RE.match(stripped)
    if m:
        frac = m.group(7)
        micro = int(frac.ljust(6, "0")) if frac else 0
        tz_text = m.group(8)
        if tz_text is None or tz_text == "Z":
            tz = timezone.utc
        else:
            sign = 1 if tz_text[0] == "+" else -1
            hh, mm = int(tz_text[1:3]), int(tz_text[-2:])
            tz = timezone(sign * timedelta(hours=hh, minutes=mm))
        try:
            return datetime(
                int(m.group(1)), int(m.group(2)), int(m.group(3)),
                int(m.group(4)), int(m.group(5)), int(m.group(6)),
                micro, tz,
            ).astimezone(timezone.utc)
        except ValueError:
            return None
    m = _SYSLOG_RE.match(stripped)
    if m:
        try:
            return datetime(
                year_hint, _MONTHS[m.group(1)], int(m.group(2)),
                int(m.group(3)), int(m.group(4)), int(m.group(5)),
                tzinfo=timezone.utc,
            )
        except ValueError:
            return None
    return None


def _as_utc(ts: datetime) -> datetime:
    return ts.replace(tzinfo=timezone.utc) if ts.tzinfo is None else ts.astimezone(timezone.utc)


def extract_failure_window(
    log: LogSnippet,
    failure_time: datetime,
    lookback: timedelta = timedelta(seconds=5),
    timestamp_parser: Callable[[str, int], Optional[datetime]] = parse_leading_timestamp,
) -> LogSnippet:
    """Keep only the lines within ``[failure_time - lookback, failure_time]``.

    Lines without a parseable timestamp inherit the most recent parsed one
    above them; lines before any parseable timestamp are excluded. Raises
    NoParseableTimestamps when no line parses at all, in which case the caller
    should fall back to classifying the whole snippet.
    """
    if lookback <= timedelta(0):
        raise ValueError("lookback must be positive")
    failure_time = _as_utc(failure_time)
    window_start = failure_time - lookback
    kept: list[str] = []
    current: Optional[datetime] = None
    any_parsed = False
    for line in log.text.splitlines():
        ts = timestamp_parser(line, failure_time.year)
        if ts is not None:
            current = _as_utc(ts)
            any_parsed = True
        if current is None:
            continue
        if window_start <= current <= failure_time:
            kept.append(line)
    if not any_parsed:
        raise NoParseableTimestamps("no line yielded a parseable timestamp")
    return LogSnippet(text="\n".join(kept), source=log.source, received_at=log.received_at)


def default_stop_words(words: Iterable[str]) -> frozenset[str]:
    """Build a stop-word set, lowercased to match the default tokenizer path."""
    return frozenset(w.lower() for w in words)
