"""RFC 3339 UTC timestamp helpers over POSIX seconds."""

from __future__ import annotations

from datetime import datetime, timezone


def to_rfc3339(posix_seconds: float) -> str:
    dt = datetime.fromtimestamp(float(posix_seconds), tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def from_rfc3339(text: str) -> float:
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()
