"""Raw check-in parsing.

Input is delimiter-separated text, one check-in per line. The field order is
configurable because public LBSN dumps disagree on it; the default matches
``user,poi,lat,lon,ts[,words]`` with words as a pipe-separated token list.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

from ..errors import FormatError

log = logging.getLogger(__name__)

FIELD_NAMES = ("user", "poi", "lat", "lon", "ts", "words")


@dataclass(frozen=True)
class CheckIn:
    """One check-in activity: a user visited a POI at a time and place."""

    user: str
    poi: str
    timestamp: int
    lat: float
    lon: float
    words: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class RecordFormat:
    """Field order and delimiter of a check-in file.

    ``fields`` names each column; ``words`` is optional and may be missing
    from a line entirely. Unknown names are rejected up front.
    """

    fields: tuple[str, ...] = ("user", "poi", "lat", "lon", "ts", "words")
    delimiter: str = ","

    def __post_init__(self):
        unknown = set(self.fields) - set(FIELD_NAMES)
        if unknown:
            raise FormatError(f"unknown field names in record format: {sorted(unknown)}")
        required = {"user", "poi", "lat", "lon", "ts"}
        missing = required - set(self.fields)
        if missing:
            raise FormatError(f"record format is missing required fields: {sorted(missing)}")

    @classmethod
    def from_string(cls, spec: str, delimiter: str = ",") -> "RecordFormat":
        return cls(fields=tuple(f.strip() for f in spec.split(",") if f.strip()), delimiter=delimiter)


@dataclass
class ParseResult:
    checkins: list[CheckIn]
    skipped: int


Source = Union[str, Path, IO[bytes], IO[str]]


def _open_lines(source: Source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, (io.RawIOBase, io.BufferedIOBase)) or (
        hasattr(source, "mode") and "b" in getattr(source, "mode", "")
    ):
        return io.TextIOWrapper(source, encoding="utf-8")
    if hasattr(source, "read") and isinstance(source.read(0), bytes):  # type: ignore[union-attr]
        return io.TextIOWrapper(source, encoding="utf-8")  # type: ignore[arg-type]
    return source  # already a text stream


def _parse_line(line: str, fmt: RecordFormat) -> CheckIn:
    parts = line.split(fmt.delimiter)
    n_required = len(fmt.fields) - (1 if "words" in fmt.fields else 0)
    if len(parts) < n_required:
        raise ValueError(f"expected at least {n_required} fields, got {len(parts)}")
    values: dict[str, str] = {}
    for name, part in zip(fmt.fields, parts):
        values[name] = part.strip()
    if "user" not in values or "poi" not in values or not values["user"] or not values["poi"]:
        raise ValueError("missing user or poi key")
    lat = float(values["lat"])
    lon = float(values["lon"])
    ts = int(float(values["ts"]))
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} out of [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude {lon} out of [-180, 180]")
    if ts < 0:
        raise ValueError(f"negative timestamp {ts}")
    words_raw = values.get("words", "")
    words = frozenset(w for w in (t.strip().lower() for t in words_raw.split("|")) if w)
    return CheckIn(user=values["user"], poi=values["poi"], timestamp=ts, lat=lat, lon=lon, words=words)


def parse_checkins(source: Source, fmt: RecordFormat | None = None) -> ParseResult:
    """Parse a check-in file into well-formed records.

    Malformed lines are skipped with a warning and counted. If more than half
    of the non-empty lines are malformed the format descriptor is almost
    certainly wrong for this file, so we fail instead of silently returning
    a sliver of the data.
    """
    fmt = fmt or RecordFormat()
    checkins: list[CheckIn] = []
    skipped = 0
    total = 0
    for lineno, raw in enumerate(_open_lines(source), start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        total += 1
        try:
            checkins.append(_parse_line(line, fmt))
        except (ValueError, IndexError) as exc:
            skipped += 1
            log.warning("skipping malformed line %d: %s", lineno, exc)
    if total > 0 and skipped * 2 > total:
        raise FormatError(
            f"{skipped}/{total} lines malformed; wrong record format? (fields={fmt.fields}, delimiter={fmt.delimiter!r})"
        )
    return ParseResult(checkins=checkins, skipped=skipped)
