"""Declarative run configuration: plain ``key = value`` text files.

Blank lines and ``#`` comments are ignored. Keys prefixed ``synth.`` are
handed to :class:`~aggimpact.synth.SynthConfig`; a comma-separated synth
value gives one entry per synthetic instrument.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, time
from pathlib import Path

from .exceptions import DataError, UsageError
from .tape import MERGE_POLICIES, SessionCalendar

__all__ = ["read_key_values", "parse_key_values", "RunConfig", "EMIT_FLAGS"]

EMIT_FLAGS = ("csv", "json", "svg")


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{source}:{lineno}: empty key")
        if key in out:
            raise UsageError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_key_values(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_key_values(text, str(path))


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {value!r}")


@dataclass
class RunConfig:
    """Everything a CLI run needs. Paths are resolved relative to the config file."""

    inputs: list[Path] = field(default_factory=list)
    instruments: list[str] = field(default_factory=list)
    date_from: date | None = None
    date_to: date | None = None
    N_grid: list[int] = field(default_factory=lambda: [2**k for k in range(1, 11)])
    bins: int = 31
    min_occupancy: int = 50
    stride: int = 1
    ccdf_points: int = 40
    max_lag: int = 1000
    seed: int = 0
    emit: tuple[str, ...] = ("csv", "json", "svg")
    session_open: time = time(9, 30)
    session_close: time = time(16, 0)
    tz: str = "UTC"
    trim_minutes: float = 30.0
    shortened_days: frozenset[date] = frozenset()
    merge_policy: str = "timestamp_sign"
    use_vendor_side: bool = False
    normalization_period: str | None = None
    synth: dict[str, str] = field(default_factory=dict)

    _KEYS = {
        "inputs", "instruments", "date_from", "date_to", "N_grid", "bins", "min_occupancy",
        "stride", "ccdf_points", "max_lag", "seed", "emit", "session_open", "session_close",
        "tz", "trim_minutes", "shortened_days", "merge_policy", "use_vendor_side",
        "normalization_period",
    }

    def __post_init__(self):
        self.validate()

    @property
    def calendar(self) -> SessionCalendar:
        return SessionCalendar(self.session_open, self.session_close, self.tz,
                               self.trim_minutes, frozenset(self.shortened_days))

    def validate(self) -> None:
        grid = list(self.N_grid)
        if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError(f"N_grid must be strictly increasing positive integers, got {grid}")
        if self.bins < 1 or self.min_occupancy < 1 or self.stride < 1:
            raise UsageError("bins, min_occupancy and stride must be >= 1")
        if self.merge_policy not in MERGE_POLICIES:
            raise UsageError(f"merge_policy must be one of {MERGE_POLICIES}")
        if self.normalization_period not in (None, "year"):
            raise UsageError("normalization_period must be 'run' or 'year'")
        bad = set(self.emit) - set(EMIT_FLAGS)
        if bad:
            raise UsageError(f"unknown emit flags {sorted(bad)}")
        if self.date_from and self.date_to and self.date_from > self.date_to:
            raise UsageError("date_from is after date_to")

    def check_inputs(self) -> None:
        missing = [str(p) for p in self.inputs if not p.exists()]
        if missing:
            raise DataError(f"input paths do not exist: {', '.join(missing)}")

    def in_range(self, day: date) -> bool:
        return (self.date_from is None or day >= self.date_from) and (
            self.date_to is None or day <= self.date_to
        )

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: Path | None = None) -> "RunConfig":
        base = base or Path(".")
        kw: dict = {}
        synth = {}
        for key, value in values.items():
            if key.startswith("synth."):
                synth[key[len("synth."):]] = value
                continue
            if key not in cls._KEYS:
                raise UsageError(f"unknown config key {key!r}")
            try:
                kw[key] = _convert(key, value, base)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
        return cls(synth=synth, **kw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        return cls.from_mapping(read_key_values(path), path.parent)


def _convert(key: str, value: str, base: Path):
    if key == "inputs":
        return [(base / p) if not Path(p).is_absolute() else Path(p) for p in _split(value)]
    if key == "instruments":
        return _split(value)
    if key in ("date_from", "date_to"):
        return date.fromisoformat(value)
    if key == "N_grid":
        return [int(v) for v in _split(value)]
    if key in ("bins", "min_occupancy", "stride", "ccdf_points", "max_lag", "seed"):
        return int(value)
    if key == "trim_minutes":
        return float(value)
    if key == "emit":
        return tuple(v.lower() for v in _split(value))
    if key in ("session_open", "session_close"):
        return time.fromisoformat(value)
    if key == "shortened_days":
        return frozenset(date.fromisoformat(v) for v in _split(value))
    if key == "use_vendor_side":
        return _bool(value)
    if key == "normalization_period":
        return None if value.strip().lower() in ("", "run") else value.strip().lower()
    return value
