"""Transaction parsing, trade-sign inference, merging and session tapes.

Raw transaction rows become per-day :class:`SessionTape` objects:

1. ``parse_transactions`` reads the CSV schema
   ``ts_ms,price,bid,ask,size[,side][,irregular][,trade_id]``.
2. ``infer_sign`` labels each transaction against the mid-price quoted
   just before it; transactions exactly at the mid are discarded.
3. ``merge_transactions`` collapses consecutive transactions sharing a
   timestamp and sign (or an explicit trade id).
4. ``build_session`` trims the opening and closing margins and records the
   mid-price that follows the last retained trade.
5. ``DailyVolumeNormalizer`` rescales volumes by average over daily volume.
"""
from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import IO
from zoneinfo import ZoneInfo

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, ParseError, RejectedSessionError

__all__ = [
    "TransactionRecord",
    "Trade",
    "SessionTape",
    "SessionCalendar",
    "DISCARD",
    "parse_transactions",
    "infer_sign",
    "merge_transactions",
    "merge_trades",
    "build_session",
    "normalize_daily",
    "DailyVolumeNormalizer",
    "write_tape_csv",
    "read_tape_csv",
    "emit_transactions",
    "write_transactions_csv",
    "build_tapes",
    "IngestReport",
    "MERGE_POLICIES",
]

DISCARD = 0
MERGE_POLICIES = ("timestamp_sign", "trade_id")
MID_TOLERANCE = 1e-9
_REQUIRED = ("ts_ms", "price", "bid", "ask", "size")
_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n", ""}


@dataclass(frozen=True, slots=True)
class TransactionRecord:
    ts_ms: int
    price: float
    bid: float
    ask: float
    size: float
    side: str | None = None
    irregular: bool = False
    trade_id: str | None = None

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0


@dataclass(frozen=True, slots=True)
class Trade:
    ts_ms: int
    sign: int
    volume: float
    mid_before: float
    n_tx: int = 1

    @property
    def log_mid(self) -> float:
        return math.log(self.mid_before)

    @property
    def signed_volume(self) -> float:
        return self.sign * self.volume


@dataclass(frozen=True)
class SessionCalendar:
    """Regular trading hours, in local time of ``tz``.

    ``shortened`` lists dates with reduced hours; those days are rejected.
    """

    open: time = time(9, 30)
    close: time = time(16, 0)
    tz: str = "UTC"
    trim_minutes: float = 30.0
    shortened: frozenset[date] = frozenset()

    def bounds_ms(self, day: date) -> tuple[int, int]:
        """Epoch-ms of the retained window ``[open + trim, close - trim]``."""
        zone = ZoneInfo(self.tz)
        trim = timedelta(minutes=self.trim_minutes)
        start = datetime.combine(day, self.open, tzinfo=zone) + trim
        end = datetime.combine(day, self.close, tzinfo=zone) - trim
        return _epoch_ms(start), _epoch_ms(end)

    def local_date(self, ts_ms: int) -> date:
        return datetime.fromtimestamp(ts_ms / 1000.0, tz=ZoneInfo(self.tz)).date()


def _epoch_ms(dt: datetime) -> int:
    return int(round(dt.timestamp() * 1000))


@dataclass(eq=False)
class SessionTape:
    """Cleaned, signed and merged trades of one instrument on one day.

    Stored column-wise. ``mid`` has one more entry than there are trades: the
    last element is the mid-price after the final retained trade, so that
    returns over windows ending at the last trade are defined.
    """

    instrument: str
    date: date
    ts_ms: np.ndarray
    sign: np.ndarray
    volume: np.ndarray
    mid: np.ndarray
    n_tx: np.ndarray = None  # type: ignore[assignment]
    end_ts_ms: int | None = None
    norm_factor: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ts_ms = np.asarray(self.ts_ms, dtype=np.int64)
        self.sign = np.asarray(self.sign, dtype=np.int8)
        self.volume = np.asarray(self.volume, dtype=np.float64)
        self.mid = np.asarray(self.mid, dtype=np.float64)
        if self.n_tx is None:
            self.n_tx = np.ones(len(self.ts_ms), dtype=np.int64)
        self.n_tx = np.asarray(self.n_tx, dtype=np.int64)
        n = len(self.ts_ms)
        if not (len(self.sign) == len(self.volume) == len(self.n_tx) == n):
            raise DataError("tape columns have inconsistent lengths")
        if len(self.mid) != n + 1:
            raise DataError("mid must hold one entry per trade plus the closing mid")

    def __len__(self) -> int:
        return len(self.ts_ms)

    @property
    def day_volume(self) -> float:
        return float(np.sum(self.volume))

    @property
    def log_mid(self) -> np.ndarray:
        return np.log(self.mid)

    @property
    def signed_volume(self) -> np.ndarray:
        """Daily-volume normalised signed volumes ``sign * volume * norm_factor``."""
        return self.sign * self.volume * self.norm_factor

    @property
    def returns(self) -> np.ndarray:
        """Per-trade log mid returns, ``log m_{t+1} - log m_t``."""
        return np.diff(np.log(self.mid))

    @property
    def trades(self) -> list[Trade]:
        return [
            Trade(int(t), int(s), float(v), float(m), int(k))
            for t, s, v, m, k in zip(self.ts_ms, self.sign, self.volume, self.mid[:-1], self.n_tx)
        ]

    def validate(self, window: tuple[int, int] | None = None) -> None:
        """Raise :class:`DataError` if any tape invariant is violated."""
        if len(self) and np.any(np.diff(self.ts_ms) < 0):
            raise DataError("timestamps are not non-decreasing")
        if not np.all(np.isin(self.sign, (-1, 1))):
            raise DataError("signs must be -1 or +1")
        if np.any(~np.isfinite(self.volume)) or np.any(self.volume <= 0):
            raise DataError("volumes must be finite and positive")
        if np.any(~np.isfinite(self.mid)) or np.any(self.mid <= 0):
            raise DataError("mid-prices must be finite and positive")
        if np.any(self.n_tx < 1):
            raise DataError("every trade needs at least one transaction")
        if not (np.isfinite(self.norm_factor) and self.norm_factor > 0):
            raise DataError("norm_factor must be positive")
        if window is not None and len(self):
            lo, hi = window
            if self.ts_ms[0] < lo or self.ts_ms[-1] > hi:
                raise DataError("trade outside the retained session window")

    def equals(self, other: "SessionTape") -> bool:
        """Exact equality of all columns and metadata (bitwise floats)."""
        return (
            self.instrument == other.instrument
            and self.date == other.date
            and self.norm_factor == other.norm_factor
            and self.end_ts_ms == other.end_ts_ms
            and np.array_equal(self.ts_ms, other.ts_ms)
            and np.array_equal(self.sign, other.sign)
            and np.array_equal(self.volume, other.volume)
            and np.array_equal(self.mid, other.mid)
            and np.array_equal(self.n_tx, other.n_tx)
        )


# ---------------------------------------------------------------- parsing


def _parse_float(text: str) -> float:
    return float(text.strip())


def _parse_bool(text: str, line: int) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ParseError(f"cannot interpret {text!r} as an irregular flag", line)


def _parse_side(text: str, line: int) -> str | None:
    t = text.strip().lower()
    if t in ("", "na", "none"):
        return None
    if t in ("buy", "b", "+1", "1"):
        return "buy"
    if t in ("sell", "s", "-1"):
        return "sell"
    raise ParseError(f"unknown side {text!r}", line)


def _as_text_stream(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), False
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary file object
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def parse_transactions(source, delimiter: str = ",") -> list[TransactionRecord]:
    """Parse a transaction CSV (path, bytes, or text/binary stream).

    Records with non-finite or non-positive prices, ``bid > ask``, or a
    vendor irregular flag are kept but marked ``irregular``.
    Structurally malformed rows raise :class:`ParseError` naming the line.
    """
    stream, owned = _as_text_stream(source)
    try:
        return list(_iter_records(stream, delimiter))
    finally:
        if owned:
            stream.close()


def _iter_records(stream: IO[str], delimiter: str) -> Iterator[TransactionRecord]:
    reader = csv.reader(stream, delimiter=delimiter)
    header = None
    for row in reader:
        if row and any(c.strip() for c in row):
            header = [c.strip().lower() for c in row]
            break
    if header is None:
        return
    missing = [c for c in _REQUIRED if c not in header]
    if missing:
        raise ParseError(f"header lacks required columns {missing}", reader.line_num)
    col = {name: i for i, name in enumerate(header)}

    for row in reader:
        line = reader.line_num
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        try:
            ts = int(row[col["ts_ms"]].strip())
            price = _parse_float(row[col["price"]])
            bid = _parse_float(row[col["bid"]])
            ask = _parse_float(row[col["ask"]])
            size = _parse_float(row[col["size"]])
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        side = _parse_side(row[col["side"]], line) if "side" in col else None
        flagged = _parse_bool(row[col["irregular"]], line) if "irregular" in col else False
        trade_id = row[col["trade_id"]].strip() or None if "trade_id" in col else None
        rec = TransactionRecord(ts, price, bid, ask, size, side, flagged, trade_id)
        yield replace(rec, irregular=True) if is_irregular(rec) else rec


def is_irregular(rec: TransactionRecord) -> bool:
    """Vendor flag, non-finite or non-positive values, or a crossed quote."""
    values = (rec.price, rec.bid, rec.ask, rec.size)
    return rec.irregular or not all(math.isfinite(v) and v > 0 for v in values) or rec.bid > rec.ask


# ---------------------------------------------------------------- signs


def infer_sign(tx: TransactionRecord, use_vendor_side: bool = False) -> int:
    """+1 above the prevailing mid, -1 below, :data:`DISCARD` (0) at the mid.

    Decimal quotes are not exact in binary, so a price within ``1e-9``
    (relative) of the mid counts as at the mid.
    """
    if use_vendor_side and tx.side is not None:
        return 1 if tx.side == "buy" else -1
    mid = tx.mid
    diff = tx.price - mid
    if abs(diff) <= MID_TOLERANCE * abs(mid):
        return DISCARD
    return 1 if diff > 0 else -1


# ---------------------------------------------------------------- merging


def merge_transactions(
    records: Sequence[TransactionRecord],
    signs: Sequence[int],
    policy: str = "timestamp_sign",
) -> list[Trade]:
    """Merge signed transactions into trades.

    ``timestamp_sign`` joins consecutive records with identical timestamp
    and sign. ``trade_id`` joins consecutive records with the same explicit
    trade id (records without an id stay single). Records signed
    :data:`DISCARD` must be removed beforehand.
    """
    if len(records) != len(signs):
        raise ValueError("records and signs differ in length")
    if policy not in MERGE_POLICIES:
        raise ValueError(f"unknown merge policy {policy!r}")
    _check_sorted(r.ts_ms for r in records)

    trades: list[Trade] = []
    key_prev = None
    for rec, s in zip(records, signs):
        if s not in (-1, 1):
            raise ValueError("discarded transactions must be dropped before merging")
        key = (rec.ts_ms, s) if policy == "timestamp_sign" else rec.trade_id
        if trades and key is not None and key == key_prev:
            last = trades[-1]
            trades[-1] = replace(last, volume=last.volume + rec.size, n_tx=last.n_tx + 1)
        else:
            trades.append(Trade(rec.ts_ms, int(s), rec.size, rec.mid, 1))
        key_prev = key
    return trades


def merge_trades(trades: Sequence[Trade]) -> list[Trade]:
    """Timestamp/sign merge applied to already-built trades (idempotent)."""
    _check_sorted(t.ts_ms for t in trades)
    out: list[Trade] = []
    for t in trades:
        if out and out[-1].ts_ms == t.ts_ms and out[-1].sign == t.sign:
            last = out[-1]
            out[-1] = replace(last, volume=last.volume + t.volume, n_tx=last.n_tx + t.n_tx)
        else:
            out.append(t)
    return out


def _check_sorted(stamps: Iterable[int]) -> None:
    prev = None
    for i, ts in enumerate(stamps):
        if prev is not None and ts < prev:
            raise DataError(f"input not sorted by timestamp at position {i}")
        prev = ts


# ---------------------------------------------------------------- sessions


def build_session(
    trades: Sequence[Trade],
    day: date,
    calendar: SessionCalendar = SessionCalendar(),
    instrument: str = "",
) -> SessionTape:
    """Keep trades inside ``[open + trim, close - trim]`` of ``day``.

    The closing mid is the pre-trade mid of the first trade after the
    window when there is one, otherwise the last retained mid (zero final
    return). Raises :class:`RejectedSessionError` for shortened days and
    for days left without trades.
    """
    if day in calendar.shortened:
        raise RejectedSessionError(f"{instrument} {day}: shortened trading hours")
    lo, hi = calendar.bounds_ms(day)
    if hi < lo:
        raise RejectedSessionError(f"{instrument} {day}: trimmed session is empty")
    _check_sorted(t.ts_ms for t in trades)

    kept = [t for t in trades if lo <= t.ts_ms <= hi]
    if not kept:
        raise RejectedSessionError(f"{instrument} {day}: no trades inside the session window")
    after = next((t for t in trades if t.ts_ms > hi), None)
    if after is not None:
        end_mid, end_ts = after.mid_before, after.ts_ms
    else:
        end_mid, end_ts = kept[-1].mid_before, None

    tape = SessionTape(
        instrument=instrument,
        date=day,
        ts_ms=[t.ts_ms for t in kept],
        sign=[t.sign for t in kept],
        volume=[t.volume for t in kept],
        mid=[t.mid_before for t in kept] + [end_mid],
        n_tx=[t.n_tx for t in kept],
        end_ts_ms=end_ts,
    )
    tape.validate((lo, hi))
    return tape


# ---------------------------------------------------------------- normalisation


def _period_key(tape: SessionTape, period: str | None):
    if period is None:
        return None
    if period == "year":
        return tape.date.year
    raise ValueError(f"unknown normalisation period {period!r}")


class DailyVolumeNormalizer(TransformerMixin, BaseEstimator):
    """Set ``norm_factor = <Q_D> / Q_D`` on each tape.

    ``<Q_D>`` is the arithmetic mean of daily volumes over the fitted tapes,
    over the whole run (``period=None``) or per calendar year
    (``period="year"``).
    """

    def __init__(self, period: str | None = None):
        self.period = period

    def fit(self, tapes, y=None):
        tapes = list(tapes)
        if not tapes:
            raise DataError("need at least one tape")
        sums: dict = {}
        for tape in tapes:
            q = tape.day_volume
            if not q > 0:
                raise DataError(f"{tape.instrument} {tape.date}: zero daily volume")
            key = _period_key(tape, self.period)
            sums.setdefault(key, []).append(q)
        self.mean_volume_ = {k: float(np.mean(v)) for k, v in sums.items()}
        return self

    def transform(self, tapes):
        check_is_fitted(self, "mean_volume_")
        out = []
        for tape in tapes:
            key = _period_key(tape, self.period)
            if key not in self.mean_volume_:
                raise DataError(f"no fitted mean daily volume for period {key!r}")
            q = tape.day_volume
            if not q > 0:
                raise DataError(f"{tape.instrument} {tape.date}: zero daily volume")
            out.append(replace(tape, norm_factor=self.mean_volume_[key] / q))
        return out


def normalize_daily(tapes: Sequence[SessionTape], period: str | None = None) -> list[SessionTape]:
    return DailyVolumeNormalizer(period=period).fit_transform(list(tapes))


# ---------------------------------------------------------------- tape files

TAPE_COLUMNS = ("ts_ms", "sign", "volume", "mid_before", "n_tx")


def write_tape_csv(tape: SessionTape, path) -> None:
    """Write the cleaned-tape CSV.

    The final row has ``sign = 0`` and ``volume = 0`` and carries the
    closing mid (its timestamp is the source of that mid, or empty).
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TAPE_COLUMNS)
        for t, s, v, m, k in zip(tape.ts_ms, tape.sign, tape.volume, tape.mid[:-1], tape.n_tx):
            w.writerow((int(t), int(s), repr(float(v)), repr(float(m)), int(k)))
        end_ts = "" if tape.end_ts_ms is None else int(tape.end_ts_ms)
        w.writerow((end_ts, 0, "0.0", repr(float(tape.mid[-1])), 0))


def read_tape_csv(path, instrument: str, day: date, norm_factor: float = 1.0) -> SessionTape:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0][:4]) != TAPE_COLUMNS[:4]:
        raise ParseError(f"{path}: not a cleaned-tape file", 1)
    body = rows[1:]
    if not body or body[-1][1].strip() != "0":
        raise ParseError(f"{path}: missing closing-mid row", len(rows))
    has_ntx = len(rows[0]) > 4
    try:
        ts = [int(r[0]) for r in body[:-1]]
        sign = [int(r[1]) for r in body[:-1]]
        vol = [float(r[2]) for r in body[:-1]]
        mid = [float(r[3]) for r in body]
        ntx = [int(r[4]) for r in body[:-1]] if has_ntx else None
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    end_ts = body[-1][0].strip()
    return SessionTape(
        instrument=instrument,
        date=day,
        ts_ms=ts,
        sign=sign,
        volume=vol,
        mid=mid,
        n_tx=ntx,
        end_ts_ms=int(end_ts) if end_ts else None,
        norm_factor=norm_factor,
    )


def emit_transactions(tape: SessionTape, half_spread: float) -> list[TransactionRecord]:
    """Render a tape back into raw transactions that re-ingest to the same tape.

    Quotes are ``mid -/+ half_spread``. Where floating point would not
    return the exact mid from ``(bid + ask) / 2``, a locked quote
    ``bid = ask = mid`` is emitted instead. A closing transaction after the
    session window carries the closing mid. Only tapes of unmerged trades
    (``n_tx == 1``) round-trip exactly.
    """
    if np.any(tape.n_tx != 1):
        raise ValueError("emit_transactions needs a tape of single-transaction trades")

    def quote(m: float) -> tuple[float, float]:
        bid, ask = m - half_spread, m + half_spread
        if (bid + ask) / 2.0 != m:
            bid = ask = m
        return bid, ask

    out = []
    for t, s, v, m in zip(tape.ts_ms, tape.sign, tape.volume, tape.mid[:-1]):
        bid, ask = quote(float(m))
        price = float(m) + half_spread * int(s)
        out.append(TransactionRecord(int(t), price, bid, ask, float(v)))
    if tape.end_ts_ms is not None:
        m = float(tape.mid[-1])
        bid, ask = quote(m)
        out.append(TransactionRecord(int(tape.end_ts_ms), m + half_spread, bid, ask, 1.0))
    return out


def write_transactions_csv(records: Iterable[TransactionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("ts_ms", "price", "bid", "ask", "size", "irregular"))
        for r in records:
            w.writerow(
                (r.ts_ms, repr(r.price), repr(r.bid), repr(r.ask), repr(r.size), int(r.irregular))
            )


# ---------------------------------------------------------------- ingest driver


@dataclass
class IngestReport:
    parsed: int = 0
    irregular: int = 0
    discarded_at_mid: int = 0
    merged: int = 0
    trimmed: int = 0
    retained_trades: int = 0
    retained_days: int = 0
    rejected_days: list[str] = field(default_factory=list)

    def update(self, other: "IngestReport") -> None:
        for name in ("parsed", "irregular", "discarded_at_mid", "merged", "trimmed",
                     "retained_trades", "retained_days"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.rejected_days.extend(other.rejected_days)

    def as_dict(self) -> dict:
        return {
            "parsed": self.parsed,
            "irregular": self.irregular,
            "discarded_at_mid": self.discarded_at_mid,
            "merged": self.merged,
            "trimmed": self.trimmed,
            "retained_trades": self.retained_trades,
            "retained_days": self.retained_days,
            "rejected_days": list(self.rejected_days),
        }


def build_tapes(
    records: Sequence[TransactionRecord],
    instrument: str,
    calendar: SessionCalendar = SessionCalendar(),
    merge_policy: str = "timestamp_sign",
    use_vendor_side: bool = False,
) -> tuple[list[SessionTape], IngestReport]:
    """Turn one instrument's raw records into per-day tapes (not yet normalised)."""
    report = IngestReport(parsed=len(records))
    regular = [r for r in records if not is_irregular(r)]
    report.irregular = len(records) - len(regular)

    signed: list[TransactionRecord] = []
    signs: list[int] = []
    for r in regular:
        s = infer_sign(r, use_vendor_side)
        if s == DISCARD:
            report.discarded_at_mid += 1
            continue
        signed.append(r)
        signs.append(s)
    _check_sorted(r.ts_ms for r in signed)

    by_day: dict[date, tuple[list, list]] = {}
    for r, s in zip(signed, signs):
        recs, ss = by_day.setdefault(calendar.local_date(r.ts_ms), ([], []))
        recs.append(r)
        ss.append(s)

    tapes = []
    for day in sorted(by_day):
        recs, ss = by_day[day]
        trades = merge_transactions(recs, ss, merge_policy)
        report.merged += len(recs) - len(trades)
        try:
            tape = build_session(trades, day, calendar, instrument)
        except RejectedSessionError as exc:
            report.rejected_days.append(f"{instrument} {day.isoformat()}: {exc}")
            continue
        report.trimmed += len(trades) - len(tape)
        report.retained_trades += len(tape)
        tapes.append(tape)
    report.retained_days = len(tapes)
    return tapes, report
