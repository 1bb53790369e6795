"""Clickstream ingestion: parse JSON Lines event logs, group into labeled
sessions, and apply the user-activity and prediction-window filters."""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field, replace

log = logging.getLogger(__name__)

EVENT_TYPES = frozenset({"pageview", "basketview", "buy", "adclick", "adview"})
AD_EVENT_TYPES = frozenset({"adclick", "adview"})
PRICED_EVENT_TYPES = frozenset({"buy", "basketview"})
CLICK_EVENT_TYPES = frozenset({"pageview", "basketview"})

REQUIRED_FIELDS = ("user_id", "session_id", "timestamp", "event_type", "item_id")

MS_PER_HOUR = 3_600_000


@dataclass(eq=True, frozen=True)
class RawEvent:
    """One timestamped user interaction. Timestamps are integer ms UTC."""

    user_id: str
    session_id: str
    timestamp: int
    event_type: str
    item_id: str
    category_id: str | None = None
    price: float | None = None
    description: str | None = None


@dataclass
class ParseIssue:
    line_no: int
    reason: str


@dataclass
class ParseResult:
    """Events in file order plus per-line error records for bad lines."""

    events: list[RawEvent]
    errors: list[ParseIssue]


@dataclass(eq=False)
class Session:
    """A user's events sharing one session id, sorted by timestamp.

    label is "buy" iff the session contains at least one buy event;
    bought_items collects the item ids of those buys. usable turns False
    when the prediction-window exclusion removes every feature event.
    """

    session_id: str
    user_id: str
    events: list[RawEvent]
    bought_items: set[str] = field(default_factory=set)
    label: str = "non_buy"
    usable: bool = True

    def feature_events(self) -> list[RawEvent]:
        """Events usable for features: everything except buy evidence."""
        return [e for e in self.events if e.event_type != "buy"]

    def click_events(self) -> list[RawEvent]:
        return [e for e in self.events if e.event_type in CLICK_EVENT_TYPES]


@dataclass(eq=False)
class SessionStore:
    """Immutable-by-convention container of sessions with a user index."""

    sessions: dict[str, Session]
    user_index: dict[str, list[str]]
    duplicates_dropped: int = 0

    def __len__(self) -> int:
        return len(self.sessions)

    def ordered_sessions(self) -> list[Session]:
        return [self.sessions[sid] for sid in sorted(self.sessions)]

    def user_sessions(self, user_id: str) -> list[Session]:
        """The user's sessions in chronological order (first-event time)."""
        sids = self.user_index.get(user_id, [])
        out = [self.sessions[s] for s in sids]
        out.sort(key=lambda s: (s.events[0].timestamp, s.session_id))
        return out


def parse_events(stream) -> ParseResult:
    """Parse a JSON Lines byte/text stream into RawEvents.

    Each line must be a self-contained JSON object. Malformed lines are
    collected as ParseIssue records with 1-based line numbers instead of
    being dropped silently. An unreadable stream raises OSError.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    events: list[RawEvent] = []
    errors: list[ParseIssue] = []
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                errors.append(ParseIssue(line_no, "line is not valid UTF-8"))
                continue
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(ParseIssue(line_no, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            errors.append(ParseIssue(line_no, "line is not a JSON object"))
            continue
        issue = _validate_event(obj)
        if issue is not None:
            errors.append(ParseIssue(line_no, issue))
            continue
        events.append(
            RawEvent(
                user_id=str(obj["user_id"]),
                session_id=str(obj["session_id"]),
                timestamp=int(obj["timestamp"]),
                event_type=obj["event_type"],
                item_id=str(obj["item_id"]),
                category_id=None if obj.get("category_id") is None else str(obj["category_id"]),
                price=None if obj.get("price") is None else float(obj["price"]),
                description=None if obj.get("description") is None else str(obj["description"]),
            )
        )
    return ParseResult(events, errors)


def _validate_event(obj: dict) -> str | None:
    for name in REQUIRED_FIELDS:
        if obj.get(name) is None:
            return f"missing required field '{name}'"
    etype = obj["event_type"]
    if etype not in EVENT_TYPES:
        return f"unknown event_type '{etype}'"
    ts = obj["timestamp"]
    if not isinstance(ts, (int, float)) or isinstance(ts, bool) or float(ts) != int(ts):
        return "timestamp must be an integer (milliseconds since epoch)"
    if int(ts) < 0:
        return "timestamp must be >= 0"
    price = obj.get("price")
    if price is not None:
        if etype not in PRICED_EVENT_TYPES:
            return f"price not allowed on '{etype}' events"
        if not isinstance(price, (int, float)) or isinstance(price, bool) or float(price) < 0:
            return "price must be a nonnegative number"
    return None


def sessionize(events) -> SessionStore:
    """Group events by session id, sorted by timestamp (stable on input
    order for ties). Ad events are excluded; exact duplicate
    (session_id, timestamp, event_type, item_id) events are dropped with
    a warning and counted on the store."""
    groups: dict[str, list[RawEvent]] = {}
    seen: set[tuple] = set()
    duplicates = 0
    for ev in events:
        if ev.event_type in AD_EVENT_TYPES:
            continue
        key = (ev.session_id, ev.timestamp, ev.event_type, ev.item_id)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        groups.setdefault(ev.session_id, []).append(ev)
    if duplicates:
        log.warning("dropped %d duplicate events during sessionization", duplicates)

    sessions: dict[str, Session] = {}
    user_index: dict[str, list[str]] = {}
    for sid in sorted(groups):
        evs = groups[sid]
        evs.sort(key=lambda e: e.timestamp)  # stable: ties keep input order
        bought = {e.item_id for e in evs if e.event_type == "buy"}
        sess = Session(
            session_id=sid,
            user_id=evs[0].user_id,
            events=evs,
            bought_items=bought,
            label="buy" if bought else "non_buy",
        )
        sessions[sid] = sess
        user_index.setdefault(sess.user_id, []).append(sid)
    return SessionStore(sessions, user_index, duplicates_dropped=duplicates)


def filter_min_clicks(store: SessionStore, min_clicks: int = 10) -> SessionStore:
    """Drop every session of users with fewer than min_clicks events in
    the store. All non-ad events count toward the threshold; users at
    exactly min_clicks are retained."""
    if min_clicks < 1:
        raise ValueError("min_clicks must be >= 1")
    counts: dict[str, int] = {}
    for sess in store.sessions.values():
        counts[sess.user_id] = counts.get(sess.user_id, 0) + len(sess.events)
    keep_users = {u for u, n in counts.items() if n >= min_clicks}
    sessions = {sid: s for sid, s in store.sessions.items() if s.user_id in keep_users}
    user_index = {u: list(sids) for u, sids in store.user_index.items() if u in keep_users}
    return SessionStore(sessions, user_index, duplicates_dropped=store.duplicates_dropped)


def exclude_prediction_window(session: Session, horizon_ms: int = 24 * MS_PER_HOUR) -> Session:
    """Strip feature events inside the prediction window of buy sessions.

    For a buy session, every non-buy event with timestamp at or after
    (earliest buy - horizon) is removed; the buy events stay only as
    label evidence. A buy session left with no feature events is
    returned flagged unusable. Non-buy sessions pass through unchanged.
    """
    if horizon_ms <= 0:
        raise ValueError("horizon must be positive")
    if session.label != "buy":
        return session
    first_buy = min(e.timestamp for e in session.events if e.event_type == "buy")
    cutoff = first_buy - horizon_ms
    kept = [e for e in session.events if e.event_type == "buy" or e.timestamp < cutoff]
    usable = any(e.event_type != "buy" for e in kept)
    return replace(session, events=kept, usable=usable)


def apply_prediction_window(store: SessionStore, horizon_ms: int = 24 * MS_PER_HOUR) -> SessionStore:
    """exclude_prediction_window mapped over every session in the store."""
    sessions = {
        sid: exclude_prediction_window(sess, horizon_ms)
        for sid, sess in store.sessions.items()
    }
    return SessionStore(sessions, dict(store.user_index), store.duplicates_dropped)


@dataclass
class IngestReport:
    """Counts gathered while building a store from a raw event file."""

    events_parsed: int
    parse_errors: int
    event_type_counts: dict[str, int]
    users: int
    sessions: int
    buy_sessions: int
    duplicates_dropped: int
    users_removed_min_clicks: int
    sessions_removed_min_clicks: int
    unusable_buy_sessions: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"


def ingest_events(
    parsed: ParseResult, min_clicks: int = 10, horizon_ms: int = 24 * MS_PER_HOUR
) -> tuple[SessionStore, IngestReport]:
    """Full ingest pipeline: sessionize, user filter, window exclusion."""
    type_counts: dict[str, int] = {t: 0 for t in sorted(EVENT_TYPES)}
    for ev in parsed.events:
        type_counts[ev.event_type] += 1
    store = sessionize(parsed.events)
    users_before, sessions_before = len(store.user_index), len(store)
    store = filter_min_clicks(store, min_clicks)
    store = apply_prediction_window(store, horizon_ms)
    unusable = sum(1 for s in store.sessions.values() if not s.usable)
    report = IngestReport(
        events_parsed=len(parsed.events),
        parse_errors=len(parsed.errors),
        event_type_counts=type_counts,
        users=len(store.user_index),
        sessions=len(store),
        buy_sessions=sum(1 for s in store.sessions.values() if s.label == "buy"),
        duplicates_dropped=store.duplicates_dropped,
        users_removed_min_clicks=users_before - len(store.user_index),
        sessions_removed_min_clicks=sessions_before - len(store),
        unusable_buy_sessions=unusable,
    )
    return store, report


STORE_FORMAT = "buyintent-store"
STORE_VERSION = 1


def save_store(store: SessionStore, path) -> None:
    """Persist a store as canonical JSON; round-trips bit-exactly."""
    doc = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "duplicates_dropped": store.duplicates_dropped,
        "sessions": [
            {
                "session_id": s.session_id,
                "user_id": s.user_id,
                "label": s.label,
                "usable": s.usable,
                "bought_items": sorted(s.bought_items),
                "events": [
                    {
                        "user_id": e.user_id,
                        "session_id": e.session_id,
                        "timestamp": e.timestamp,
                        "event_type": e.event_type,
                        "item_id": e.item_id,
                        "category_id": e.category_id,
                        "price": e.price,
                        "description": e.description,
                    }
                    for e in s.events
                ],
            }
            for s in store.ordered_sessions()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_store(path) -> SessionStore:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != STORE_FORMAT:
        raise ValueError(f"{path}: not a session store file")
    if doc.get("version") != STORE_VERSION:
        raise ValueError(f"{path}: unsupported store version {doc.get('version')}")
    sessions: dict[str, Session] = {}
    user_index: dict[str, list[str]] = {}
    for rec in doc["sessions"]:
        events = [RawEvent(**ev) for ev in rec["events"]]
        sess = Session(
            session_id=rec["session_id"],
            user_id=rec["user_id"],
            events=events,
            bought_items=set(rec["bought_items"]),
            label=rec["label"],
            usable=rec["usable"],
        )
        sessions[sess.session_id] = sess
        user_index.setdefault(sess.user_id, []).append(sess.session_id)
    return SessionStore(sessions, user_index, doc.get("duplicates_dropped", 0))
