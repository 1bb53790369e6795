"""Engineered session features, temporal category aggregation, and
balanced dataset assembly.

Scalar features are computed per session; historical ones (click-buy
ratio, sessions-before-buy, past purchase price) walk each user's
sessions chronologically and only look at strictly earlier sessions, so
no feature peeks at the session's own outcome.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from datetime import date, timedelta, timezone, datetime
from statistics import median

import numpy as np

from .dataset import Dataset
from .ingest import MS_PER_HOUR, Session, SessionStore

log = logging.getLogger(__name__)

EMBED_DIM = 50

DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be by for from has have in is it its of on or that the
    this to was were will with""".split()
)

SCALAR_FEATURES = [
    "duration_before_purchase",
    "click_buy_ratio",
    "median_sessions_before_buy",
    "price",
    "item_duration_total",
    "hour",
    "n_clicks",
    "n_distinct_items",
    "avg_purchase_price",
    "views_24h",
    "views_week",
]

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(eq=False)
class SessionFeatures:
    """The engineered per-session values, one field per output column
    plus the 50-dim description embedding."""

    duration_before_purchase: float
    click_buy_ratio: float
    median_sessions_before_buy: float
    price: float
    item_duration_total: float
    hour: int
    n_clicks: int
    n_distinct_items: int
    avg_purchase_price: float
    views_24h: int
    views_week: int
    desc_vector: np.ndarray

    def scalar_row(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in SCALAR_FEATURES], dtype=float)


@dataclass(eq=False)
class EmbeddingTable:
    """Token -> 50-dim vector lookup with a stopword set."""

    entries: dict[str, np.ndarray]
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    dim: int = EMBED_DIM

    def __post_init__(self):
        for tok, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"embedding for '{tok}' has length {vec.shape}, want {self.dim}")


def load_embedding_table(path, stopwords=DEFAULT_STOPWORDS) -> EmbeddingTable:
    """Read a TSV of token + 50 floats per line."""
    entries: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != EMBED_DIM + 1:
                raise ValueError(f"{path}:{line_no}: expected {EMBED_DIM + 1} columns, got {len(parts)}")
            entries[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=float)
    return EmbeddingTable(entries=entries, stopwords=frozenset(stopwords))


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def embed_description(text: str, table: EmbeddingTable) -> np.ndarray:
    """Mean embedding of the in-vocabulary, non-stopword tokens; the
    zero vector when nothing remains."""
    vecs = [
        table.entries[tok]
        for tok in tokenize(text)
        if tok not in table.stopwords and tok in table.entries
    ]
    if not vecs:
        return np.zeros(table.dim)
    return np.mean(vecs, axis=0)


def item_durations(session: Session) -> dict[str, float]:
    """Seconds spent per item, from gaps between consecutive clicks.

    Each click's dwell is the time to the next click; the last click
    gets the median dwell of the session's other clicks (0 when it is
    the only one). Per-item duration sums the dwells of that item's
    clicks.
    """
    clicks = session.click_events()
    if not clicks:
        return {}
    gaps = [
        (clicks[i + 1].timestamp - clicks[i].timestamp) / 1000.0
        for i in range(len(clicks) - 1)
    ]
    last = median(gaps) if gaps else 0.0
    dwell = gaps + [last]
    out: dict[str, float] = {}
    for ev, d in zip(clicks, dwell):
        out[ev.item_id] = out.get(ev.item_id, 0.0) + d
    return out


def click_buy_ratio(user_sessions) -> dict[str, float]:
    """Per-session mean of per-item historical buys/clicks for one user.

    History is everything in the user's strictly earlier sessions; items
    the user never clicked before contribute 0.
    """
    ordered = sorted(user_sessions, key=lambda s: (s.events[0].timestamp, s.session_id))
    clicks: dict[str, int] = {}
    buys: dict[str, int] = {}
    out: dict[str, float] = {}
    for sess in ordered:
        items = sorted({e.item_id for e in sess.click_events()})
        if items:
            ratios = [buys.get(i, 0) / clicks[i] if clicks.get(i) else 0.0 for i in items]
            out[sess.session_id] = float(np.mean(ratios))
        else:
            out[sess.session_id] = 0.0
        for ev in sess.click_events():
            clicks[ev.item_id] = clicks.get(ev.item_id, 0) + 1
        for ev in sess.events:
            if ev.event_type == "buy":
                buys[ev.item_id] = buys.get(ev.item_id, 0) + 1
    return out


def _user_prior_stats(user_sessions) -> tuple[dict[str, float], dict[str, float]]:
    """Sessions-before-buy medians and mean past purchase price, per
    session, over strictly earlier sessions of the same user."""
    ordered = sorted(user_sessions, key=lambda s: (s.events[0].timestamp, s.session_id))
    sessions_before: dict[str, float] = {}
    past_price: dict[str, float] = {}
    gaps: list[int] = []
    prev_buy_idx: int | None = None
    price_sum, price_n = 0.0, 0
    for idx, sess in enumerate(ordered):
        sessions_before[sess.session_id] = float(median(gaps)) if gaps else 0.0
        past_price[sess.session_id] = price_sum / price_n if price_n else 0.0
        if sess.label == "buy":
            gaps.append(idx - prev_buy_idx - 1 if prev_buy_idx is not None else idx)
            prev_buy_idx = idx
        for ev in sess.events:
            if ev.event_type == "buy" and ev.price is not None:
                price_sum += ev.price
                price_n += 1
    return sessions_before, past_price


def compute_session_features(
    store: SessionStore, table: EmbeddingTable, tz_offset_hours: int = 0
) -> dict[str, SessionFeatures]:
    """SessionFeatures for every usable session in the store."""
    ratio: dict[str, float] = {}
    s_before: dict[str, float] = {}
    past_price: dict[str, float] = {}
    user_pageviews: dict[str, np.ndarray] = {}
    for user_id in store.user_index:
        sessions = store.user_sessions(user_id)
        ratio.update(click_buy_ratio(sessions))
        sb, pp = _user_prior_stats(sessions)
        s_before.update(sb)
        past_price.update(pp)
        ts = [
            e.timestamp
            for s in sessions
            for e in s.feature_events()
            if e.event_type == "pageview"
        ]
        user_pageviews[user_id] = np.array(sorted(ts), dtype=np.int64)

    out: dict[str, SessionFeatures] = {}
    for sess in store.ordered_sessions():
        if not sess.usable:
            continue
        feats = sess.feature_events()
        durations = item_durations(sess)
        prices = [e.price for e in feats if e.price is not None]
        texts = " ".join(e.description for e in feats if e.description)
        ref = feats[-1].timestamp
        views = user_pageviews[sess.user_id]
        day_ms = 24 * MS_PER_HOUR
        out[sess.session_id] = SessionFeatures(
            duration_before_purchase=(feats[-1].timestamp - feats[0].timestamp) / 1000.0,
            click_buy_ratio=ratio[sess.session_id],
            median_sessions_before_buy=s_before[sess.session_id],
            price=float(np.mean(prices)) if prices else 0.0,
            item_duration_total=float(sum(durations.values())),
            hour=int((sess.events[0].timestamp // MS_PER_HOUR + tz_offset_hours) % 24),
            n_clicks=len(sess.click_events()),
            n_distinct_items=len({e.item_id for e in sess.click_events()}),
            avg_purchase_price=past_price[sess.session_id],
            views_24h=int(np.sum((views > ref - day_ms) & (views <= ref))),
            views_week=int(np.sum((views > ref - 7 * day_ms) & (views <= ref))),
            desc_vector=embed_description(texts, table),
        )
    return out


@dataclass(eq=False)
class AggregateFragment:
    """Pageview counts per (category, time bucket), one row per session."""

    matrix: np.ndarray
    column_names: list[str]
    session_ids: list[str]


def _utc_date(ts_ms: int) -> date:
    return datetime.fromtimestamp(ts_ms / 1000.0, tz=timezone.utc).date()


def _week_monday(d: date) -> date:
    return d - timedelta(days=d.isocalendar()[2] - 1)


def aggregate_pageviews(store: SessionStore, categories, scheme: str) -> AggregateFragment:
    """Count pageviews per product category and calendar time bucket.

    Buckets are ISO weeks spanning the store's observation window;
    the semiweekly scheme splits each week into days 1-3 and 4-7.
    Categories not observed anywhere in the store are an error.
    """
    if scheme not in ("weekly", "semiweekly"):
        raise ValueError(f"unknown aggregation scheme '{scheme}'")
    categories = list(categories)
    if not categories:
        raise ValueError("category list must be non-empty")
    observed = {
        e.category_id
        for s in store.sessions.values()
        for e in s.feature_events()
        if e.event_type == "pageview" and e.category_id is not None
    }
    unknown = [c for c in categories if c not in observed]
    if unknown:
        raise ValueError(f"categories not present in store: {unknown[:5]}")

    session_ids = [s.session_id for s in store.ordered_sessions() if s.usable]
    all_ts = [
        e.timestamp
        for sid in session_ids
        for e in store.sessions[sid].feature_events()
    ]
    if not all_ts:
        return AggregateFragment(np.zeros((0, 0)), [], [])

    first, last = _week_monday(_utc_date(min(all_ts))), _week_monday(_utc_date(max(all_ts)))
    weeks: list[date] = []
    cur = first
    while cur <= last:
        weeks.append(cur)
        cur += timedelta(days=7)
    halves = ["h1", "h2"] if scheme == "semiweekly" else [""]

    col_of: dict[tuple, int] = {}
    names: list[str] = []
    for monday in weeks:
        iso = monday.isocalendar()
        for half in halves:
            for cat in categories:
                name = f"cat_{cat}_{iso[0]}w{iso[1]:02d}" + (f"_{half}" if half else "")
                col_of[(monday, half, cat)] = len(names)
                names.append(name)

    cat_set = set(categories)
    matrix = np.zeros((len(session_ids), len(names)))
    for row, sid in enumerate(session_ids):
        for ev in store.sessions[sid].feature_events():
            if ev.event_type != "pageview" or ev.category_id not in cat_set:
                continue
            d = _utc_date(ev.timestamp)
            half = "" if scheme == "weekly" else ("h1" if d.isocalendar()[2] <= 3 else "h2")
            matrix[row, col_of[(_week_monday(d), half, ev.category_id)]] += 1.0
    return AggregateFragment(matrix, names, session_ids)


def assemble_dataset(
    store: SessionStore,
    features: dict[str, SessionFeatures],
    fragment: AggregateFragment,
    scheme: str,
    categories,
) -> Dataset:
    """Concatenate scalar features, description dims, and aggregation
    columns into a labeled Dataset, one row per usable session."""
    session_ids = fragment.session_ids
    missing = [sid for sid in session_ids if sid not in features]
    if missing:
        raise ValueError(f"features missing for sessions: {missing[:5]}")
    if not session_ids:
        base_names = SCALAR_FEATURES + [f"desc_{i:02d}" for i in range(EMBED_DIM)]
        return Dataset(
            rows=np.zeros((0, len(base_names))),
            labels=np.zeros(0, dtype=np.uint8),
            feature_names=base_names,
            aggregation=scheme,
            category_count=len(list(categories)),
            n_base_cols=len(base_names),
        )
    scalars = np.stack([features[sid].scalar_row() for sid in session_ids])
    desc = np.stack([features[sid].desc_vector for sid in session_ids])
    if fragment.matrix.shape[0] != len(session_ids):
        raise ValueError("fragment row count does not match session count")
    rows = np.hstack([scalars, desc, fragment.matrix])
    labels = np.array(
        [1 if store.sessions[sid].label == "buy" else 0 for sid in session_ids],
        dtype=np.uint8,
    )
    names = (
        SCALAR_FEATURES
        + [f"desc_{i:02d}" for i in range(EMBED_DIM)]
        + fragment.column_names
    )
    return Dataset(
        rows=rows,
        labels=labels,
        feature_names=names,
        aggregation=scheme,
        category_count=len(list(categories)),
        n_base_cols=len(SCALAR_FEATURES) + EMBED_DIM,
    )


def balance(ds: Dataset, seed: int) -> Dataset:
    """Equalize classes by subsampling non-buy rows without replacement,
    then shuffle. Deterministic for a given seed."""
    pos = np.flatnonzero(ds.labels == 1)
    neg = np.flatnonzero(ds.labels == 0)
    if len(pos) == 0:
        raise ValueError("cannot balance a dataset with no positives")
    if len(pos) > len(neg):
        raise ValueError(
            f"more positives ({len(pos)}) than negatives ({len(neg)}); "
            "cannot balance by negative subsampling"
        )
    rng = np.random.default_rng(seed)
    neg_keep = rng.choice(neg, size=len(pos), replace=False)
    idx = np.concatenate([pos, neg_keep])
    idx = idx[rng.permutation(len(idx))]
    out = ds.take(idx)
    out.seed = seed
    return out


def top_categories(store: SessionStore, k: int) -> list[str]:
    """The k most-viewed category ids (pageview counts, ties by id)."""
    counts: dict[str, int] = {}
    for sess in store.sessions.values():
        for ev in sess.feature_events():
            if ev.event_type == "pageview" and ev.category_id is not None:
                counts[ev.category_id] = counts.get(ev.category_id, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [cat for cat, _ in ranked[:k]]


def constant_columns(ds: Dataset) -> list[str]:
    if ds.n == 0:
        return []
    const = np.all(ds.rows == ds.rows[0], axis=0)
    return [name for name, c in zip(ds.feature_names, const) if c]


def featurize_store(
    store: SessionStore,
    table: EmbeddingTable,
    scheme: str = "weekly",
    categories=None,
    n_categories: int | None = None,
    tz_offset_hours: int = 0,
) -> Dataset:
    """Full featurization: engineered features + aggregation + labels.

    Either an explicit category list or a top-n_categories count must be
    given. The result is unbalanced; apply balance() afterwards.
    """
    if categories is None:
        if n_categories is None:
            raise ValueError("pass categories or n_categories")
        categories = top_categories(store, n_categories)
    feats = compute_session_features(store, table, tz_offset_hours)
    fragment = aggregate_pageviews(store, categories, scheme)
    ds = assemble_dataset(store, feats, fragment, scheme, categories)
    const = constant_columns(ds)
    if const:
        log.warning("%d constant feature columns (first: %s)", len(const), const[:3])
    return ds
