"""Parsing, sessionization, filters, and store persistence."""

from __future__ import annotations

import json

import numpy as np
import pytest

from buyintent.ingest import (
    MS_PER_HOUR,
    ParseResult,
    RawEvent,
    Session,
    apply_prediction_window,
    exclude_prediction_window,
    filter_min_clicks,
    ingest_events,
    load_store,
    parse_events,
    save_store,
    sessionize,
)

DAY = 24 * MS_PER_HOUR


def ev(user="u1", sid="s1", ts=0, etype="pageview", item="i1", **kw):
    return RawEvent(
        user_id=user, session_id=sid, timestamp=ts, event_type=etype, item_id=item, **kw
    )


def lines(*objs):
    return "\n".join(json.dumps(o) for o in objs) + "\n"


def base_obj(**kw):
    obj = {
        "user_id": "u1",
        "session_id": "s1",
        "timestamp": 1000,
        "event_type": "pageview",
        "item_id": "i1",
    }
    obj.update(kw)
    return obj


class TestParseEvents:
    def test_valid_lines_parse_in_order(self):
        text = lines(base_obj(timestamp=5), base_obj(timestamp=9, item_id="i2"))
        result = parse_events(text.splitlines(True))
        assert not result.errors
        assert [e.timestamp for e in result.events] == [5, 9]
        assert result.events[1].item_id == "i2"

    def test_malformed_json_recorded_with_line_number(self):
        text = lines(base_obj()) + "{broken\n" + lines(base_obj(timestamp=2))
        result = parse_events(text.splitlines(True))
        assert len(result.events) == 2
        assert len(result.errors) == 1
        assert result.errors[0].line_no == 2
        assert "JSON" in result.errors[0].reason

    def test_missing_field(self):
        obj = base_obj()
        del obj["item_id"]
        result = parse_events(lines(obj).splitlines(True))
        assert not result.events
        assert "item_id" in result.errors[0].reason

    def test_unknown_event_type(self):
        result = parse_events(lines(base_obj(event_type="hover")).splitlines(True))
        assert "hover" in result.errors[0].reason

    def test_non_integral_timestamp(self):
        result = parse_events(lines(base_obj(timestamp=12.5)).splitlines(True))
        assert "timestamp" in result.errors[0].reason

    def test_negative_timestamp(self):
        result = parse_events(lines(base_obj(timestamp=-3)).splitlines(True))
        assert "timestamp" in result.errors[0].reason

    def test_price_only_on_commerce_events(self):
        result = parse_events(lines(base_obj(price=9.5)).splitlines(True))
        assert "price" in result.errors[0].reason
        ok = parse_events(
            lines(base_obj(event_type="buy", price=9.5)).splitlines(True)
        )
        assert not ok.errors
        assert ok.events[0].price == 9.5

    def test_negative_price(self):
        result = parse_events(
            lines(base_obj(event_type="buy", price=-1)).splitlines(True)
        )
        assert "price" in result.errors[0].reason

    def test_bytes_input_and_blank_lines(self):
        payload = ("\n" + lines(base_obj()) + "\n").encode("utf-8")
        result = parse_events(payload)
        assert len(result.events) == 1
        assert not result.errors


class TestSessionize:
    def test_groups_and_sorts_by_timestamp(self):
        store = sessionize(
            [ev(ts=30), ev(ts=10, item="a"), ev(sid="s2", ts=5, user="u2")]
        )
        assert sorted(store.sessions) == ["s1", "s2"]
        s1 = store.sessions["s1"]
        assert [e.timestamp for e in s1.events] == [10, 30]
        assert store.user_index["u2"] == ["s2"]

    def test_ads_excluded(self):
        store = sessionize([ev(), ev(ts=1, etype="adview"), ev(ts=2, etype="adclick")])
        assert len(store.sessions["s1"].events) == 1

    def test_duplicates_dropped_and_counted(self):
        store = sessionize([ev(ts=7), ev(ts=7), ev(ts=8)])
        assert store.duplicates_dropped == 1
        assert len(store.sessions["s1"].events) == 2

    def test_buy_label_and_bought_items(self):
        store = sessionize(
            [ev(ts=1), ev(ts=2, etype="buy", item="ix", price=3.0)]
        )
        s = store.sessions["s1"]
        assert s.label == "buy"
        assert s.bought_items == {"ix"}
        assert [e.item_id for e in s.feature_events()] == ["i1"]

    def test_non_buy_session(self):
        store = sessionize([ev(), ev(ts=1, etype="basketview", item="i2", price=2.0)])
        s = store.sessions["s1"]
        assert s.label == "non_buy"
        assert not s.bought_items
        assert len(s.click_events()) == 2


class TestFilterMinClicks:
    def build(self, n_events_u1: int):
        events = [ev(ts=i, item=f"i{i}") for i in range(n_events_u1)]
        events += [ev(user="u2", sid=f"t{j}", ts=j, item="x") for j in range(12)]
        return sessionize(events)

    def test_user_below_threshold_dropped_entirely(self):
        store = filter_min_clicks(self.build(9), min_clicks=10)
        assert "u1" not in store.user_index
        assert len(store.user_index["u2"]) == 12

    def test_boundary_user_kept(self):
        store = filter_min_clicks(self.build(10), min_clicks=10)
        assert "u1" in store.user_index

    def test_counts_all_sessions_of_user(self):
        events = [ev(sid="a", ts=1), ev(sid="b", ts=2)] + [
            ev(user="u2", sid="c", ts=i, item=f"i{i}") for i in range(10)
        ]
        store = filter_min_clicks(sessionize(events), min_clicks=2)
        assert "u1" in store.user_index

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            filter_min_clicks(self.build(5), min_clicks=0)


class TestPredictionWindow:
    def buy_session(self, browse_ts, buy_ts):
        events = [ev(ts=t, item=f"i{t}") for t in browse_ts]
        events.append(ev(ts=buy_ts, etype="buy", item="ib", price=1.0))
        return sessionize(events).sessions["s1"]

    def test_events_inside_window_removed(self):
        sess = self.buy_session([0, DAY, 3 * DAY - 1], 3 * DAY)
        out = exclude_prediction_window(sess, DAY)
        kept = [e.timestamp for e in out.feature_events()]
        assert kept == [0, DAY]
        assert out.usable
        assert out.label == "buy"

    def test_boundary_event_exactly_at_cutoff_removed(self):
        sess = self.buy_session([0, 2 * DAY], 3 * DAY)
        out = exclude_prediction_window(sess, DAY)
        assert [e.timestamp for e in out.feature_events()] == [0]

    def test_emptied_session_flagged_unusable(self):
        sess = self.buy_session([10, 20], 3600_000)
        out = exclude_prediction_window(sess, DAY)
        assert not out.usable
        assert out.label == "buy"
        assert not out.feature_events()

    def test_multiple_buys_use_earliest(self):
        events = [ev(ts=0), ev(ts=5 * DAY, item="late")]
        events.append(ev(ts=2 * DAY, etype="buy", item="b1", price=1.0))
        events.append(ev(ts=9 * DAY, etype="buy", item="b2", price=1.0))
        sess = sessionize(events).sessions["s1"]
        out = exclude_prediction_window(sess, DAY)
        assert [e.timestamp for e in out.feature_events()] == [0]
        assert len([e for e in out.events if e.event_type == "buy"]) == 2

    def test_non_buy_untouched(self):
        sess = sessionize([ev(ts=0), ev(ts=1)]).sessions["s1"]
        out = exclude_prediction_window(sess, DAY)
        assert out is sess

    def test_bad_horizon(self):
        sess = self.buy_session([0], DAY)
        with pytest.raises(ValueError):
            exclude_prediction_window(sess, 0)

    def test_store_level_application(self):
        events = [ev(ts=0), ev(ts=DAY // 2, etype="buy", item="b", price=1.0)]
        events += [ev(user="u2", sid="s2", ts=0)]
        store = apply_prediction_window(sessionize(events), DAY)
        assert not store.sessions["s1"].usable
        assert store.sessions["s2"].usable


class TestIngestReport:
    def test_counts_on_hand_built_log(self):
        objs = [
            base_obj(timestamp=i, item_id=f"i{i}") for i in range(10)
        ]
        objs.append(base_obj(timestamp=5 * DAY, event_type="buy", item_id="i1", price=2.0))
        objs.append(base_obj(timestamp=3, event_type="adview", item_id="ad"))
        objs.append(
            base_obj(user_id="u9", session_id="s9", timestamp=1)
        )
        parsed = parse_events(lines(*objs).splitlines(True))
        store, report = ingest_events(parsed, min_clicks=10, horizon_ms=DAY)
        assert report.events_parsed == 13
        assert report.parse_errors == 0
        assert report.event_type_counts["pageview"] == 11
        assert report.event_type_counts["buy"] == 1
        assert report.event_type_counts["adview"] == 1
        assert report.users == 1
        assert report.sessions == 1
        assert report.buy_sessions == 1
        assert report.users_removed_min_clicks == 1
        assert report.sessions_removed_min_clicks == 1
        assert report.unusable_buy_sessions == 0
        assert store.sessions["s1"].usable

    def test_report_json_round_trip(self):
        parsed = ParseResult(events=[], errors=[])
        _, report = ingest_events(parsed, min_clicks=1)
        doc = json.loads(report.to_json())
        assert doc["events_parsed"] == 0


class TestStorePersistence:
    def test_round_trip_bit_exact(self, tmp_path, store):
        p1 = tmp_path / "store1.json"
        p2 = tmp_path / "store2.json"
        save_store(store, p1)
        reloaded = load_store(p1)
        save_store(reloaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert len(reloaded) == len(store)
        sid = next(iter(store.sessions))
        assert reloaded.sessions[sid].events == store.sessions[sid].events
        assert reloaded.sessions[sid].usable == store.sessions[sid].usable

    def test_format_guard(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            load_store(bad)

    def test_version_guard(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"format": "buyintent-store", "version": 99}')
        with pytest.raises(ValueError):
            load_store(bad)


class TestUserSessions:
    def test_chronological_order(self):
        events = [
            ev(sid="b", ts=100),
            ev(sid="a", ts=200),
            ev(sid="c", ts=50),
        ]
        store = sessionize(events)
        assert [s.session_id for s in store.user_sessions("u1")] == ["c", "b", "a"]

    def test_unknown_user_empty(self):
        assert sessionize([ev()]).user_sessions("nobody") == []
