"""Synthetic clickstream generator: determinism, parseability, signal."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from buyintent.ingest import ingest_events, parse_events
from buyintent.synth import SynthConfig, bayes_optimal_auc, generate


def small_cfg(**kw):
    base = dict(
        n_users=80,
        n_categories=12,
        buy_rate=0.1,
        signal_strength=1.0,
        nonlinear=False,
        weeks=2,
        seed=5,
    )
    base.update(kw)
    return SynthConfig(**base)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_users": 0},
            {"n_categories": 5},  # needs room beyond the signal categories
            {"buy_rate": 0.0},
            {"buy_rate": 1.0},
            {"signal_strength": -0.1},
            {"weeks": 0},
            {"impulsive_fraction": 1.5},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            small_cfg(**kwargs)


class TestGenerateOutputs:
    def test_files_written(self, tmp_path):
        result = generate(small_cfg(), str(tmp_path / "out"))
        for path in (
            result.events_path,
            result.truth_path,
            result.embeddings_path,
            result.config_path,
        ):
            assert os.path.exists(path)
        assert result.n_sessions > 0
        assert 0 < result.n_buy_sessions < result.n_sessions

    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_cfg()
        a = generate(cfg, str(tmp_path / "a"))
        b = generate(cfg, str(tmp_path / "b"))
        for pa, pb in [
            (a.events_path, b.events_path),
            (a.truth_path, b.truth_path),
            (a.embeddings_path, b.embeddings_path),
        ]:
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                assert fa.read() == fb.read()

    def test_different_seed_differs(self, tmp_path):
        a = generate(small_cfg(seed=1), str(tmp_path / "a"))
        b = generate(small_cfg(seed=2), str(tmp_path / "b"))
        with open(a.events_path, "rb") as fa, open(b.events_path, "rb") as fb:
            assert fa.read() != fb.read()

    def test_events_parse_cleanly(self, tmp_path):
        result = generate(small_cfg(), str(tmp_path / "out"))
        with open(result.events_path, "r", encoding="utf-8") as fh:
            parsed = parse_events(fh)
        assert parsed.errors == []
        assert len(parsed.events) > 0

    def test_full_ingest_keeps_every_user(self, tmp_path):
        # generated sessions always have at least 10 clicks, so the
        # activity filter should drop nobody
        cfg = small_cfg()
        result = generate(cfg, str(tmp_path / "out"))
        with open(result.events_path, "r", encoding="utf-8") as fh:
            parsed = parse_events(fh)
        store, report = ingest_events(parsed)
        assert report.users_removed_min_clicks == 0
        assert len({s.user_id for s in store.sessions.values()}) == cfg.n_users

    def test_config_json_records_run(self, tmp_path):
        cfg = small_cfg()
        result = generate(cfg, str(tmp_path / "out"))
        with open(result.config_path, "r", encoding="utf-8") as fh:
            recorded = json.load(fh)
        assert recorded["config"]["n_users"] == cfg.n_users
        assert recorded["config"]["seed"] == cfg.seed
        derived = recorded["derived"]
        assert derived["n_sessions"] == result.n_sessions
        assert derived["n_buy_sessions"] == result.n_buy_sessions
        assert derived["bayes_auc"] == result.bayes_auc

    def test_truth_covers_every_session(self, tmp_path):
        result = generate(small_cfg(), str(tmp_path / "out"))
        with open(result.truth_path, "r", encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh]
        assert len(rows) == result.n_sessions
        assert sum(1 for r in rows if r["label"] == "buy") == result.n_buy_sessions
        with open(result.events_path, "r", encoding="utf-8") as fh:
            parsed = parse_events(fh)
        event_sids = {e.session_id for e in parsed.events}
        truth_sids = {r["session_id"] for r in rows}
        assert truth_sids == event_sids

    def test_embeddings_table_is_loadable(self, tmp_path):
        from buyintent.features import EMBED_DIM, load_embedding_table

        result = generate(small_cfg(), str(tmp_path / "out"))
        table = load_embedding_table(result.embeddings_path)
        assert len(table.entries) > 0
        for vec in table.entries.values():
            assert vec.shape == (EMBED_DIM,)


class TestLabelStatistics:
    def test_buy_rate_near_target(self, tmp_path):
        cfg = small_cfg(n_users=400, buy_rate=0.1, seed=9)
        result = generate(cfg, str(tmp_path / "out"))
        rate = result.n_buy_sessions / result.n_sessions
        sigma = np.sqrt(0.1 * 0.9 / result.n_sessions)
        assert abs(rate - 0.1) < 4 * sigma + 0.01

    def test_buy_events_match_labels(self, tmp_path):
        result = generate(small_cfg(), str(tmp_path / "out"))
        with open(result.events_path, "r", encoding="utf-8") as fh:
            parsed = parse_events(fh)
        buy_sids = {e.session_id for e in parsed.events if e.event_type == "buy"}
        with open(result.truth_path, "r", encoding="utf-8") as fh:
            labels = {r["session_id"]: r["label"] == "buy" for r in map(json.loads, fh)}
        for sid, label in labels.items():
            assert (sid in buy_sids) == label

    def test_intent_orders_labels(self, tmp_path):
        # sessions that did buy should carry visibly higher intent
        result = generate(small_cfg(n_users=300, seed=2), str(tmp_path / "out"))
        with open(result.truth_path, "r", encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh]
        buy = [r["intent"] for r in rows if r["label"] == "buy"]
        browse = [r["intent"] for r in rows if r["label"] != "buy"]
        assert np.mean(buy) > np.mean(browse)


class TestBayesCeiling:
    def test_perfectly_separated_truth_gives_one(self, tmp_path):
        path = tmp_path / "truth.jsonl"
        rows = [
            {"session_id": "a", "user_id": "u", "intent": 0.9, "label": "buy"},
            {"session_id": "b", "user_id": "u", "intent": 0.8, "label": "buy"},
            {"session_id": "c", "user_id": "u", "intent": 0.2, "label": "non_buy"},
            {"session_id": "d", "user_id": "u", "intent": 0.1, "label": "non_buy"},
        ]
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        assert bayes_optimal_auc(str(path)) == 1.0

    def test_constant_intent_gives_half(self, tmp_path):
        path = tmp_path / "truth.jsonl"
        rows = [
            {"session_id": "a", "user_id": "u", "intent": 0.5, "label": "buy"},
            {"session_id": "b", "user_id": "u", "intent": 0.5, "label": "non_buy"},
        ]
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        assert bayes_optimal_auc(str(path)) == 0.5

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            bayes_optimal_auc(str(tmp_path / "nope.jsonl"))

    def test_generated_ceiling_is_informative(self, tmp_path):
        result = generate(small_cfg(n_users=300, seed=3), str(tmp_path / "out"))
        assert 0.6 < result.bayes_auc <= 1.0

    def test_zero_signal_ceiling_near_half(self, tmp_path):
        cfg = small_cfg(n_users=400, signal_strength=0.0, seed=4)
        result = generate(cfg, str(tmp_path / "out"))
        assert abs(result.bayes_auc - 0.5) < 0.04

    def test_nonlinear_mode_also_produces_signal(self, tmp_path):
        cfg = small_cfg(n_users=300, nonlinear=True, seed=6)
        result = generate(cfg, str(tmp_path / "out"))
        assert result.bayes_auc > 0.6
