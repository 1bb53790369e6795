"""Shared fixtures: a small generated corpus and its derived artifacts."""

from __future__ import annotations

import pytest

from buyintent.features import balance, featurize_store, load_embedding_table
from buyintent.ingest import ingest_events, parse_events
from buyintent.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """A compact linear-signal corpus reused across test modules."""
    out = tmp_path_factory.mktemp("corpus")
    cfg = SynthConfig(
        n_users=300,
        n_categories=20,
        buy_rate=0.08,
        signal_strength=1.0,
        nonlinear=False,
        weeks=2,
        seed=424,
    )
    result = generate(cfg, str(out))
    return cfg, result


@pytest.fixture(scope="session")
def store_and_report(corpus):
    _, result = corpus
    with open(result.events_path, "r", encoding="utf-8") as fh:
        parsed = parse_events(fh)
    assert not parsed.errors
    return ingest_events(parsed)


@pytest.fixture(scope="session")
def store(store_and_report):
    return store_and_report[0]


@pytest.fixture(scope="session")
def embedding_table(corpus):
    _, result = corpus
    return load_embedding_table(result.embeddings_path)


@pytest.fixture(scope="session")
def feature_dataset(store, embedding_table):
    return featurize_store(store, embedding_table, scheme="weekly", n_categories=20)


@pytest.fixture(scope="session")
def balanced_dataset(feature_dataset):
    return balance(feature_dataset, seed=7)
