"""Command-line pipeline: synth, ingest, featurize, reduce, train,
evaluate, search.

Every artifact-producing command writes a manifest next to its output
(command, flags, input and output digests, seed, version, wall-clock)
so any artifact can be reproduced bit-exactly from its manifest. Seeds
are explicit flags everywhere; nothing is seeded from the clock.

Exit codes: 0 success, 1 failure with a structured JSON error on
stderr, 2 usage errors (from argument parsing).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

from . import __version__
from .baselines import (
    Forest,
    LogisticModel,
    forest_scores,
    predict_logistic,
    train_forest,
    train_logistic,
)
from .dataset import Dataset, load_dataset, save_dataset
from .evaluation import (
    SearchSpace,
    cross_validate,
    holdout_evaluate,
    random_search,
)
from .features import balance, featurize_store, load_embedding_table
from .ingest import ingest_events, load_store, parse_events, save_store
from .neural import Hyperparams, Network, network_predict, train_mlp, train_sda
from .nmf import reduce_dataset
from .rbm import train_dbn
from .synth import SynthConfig, generate
from .util import TrainingDiverged

MODEL_FORMAT = "buyintent-model"
MODEL_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: str, command: str, args: dict, inputs: list[str], outputs: list[str], seed, started: float):
    manifest = {
        "command": command,
        "flags": {k: v for k, v in sorted(args.items()) if k not in ("func", "command")},
        "inputs": {p: _digest(p) for p in inputs},
        "outputs": {p: _digest(p) for p in outputs},
        "seed": seed,
        "version": __version__,
        "wall_seconds": round(time.time() - started, 3),
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        fh.write(_dumps(manifest) + "\n")


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _cmd_synth(args) -> int:
    started = time.time()
    cfg = SynthConfig(
        n_users=args.users,
        n_categories=args.categories,
        buy_rate=args.buy_rate,
        signal_strength=args.signal,
        nonlinear=args.nonlinear,
        weeks=args.weeks,
        seed=args.seed,
    )
    result = generate(cfg, args.out)
    outputs = [result.events_path, result.truth_path, result.embeddings_path, result.config_path]
    _write_manifest(result.events_path, "synth", vars(args), [], outputs, args.seed, started)
    print(
        _dumps(
            {
                "n_sessions": result.n_sessions,
                "n_buy_sessions": result.n_buy_sessions,
                "bayes_auc": result.bayes_auc,
                "events": result.events_path,
            }
        )
    )
    return 0


def _cmd_ingest(args) -> int:
    started = time.time()
    with open(args.input, "r", encoding="utf-8") as fh:
        parsed = parse_events(fh)
    store, report = ingest_events(
        parsed, min_clicks=args.min_clicks, horizon_ms=int(args.horizon_hours * 3_600_000)
    )
    save_store(store, args.out)
    report_path = args.out + ".report.json"
    _write_text(report_path, report.to_json() + "\n")
    _write_manifest(args.out, "ingest", vars(args), [args.input], [args.out, report_path], None, started)
    print(report.to_json())
    return 0


def _cmd_featurize(args) -> int:
    started = time.time()
    store = load_store(args.store)
    table = load_embedding_table(args.embeddings)
    ds = featurize_store(store, table, scheme=args.scheme, n_categories=args.categories)
    if args.balance_seed is not None:
        ds = balance(ds, args.balance_seed)
    save_dataset(ds, args.out)
    meta_path = args.out + ".meta.json"
    _write_text(
        meta_path,
        _dumps(
            {
                "n": ds.n,
                "d": ds.d,
                "positives": int(ds.labels.sum()),
                "aggregation": ds.aggregation,
                "category_count": ds.category_count,
                "n_base_cols": ds.n_base_cols,
                "seed": ds.seed,
                "feature_names": ds.feature_names,
            }
        )
        + "\n",
    )
    _write_manifest(
        args.out, "featurize", vars(args), [args.store, args.embeddings],
        [args.out, meta_path], args.balance_seed, started,
    )
    print(_dumps({"n": ds.n, "d": ds.d, "positives": int(ds.labels.sum())}))
    return 0


def _cmd_reduce(args) -> int:
    started = time.time()
    ds = load_dataset(args.infile)
    reduced, factors = reduce_dataset(ds, args.rank, args.seed, max_iters=args.max_iters, tol=args.tol)
    save_dataset(reduced, args.out)
    factors_path = args.out + ".factors.json"
    _write_text(
        factors_path,
        _dumps(
            {
                "rank": factors.rank,
                "n_iters": factors.n_iters,
                "error_trace": factors.error_trace,
                "H": factors.H.tolist(),
            }
        )
        + "\n",
    )
    _write_manifest(args.out, "reduce", vars(args), [args.infile], [args.out, factors_path], args.seed, started)
    print(_dumps({"rank": factors.rank, "n_iters": factors.n_iters, "final_error": factors.error}))
    return 0


def _parse_layers(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ValueError(f"bad --layers value '{text}'; expected comma-separated integers")
    if not sizes:
        raise ValueError("--layers must name at least one layer size")
    return sizes


_HP_FIELD_TYPES = {
    "activation": str,
    "initial_learning_rate": float,
    "momentum": float,
    "l2_weight_cost": float,
    "dropout_fraction": float,
    "epochs": int,
    "annealing_delay_fraction": float,
    "input_noise_level": float,
}


def _load_hp_file(path: str) -> dict:
    """Flat `key = value` lines, # comments allowed."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key == "hidden_units":
                out[key] = _parse_layers(val)
            elif key in _HP_FIELD_TYPES:
                out[key] = _HP_FIELD_TYPES[key](val)
            else:
                raise ValueError(f"{path}:{line_no}: unknown hyperparameter '{key}'")
    return out


def _network_hyperparams(args) -> Hyperparams:
    fields = _load_hp_file(args.hp) if args.hp else {}
    if args.layers:
        fields["hidden_units"] = _parse_layers(args.layers)
    fields.setdefault("hidden_units", (64,))
    if args.epochs is not None:
        fields["epochs"] = args.epochs
    if args.lr is not None:
        fields["initial_learning_rate"] = args.lr
    return Hyperparams(**fields)


def _model_payload(kind: str, seed: int, config: dict, params: dict) -> str:
    return _dumps(
        {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": kind,
            "seed": seed,
            "config": config,
            "params": params,
        }
    )


def _cmd_train(args) -> int:
    started = time.time()
    ds = load_dataset(args.infile)
    kind = args.model
    if kind == "lr":
        config = {"learning_rate": args.lr if args.lr is not None else 0.1,
                  "epochs": args.epochs if args.epochs is not None else 100,
                  "l2": args.l2}
        model = train_logistic(ds, config["learning_rate"], config["epochs"], config["l2"], args.seed)
        payload = _model_payload(kind, args.seed, config, model.to_dict())
    elif kind == "rf":
        config = {"n_trees": args.trees, "mtry": args.mtry}
        forest = train_forest(ds, n_trees=args.trees, mtry=args.mtry, seed=args.seed)
        payload = _model_payload(kind, args.seed, config, forest.to_dict())
    elif kind in ("sda", "dbn", "mlp"):
        hp = _network_hyperparams(args)
        trainers = {"sda": train_sda, "dbn": train_dbn, "mlp": train_mlp}
        net = trainers[kind](ds, hp, args.seed)
        payload = _model_payload(kind, args.seed, hp.to_dict(), net.to_dict())
    else:
        raise ValueError(f"unknown model kind '{kind}'")
    _write_text(args.out, payload + "\n")
    _write_manifest(args.out, "train", vars(args), [args.infile], [args.out], args.seed, started)
    print(_dumps({"kind": kind, "out": args.out}))
    return 0


def load_model(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return doc


def scorer_from_model(doc: dict):
    """A score function over raw feature rows for a loaded model file."""
    kind = doc["kind"]
    if kind == "lr":
        model = LogisticModel.from_dict(doc["params"])
        return lambda X: predict_logistic(model, X)
    if kind == "rf":
        forest = Forest.from_dict(doc["params"])
        return lambda X: forest_scores(forest, X)
    if kind in ("sda", "dbn", "mlp"):
        net = Network.from_dict(doc["params"])
        return lambda X: network_predict(net, X)
    raise ValueError(f"unknown model kind '{kind}'")


def trainer_from_model(doc: dict):
    """A (dataset, seed) -> score_fn trainer matching a model file's
    kind and configuration, for per-fold retraining."""
    kind = doc["kind"]
    if kind == "lr":
        cfg = doc["config"]

        def train_lr(ds: Dataset, seed):
            model = train_logistic(ds, cfg["learning_rate"], cfg["epochs"], cfg["l2"], seed)
            return lambda X: predict_logistic(model, X)

        return train_lr
    if kind == "rf":
        cfg = doc["config"]

        def train_rf(ds: Dataset, seed):
            forest = train_forest(ds, n_trees=cfg["n_trees"], mtry=cfg["mtry"], seed=seed)
            return lambda X: forest_scores(forest, X)

        return train_rf
    if kind in ("sda", "dbn", "mlp"):
        hp = Hyperparams.from_dict(doc["config"])
        trainers = {"sda": train_sda, "dbn": train_dbn, "mlp": train_mlp}

        def train_net(ds: Dataset, seed):
            net = trainers[kind](ds, hp, seed)
            return lambda X: network_predict(net, X)

        return train_net
    raise ValueError(f"unknown model kind '{kind}'")


def _cmd_evaluate(args) -> int:
    started = time.time()
    ds = load_dataset(args.infile)
    doc = load_model(args.model)
    trainer = trainer_from_model(doc)
    names = dict(model_name=doc["kind"], dataset_name=args.infile.rsplit("/", 1)[-1])
    if args.protocol == "holdout":
        report = holdout_evaluate(trainer, ds, args.seed, **names)
    else:
        report = cross_validate(trainer, ds, k=args.cv, seed=args.seed, **names)
    _write_text(args.report, report.to_json() + "\n")
    _write_manifest(args.report, "evaluate", vars(args), [args.model, args.infile], [args.report], args.seed, started)
    print(report.to_json())
    return 0


def _net_trainer_factory(kind: str):
    trainers = {"sda": train_sda, "dbn": train_dbn}

    def make(hp: Hyperparams):
        def trainer(ds: Dataset, seed):
            net = trainers[kind](ds, hp, seed)
            return lambda X: network_predict(net, X)

        return trainer

    return make


def _cmd_search(args) -> int:
    started = time.time()
    ds = load_dataset(args.infile)
    if args.model == "sda":
        space = SearchSpace(depth_choices=(1, 2), with_input_noise=True)
    elif args.model == "dbn":
        space = SearchSpace(depth_choices=(1, 2), activations=("sigmoid",))
    else:
        raise ValueError(f"search supports sda|dbn, got '{args.model}'")
    make = _net_trainer_factory(args.model)
    result = random_search(
        space, make, ds, budget=args.budget, seed=args.seed,
        model_name=args.model, dataset_name=args.infile.rsplit("/", 1)[-1],
    )
    body = _dumps(
        {
            "best_hyperparams": result.best_hyperparams.to_dict(),
            "best_report": json.loads(result.best_report.to_json()),
            "trials": result.trials,
        }
    )
    if args.report:
        _write_text(args.report, body + "\n")
        _write_manifest(args.report, "search", vars(args), [args.infile], [args.report], args.seed, started)
    print(body)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buyintent",
        description="Purchase-intent pipeline: synthesize, ingest, featurize, reduce, train, evaluate, search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded clickstream corpus with planted signal")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--categories", type=int, default=257)
    p.add_argument("--buy-rate", type=float, default=0.03)
    p.add_argument("--signal", type=float, default=0.8)
    p.add_argument("--nonlinear", action="store_true")
    p.add_argument("--weeks", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="parse and sessionize an event log")
    p.add_argument("--input", required=True)
    p.add_argument("--min-clicks", type=int, default=10)
    p.add_argument("--horizon-hours", type=float, default=24.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("featurize", help="build the labeled feature dataset from a session store")
    p.add_argument("--store", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scheme", choices=("weekly", "semiweekly"), default="weekly")
    p.add_argument("--categories", type=int, default=257)
    p.add_argument("--balance-seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("reduce", help="replace aggregation columns with their NMF representation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--model", choices=("lr", "rf", "sda", "dbn", "mlp"), required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--layers", default=None, help="comma-separated hidden sizes, e.g. 300,150")
    p.add_argument("--hp", default=None, help="key = value hyperparameter file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="cross-validate a model configuration on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--cv", type=int, default=10)
    p.add_argument("--protocol", choices=("cv", "holdout"), default="cv")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("search", help="random hyperparameter search for the network models")
    p.add_argument("--model", choices=("sda", "dbn"), required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_search)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, TrainingDiverged, KeyError) as exc:
        sys.stderr.write(
            _dumps({"error": type(exc).__name__, "detail": str(exc)}) + "\n"
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
