"""AUC, cross-validation splitting, the 25%/4-fold holdout protocol,
and seeded random search over the network hyperparameter ranges.

A trainer here is any callable (train: Dataset, seed) -> score_fn,
where score_fn maps raw feature rows to buy probabilities. Models that
need input scaling carry their own scaler, so evaluation never has to
know about it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .neural import Hyperparams
from .util import TrainingDiverged, as_rng, substream_seed


def auc(scores, labels) -> float:
    """Exact rank-based AUC: the probability a random positive outscores
    a random negative, ties counted half. Matches the all-pairs count
    bit for bit because ranks are computed in integer arithmetic.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("labels must contain both classes")
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    upto = np.cumsum(counts)
    start = upto - counts + 1
    avg_rank = (start + upto) / 2.0
    rank_sum = float(avg_rank[inverse][y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def kfold_split(n: int, k: int = 10, seed=0) -> list[np.ndarray]:
    """Seeded permutation of range(n) cut into k near-equal folds."""
    if n < k:
        raise ValueError(f"need at least k={k} rows, got {n}")
    if k < 2:
        raise ValueError("k must be at least 2")
    perm = as_rng(seed).permutation(n)
    return list(np.array_split(perm, k))


@dataclass(eq=False)
class SplitPlan:
    """A held-out test quarter plus four training folds of the rest."""

    test_idx: np.ndarray
    folds: list[np.ndarray]
    seed: int

    def train_for(self, fold: int) -> np.ndarray:
        others = [f for i, f in enumerate(self.folds) if i != fold]
        return np.concatenate(others)


def holdout_protocol(data, seed=0) -> SplitPlan:
    """25% of rows out as the test set, the remaining 75% split into
    four validation folds. Accepts a Dataset or a row count."""
    n = data.n if isinstance(data, Dataset) else int(data)
    if n < 8:
        raise ValueError(f"holdout protocol needs at least 8 rows, got {n}")
    perm = as_rng(seed).permutation(n)
    n_test = n // 4
    return SplitPlan(
        test_idx=perm[:n_test],
        folds=list(np.array_split(perm[n_test:], 4)),
        seed=int(seed),
    )


@dataclass(eq=False)
class EvalReport:
    model: str
    dataset: str
    protocol: str
    seed: int
    fold_aucs: list[float]
    auc: float
    extras: dict = field(default_factory=dict)
    wall_seconds: float | None = None

    def __post_init__(self):
        if self.fold_aucs and not math.isclose(self.auc, float(np.mean(self.fold_aucs))):
            raise ValueError("report auc must equal the mean of fold aucs")

    def to_json(self) -> str:
        """Canonical bytes for hashing and golden comparisons; the
        wall-clock lives in the run manifest, not here."""
        body = {
            "model": self.model,
            "dataset": self.dataset,
            "protocol": self.protocol,
            "seed": self.seed,
            "fold_aucs": self.fold_aucs,
            "auc": self.auc,
            "extras": self.extras,
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            model=d["model"],
            dataset=d["dataset"],
            protocol=d["protocol"],
            seed=d["seed"],
            fold_aucs=d["fold_aucs"],
            auc=d["auc"],
            extras=d.get("extras", {}),
        )


def cross_validate(trainer, ds: Dataset, k: int = 10, seed=0, model_name: str = "model", dataset_name: str = "dataset") -> EvalReport:
    """k-fold CV: train on k-1 folds, score the held-out fold."""
    folds = kfold_split(ds.n, k, seed)
    fold_aucs = []
    for i, val_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        score = trainer(ds.take(train_idx), substream_seed(seed, 401, i))
        fold_aucs.append(auc(score(ds.rows[val_idx]), ds.labels[val_idx]))
    return EvalReport(
        model=model_name,
        dataset=dataset_name,
        protocol=f"cv{k}",
        seed=int(seed),
        fold_aucs=fold_aucs,
        auc=float(np.mean(fold_aucs)),
    )


def holdout_evaluate(trainer, ds: Dataset, seed=0, model_name: str = "model", dataset_name: str = "dataset") -> EvalReport:
    """Train four models, each with one fold held out for validation,
    and report the mean of their test-set AUCs. Per-fold validation
    AUCs ride along in extras for model selection."""
    plan = holdout_protocol(ds, seed)
    test_rows, test_labels = ds.rows[plan.test_idx], ds.labels[plan.test_idx]
    test_aucs, val_aucs = [], []
    for i, val_idx in enumerate(plan.folds):
        score = trainer(ds.take(plan.train_for(i)), substream_seed(seed, 402, i))
        val_aucs.append(auc(score(ds.rows[val_idx]), ds.labels[val_idx]))
        test_aucs.append(auc(score(test_rows), test_labels))
    return EvalReport(
        model=model_name,
        dataset=dataset_name,
        protocol="holdout25x4",
        seed=int(seed),
        fold_aucs=test_aucs,
        auc=float(np.mean(test_aucs)),
        extras={"validation_aucs": val_aucs},
    )


@dataclass(frozen=True)
class SearchSpace:
    """Sampling ranges for the network trainers. Learning rate is drawn
    log-uniformly; everything else uniformly within its bounds."""

    depth_choices: tuple[int, ...] = (1,)
    max_units: int = 500
    activations: tuple[str, ...] = ("sigmoid", "relu")
    with_input_noise: bool = False

    def sample(self, rng) -> Hyperparams:
        rng = as_rng(rng)
        depth = int(rng.choice(self.depth_choices))
        sizes = []
        for i in range(depth):
            floor = 16 if (i == 0 and depth == 1) else 64
            sizes.append(int(rng.integers(floor, self.max_units + 1)))
        epochs_hi = 150 if depth > 1 else 100
        return Hyperparams(
            hidden_units=tuple(sizes),
            activation=str(rng.choice(list(self.activations))),
            initial_learning_rate=float(np.exp(rng.uniform(np.log(0.001), np.log(0.25)))),
            momentum=float(rng.uniform(0.0, 0.95)),
            l2_weight_cost=float(rng.uniform(0.0, 0.01)),
            dropout_fraction=float(rng.uniform(0.0, 0.3)),
            epochs=int(rng.integers(10, epochs_hi + 1)),
            annealing_delay_fraction=float(rng.uniform(0.0, 1.0)),
            input_noise_level=float(rng.uniform(0.0, 0.2)) if self.with_input_noise else 0.0,
        )


@dataclass(eq=False)
class SearchResult:
    best_hyperparams: Hyperparams
    best_report: EvalReport
    trials: list[dict]


def random_search(
    space: SearchSpace,
    make_trainer,
    ds: Dataset,
    budget: int = 20,
    seed=0,
    model_name: str = "model",
    dataset_name: str = "dataset",
) -> SearchResult:
    """Sample budget configurations, score each by mean validation AUC
    under the holdout protocol, and return the argmax. Diverged runs are
    recorded as constraint violations and skipped; if every trial
    diverges there is nothing to return and that is an error.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = as_rng(seed)
    trials: list[dict] = []
    best: tuple[float, Hyperparams, EvalReport] | None = None
    for t in range(budget):
        hp = space.sample(rng).validate_ranges()
        entry = {"trial": t, "hyperparams": hp.to_dict()}
        try:
            report = holdout_evaluate(
                make_trainer(hp), ds, substream_seed(seed, 501, t),
                model_name=model_name, dataset_name=dataset_name,
            )
        except TrainingDiverged as exc:
            entry["status"] = "constraint_violation"
            entry["detail"] = str(exc)
            trials.append(entry)
            continue
        val_auc = float(np.mean(report.extras["validation_aucs"]))
        entry["status"] = "ok"
        entry["validation_auc"] = val_auc
        entry["test_auc"] = report.auc
        trials.append(entry)
        if best is None or val_auc > best[0]:
            best = (val_auc, hp, report)
    if best is None:
        raise TrainingDiverged(-1, "every search trial diverged")
    return SearchResult(best_hyperparams=best[1], best_report=best[2], trials=trials)
