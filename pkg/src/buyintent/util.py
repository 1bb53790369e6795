"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np


class TrainingDiverged(RuntimeError):
    """Raised when a training loss goes non-finite.

    Searches treat this as a constraint violation and skip the trial.
    """

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def sigmoid(x):
    """Elementwise logistic function, overflow-safe for large |x|."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(x):
    """ln(1 + e^x) without overflow; softplus(700) stays finite."""
    return np.logaddexp(0.0, np.asarray(x, dtype=float))


def relu(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a seed sequence list, or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def substream_seed(seed: int, *keys: int) -> int:
    """Derive a child seed from (seed, keys), independent per key tuple."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1)[0])
