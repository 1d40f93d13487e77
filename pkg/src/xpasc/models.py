"""Desk-scale prediction oracles and their trainers.

Two trainable models are provided, both over binary bag-of-words inputs:

* ``BowSoftmaxModel``: a single softmax layer, trained on majority-vote labels.
* ``KnowManModel``: shared tanh extractor F, class head C and LF discriminator
  D. D is trained to name the matching labeling function; its gradient
  reaches F through a reversal layer scaled by ``-lam``, pushing F to drop
  LF-identifying information.

Both are plain numpy with hand-written gradients, trained by constant
learning-rate SGD. All randomness comes from named streams derived from a
single seed (see ``rng_stream``).
"""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, CorpusMeta, Instance, vocabulary_digest
from .explainability import PredictionDistribution

log = logging.getLogger(__name__)

ABSTAIN = -1

_STREAMS = {"shuffle": 1, "init": 2, "tie-break": 3, "lf-sampling": 4, "gradcheck": 5}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose under a run seed."""
    return np.random.default_rng([_STREAMS[name], seed])


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------------------
# majority vote

def majority_vote_label(instance: Instance, meta: CorpusMeta, tie_policy: str = "random",
                        rng: np.random.Generator | None = None) -> int:
    """Plurality of the matching LFs' classes; ``ABSTAIN`` on a tie under 'abstain'."""
    if not instance.lf_matches:
        raise ValueError(f"instance {instance.id!r} has no labeling-function matches")
    votes = Counter(meta.lfs[j].lf_class for j in instance.lf_matches)
    best = max(votes.values())
    tied = sorted(c for c, n in votes.items() if n == best)
    if len(tied) == 1:
        return tied[0]
    if tie_policy == "abstain":
        return ABSTAIN
    if tie_policy != "random":
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    if rng is None:
        raise ValueError("tie_policy='random' needs a seeded generator")
    return int(tied[rng.integers(len(tied))])


def majority_vote_labels(corpus: Corpus, tie_policy: str = "random", seed: int = 0) -> np.ndarray:
    rng = rng_stream(seed, "tie-break")
    return np.array([majority_vote_label(inst, corpus.meta, tie_policy, rng)
                     for inst in corpus.instances], dtype=np.int64)


# ---------------------------------------------------------------------------
# shared numerics

@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.0
    lr: float = 0.1
    lr_disc: float = 0.03
    epochs: int = 20
    batch_size: int = 32
    hidden: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        for name in ("lr", "lr_disc", "batch_size", "hidden"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def nll(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood of integer targets."""
    lp = log_softmax(logits)
    return float(-lp[np.arange(len(targets)), targets].mean())


def _nll_grad(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    g = softmax(logits)
    g[np.arange(len(targets)), targets] -= 1.0
    return g / len(targets)


def encode(tokens: Sequence[str], index: dict[str, int], width: int) -> np.ndarray:
    x = np.zeros(width)
    for t in tokens:
        j = index.get(t)
        if j is not None:
            x[j] = 1.0
    return x


class _BowOracle:
    """Shared plumbing: vocabulary lookup and the empty-input convention."""

    features: tuple[str, ...]
    num_classes: int

    def _setup_index(self):
        self._index = {f: i for i, f in enumerate(self.features)}

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return encode(tokens, self._index, len(self.features))

    def predict(self, tokens: Sequence[str]) -> PredictionDistribution:
        if len(tokens) == 0:
            return PredictionDistribution.uniform(self.num_classes)
        return PredictionDistribution(softmax(self.logits(self.encode(tokens)[None, :])[0]))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Row-wise class probabilities for an encoded batch (no empty-row rule)."""
        return softmax(self.logits(X))

    def vocabulary_digest(self) -> str:
        return vocabulary_digest(self.features)


# ---------------------------------------------------------------------------
# bag-of-words softmax

class BowSoftmaxModel(_BowOracle):
    kind = "mv-bow"

    def __init__(self, W: np.ndarray, b: np.ndarray, features: Sequence[str],
                 config: TrainConfig | None = None):
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.features = tuple(features)
        self.num_classes = self.W.shape[0]
        self.config = config
        self._setup_index()

    def logits(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W.T + self.b

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


def train_bow_softmax(corpus: Corpus, labels: Sequence[int], config: TrainConfig) -> BowSoftmaxModel:
    """Mini-batch SGD on mean NLL, starting from all-zero weights.

    ``labels`` is aligned with ``corpus.instances``; entries equal to
    ``ABSTAIN`` are skipped.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (len(corpus),):
        raise ValueError(f"expected {len(corpus)} labels, got {labels.shape}")
    keep = labels != ABSTAIN
    if not keep.any():
        raise TrainingError("no usable instances: every label abstained")
    X = corpus.presence_matrix()[keep]
    y = labels[keep]
    K, V = corpus.num_classes, len(corpus.vocabulary)
    W, b = np.zeros((K, V)), np.zeros(K)
    rng = rng_stream(config.seed, "shuffle")
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            g = _nll_grad(X[idx] @ W.T + b, y[idx])
            W -= config.lr * (g.T @ X[idx])
            b -= config.lr * g.sum(axis=0)
    return BowSoftmaxModel(W, b, corpus.vocabulary.features, config)


# ---------------------------------------------------------------------------
# KnowMAN

class KnowManModel(_BowOracle):
    kind = "knowman"
    param_names = ("W_f", "b_f", "W_c", "b_c", "W_d", "b_d")

    def __init__(self, W_f, b_f, W_c, b_c, W_d, b_d, features: Sequence[str],
                 lam: float = 0.0, config: TrainConfig | None = None):
        self.W_f, self.b_f = np.asarray(W_f, float), np.asarray(b_f, float)
        self.W_c, self.b_c = np.asarray(W_c, float), np.asarray(b_c, float)
        self.W_d, self.b_d = np.asarray(W_d, float), np.asarray(b_d, float)
        self.features = tuple(features)
        self.num_classes = self.W_c.shape[0]
        self.num_lfs = self.W_d.shape[0]
        self.lam = float(lam)
        self.config = config
        self._setup_index()

    @classmethod
    def initialize(cls, num_features: int, num_classes: int, num_lfs: int, hidden: int,
                   rng: np.random.Generator, features: Sequence[str] | None = None,
                   lam: float = 0.0) -> "KnowManModel":
        def uniform(fan_out, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=(fan_out, fan_in))
        W_f = uniform(hidden, num_features)
        W_c = uniform(num_classes, hidden)
        W_d = uniform(num_lfs, hidden)
        if features is None:
            features = [f"f{i}" for i in range(num_features)]
        return cls(W_f, np.zeros(hidden), W_c, np.zeros(num_classes), W_d, np.zeros(num_lfs),
                   features, lam)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.param_names}

    def hidden(self, X: np.ndarray) -> np.ndarray:
        return np.tanh(X @ self.W_f.T + self.b_f)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.hidden(X) @ self.W_c.T + self.b_c

    def lf_logits(self, X: np.ndarray) -> np.ndarray:
        return self.hidden(X) @ self.W_d.T + self.b_d

    def predict_lf_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.lf_logits(X))

    def losses(self, X: np.ndarray, y: np.ndarray, lf: np.ndarray) -> tuple[float, float]:
        h = self.hidden(X)
        return nll(h @ self.W_c.T + self.b_c, y), nll(h @ self.W_d.T + self.b_d, lf)


@dataclass
class KnowManGradients:
    """Gradients for one batch.

    ``W_f``/``b_f`` hold the full task-step gradient of the extractor, i.e.
    the class-loss part plus the reversed discriminator part, which is also
    kept separately in ``W_f_rev``/``b_f_rev``.
    """
    W_f: np.ndarray
    b_f: np.ndarray
    W_c: np.ndarray
    b_c: np.ndarray
    W_d: np.ndarray
    b_d: np.ndarray
    W_f_rev: np.ndarray
    b_f_rev: np.ndarray
    loss_c: float = 0.0
    loss_d: float = 0.0


def discriminator_gradients(model: KnowManModel, X, lf):
    h = model.hidden(X)
    zd = h @ model.W_d.T + model.b_d
    g = _nll_grad(zd, lf)
    return g.T @ h, g.sum(axis=0), nll(zd, lf)


def task_gradients(model: KnowManModel, X, y, lf, lam: float, reversal: bool = True):
    """Gradients of the class loss for C and F, plus -lam times the
    discriminator-loss gradient routed into F (D itself is untouched).
    """
    pre = X @ model.W_f.T + model.b_f
    h = np.tanh(pre)
    zc = h @ model.W_c.T + model.b_c
    gc = _nll_grad(zc, y)
    dW_c, db_c = gc.T @ h, gc.sum(axis=0)
    dh = gc @ model.W_c
    dtanh = 1.0 - h ** 2
    zd = h @ model.W_d.T + model.b_d
    loss_d = nll(zd, lf)
    if reversal:
        dh_rev = -lam * (_nll_grad(zd, lf) @ model.W_d)
        dh = dh + dh_rev
        dpre_rev = dh_rev * dtanh
        W_f_rev, b_f_rev = dpre_rev.T @ X, dpre_rev.sum(axis=0)
    else:
        W_f_rev, b_f_rev = np.zeros_like(model.W_f), np.zeros_like(model.b_f)
    dpre = dh * dtanh
    return dpre.T @ X, dpre.sum(axis=0), dW_c, db_c, W_f_rev, b_f_rev, nll(zc, y), loss_d


def backprop(model: KnowManModel, X, y, lf, lam: float | None = None,
             reversal: bool = True) -> KnowManGradients:
    """All gradients for one batch at the current parameters."""
    lam = model.lam if lam is None else lam
    dW_d, db_d, _ = discriminator_gradients(model, X, lf)
    dW_f, db_f, dW_c, db_c, W_f_rev, b_f_rev, loss_c, loss_d = task_gradients(
        model, X, y, lf, lam, reversal)
    return KnowManGradients(dW_f, db_f, dW_c, db_c, dW_d, db_d, W_f_rev, b_f_rev, loss_c, loss_d)


def sample_lf_targets(matches: Sequence[Sequence[int]], rng: np.random.Generator) -> np.ndarray:
    """One matching LF per instance, uniformly at random."""
    return np.array([m[rng.integers(len(m))] if len(m) > 1 else m[0] for m in matches],
                    dtype=np.int64)


def discriminator_step(model: KnowManModel, X, lf, lr: float) -> float:
    dW_d, db_d, loss = discriminator_gradients(model, X, lf)
    model.W_d -= lr * dW_d
    model.b_d -= lr * db_d
    return loss


def task_step(model: KnowManModel, X, y, lf, lr: float, reversal: bool = True) -> float:
    dW_f, db_f, dW_c, db_c, *_rest, loss_c, _ = task_gradients(model, X, y, lf, model.lam, reversal)
    model.W_f -= lr * dW_f
    model.b_f -= lr * db_f
    model.W_c -= lr * dW_c
    model.b_c -= lr * db_c
    return loss_c


def train_knowman(corpus: Corpus, config: TrainConfig, reversal: bool = True,
                  labels: Sequence[int] | None = None) -> KnowManModel:
    """Adversarial training on the corpus' weak labels.

    Per batch: a discriminator step on the LF loss with F and C held fixed,
    then a task step on the class loss (plus the reversed, ``lam``-scaled LF
    loss gradient into F) with D held fixed. ``reversal=False`` cuts the
    path from D into F entirely; D is still trained.
    """
    if len(corpus) == 0:
        raise TrainingError("empty corpus")
    if any(not inst.lf_matches for inst in corpus.instances):
        raise TrainingError("corpus contains instances without LF matches; filter it first")
    if corpus.num_lfs < 2:
        warnings.warn("fewer than two labeling functions: the discriminator has nothing to "
                      "distinguish", RuntimeWarning, stacklevel=2)
    X = corpus.presence_matrix()
    y = corpus.weak_labels() if labels is None else np.asarray(labels, dtype=np.int64)
    matches = [inst.lf_matches for inst in corpus.instances]
    model = KnowManModel.initialize(len(corpus.vocabulary), corpus.num_classes, corpus.num_lfs,
                                    config.hidden, rng_stream(config.seed, "init"),
                                    corpus.vocabulary.features, config.lam)
    model.config = config
    shuffle = rng_stream(config.seed, "shuffle")
    lf_rng = rng_stream(config.seed, "lf-sampling")
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(y))
        loss_c = loss_d = 0.0
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            lf = sample_lf_targets([matches[i] for i in idx], lf_rng)
            loss_d += discriminator_step(model, X[idx], lf, config.lr_disc) * len(idx)
            loss_c += task_step(model, X[idx], y[idx], lf, config.lr, reversal) * len(idx)
        log.debug("epoch %d: L_C=%.4f L_D=%.4f", epoch, loss_c / len(y), loss_d / len(y))
    return model


# ---------------------------------------------------------------------------
# finite-difference verification

def _objectives(model: KnowManModel, X, y, lf, lam):
    """Scalar objective whose gradient each parameter group follows."""
    loss_c, loss_d = model.losses(X, y, lf)
    return {"F": loss_c - lam * loss_d, "C": loss_c, "D": loss_d}


_GROUP = {"W_f": "F", "b_f": "F", "W_c": "C", "b_c": "C", "W_d": "D", "b_d": "D"}


def gradient_check(model: KnowManModel, batch, lam: float | None = None, per_tensor: int = 5,
                   step: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between backprop and central finite differences.

    F is checked against L_C - lam * L_D (what the reversal layer makes it
    descend), C against L_C and D against L_D. ``batch`` is (X, y, lf).
    """
    X, y, lf = batch
    lam = model.lam if lam is None else lam
    grads = backprop(model, X, y, lf, lam)
    rng = rng_stream(seed, "gradcheck")
    worst = 0.0
    for name in model.param_names:
        param = getattr(model, name)
        analytic = getattr(grads, name)
        flat = param.reshape(-1)
        picks = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        for k in picks:
            orig = flat[k]
            flat[k] = orig + step
            up = _objectives(model, X, y, lf, lam)[_GROUP[name]]
            flat[k] = orig - step
            down = _objectives(model, X, y, lf, lam)[_GROUP[name]]
            flat[k] = orig
            numeric = (up - down) / (2 * step)
            a = analytic.reshape(-1)[k]
            denom = max(abs(a) + abs(numeric), 1e-7)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# checkpoints

def _model_payload(model) -> dict:
    params = model.params()
    payload = {
        "kind": model.kind,
        "vocabulary_digest": model.vocabulary_digest(),
        "features": list(model.features),
        "shapes": {k: list(v.shape) for k, v in params.items()},
        "weights": {k: v.reshape(-1).tolist() for k, v in params.items()},
        "config": asdict(model.config) if model.config else None,
        "seed": model.config.seed if model.config else None,
    }
    if isinstance(model, KnowManModel):
        payload["lambda"] = model.lam
    return payload


def save_checkpoint(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_model_payload(model)) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path, expected_digest: str | None = None):
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    digest = vocabulary_digest(raw["features"])
    if digest != raw["vocabulary_digest"]:
        raise CheckpointError(f"{path}: stored vocabulary digest does not match its features")
    if expected_digest is not None and digest != expected_digest:
        raise CheckpointError(
            f"vocabulary digest mismatch: checkpoint {digest} vs corpus {expected_digest}")
    params = {k: np.array(v, dtype=float).reshape(raw["shapes"][k])
              for k, v in raw["weights"].items()}
    config = TrainConfig(**raw["config"]) if raw.get("config") else None
    if raw["kind"] == BowSoftmaxModel.kind:
        return BowSoftmaxModel(params["W"], params["b"], raw["features"], config)
    if raw["kind"] == KnowManModel.kind:
        return KnowManModel(*(params[n] for n in KnowManModel.param_names), raw["features"],
                            raw.get("lambda", 0.0), config)
    raise CheckpointError(f"{path}: unknown model kind {raw['kind']!r}")


def checkpoint_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
