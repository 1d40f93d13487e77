"""Occlusion-based feature importance scored by KL divergence."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import Instance

PROB_FLOOR = 1e-12


class PredictionDistribution:
    """Probability vector over classes, floored at ``PROB_FLOOR`` and renormalized."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        p = np.array(probs, dtype=float).ravel()
        if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError(f"not a probability vector: {p!r}")
        total = p.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        low = p < PROB_FLOOR
        if low.any():
            # take the floored mass from the unfloored entries only
            p[low] = PROB_FLOOR
            p[~low] *= (1.0 - PROB_FLOOR * low.sum()) / p[~low].sum()
        else:
            p /= total
        p.setflags(write=False)
        self.probs = p

    @classmethod
    def uniform(cls, k: int) -> "PredictionDistribution":
        return cls(np.full(k, 1.0 / k))

    def __len__(self) -> int:
        return self.probs.size

    def __repr__(self) -> str:
        return f"PredictionDistribution({self.probs.tolist()})"


class PredictionOracle(Protocol):
    num_classes: int

    def predict(self, tokens: Sequence[str]) -> PredictionDistribution: ...


def _as_probs(dist) -> np.ndarray:
    if isinstance(dist, PredictionDistribution):
        return dist.probs
    return np.asarray(dist, dtype=float)


def kl_divergence(P, Q) -> float:
    """D_KL(P || Q) in nats. Terms where P is zero contribute nothing."""
    p, q = _as_probs(P), _as_probs(Q)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        return float("inf")
    value = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    return max(value, 0.0)


def occlude(instance: Instance, feature: str) -> Instance:
    """Copy of ``instance`` with every occurrence of ``feature`` removed.

    The result may be empty (check ``.is_empty``); scoring then falls back
    to the oracle's empty-input prediction.
    """
    if feature not in instance.tokens:
        raise KeyError(f"feature {feature!r} does not occur in instance {instance.id!r}")
    return replace(instance, tokens=tuple(t for t in instance.tokens if t != feature))


def explainability_score(oracle: PredictionOracle, instance: Instance, feature: str,
                         full: PredictionDistribution | None = None) -> float:
    if full is None:
        full = oracle.predict(instance.tokens)
    occluded = occlude(instance, feature)
    return kl_divergence(full, oracle.predict(occluded.tokens))


@dataclass
class ExplainabilityMap:
    instance_id: str
    scores: dict[str, float]
    normalized: bool = False

    def top_feature(self, order: dict[str, int] | None = None) -> str | None:
        """Feature with the largest score; ties go to the lowest ``order`` index."""
        if not self.scores:
            return None
        key = (lambda f: (-self.scores[f], order[f])) if order else (lambda f: -self.scores[f])
        return min(self.scores, key=key)

    def to_json(self) -> dict:
        return {"id": self.instance_id, "scores": dict(self.scores), "normalized": self.normalized}


def instance_explainability(oracle: PredictionOracle, instance: Instance) -> ExplainabilityMap:
    """Score every distinct feature of ``instance``: 1 + (#features) oracle calls."""
    if instance.is_empty:
        raise ValueError(f"instance {instance.id!r} has no tokens")
    full = oracle.predict(instance.tokens)
    scores = {f: explainability_score(oracle, instance, f, full=full)
              for f in instance.feature_types()}
    return ExplainabilityMap(instance.id, scores)


def normalize_map(emap: ExplainabilityMap) -> ExplainabilityMap:
    """Divide by the per-instance maximum. All-zero maps are left as they are."""
    if emap.normalized:
        return emap
    top = max(emap.scores.values(), default=0.0)
    if top > 0:
        scores = {f: v / top for f, v in emap.scores.items()}
    else:
        scores = dict(emap.scores)
    return ExplainabilityMap(emap.instance_id, scores, normalized=True)


def write_maps(maps: Iterable[ExplainabilityMap], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in maps:
            fh.write(json.dumps(m.to_json(), ensure_ascii=False) + "\n")


def read_maps(path: str | Path) -> list[ExplainabilityMap]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                raw = json.loads(line)
                out.append(ExplainabilityMap(raw["id"], raw["scores"], raw["normalized"]))
    return out
