"""XPASC aggregation, its scaled variant, feature-shift analysis and lambda sweeps."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import spearmanr

from .association import AssociationMatrices, Method, association_score, build_matrices
from .corpus import Corpus, CountTables, count_cooccurrences
from .explainability import (
    ExplainabilityMap,
    PredictionOracle,
    instance_explainability,
    normalize_map,
)
from .models import TrainConfig, train_knowman

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """Corpus, model and matrices disagree about the vocabulary."""


@dataclass
class FeatureTerm:
    feature: str
    xp: float
    asc: float
    product: float


@dataclass
class XpascReport:
    score: float
    method: str
    gamma: float
    instances: list[tuple[str, list[FeatureTerm]]]
    n_instances: int
    n_terms: int
    scaled: bool = False
    model_id: str | None = None
    seed: int | None = None

    def products(self) -> list[float]:
        return [t.product for _, terms in self.instances for t in terms]

    def to_json(self) -> dict:
        return {
            "score": self.score,
            "method": self.method,
            "gamma": self.gamma,
            "scaled": self.scaled,
            "N": self.n_instances,
            "M_total": self.n_terms,
            "model_id": self.model_id,
            "seed": self.seed,
            "instances": [
                {"id": iid, "features": [
                    {"feature": t.feature, "xp": t.xp, "asc": t.asc, "product": t.product}
                    for t in terms]}
                for iid, terms in self.instances
            ],
        }


def combine(products: Sequence[float]) -> float:
    """1 + mean of the per-(instance, feature) products."""
    if len(products) == 0:
        raise ValueError("no (instance, feature) terms to aggregate")
    return 1.0 + math.fsum(products) / len(products)


def check_vocabulary(corpus: Corpus, matrices: AssociationMatrices) -> None:
    if tuple(matrices.features) != corpus.vocabulary.features:
        raise ConfigurationError(
            f"vocabulary mismatch: corpus {corpus.vocabulary.digest()} vs "
            f"association matrices {matrices.digest()}")


def _require_matched(corpus: Corpus) -> None:
    if len(corpus) == 0:
        raise ValueError("cannot score an empty corpus")
    unmatched = [inst.id for inst in corpus.instances if not inst.lf_matches]
    if unmatched:
        raise ValueError(f"{len(unmatched)} instances have no LF matches (e.g. {unmatched[0]!r}); "
                         "filter the corpus first")


def explain_corpus(corpus: Corpus, oracle: PredictionOracle) -> list[ExplainabilityMap]:
    return [instance_explainability(oracle, inst) for inst in corpus.instances]


def xpasc(corpus: Corpus, oracle: PredictionOracle, matrices: AssociationMatrices,
          gamma: float = 1.0, maps: Sequence[ExplainabilityMap] | None = None) -> XpascReport:
    """1 + mean over all (instance, distinct feature) pairs of S_xp^gamma * S_asc."""
    check_vocabulary(corpus, matrices)
    _require_matched(corpus)
    if maps is None:
        maps = explain_corpus(corpus, oracle)
    rows = []
    for inst, emap in zip(corpus.instances, maps):
        terms = []
        for f in inst.feature_types():
            xp = emap.scores[f]
            asc = association_score(inst, f, matrices)
            terms.append(FeatureTerm(f, xp, asc, xp ** gamma * asc))
        rows.append((inst.id, terms))
    report = XpascReport(0.0, matrices.method.value, gamma, rows, len(rows), 0)
    products = report.products()
    report.n_terms = len(products)
    report.score = combine(products)
    return report


def minmax_scale(values: Sequence[float]) -> np.ndarray:
    """Affine map onto [0, 1]; a constant sequence maps to zeros."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("minmax_scale needs at least one value")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def xpasc_scaled(corpus: Corpus, oracle: PredictionOracle, counts: CountTables,
                 gamma: float = 1.0) -> XpascReport:
    """Magnitude-boosted variant: NPMI association, explainability divided by
    its per-instance maximum, then both pooled and MinMax-scaled corpus-wide.
    """
    matrices = build_matrices(counts, Method.NPMI)
    check_vocabulary(corpus, matrices)
    _require_matched(corpus)
    maps = [normalize_map(m) for m in explain_corpus(corpus, oracle)]
    keys, xps, ascs = [], [], []
    for inst, emap in zip(corpus.instances, maps):
        for f in inst.feature_types():
            keys.append((inst.id, f))
            xps.append(emap.scores[f])
            ascs.append(association_score(inst, f, matrices))
    xps, ascs = minmax_scale(xps), minmax_scale(ascs)
    rows: list[tuple[str, list[FeatureTerm]]] = []
    for (iid, f), xp, asc in zip(keys, xps, ascs):
        if not rows or rows[-1][0] != iid:
            rows.append((iid, []))
        rows[-1][1].append(FeatureTerm(f, float(xp), float(asc), float(xp ** gamma * asc)))
    report = XpascReport(0.0, Method.NPMI.value, gamma, rows, len(rows), len(keys), scaled=True)
    report.score = combine(report.products())
    return report


# ---------------------------------------------------------------------------
# shift analysis

SHIFT_KINDS = ("none", "off-LF", "to-class")


@dataclass
class ShiftRecord:
    instance_id: str
    top_a: str
    top_b: str
    kind: str


@dataclass
class ShiftReport:
    records: list[ShiftRecord]

    @property
    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(SHIFT_KINDS, 0)
        for r in self.records:
            out[r.kind] += 1
        return out

    def to_json(self) -> dict:
        return {
            "counts": self.counts,
            "records": [{"id": r.instance_id, "top_a": r.top_a, "top_b": r.top_b, "kind": r.kind}
                        for r in self.records],
        }


def dominance(instance, feature: str, matrices: AssociationMatrices) -> str:
    """'class' if C[label, f] beats every matching L[l, f], 'lf' if some
    matching LF beats it, 'neutral' on a tie."""
    f = matrices.feature_index(feature)
    c = matrices.C[instance.weak_label, f]
    best_lf = max(matrices.L[l, f] for l in instance.lf_matches)
    if c > best_lf:
        return "class"
    if best_lf > c:
        return "lf"
    return "neutral"


def classify_shift(instance, top_a: str, top_b: str, matrices: AssociationMatrices) -> str:
    """Compare the most important feature under model A and model B.

    A shift only counts when A's top feature is LF-dominant. It is
    'to-class' when B's top feature is class-dominant, and 'off-LF' when
    B's top feature is neither class- nor LF-dominant. This is one reading
    of a qualitative criterion, not a canonical definition.
    """
    if dominance(instance, top_a, matrices) != "lf":
        return "none"
    b = dominance(instance, top_b, matrices)
    if b == "class":
        return "to-class"
    if b == "neutral":
        return "off-LF"
    return "none"


def shift_analysis(corpus: Corpus, oracle_a: PredictionOracle, oracle_b: PredictionOracle,
                   matrices: AssociationMatrices) -> ShiftReport:
    check_vocabulary(corpus, matrices)
    _require_matched(corpus)
    order = {f: i for i, f in enumerate(corpus.vocabulary.features)}
    records = []
    for inst in corpus.instances:
        top_a = instance_explainability(oracle_a, inst).top_feature(order)
        top_b = instance_explainability(oracle_b, inst).top_feature(order)
        records.append(ShiftRecord(inst.id, top_a, top_b,
                                   classify_shift(inst, top_a, top_b, matrices)))
    return ShiftReport(records)


# ---------------------------------------------------------------------------
# lambda sweep

@dataclass
class SweepCell:
    lam: float
    seed: int
    xpasc: float | None = None
    task_metric: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class SweepReport:
    method: str
    cells: list[SweepCell]
    lambdas: list[float]
    seeds: list[int]
    means: dict[float, float | None] = field(default_factory=dict)
    spearman: float | None = None

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "lambdas": self.lambdas,
            "seeds": self.seeds,
            "per_lambda_mean_xpasc": [{"lambda": lam, "mean_xpasc": self.means.get(lam)}
                                      for lam in self.lambdas],
            "spearman_rho": self.spearman,
            "cells": [{"lambda": c.lam, "seed": c.seed, "xpasc": c.xpasc,
                       "task_metric": c.task_metric, "error": c.error} for c in self.cells],
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "seed", "xpasc", "task_metric"])
            for c in self.cells:
                w.writerow([repr(c.lam), c.seed,
                            "failed" if c.failed else repr(c.xpasc),
                            "" if c.failed else repr(c.task_metric)])


def training_accuracy(model, corpus: Corpus) -> float:
    """Accuracy of the model's argmax against the corpus' weak labels."""
    pred = model.predict_proba(corpus.presence_matrix()).argmax(axis=1)
    return float((pred == corpus.weak_labels()).mean())


def rank_correlation(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    if len(xs) < 2 or len(set(xs)) < 2 or len(set(ys)) < 2:
        return None
    rho = spearmanr(xs, ys).statistic
    return None if np.isnan(rho) else float(rho)


def worker_count() -> int:
    raw = os.environ.get("XPASC_THREADS")
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"XPASC_THREADS must be a positive integer, got {raw!r}")
    return n


def lambda_sweep(corpus: Corpus, lambdas: Sequence[float], seeds: Sequence[int],
                 config: TrainConfig, method: Method | str = Method.CHI2, gamma: float = 1.0,
                 trainer: Callable = train_knowman, workers: int | None = None) -> SweepReport:
    """Train one KnowMAN per (lambda, seed) and score each with XPASC.

    A failing cell is recorded with its error and the sweep carries on.
    """
    matrices = build_matrices(count_cooccurrences(corpus), method)
    grid = [(lam, seed) for lam in lambdas for seed in seeds]

    def run(lam, seed) -> SweepCell:
        try:
            cfg = TrainConfig(**{**config.__dict__, "lam": lam, "seed": seed})
            model = trainer(corpus, cfg)
            return SweepCell(lam, seed, xpasc(corpus, model, matrices, gamma).score,
                             training_accuracy(model, corpus))
        except Exception as exc:  # noqa: BLE001 - one bad cell must not sink the grid
            log.warning("sweep cell lambda=%s seed=%s failed: %s", lam, seed, exc)
            return SweepCell(lam, seed, error=f"{type(exc).__name__}: {exc}")

    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(lambda g: run(*g), grid))
    else:
        cells = [run(lam, seed) for lam, seed in grid]

    report = SweepReport(Method(method).value, cells, list(lambdas), list(seeds))
    for lam in lambdas:
        ok = [c.xpasc for c in cells if c.lam == lam and not c.failed]
        report.means[lam] = float(np.mean(ok)) if ok else None
    have = [lam for lam in lambdas if report.means[lam] is not None]
    report.spearman = rank_correlation(have, [report.means[lam] for lam in have])
    return report
