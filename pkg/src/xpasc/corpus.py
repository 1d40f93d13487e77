"""Weakly labeled corpora: loading, filtering and co-occurrence counting.

A corpus lives on disk as two files, a JSON metadata object and a JSON Lines
instance file::

    meta.json   {"classes": ["ham", "spam"], "lfs": [{"name": "kw_free", "class": 1}]}
    data.jsonl  {"id": "a", "tokens": ["free", "money"], "label": 1, "lf_matches": [0]}

Tokens are taken verbatim. Features are distinct surface forms, and every
count here is an instance-level presence count.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

META_FILE = "meta.json"
DATA_FILE = "data.jsonl"


class CorpusError(ValueError):
    """Malformed corpus input or a corpus that cannot be scored."""


class EmptyCorpusError(CorpusError):
    pass


@dataclass(frozen=True)
class Instance:
    id: str
    tokens: tuple[str, ...]
    weak_label: int
    lf_matches: tuple[int, ...]

    @property
    def is_empty(self) -> bool:
        return len(self.tokens) == 0

    def feature_types(self) -> list[str]:
        """Distinct tokens in order of first occurrence."""
        return list(dict.fromkeys(self.tokens))


@dataclass(frozen=True)
class LabelingFunction:
    name: str
    lf_class: int


@dataclass(frozen=True)
class CorpusMeta:
    class_names: tuple[str, ...]
    lfs: tuple[LabelingFunction, ...]

    def __post_init__(self):
        for j, lf in enumerate(self.lfs):
            if not 0 <= lf.lf_class < len(self.class_names):
                raise CorpusError(
                    f"labeling function {j} ({lf.name!r}) votes for class {lf.lf_class}, "
                    f"but only {len(self.class_names)} classes exist"
                )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_lfs(self) -> int:
        return len(self.lfs)

    def to_json(self) -> dict:
        return {
            "classes": list(self.class_names),
            "lfs": [{"name": lf.name, "class": lf.lf_class} for lf in self.lfs],
        }


class Vocabulary:
    """Bijection between feature strings and indices 0..V-1 (sorted order)."""

    def __init__(self, features: Iterable[str]):
        self.features: tuple[str, ...] = tuple(sorted(set(features)))
        self._index = {f: i for i, f in enumerate(self.features)}

    def __len__(self) -> int:
        return len(self.features)

    def __contains__(self, feature: str) -> bool:
        return feature in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.features == other.features

    def __hash__(self) -> int:
        return hash(self.features)

    def index(self, feature: str) -> int:
        try:
            return self._index[feature]
        except KeyError:
            raise KeyError(f"feature {feature!r} not in vocabulary") from None

    def get(self, feature: str) -> int | None:
        return self._index.get(feature)

    def digest(self) -> str:
        return vocabulary_digest(self.features)


def vocabulary_digest(features: Sequence[str]) -> str:
    payload = json.dumps(list(features), ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Corpus:
    meta: CorpusMeta
    instances: tuple[Instance, ...]
    vocabulary: Vocabulary = field(compare=False)

    @classmethod
    def build(cls, meta: CorpusMeta, instances: Iterable[Instance]) -> "Corpus":
        instances = tuple(instances)
        _validate_instances(meta, instances)
        vocab = Vocabulary(tok for inst in instances for tok in inst.tokens)
        return cls(meta, instances, vocab)

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def num_classes(self) -> int:
        return self.meta.num_classes

    @property
    def num_lfs(self) -> int:
        return self.meta.num_lfs

    def presence_matrix(self) -> np.ndarray:
        """Binary N x V matrix of feature presence."""
        X = np.zeros((len(self.instances), len(self.vocabulary)))
        for row, inst in enumerate(self.instances):
            for tok in set(inst.tokens):
                X[row, self.vocabulary.index(tok)] = 1.0
        return X

    def weak_labels(self) -> np.ndarray:
        return np.array([inst.weak_label for inst in self.instances], dtype=np.int64)


def _validate_instances(meta: CorpusMeta, instances: Sequence[Instance]) -> None:
    seen: set[str] = set()
    for inst in instances:
        if inst.id in seen:
            raise CorpusError(f"duplicate instance id {inst.id!r}")
        seen.add(inst.id)
        _check_ranges(meta, inst, where=f"record {inst.id!r}")


def _check_ranges(meta: CorpusMeta, inst: Instance, where: str) -> None:
    if not 0 <= inst.weak_label < meta.num_classes:
        raise CorpusError(
            f"{where}: label {inst.weak_label} out of range for {meta.num_classes} classes"
        )
    for lf in inst.lf_matches:
        if not 0 <= lf < meta.num_lfs:
            raise CorpusError(f"{where}: lf_matches entry {lf} out of range for {meta.num_lfs} LFs")
    if len(set(inst.lf_matches)) != len(inst.lf_matches):
        raise CorpusError(f"{where}: lf_matches contains duplicates")


# ---------------------------------------------------------------------------
# I/O

def load_meta(path: str | Path) -> CorpusMeta:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        classes = raw["classes"]
        lfs = raw["lfs"]
        if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
            raise CorpusError(f"{path}: 'classes' must be a list of strings")
        parsed = tuple(LabelingFunction(str(lf["name"]), _as_int(lf["class"])) for lf in lfs)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CorpusError(f"{path}: malformed metadata ({exc})") from exc
    if not classes:
        raise CorpusError(f"{path}: at least one class is required")
    return CorpusMeta(tuple(classes), parsed)


def _as_int(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"expected integer, got {value!r}")
    return value


def parse_record(line: str, lineno: int, meta: CorpusMeta) -> Instance:
    where = f"line {lineno}"
    try:
        raw = json.loads(line)
        where = f"line {lineno} (record {raw.get('id')!r})"
        rid = raw["id"]
        tokens = raw["tokens"]
        if not isinstance(rid, str):
            raise TypeError("id must be a string")
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise TypeError("tokens must be a list of strings")
        inst = Instance(
            id=rid,
            tokens=tuple(tokens),
            weak_label=_as_int(raw["label"]),
            lf_matches=tuple(_as_int(m) for m in raw["lf_matches"]),
        )
    except (KeyError, TypeError, AttributeError, json.JSONDecodeError) as exc:
        raise CorpusError(f"{where}: malformed record ({exc!s})") from exc
    if inst.is_empty:
        raise CorpusError(f"{where}: tokens must be non-empty")
    _check_ranges(meta, inst, where)
    return inst


def load_instances(path: str | Path, meta: CorpusMeta) -> list[Instance]:
    instances = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            inst = parse_record(line, lineno, meta)
            if inst.id in seen:
                raise CorpusError(
                    f"line {lineno}: duplicate instance id {inst.id!r} (first seen on line {seen[inst.id]})"
                )
            seen[inst.id] = lineno
            instances.append(inst)
    return instances


def load_corpus(path: str | Path, data_path: str | Path | None = None) -> Corpus:
    """Load a corpus from a directory holding meta.json + data.jsonl.

    Alternatively pass the metadata file as ``path`` and the instance file as
    ``data_path``.
    """
    path = Path(path)
    if data_path is None:
        meta_path, data_path = path / META_FILE, path / DATA_FILE
    else:
        meta_path = path
    meta = load_meta(meta_path)
    return Corpus.build(meta, load_instances(data_path, meta))


def instance_to_json(inst: Instance) -> dict:
    return {
        "id": inst.id,
        "tokens": list(inst.tokens),
        "label": inst.weak_label,
        "lf_matches": list(inst.lf_matches),
    }


def save_corpus(corpus: Corpus, directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta_path, data_path = directory / META_FILE, directory / DATA_FILE
    meta_path.write_text(json.dumps(corpus.meta.to_json(), ensure_ascii=False, indent=2) + "\n",
                         encoding="utf-8")
    with open(data_path, "w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            fh.write(json.dumps(instance_to_json(inst), ensure_ascii=False) + "\n")
    return meta_path, data_path


# ---------------------------------------------------------------------------
# filtering and counting

@dataclass(frozen=True)
class FilterStats:
    original: int
    filtered: int

    @property
    def retained(self) -> float:
        return self.filtered / self.original if self.original else 0.0

    def to_json(self) -> dict:
        return {"original": self.original, "filtered": self.filtered, "retained": self.retained}


def filter_unmatched(corpus: Corpus) -> tuple[Corpus, FilterStats]:
    """Drop instances that no labeling function matched."""
    kept = [inst for inst in corpus.instances if inst.lf_matches]
    stats = FilterStats(original=len(corpus.instances), filtered=len(kept))
    if not kept:
        raise EmptyCorpusError(
            f"empty corpus after filtering: all {stats.original} instances lack "
            "labeling-function matches"
        )
    return Corpus.build(corpus.meta, kept), stats


@dataclass(frozen=True)
class CountTables:
    n_fc: np.ndarray  # V x K
    n_fl: np.ndarray  # V x J
    features: tuple[str, ...]

    @property
    def n_f(self) -> np.ndarray:
        return self.n_fc.sum(axis=1)

    @property
    def n_f_lf(self) -> np.ndarray:
        return self.n_fl.sum(axis=1)

    @property
    def n_c(self) -> np.ndarray:
        return self.n_fc.sum(axis=0)

    @property
    def n_l(self) -> np.ndarray:
        return self.n_fl.sum(axis=0)

    @property
    def total_c(self) -> int:
        return int(self.n_fc.sum())

    @property
    def total_l(self) -> int:
        return int(self.n_fl.sum())


def count_cooccurrences(corpus: Corpus) -> CountTables:
    """Instance-level presence counts of (feature, class) and (feature, LF).

    An instance matched by several LFs adds one count to each of them.
    """
    vocab = corpus.vocabulary
    n_fc = np.zeros((len(vocab), corpus.num_classes), dtype=np.int64)
    n_fl = np.zeros((len(vocab), corpus.num_lfs), dtype=np.int64)
    for inst in corpus.instances:
        rows = [vocab.index(tok) for tok in set(inst.tokens)]
        n_fc[rows, inst.weak_label] += 1
        for lf in inst.lf_matches:
            n_fl[rows, lf] += 1
    return CountTables(n_fc=n_fc, n_fl=n_fl, features=vocab.features)
