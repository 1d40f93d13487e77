"""Synthetic weakly labeled corpora with planted structure."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import Corpus, CorpusMeta, Instance, LabelingFunction


def planted_corpus(n: int = 600, seed: int = 0, num_classes: int = 2, lfs_per_class: int = 2,
                   class_words: int = 4, noise_words: int = 12, lf_accuracy: float = 0.8,
                   class_word_rate: float = 0.7, noise_per_instance: int = 3,
                   keyword_rate: float = 0.7) -> Corpus:
    """Corpus where LF keywords and class words are distinct features.

    Every instance has a hidden true class. It carries class words from
    its true class's pool (each with probability ``class_word_rate``), a few
    shared noise words and is matched by exactly one LF, which votes for the
    true class with probability ``lf_accuracy``; the weak label is that LF's
    class. The LF's keyword is visible in the tokens with probability
    ``keyword_rate`` (otherwise the LF fired on something that is not a
    token). Keywords predict the weak label perfectly where present, class
    words only at ``lf_accuracy``.
    """
    rng = np.random.default_rng(seed)
    lfs = [LabelingFunction(f"lf_{c}_{k}", c)
           for c in range(num_classes) for k in range(lfs_per_class)]
    meta = CorpusMeta(tuple(f"class{c}" for c in range(num_classes)), tuple(lfs))
    by_class = {c: [j for j, lf in enumerate(lfs) if lf.lf_class == c] for c in range(num_classes)}
    instances = []
    for i in range(n):
        true = int(rng.integers(num_classes))
        if rng.random() < lf_accuracy:
            lf_class = true
        else:
            lf_class = int(rng.choice([c for c in range(num_classes) if c != true]))
        lf = int(rng.choice(by_class[lf_class]))
        tokens = [f"kw{lf}"] if rng.random() < keyword_rate else []
        tokens += [f"c{true}w{k}" for k in range(class_words) if rng.random() < class_word_rate]
        tokens += [f"n{k}" for k in rng.integers(noise_words, size=noise_per_instance)]
        tokens = [tokens[k] for k in rng.permutation(len(tokens))]
        instances.append(Instance(f"p{i}", tuple(tokens), lfs[lf].lf_class, (lf,)))
    return Corpus.build(meta, instances)


def lf_identity_corpus(n: int = 400, seed: int = 0) -> Corpus:
    """Two classes, two LFs per class. A class token ("ca"/"cb") names the
    weak class; a separate token ("u"/"v") tells the two LFs of a class apart.
    """
    rng = np.random.default_rng(seed)
    lfs = tuple(LabelingFunction(f"lf{j}", j // 2) for j in range(4))
    meta = CorpusMeta(("a", "b"), lfs)
    instances = []
    for i in range(n):
        lf = int(rng.integers(4))
        cls = lf // 2
        tokens = ["ca" if cls == 0 else "cb", "u" if lf % 2 == 0 else "v"]
        tokens += [f"n{k}" for k in rng.integers(6, size=2)]
        instances.append(Instance(f"q{i}", tuple(tokens), cls, (lf,)))
    return Corpus.build(meta, instances)


def write_spouse_shaped(directory: str | Path, total: int = 22254, matched: int = 5734,
                        seed: int = 0) -> Path:
    """Write a raw corpus where only ``matched`` of ``total`` records carry LF matches."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    meta = {"classes": ["no_spouse", "spouse"],
            "lfs": [{"name": f"lf{j}", "class": j % 2} for j in range(9)]}
    (directory / "meta.json").write_text(json.dumps(meta), encoding="utf-8")
    has_match = np.zeros(total, dtype=bool)
    has_match[rng.choice(total, size=matched, replace=False)] = True
    with open(directory / "data.jsonl", "w", encoding="utf-8") as fh:
        for i in range(total):
            matches = [int(rng.integers(9))] if has_match[i] else []
            label = meta["lfs"][matches[0]]["class"] if matches else 0
            rec = {"id": f"s{i}", "tokens": [f"w{k}" for k in rng.integers(50, size=5)],
                   "label": label, "lf_matches": matches}
            fh.write(json.dumps(rec) + "\n")
    return directory
