import json

import hypothesis
import pytest

from xpasc.corpus import Corpus, CorpusMeta, Instance, LabelingFunction
from xpasc.explainability import PredictionDistribution

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")


def make_corpus(records, classes=("A", "B"), lfs=((0,), (1,))):
    """records: iterable of (tokens, label, lf_matches); lfs: lf classes."""
    meta = CorpusMeta(tuple(classes),
                      tuple(LabelingFunction(f"lf{j}", c[0]) for j, c in enumerate(lfs)))
    insts = [Instance(f"i{k}", tuple(toks), label, tuple(m))
             for k, (toks, label, m) in enumerate(records)]
    return Corpus.build(meta, insts)


def write_raw(tmp_path, meta, records):
    d = tmp_path / "raw"
    d.mkdir(exist_ok=True)
    (d / "meta.json").write_text(json.dumps(meta))
    (d / "data.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records))
    return d


@pytest.fixture
def twenty_corpus():
    """Class A: 8 x "x" + 2 x "y"; class B: 2 x "x" + 8 x "y". One LF per class."""
    recs = ([(["x"], 0, [0])] * 8 + [(["y"], 0, [0])] * 2
            + [(["x"], 1, [1])] * 2 + [(["y"], 1, [1])] * 8)
    return make_corpus(recs)


class TableOracle:
    """Returns a fixed distribution per token tuple; counts calls."""

    def __init__(self, table, k=2, default=None):
        self.table = {tuple(key): v for key, v in table.items()}
        self.num_classes = k
        self.default = default or [1.0 / k] * k
        self.calls = 0

    def predict(self, tokens):
        self.calls += 1
        return PredictionDistribution(self.table.get(tuple(tokens), self.default))
