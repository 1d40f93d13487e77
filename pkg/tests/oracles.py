"""Independent reference implementations used by the tests."""
import math

import numpy as np


def brute_force(corpus, method):
    """Direct evaluation from instance enumeration, one cell at a time."""
    feats = sorted({t for inst in corpus.instances for t in inst.tokens})
    out = {}
    for side, labels_of, n_labels in (
            ("C", lambda inst: [inst.weak_label], corpus.num_classes),
            ("L", lambda inst: list(inst.lf_matches), corpus.num_lfs)):
        pairs = [(f, z) for inst in corpus.instances for f in set(inst.tokens)
                 for z in labels_of(inst)]
        total = len(pairs)
        M = np.zeros((n_labels, len(feats)))
        for z in range(n_labels):
            for j, f in enumerate(feats):
                o = sum(1 for p in pairs if p == (f, z))
                nf = sum(1 for p in pairs if p[0] == f)
                nz = sum(1 for p in pairs if p[1] == z)
                if method == "chi2":
                    e = nz * nf / total
                    M[z, j] = (o - e) ** 2 / e if e > 0 else 0.0
                else:
                    M[z, j] = max(0.0, math.log((o / total) / ((nf / total) * (nz / total)))) if o else 0.0
        out[side] = M
    return out
