"""Feature/class and feature/labeling-function association matrices.

``C`` has shape classes x features, ``L`` labeling functions x features. Three
ways of filling them are provided: chi-square deviation, positive PMI and
(clamped) normalized PMI. All probabilities are ratios of the counts in the
relevant contingency table, with natural logarithms throughout.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CountTables, Instance, vocabulary_digest


class Method(str, Enum):
    CHI2 = "chi2"
    PPMI = "ppmi"
    NPMI = "npmi"


@dataclass(frozen=True)
class AssociationMatrices:
    method: Method
    C: np.ndarray
    L: np.ndarray
    features: tuple[str, ...]
    class_names: tuple[str, ...] = ()
    lf_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.C.shape[1] != len(self.features) or self.L.shape[1] != len(self.features):
            raise ValueError(
                f"matrix widths {self.C.shape[1]}/{self.L.shape[1]} do not match "
                f"{len(self.features)} features"
            )
        object.__setattr__(self, "_index", {f: i for i, f in enumerate(self.features)})
        self.C.setflags(write=False)
        self.L.setflags(write=False)

    def feature_index(self, feature: str) -> int:
        try:
            return self._index[feature]
        except KeyError:
            raise KeyError(f"feature {feature!r} not in association vocabulary") from None

    def digest(self) -> str:
        return vocabulary_digest(self.features)

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "classes": list(self.class_names),
            "lfs": list(self.lf_names),
            "features": list(self.features),
            "C": self.C.tolist(),
            "L": self.L.tolist(),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "AssociationMatrices":
        n = len(raw["features"])
        C = np.array(raw["C"], dtype=float).reshape(-1, n)
        L = np.array(raw["L"], dtype=float).reshape(-1, n)
        return cls(Method(raw["method"]), C, L, tuple(raw["features"]),
                   tuple(raw.get("classes", ())), tuple(raw.get("lfs", ())))


def save_matrices(matrices: AssociationMatrices, path: str | Path) -> None:
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(matrices.to_json(), ensure_ascii=False) + "\n",
                          encoding="utf-8")


def load_matrices(path: str | Path) -> AssociationMatrices:
    return AssociationMatrices.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# cell formulas

def chi_square_cell(observed: float, expected: float) -> float:
    """(observed - expected)^2 / expected, or 0 when nothing is expected."""
    if expected <= 0:
        return 0.0
    return (observed - expected) ** 2 / expected


def pmi_cell(p_joint: float, p_feature: float, p_label: float) -> float:
    if p_joint <= 0:
        return 0.0
    return math.log(p_joint / (p_feature * p_label))


def ppmi_cell(p_joint: float, p_feature: float, p_label: float) -> float:
    return max(0.0, pmi_cell(p_joint, p_feature, p_label))


def npmi_cell(p_joint: float, p_feature: float, p_label: float) -> float:
    if p_joint <= 0:
        return 0.0
    h = -math.log(p_joint)
    if h == 0:
        return 1.0
    return max(0.0, pmi_cell(p_joint, p_feature, p_label) / h)


# ---------------------------------------------------------------------------
# whole matrices; each table is V x Z, result is Z x V

def _chi2_table(table: np.ndarray) -> np.ndarray:
    table = table.astype(float)
    total = table.sum()
    if total == 0:
        return np.zeros(table.T.shape)
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        cells = np.where(expected > 0, (table - expected) ** 2 / expected, 0.0)
    return cells.T


def _pmi_table(table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (PMI, joint probability), PMI set to 0 where the joint count is 0."""
    table = table.astype(float)
    total = table.sum()
    if total == 0:
        z = np.zeros(table.T.shape)
        return z, z
    p_joint = table / total
    p_f = table.sum(axis=1, keepdims=True) / total
    p_z = table.sum(axis=0, keepdims=True) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.where(table > 0, np.log(p_joint / (p_f * p_z)), 0.0)
    return pmi.T, p_joint.T


def _ppmi_table(table: np.ndarray) -> np.ndarray:
    pmi, _ = _pmi_table(table)
    return np.maximum(pmi, 0.0)


def _npmi_table(table: np.ndarray) -> np.ndarray:
    pmi, p_joint = _pmi_table(table)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.log(p_joint)
        npmi = np.where(p_joint > 0, np.where(h > 0, pmi / h, 1.0), 0.0)
    return np.clip(npmi, 0.0, 1.0)


_BUILDERS = {Method.CHI2: _chi2_table, Method.PPMI: _ppmi_table, Method.NPMI: _npmi_table}


def build_matrices(counts: CountTables, method: Method | str,
                   class_names: Sequence[str] = (), lf_names: Sequence[str] = ()) -> AssociationMatrices:
    method = Method(method)
    fn = _BUILDERS[method]
    return AssociationMatrices(method, fn(counts.n_fc), fn(counts.n_fl), counts.features,
                               tuple(class_names), tuple(lf_names))


def build_chi2_matrices(counts: CountTables, **names) -> AssociationMatrices:
    return build_matrices(counts, Method.CHI2, **names)


def build_ppmi_matrices(counts: CountTables, **names) -> AssociationMatrices:
    return build_matrices(counts, Method.PPMI, **names)


def build_npmi_matrices(counts: CountTables, **names) -> AssociationMatrices:
    return build_matrices(counts, Method.NPMI, **names)


def association_score(instance: Instance, feature: str, matrices: AssociationMatrices) -> float:
    """Sum over the instance's matching LFs of C[class, f] - L[lf, f].

    The class term is repeated once per matching LF. Positive values mean
    the feature leans towards the class, negative towards the LFs.
    """
    f = matrices.feature_index(feature)
    c = matrices.C[instance.weak_label, f]
    return float(sum(c - matrices.L[lf, f] for lf in instance.lf_matches))
