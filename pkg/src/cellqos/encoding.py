"""Smoothed target-mean encoding for categorical matrix columns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import NUMERIC, FeatureMatrix


@dataclass
class TargetEncoder:
    """Replace each level by ``(sum of y in level + prior * global mean) / (count + prior)``.

    Levels are matched by label, so matrices built separately (with different
    integer codes) encode consistently. Unseen or missing levels map to the
    global mean.
    """

    prior: float = 1.0
    global_mean: float = 0.0
    tables: dict[str, dict[str, float]] = field(default_factory=dict)

    def fit(self, matrix: FeatureMatrix, y) -> "TargetEncoder":
        y = np.asarray(y, dtype=float)
        self.global_mean = float(y.mean())
        self.tables = {}
        for name in matrix.categorical_columns():
            labels = np.array(matrix.labels(name), dtype=object)
            table = {}
            for level in sorted(set(labels) - {""}):
                mask = labels == level
                table[level] = float((y[mask].sum() + self.prior * self.global_mean) / (mask.sum() + self.prior))
            self.tables[name] = table
        return self

    def transform(self, matrix: FeatureMatrix) -> FeatureMatrix:
        data = matrix.data.copy()
        kinds = list(matrix.kinds)
        for name, table in self.tables.items():
            j = matrix.names.index(name)
            data[:, j] = [table.get(lab, self.global_mean) for lab in matrix.labels(name)]
            kinds[j] = NUMERIC
        levels = {k: v for k, v in matrix.levels.items() if k not in self.tables}
        return FeatureMatrix(list(matrix.names), kinds, list(matrix.keys), data, levels)

    def fit_transform(self, matrix: FeatureMatrix, y) -> FeatureMatrix:
        return self.fit(matrix, y).transform(matrix)

    def to_dict(self) -> dict:
        return {"prior": self.prior, "global_mean": self.global_mean, "tables": self.tables}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetEncoder":
        return cls(d["prior"], d["global_mean"], {k: dict(v) for k, v in d["tables"].items()})


def encode_categoricals(matrix: FeatureMatrix, target, prior: float = 1.0) -> tuple[FeatureMatrix, TargetEncoder]:
    enc = TargetEncoder(prior=prior)
    return enc.fit_transform(matrix, target), enc

