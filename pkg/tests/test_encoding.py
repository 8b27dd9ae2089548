import numpy as np
import pytest

from cellqos.encoding import TargetEncoder, encode_categoricals
from cellqos.features import CATEGORICAL, NUMERIC, FeatureMatrix


def matrix(labels, numeric=None):
    levels = sorted(set(labels) - {""})
    codes = [levels.index(x) if x else -1 for x in labels]
    numeric = np.zeros(len(labels)) if numeric is None else numeric
    data = np.column_stack([np.asarray(codes, dtype=float), numeric])
    return FeatureMatrix(["band", "x"], [CATEGORICAL, NUMERIC], [f"k{i}" for i in range(len(labels))],
                         data, {"band": levels})


def test_hand_example():
    m = matrix(["a", "b"])
    enc = TargetEncoder(prior=1.0).fit(m, [1.0, 0.0])
    assert enc.global_mean == 0.5
    assert enc.tables["band"]["a"] == 0.75


def test_single_level_is_global_mean():
    y = np.array([0.1, 0.4, 0.7])
    out, enc = encode_categoricals(matrix(["n78"] * 3), y)
    assert np.allclose(out.column("band"), y.mean())


def test_unseen_and_missing_levels():
    enc = TargetEncoder().fit(matrix(["a", "b"]), [1.0, 0.0])
    out = enc.transform(matrix(["z", ""]))
    assert list(out.column("band")) == [0.5, 0.5]


def test_levels_matched_by_label():
    enc = TargetEncoder().fit(matrix(["a", "b", "b"]), [1.0, 0.0, 0.0])
    out = enc.transform(matrix(["b", "z"]))
    assert out.column("band")[0] == enc.tables["band"]["b"]
    assert out.kinds == [NUMERIC, NUMERIC]
    assert "band" not in out.levels


def test_numeric_columns_untouched():
    m = matrix(["a", "b"], numeric=np.array([3.0, 4.0]))
    out, _ = encode_categoricals(m, [0.2, 0.4])
    assert list(out.column("x")) == [3.0, 4.0]


def test_dict_round_trip():
    enc = TargetEncoder(prior=2.0).fit(matrix(["a", "b", "a"]), [0.3, 0.9, 0.5])
    back = TargetEncoder.from_dict(enc.to_dict())
    assert back == enc


@pytest.mark.parametrize("prior", [0.5, 1.0, 10.0])
def test_shrinks_toward_mean(prior):
    enc = TargetEncoder(prior=prior).fit(matrix(["a"] * 4 + ["b"] * 4), [1.0] * 4 + [0.0] * 4)
    assert 0.5 < enc.tables["band"]["a"] < 1.0
