import json

import numpy as np
import pytest

from boolrules.dataset import (
    BinaryDataset,
    DatasetError,
    FeatureMeta,
    binarize_categorical,
    binarize_numeric,
    binarize_table,
    build_matrix,
    export_debug,
    ingest_csv,
    read_csv_table,
)
from _data import make_binary_dataset, tictactoe_rows, write_tictactoe_csv


def write_csv(path, text):
    path.write_text(text.lstrip())
    return path


def test_decile_thresholds_on_one_to_ten():
    # For sorted values 1..10 the p-quantile under linear interpolation is
    # 1 + 9p, so the nine decile cuts are fixed numbers; each yields a
    # <= / > pair, giving 18 columns.
    expected = [1.9, 2.8, 3.7, 4.6, 5.5, 6.4, 7.3, 8.2, 9.1]
    cols, metas = binarize_numeric(np.arange(1.0, 11.0), "v", quantile_count=9)
    assert len(cols) == 18 and len(metas) == 18
    got = [m.value for m in metas if m.kind == "numeric-leq"]
    assert got == pytest.approx(expected)
    # complement pairs are adjacent and partition the samples
    for j in range(0, 18, 2):
        assert metas[j + 1] == metas[j].complement()
        assert ((cols[j] ^ cols[j + 1]) == 1).all()


def test_threshold_at_maximum_dropped():
    cols, metas = binarize_numeric(np.full(6, 5.0), "v")
    assert cols == [] and metas == []
    # two distinct values: thresholds dedupe and the one at vmax vanishes
    cols, metas = binarize_numeric(np.array([0.0, 0.0, 1.0, 1.0]), "v")
    assert metas, "at least one cut below the maximum"
    assert all(m.value < 1.0 for m in metas)
    for c in cols:
        assert 0 < c.sum() < len(c), "no constant columns"


def test_categorical_pairs():
    cols, metas = binarize_categorical(list("abca"), "c")
    assert [m.value for m in metas] == ["a", "a", "b", "b", "c", "c"]
    assert metas[0].kind == "categorical-eq"
    assert metas[1] == metas[0].complement()
    np.testing.assert_array_equal(cols[0], [1, 0, 0, 1])
    np.testing.assert_array_equal(cols[1], [0, 1, 1, 0])
    assert binarize_categorical(["x", "x"], "c") == ([], [])


def test_ingest_round_trip(tmp_path):
    p = write_csv(tmp_path / "t.csv", """
        a,b,cls
        1,red,yes
        2,blue,no
        3,red,yes
        4,blue,no
    """.replace(" ", ""))
    ds = ingest_csv(p, "cls")
    ds.validate()
    assert ds.positive_label == "yes" and ds.negative_label == "no"
    assert ds.n == 4
    np.testing.assert_array_equal(ds.y, [1, 0, 1, 0])
    # column a is numeric, b categorical
    kinds = {m.kind for m in ds.features}
    assert "numeric-leq" in kinds and "categorical-eq" in kinds


def test_positive_label_choice(tmp_path):
    p = write_csv(tmp_path / "t.csv", """
        a,cls
        1,x
        2,o
        3,x
    """.replace(" ", ""))
    assert read_csv_table(p, "cls").positive_label == "x"  # larger of o, x
    assert read_csv_table(p, "cls", positive_label="o").positive_label == "o"
    with pytest.raises(DatasetError):
        read_csv_table(p, "cls", positive_label="zzz")


def test_label_errors(tmp_path):
    three = write_csv(tmp_path / "three.csv", "a,cls\n1,x\n2,y\n3,z\n")
    with pytest.raises(DatasetError, match="exactly"):
        read_csv_table(three, "cls")
    with pytest.raises(DatasetError, match="not found"):
        read_csv_table(three, "nope")
    single = write_csv(tmp_path / "one.csv", "a,cls\n1,x\n2,x\n")
    with pytest.raises(DatasetError):
        read_csv_table(single, "cls")


def test_structural_errors(tmp_path):
    ragged = write_csv(tmp_path / "r.csv", "a,b,cls\n1,2,x\n1,y\n")
    with pytest.raises(DatasetError, match="row 3"):
        read_csv_table(ragged, "cls")
    dup = write_csv(tmp_path / "d.csv", "a,a,cls\n1,2,x\n3,4,y\n")
    with pytest.raises(DatasetError, match="duplicate"):
        read_csv_table(dup, "cls")
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(DatasetError, match="empty"):
        read_csv_table(empty, "cls")
    with pytest.raises(DatasetError, match="policy"):
        read_csv_table(ragged, "cls", missing="zap")


def test_missing_policies(tmp_path):
    p = write_csv(tmp_path / "m.csv", """
        num,cat,cls
        1,red,yes
        2,?,no
        ?,blue,yes
        4,blue,no
        5,red,?
    """.replace(" ", ""))
    # drop: any missing cell kills the row (rows 2, 3, 5)
    t = read_csv_table(p, "cls", missing="drop")
    assert t.n == 2 and t.dropped_rows == 3
    # category: "?" becomes a category, but missing numerics and missing
    # labels still drop
    t2 = read_csv_table(p, "cls", missing="category")
    assert t2.n == 3 and t2.dropped_rows == 2
    assert "?" in t2.values["cat"]
    ds = binarize_table(t2)
    assert any(m.value == "?" for m in ds.features)


def test_type_inference(tmp_path):
    p = write_csv(tmp_path / "t.csv", """
        sci,mixed,cls
        1.5e3,1,yes
        -2,2a,no
        0.5,3,yes
    """.replace(" ", ""))
    t = read_csv_table(p, "cls")
    assert t.kinds["sci"] == "numeric"
    assert t.kinds["mixed"] == "categorical"


def test_negation_involution():
    rng = np.random.default_rng(3)
    X = (rng.random((8, 3)) < 0.5).astype(np.uint8)
    y = np.array([1, 0, 1, 0, 1, 0, 0, 1], dtype=np.uint8)
    ds = make_binary_dataset(X, y)
    ds.validate()
    neg = ds.negated()
    neg.validate()
    assert neg.positive_label == ds.negative_label
    assert (neg.X == 1 - ds.X).all() and (neg.y == 1 - ds.y).all()
    back = neg.negated()
    assert (back.X == ds.X).all() and (back.y == ds.y).all()
    assert back.features == ds.features
    assert back.positive_label == ds.positive_label


def test_validate_catches_broken_pairing():
    ds = make_binary_dataset(np.array([[1], [0]], dtype=np.uint8),
                             np.array([1, 0], dtype=np.uint8))
    ds.X[0, 1] = 1  # now column 1 is no longer the complement of column 0
    with pytest.raises(DatasetError, match="partition"):
        ds.validate()


def test_feature_evaluate_missing_cells():
    leq = FeatureMeta("v", "numeric-leq", 2.0)
    gt = FeatureMeta("v", "numeric-gt", 2.0)
    eq = FeatureMeta("c", "categorical-eq", "red")
    neq = FeatureMeta("c", "categorical-neq", "red")
    for cell in (None, "", "?", " ? "):
        assert not leq.evaluate(cell)
        assert not gt.evaluate(cell)
        assert not eq.evaluate(cell)
        assert neq.evaluate(cell)
    assert leq.evaluate("1.5") and not gt.evaluate("1.5")
    assert eq.evaluate(" red ") and not neq.evaluate("red")
    with pytest.raises(ValueError):
        leq.evaluate("nan")
    with pytest.raises(ValueError):
        leq.evaluate("oops")


def test_per_fold_binarization_and_build_matrix(tmp_path):
    p = write_csv(tmp_path / "t.csv", """
        v,c,cls
        1,a,no
        2,b,no
        3,a,yes
        4,b,yes
        5,a,yes
        6,b,no
        7,a,yes
        8,c,no
    """.replace(" ", ""))
    table = read_csv_table(p, "cls")
    train = np.array([0, 1, 2, 3, 4, 5])
    test = np.array([6, 7])
    ds = binarize_table(table, rows=train, quantile_count=3)
    ds.validate()
    assert ds.n == 6
    # thresholds come from the training rows only
    assert all(m.value <= 6.0 for m in ds.features if m.kind == "numeric-leq")
    # category "c" appears only in the test rows, so no feature mentions it
    assert all(m.value != "c" for m in ds.features if m.column == "c")
    M = build_matrix(table, test, ds.features)
    assert M.shape == (2, ds.d)
    # row 6: v=7 exceeds every training threshold; row 7 categorical c
    # matches no equality on column c and every inequality
    for j, m in enumerate(ds.features):
        if m.kind == "numeric-leq":
            assert M[0, j] == 0
        if m.kind == "numeric-gt":
            assert M[0, j] == 1
        if m.column == "c" and m.kind == "categorical-eq":
            assert M[1, j] == 0
        if m.column == "c" and m.kind == "categorical-neq":
            assert M[1, j] == 1


def test_single_class_rejected(tmp_path):
    p = write_csv(tmp_path / "t.csv", "a,cls\n1,x\n2,x\n3,y\n")
    table = read_csv_table(p, "cls")
    with pytest.raises(DatasetError, match="both classes"):
        binarize_table(table, rows=np.array([0, 1]))


def test_constant_features_rejected(tmp_path):
    p = write_csv(tmp_path / "t.csv", "a,cls\n5,x\n5,y\n")
    with pytest.raises(DatasetError, match="usable"):
        ingest_csv(p, "cls")


def test_pricing_nnz():
    X = np.array([[1, 0], [0, 0]], dtype=np.uint8)
    Xfull = np.hstack([X, 1 - X])
    ds = BinaryDataset(X=Xfull, y=np.array([1, 0], dtype=np.uint8))
    # zeros(5) + d(4) + n(2)
    assert ds.pricing_nnz() == 4 + 4 + 2


def test_export_debug(tmp_path):
    ds = make_binary_dataset(np.array([[1, 0], [0, 1]], dtype=np.uint8),
                             np.array([1, 0], dtype=np.uint8))
    desc, mat = tmp_path / "d.json", tmp_path / "m.txt"
    export_debug(ds, desc, mat)
    doc = json.loads(desc.read_text())
    assert doc["n"] == 2 and doc["d"] == 4
    assert len(doc["features"]) == 4
    lines = mat.read_text().splitlines()
    assert len(lines) == 2 and lines[0].endswith("| 1")


def test_tictactoe_generation(tmp_path):
    rows = tictactoe_rows()
    assert len(rows) == 958
    assert sum(1 for r in rows if r[-1] == "positive") == 626
    boards = {tuple(r[:9]): r[9] for r in rows}
    # a clean x win across the top, two o replies
    assert boards[("x", "x", "x", "o", "o", "b", "b", "b", "b")] == "positive"
    # the same line with a single o is unreachable: x would have won a move
    # earlier
    assert ("x", "x", "x", "o", "b", "b", "b", "b", "b") not in boards
    # o wins only when moves are balanced
    assert boards[("o", "o", "o", "x", "x", "b", "x", "b", "b")] == "negative"
    # a double x win is fine when both lines share the final stone
    assert boards[("x", "x", "x", "o", "x", "o", "x", "o", "o")] == "positive"
    p = write_tictactoe_csv(tmp_path / "ttt.csv")
    ds = ingest_csv(p, "class")
    ds.validate()
    assert ds.n == 958
    assert ds.d == 9 * 3 * 2
    assert int(ds.y.sum()) == 626
