import numpy as np
import pytest

from stepdecay_lab import data_io as D


def test_parse_basic_line():
    ds = D.parse_libsvm("-1 3:0.5 7:1.25")
    assert ds.n == 1 and ds.d == 7
    idx, val = ds.row(0)
    assert ds.labels[0] == -1.0
    assert list(idx) == [2, 6] and list(val) == [0.5, 1.25]


def test_parse_label_only_row():
    ds = D.parse_libsvm("+1\n")
    assert ds.n == 1 and ds.labels[0] == 1.0
    idx, val = ds.row(0)
    assert len(idx) == 0 and len(val) == 0


def test_parse_zero_one_labels_remapped():
    ds = D.parse_libsvm("0 1:2.0\n1 2:3.0\n")
    assert list(ds.labels) == [-1.0, 1.0]


def test_parse_errors_carry_line_numbers():
    with pytest.raises(D.DataFormatError, match="line 1"):
        D.parse_libsvm("1 a:b")
    with pytest.raises(D.DataFormatError, match="line 2"):
        D.parse_libsvm("1 1:2\n1 3:1 2:5\n")
    with pytest.raises(D.DataFormatError, match="line 3"):
        D.parse_libsvm("1 1:2\n-1 2:1\nfoo 1:1\n")


def test_parse_comments_and_blank_lines():
    ds = D.parse_libsvm("+1 2:1.5 # trailing comment\n\n-1 1:0.5\n")
    assert ds.n == 2 and ds.d == 2


def test_parse_respects_pinned_dimension():
    ds = D.parse_libsvm("1 2:1.0", d=10)
    assert ds.d == 10
    with pytest.raises(D.DataFormatError, match="d=1"):
        D.parse_libsvm("1 2:1.0", d=1)


def test_serialize_parse_roundtrip():
    ds = D.synth_logistic_data(50, 7, separation=1.5, seed=3)
    text = D.serialize_libsvm(ds)
    again = D.parse_libsvm(text, d=ds.d)
    assert again.n == ds.n and again.d == ds.d
    assert np.array_equal(again.labels, ds.labels)
    assert np.array_equal(again.indptr, ds.indptr)
    assert np.array_equal(again.indices, ds.indices)
    assert np.array_equal(again.data, ds.data)
    # serialize is a fixed point after one round trip
    assert D.serialize_libsvm(again) == text


def test_parse_from_path(tmp_path):
    path = tmp_path / "toy.libsvm"
    path.write_text("+1 1:1.0\n-1 2:2.0\n+1 3:3.0\n")
    ds = D.parse_libsvm(path)
    assert ds.n == 3 and ds.d == 3
    assert ds.provenance.endswith("toy.libsvm")


def test_synth_determinism_and_noiseless_limit():
    a = D.synth_logistic_data(100, 5, separation=2.0, seed=42)
    b = D.synth_logistic_data(100, 5, separation=2.0, seed=42)
    assert np.array_equal(a.data, b.data) and np.array_equal(a.labels, b.labels)
    ds, planted = D.synth_logistic_data(500, 5, separation=1e9, seed=1,
                                        return_planted=True)
    scores = ds.to_dense() @ planted
    assert np.array_equal(ds.labels, np.where(scores > 0, 1.0, -1.0))


def test_synth_bayes_rule_accuracy():
    ds, planted = D.synth_logistic_data(2000, 10, separation=2.0, seed=5,
                                        return_planted=True)
    predicted = np.where(ds.to_dense() @ planted > 0, 1.0, -1.0)
    assert np.mean(predicted == ds.labels) >= 0.8


def test_train_test_split_sizes_and_partition():
    ds = D.synth_logistic_data(100, 4, separation=2.0, seed=9)
    train, test = D.train_test_split(ds, 0.75, seed=0)
    assert train.n == 75 and test.n == 25
    tiny = D.synth_logistic_data(2, 4, separation=2.0, seed=9)
    t1, t2 = D.train_test_split(tiny, 0.5, seed=0)
    assert t1.n == 1 and t2.n == 1
    # the union of rows is the original multiset
    def rows_of(d):
        return sorted((d.labels[i],) + tuple(d.row(0 + i)[1]) for i in range(d.n))
    combined = sorted(rows_of(train) + rows_of(test))
    assert combined == rows_of(ds)
    # determinism and disjointness via re-split
    train2, test2 = D.train_test_split(ds, 0.75, seed=0)
    assert np.array_equal(train.data, train2.data)
    assert np.array_equal(test.labels, test2.labels)


def test_split_rejects_bad_inputs():
    ds = D.synth_logistic_data(10, 2, separation=2.0, seed=0)
    with pytest.raises(D.DataFormatError):
        D.train_test_split(ds, 1.5, seed=0)
    one = D.synth_logistic_data(1, 2, separation=2.0, seed=0)
    with pytest.raises(D.DataFormatError):
        D.train_test_split(one, 0.5, seed=0)


def test_sparse_dense_agreement():
    rng = np.random.default_rng(13)
    ds = D.parse_libsvm("\n".join(
        f"{'+1' if rng.random() < 0.5 else '-1'} "
        + " ".join(f"{j + 1}:{rng.normal():.8g}" for j in sorted(
            rng.choice(20, size=rng.integers(0, 8), replace=False)))
        for _ in range(50)), d=20)
    x = rng.normal(size=20)
    dense = ds.to_dense()
    assert np.allclose(ds.dot(x), dense @ x, rtol=1e-12, atol=1e-14)
    coeff = rng.normal(size=ds.n)
    assert np.allclose(ds.weighted_row_sum(coeff), dense.T @ coeff,
                       rtol=1e-12, atol=1e-12)
    rows = np.array([3, 7, 11])
    assert np.allclose(ds.dot(x, rows=rows), dense[rows] @ x, rtol=1e-12, atol=1e-14)


def test_float_formatting_roundtrips():
    values = [0.1, 1.0 / 3.0, 1e-300, 123456.789, float(np.nextafter(1.0, 2.0))]
    for v in values:
        assert float(D.format_float(v)) == v
    assert D.format_float(3) == "3"


def test_write_csv_lf_and_header(tmp_path):
    path = tmp_path / "out.csv"
    D.write_csv(path, ("a", "b"), [(1, 0.5), (2, 0.25)])
    raw = path.read_bytes()
    assert raw == b"a,b\n1,0.5\n2,0.25\n"
