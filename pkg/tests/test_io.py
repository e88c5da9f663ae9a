import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from embedmap import io as eio
from embedmap.errors import FormatError, IncompatibleVersionError, ParseError, ProtocolError
from embedmap.experiments import rank_sweep, sensitivity_sweep
from embedmap.protocol import cross_matrix, evaluate
from embedmap.types import EmbeddingSet, EvalConfig, LinearMap, Pair, PairProtocol

doubles = st.floats(allow_nan=False, allow_infinity=False, width=64)


@pytest.fixture
def emb3():
    return EmbeddingSet(["a/0001", "b/0002", "c,d"], [[0.1, 1 / 3, -2e-300], [1e300, 0.0, -0.0],
                                                      [np.pi, np.e, 5.0]], "sys")


@pytest.mark.parametrize("suffix", [".csv", ".emb"])
def test_embeddings_roundtrip(tmp_path, emb3, suffix):
    path = tmp_path / f"sys{suffix}"
    eio.write_embeddings(emb3, path)
    back = eio.read_embeddings(path)
    assert back.ids == emb3.ids
    assert np.array_equal(back.vectors, emb3.vectors)
    assert back == emb3


@given(arrays(np.float64, (4, 3), elements=doubles))
@settings(max_examples=50)
def test_csv_text_roundtrip_is_exact(values):
    emb = EmbeddingSet([f"e{k}" for k in range(4)], values)
    back = eio.embeddings_from_csv(eio.embeddings_to_csv(emb))
    assert np.array_equal(back.vectors, emb.vectors)


@given(arrays(np.float64, (3, 5), elements=doubles), st.text(max_size=8))
@settings(max_examples=50)
def test_binary_roundtrip_is_bit_exact(values, tag):
    emb = EmbeddingSet(["x", "ÿ", "z z"], values, tag)
    back = eio.embeddings_from_bytes(eio.embeddings_to_bytes(emb))
    assert back.vectors.tobytes() == emb.vectors.tobytes()
    assert back.system_tag == tag


def test_csv_short_row_names_line():
    header = "id," + ",".join(f"v{k}" for k in range(512))
    good = "p/0001," + ",".join(["0.5"] * 512)
    bad = "p/0002," + ",".join(["0.5"] * 511)
    with pytest.raises(ParseError) as exc:
        eio.embeddings_from_csv("\n".join([header, good, bad]) + "\n", path="e.csv")
    assert exc.value.line == 3
    assert "e.csv:3" in str(exc.value)


def test_csv_non_numeric():
    with pytest.raises(ParseError, match=":2"):
        eio.embeddings_from_csv("id,v0\nx,abc\n", path="f.csv")


def test_csv_empty_and_header_only(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ProtocolError, match="no entries"):
        eio.read_embeddings(empty)
    with pytest.raises(ProtocolError, match="no entries"):
        eio.embeddings_from_csv("id,v0,v1\n")


def test_csv_duplicate_id():
    with pytest.raises(ProtocolError, match="duplicate"):
        eio.embeddings_from_csv("id,v0\na,1\na,2\n")


def test_unknown_extension(tmp_path):
    with pytest.raises(FormatError):
        eio.read_embeddings(tmp_path / "x.parquet")


def test_binary_bad_magic_and_version(emb3):
    data = eio.embeddings_to_bytes(emb3)
    with pytest.raises(FormatError, match="magic"):
        eio.embeddings_from_bytes(b"XXXXXXXX" + data[8:])
    bumped = data[:8] + struct.pack("<I", 99) + data[12:]
    with pytest.raises(IncompatibleVersionError):
        eio.embeddings_from_bytes(bumped)
    with pytest.raises(FormatError, match="truncated"):
        eio.embeddings_from_bytes(data[:-3])


def _lfw_text(n_folds, per_class, drop_matched_in_fold=None):
    lines = [f"{n_folds}\t{per_class}"]
    for k in range(n_folds):
        n_match = per_class - (1 if k == drop_matched_in_fold else 0)
        lines += [f"P{k}_{i}\t1\t{2 + i % 3}" for i in range(n_match)]
        lines += [f"P{k}_{i}\t1\tQ{k}_{i}\t{1 + i % 4}" for i in range(per_class)]
        if k == drop_matched_in_fold:
            lines.append(f"Z{k}\t1\tY{k}\t1")
    return "\n".join(lines) + "\n"


def test_read_pairs_lfw_full_size(tmp_path):
    path = tmp_path / "pairs.txt"
    path.write_text(_lfw_text(10, 300))
    proto = eio.read_pairs_lfw(path)
    assert proto.n_folds == 10
    assert all(len(f) == 600 for f in proto.folds)
    assert all(proto.matched_count(exclude_fold=k) == 2700 for k in range(10))


def test_lfw_matched_line_format():
    proto = eio.parse_pairs_lfw("2 1\nAlice 1 3\nAlice 1 Bob 2\nCarl 4 5\nCarl 4 Dan 12\n")
    assert proto.folds[0][0] == Pair("Alice/0001", "Alice/0003", True)
    assert proto.folds[0][1] == Pair("Alice/0001", "Bob/0002", False)
    assert proto.folds[1][1] == Pair("Carl/0004", "Dan/0012", False)


def test_lfw_fold_with_missing_matched_line():
    with pytest.raises(ParseError, match="fold 3: expected 300 matched"):
        eio.parse_pairs_lfw(_lfw_text(10, 300, drop_matched_in_fold=3))


def test_lfw_line_count_mismatch():
    text = _lfw_text(2, 3)
    with pytest.raises(ParseError, match="found 11"):
        eio.parse_pairs_lfw(text.rsplit("\n", 2)[0] + "\n")


def test_lfw_bad_header_and_index():
    with pytest.raises(ParseError, match=":1"):
        eio.parse_pairs_lfw("ten 300\n", path="p.txt")
    with pytest.raises(ParseError, match="integer"):
        eio.parse_pairs_lfw("2 1\nA 1 x\nA 1 B 2\nC 1 2\nC 1 D 2\n")


def test_lfw_roundtrip(tmp_path, proto):
    path = tmp_path / "pairs.txt"
    eio.write_pairs_lfw(proto, path)
    assert eio.read_pairs_lfw(path) == proto


def test_lfw_write_requires_balanced_folds(tmp_path):
    proto = PairProtocol(((Pair("a/0001", "a/0002", True),), (Pair("a/0001", "b/0001", False),)))
    with pytest.raises(ProtocolError):
        eio.write_pairs_lfw(proto, tmp_path / "p.txt")


def test_tsv_roundtrip(tmp_path):
    proto = PairProtocol(((Pair("x", "y", True), Pair("x", "z", False)), (Pair("q", "r", False),)))
    path = tmp_path / "p.tsv"
    eio.write_pairs(proto, path)
    assert eio.read_pairs(path) == proto


def test_ytf_reader(tmp_path):
    path = tmp_path / "splits.csv"
    path.write_text(
        "split number, pair number, first name, second name, is same, is physically the same\n"
        "1, 1, Aaron/0, Aaron/1, 1, 1\n"
        "1, 2, Aaron/0, Bea/2, 0, 0\n"
        "2, 3, Cy/1, Cy/4, 1, 1\n"
    )
    proto = eio.read_pairs(path)
    assert proto.n_folds == 2
    assert proto.folds[0] == (Pair("Aaron/0", "Aaron/1", True), Pair("Aaron/0", "Bea/2", False))


def test_ytf_reader_rejects_unknown_layout(tmp_path):
    path = tmp_path / "splits.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ParseError, match="header"):
        eio.read_pairs(path)


def test_map_roundtrip_bit_exact(tmp_path):
    m = LinearMap(np.random.default_rng(0).standard_normal((5, 3)), lam=0.25, n_pairs_used=77,
                  source_tag="ic", target_tag="rm")
    path = tmp_path / "m.lmap"
    eio.write_map(m, path)
    back = eio.read_map(path)
    assert back == m
    assert back.matrix.tobytes() == m.matrix.tobytes()


def test_map_corrupted_magic(tmp_path):
    path = tmp_path / "m.lmap"
    eio.write_map(LinearMap(np.eye(2)), path)
    data = bytearray(path.read_bytes())
    data[0:3] = b"BAD"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="magic"):
        eio.read_map(path)


def test_report_roundtrip(tmp_path, small_data):
    a, b, proto = small_data
    report = evaluate(a, b, proto, EvalConfig(subsample=20, seed=3))
    path = tmp_path / "r.json"
    eio.write_report(report, path)
    data = json.loads(path.read_text())
    assert len(data["folds"]) == proto.n_folds
    assert data["format_version"] == eio.REPORT_VERSION
    assert eio.read_report(path) == report


def test_report_version_mismatch(tmp_path, small_data):
    a, b, proto = small_data
    path = tmp_path / "r.json"
    eio.write_report(evaluate(a, b, proto), path)
    data = json.loads(path.read_text())
    data["format_version"] = 2
    path.write_text(json.dumps(data))
    with pytest.raises(IncompatibleVersionError):
        eio.read_report(path)


def test_other_reports_roundtrip(tmp_path, small_data):
    a, b, proto = small_data
    for obj in (cross_matrix([a, b], proto),
                sensitivity_sweep(a, b, proto, num_points=3),
                rank_sweep(a, b, proto, ranks=[2, 16])):
        path = tmp_path / "x.json"
        eio.write_report(obj, path)
        assert eio.read_report(path) == obj


def test_curve_csv_layouts(small_data):
    a, b, proto = small_data
    s = eio.curve_csv(sensitivity_sweep(a, b, proto, num_points=4))
    assert s.splitlines()[0] == "p,accuracy" and len(s.splitlines()) == 5
    r = eio.curve_csv(rank_sweep(a, b, proto, ranks=[2, 4]))
    assert r.splitlines()[0] == "k,accuracy,variance_explained" and len(r.splitlines()) == 3


def test_atomic_write_leaves_no_temp(tmp_path):
    eio.atomic_write(tmp_path / "f.txt", "hello")
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]
