"""Reading and writing embeddings, pair protocols, maps and reports.

Embedding files
    ``.csv``  header ``id,v0,...,v{dim-1}``, values with 17 significant digits.
    ``.emb``  little-endian binary: magic, u32 version, u64 count, u32 dim,
              tag, length-prefixed UTF-8 ids, then float64 rows.
Pair files
    ``.txt``  LFW ``pairs.txt`` layout.
    ``.csv``  YouTube Faces ``splits.txt``-style CSV with a header row.
    ``.tsv``  generic ``fold<TAB>id_a<TAB>id_b<TAB>same``.
Maps
    ``.lmap`` little-endian binary, same framing as ``.emb``.
Reports
    JSON with ``format`` and ``format_version`` keys; curves also as CSV.

All writers go through a temp file in the destination directory followed by
``os.replace`` so a file either appears complete or not at all.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, IncompatibleVersionError, ParseError, ProtocolError
from .experiments import RankCurve, SensitivityCurve
from .protocol import CrossMatrix
from .types import EmbeddingSet, EvalConfig, EvaluationReport, FoldResult, LinearMap, Pair, PairProtocol

EMB_MAGIC = b"EMBSET\x00\x01"
MAP_MAGIC = b"LINMAP\x00\x01"
BINARY_VERSION = 1
REPORT_VERSION = 1


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- binary helpers

def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self.path}: invalid UTF-8 string") from exc

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def header(self, magic: bytes, what: str) -> None:
        if self.take(len(magic)) != magic:
            raise FormatError(f"{self.path}: not a {what} file (bad magic bytes)")
        (version,) = self.unpack("<I")
        if version != BINARY_VERSION:
            raise IncompatibleVersionError(
                f"{self.path}: {what} format version {version} is not supported (expected {BINARY_VERSION})"
            )

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


# ---------------------------------------------------------------- embeddings

def embeddings_to_bytes(emb: EmbeddingSet) -> bytes:
    parts = [EMB_MAGIC, struct.pack("<IQI", BINARY_VERSION, len(emb), emb.dim), _pack_str(emb.system_tag)]
    parts.extend(_pack_str(i) for i in emb.ids)
    parts.append(np.ascontiguousarray(emb.vectors, dtype="<f8").tobytes())
    return b"".join(parts)


def embeddings_from_bytes(data: bytes, path="<bytes>") -> EmbeddingSet:
    r = _Reader(data, path)
    r.header(EMB_MAGIC, "embedding")
    n, dim = r.unpack("<QI")
    tag = r.string()
    ids = [r.string() for _ in range(n)]
    vectors = r.floats(n * dim).reshape(n, dim)
    r.finish()
    return EmbeddingSet(ids, vectors, tag)


def embeddings_to_csv(emb: EmbeddingSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id"] + [f"v{k}" for k in range(emb.dim)])
    for entity, row in zip(emb.ids, emb.vectors):
        w.writerow([entity] + [fmt_float(x) for x in row])
    return buf.getvalue()


def embeddings_from_csv(text: str, path="<text>", system_tag: str = "") -> EmbeddingSet:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or not any(cell.strip() for cell in header):
        raise ProtocolError(f"{path}: no entries")
    if header[0].strip() != "id" or len(header) < 2:
        raise ParseError("header must be 'id,v0,...,v{dim-1}'", path, 1)
    dim = len(header) - 1
    ids, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != dim + 1:
            raise ParseError(f"expected {dim} values, found {len(row) - 1}", path, lineno)
        try:
            rows.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ParseError(f"non-numeric value ({exc})", path, lineno) from None
        if not all(np.isfinite(rows[-1])):
            raise ParseError("non-finite value", path, lineno)
        ids.append(row[0])
    if not ids:
        raise ProtocolError(f"{path}: no entries")
    return EmbeddingSet(ids, np.array(rows, dtype=np.float64).reshape(len(ids), dim), system_tag)


def _embedding_format(path: Path, fmt: str | None) -> str:
    fmt = fmt or {".csv": "csv", ".emb": "bin", ".bin": "bin"}.get(path.suffix.lower())
    if fmt not in ("csv", "bin"):
        raise FormatError(f"{path}: cannot infer embedding format from extension {path.suffix!r}")
    return fmt


def read_embeddings(path, fmt: str | None = None) -> EmbeddingSet:
    """Load an embedding file; CSV files take their system tag from the file stem."""
    path = Path(path)
    if _embedding_format(path, fmt) == "bin":
        return embeddings_from_bytes(path.read_bytes(), path)
    return embeddings_from_csv(path.read_text(encoding="utf-8"), path, system_tag=path.stem)


def write_embeddings(emb: EmbeddingSet, path, fmt: str | None = None) -> None:
    path = Path(path)
    if _embedding_format(path, fmt) == "bin":
        atomic_write(path, embeddings_to_bytes(emb))
    else:
        atomic_write(path, embeddings_to_csv(emb))


# ---------------------------------------------------------------- pair protocols

def lfw_id(name: str, index: str | int) -> str:
    return f"{name}/{int(index):04d}"


def _split_lfw_id(entity: str) -> tuple[str, int]:
    name, sep, idx = entity.rpartition("/")
    if not sep or not idx.isdigit():
        raise ProtocolError(f"entity id {entity!r} is not of the form name/NNNN")
    return name, int(idx)


def parse_pairs_lfw(text: str, path="<text>") -> PairProtocol:
    lines = [(n, ln) for n, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise ParseError("empty pairs file", path)
    head_no, head = lines[0]
    fields = head.split()
    try:
        n_folds, per_class = (int(x) for x in fields)
    except ValueError:
        raise ParseError(f"header must be '<n_folds> <pairs_per_class>', got {head!r}", path, head_no) from None
    body = lines[1:]
    expected = n_folds * 2 * per_class
    if len(body) != expected:
        raise ParseError(
            f"header declares {n_folds} folds x {per_class} matched + {per_class} mismatched "
            f"= {expected} lines, found {len(body)}", path)

    def parse(lineno, line, matched, fold):
        parts = line.split()
        want = 3 if matched else 4
        if len(parts) != want:
            kind = "matched" if matched else "mismatched"
            raise ParseError(
                f"fold {fold}: expected {per_class} {kind} lines; this line has {len(parts)} fields, "
                f"a {kind} line has {want}", path, lineno)
        try:
            if matched:
                return Pair(lfw_id(parts[0], parts[1]), lfw_id(parts[0], parts[2]), True)
            return Pair(lfw_id(parts[0], parts[1]), lfw_id(parts[2], parts[3]), False)
        except ValueError:
            raise ParseError(f"image index is not an integer: {line.strip()!r}", path, lineno) from None

    folds, pos = [], 0
    for k in range(n_folds):
        block = body[pos:pos + 2 * per_class]
        pos += 2 * per_class
        fold = [parse(n, ln, True, k) for n, ln in block[:per_class]]
        fold += [parse(n, ln, False, k) for n, ln in block[per_class:]]
        folds.append(tuple(fold))
    return PairProtocol(tuple(folds))


def read_pairs_lfw(path) -> PairProtocol:
    path = Path(path)
    return parse_pairs_lfw(path.read_text(encoding="utf-8"), path)


def pairs_lfw_text(proto: PairProtocol) -> str:
    """Render in pairs.txt layout. Needs equal matched/mismatched counts in every fold."""
    counts = set()
    for fold in proto.folds:
        n_same = sum(p.same for p in fold)
        counts.update({n_same, len(fold) - n_same})
    if len(counts) != 1:
        raise ProtocolError("pairs.txt layout needs the same matched and mismatched count in every fold")
    lines = [f"{proto.n_folds}\t{counts.pop()}"]
    for fold in proto.folds:
        for p in [p for p in fold if p.same] + [p for p in fold if not p.same]:
            (na, ia), (nb, ib) = _split_lfw_id(p.id_a), _split_lfw_id(p.id_b)
            if p.same:
                if na != nb:
                    raise ProtocolError(f"matched pair ({p.id_a}, {p.id_b}) names two different people")
                lines.append(f"{na}\t{ia}\t{ib}")
            else:
                lines.append(f"{na}\t{ia}\t{nb}\t{ib}")
    return "\n".join(lines) + "\n"


def write_pairs_lfw(proto: PairProtocol, path) -> None:
    atomic_write(path, pairs_lfw_text(proto))


YTF_COLUMNS = ("split number", "pair number", "first name", "second name", "is same")


def read_pairs_ytf(path) -> PairProtocol:
    """YouTube Faces split file: CSV with header naming the columns in ``YTF_COLUMNS``.

    Video IDs are used verbatim (e.g. ``Aaron_Eckhart/0``). Any extra trailing
    column such as "is physically the same" is ignored.
    """
    path = Path(path)
    rows = list(csv.reader(io.StringIO(path.read_text(encoding="utf-8"))))
    rows = [(n, r) for n, r in enumerate(rows, start=1) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty pairs file", path)
    header = tuple(c.strip().lower() for c in rows[0][1])
    if header[:len(YTF_COLUMNS)] != YTF_COLUMNS:
        raise ParseError(f"expected header columns {list(YTF_COLUMNS)}, got {list(header)}", path, rows[0][0])
    folds: dict[int, list[Pair]] = {}
    for lineno, row in rows[1:]:
        if len(row) < len(YTF_COLUMNS):
            raise ParseError(f"expected at least {len(YTF_COLUMNS)} columns, found {len(row)}", path, lineno)
        split, _, first, second, same = (c.strip() for c in row[:5])
        if not split.isdigit() or same not in ("0", "1"):
            raise ParseError("split number must be an integer and 'is same' must be 0 or 1", path, lineno)
        folds.setdefault(int(split), []).append(Pair(first, second, same == "1"))
    return PairProtocol(tuple(tuple(folds[k]) for k in sorted(folds)))


def pairs_tsv_text(proto: PairProtocol) -> str:
    lines = ["fold\tid_a\tid_b\tsame"]
    for k, fold in enumerate(proto.folds):
        lines.extend(f"{k}\t{p.id_a}\t{p.id_b}\t{int(p.same)}" for p in fold)
    return "\n".join(lines) + "\n"


def parse_pairs_tsv(text: str, path="<text>") -> PairProtocol:
    lines = text.splitlines()
    if not lines or lines[0].strip().split("\t") != ["fold", "id_a", "id_b", "same"]:
        raise ParseError("header must be 'fold<TAB>id_a<TAB>id_b<TAB>same'", path, 1)
    folds: dict[int, list[Pair]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4 or not parts[0].isdigit() or parts[3] not in ("0", "1"):
            raise ParseError(f"malformed pair line {line!r}", path, lineno)
        folds.setdefault(int(parts[0]), []).append(Pair(parts[1], parts[2], parts[3] == "1"))
    if sorted(folds) != list(range(len(folds))):
        raise ParseError(f"fold numbers must run 0..n-1, got {sorted(folds)}", path)
    return PairProtocol(tuple(tuple(folds[k]) for k in range(len(folds))))


def read_pairs(path, fmt: str = "auto") -> PairProtocol:
    path = Path(path)
    if fmt == "auto":
        fmt = {".txt": "lfw", ".csv": "ytf", ".tsv": "tsv"}.get(path.suffix.lower(), "")
    if fmt == "lfw":
        return read_pairs_lfw(path)
    if fmt == "ytf":
        return read_pairs_ytf(path)
    if fmt == "tsv":
        return parse_pairs_tsv(path.read_text(encoding="utf-8"), path)
    raise FormatError(f"{path}: unknown pairs format; use --pairs-format lfw|ytf|tsv")


def write_pairs(proto: PairProtocol, path, fmt: str = "auto") -> None:
    path = Path(path)
    if fmt == "auto":
        fmt = "tsv" if path.suffix.lower() == ".tsv" else "lfw"
    atomic_write(path, pairs_tsv_text(proto) if fmt == "tsv" else pairs_lfw_text(proto))


# ---------------------------------------------------------------- maps

def map_to_bytes(m: LinearMap) -> bytes:
    rows, cols = m.matrix.shape
    return b"".join([
        MAP_MAGIC,
        struct.pack("<IIIdQ", BINARY_VERSION, rows, cols, m.lam, m.n_pairs_used),
        _pack_str(m.source_tag),
        _pack_str(m.target_tag),
        np.ascontiguousarray(m.matrix, dtype="<f8").tobytes(),
    ])


def map_from_bytes(data: bytes, path="<bytes>") -> LinearMap:
    r = _Reader(data, path)
    r.header(MAP_MAGIC, "linear map")
    rows, cols, lam, n_pairs = r.unpack("<IIdQ")
    source_tag, target_tag = r.string(), r.string()
    matrix = r.floats(rows * cols).reshape(rows, cols)
    r.finish()
    try:
        return LinearMap(matrix, lam, n_pairs, source_tag, target_tag)
    except ProtocolError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_map(m: LinearMap, path) -> None:
    atomic_write(path, map_to_bytes(m))


def read_map(path) -> LinearMap:
    path = Path(path)
    return map_from_bytes(path.read_bytes(), path)


# ---------------------------------------------------------------- reports

def _envelope(kind: str, body: dict) -> dict:
    return {"format": f"embedmap.{kind}", "format_version": REPORT_VERSION, **body}


def report_to_dict(report: EvaluationReport) -> dict:
    return _envelope("evaluation", {
        "source_tag": report.source_tag,
        "target_tag": report.target_tag,
        "config": report.config.to_dict(),
        "mean_accuracy": report.mean_accuracy,
        "std_accuracy": report.std_accuracy,
        "folds": [
            {"fold_index": f.fold_index, "threshold": f.threshold, "train_accuracy": f.train_accuracy,
             "test_accuracy": f.test_accuracy, "n_pairs_used": f.n_pairs_used}
            for f in report.per_fold
        ],
        "warnings": list(report.warnings),
    })


def _check_envelope(data: dict, kind: str) -> None:
    if not isinstance(data, dict) or data.get("format") != f"embedmap.{kind}":
        raise FormatError(f"not an embedmap {kind} report")
    if data.get("format_version") != REPORT_VERSION:
        raise IncompatibleVersionError(
            f"{kind} report version {data.get('format_version')} is not supported (expected {REPORT_VERSION})"
        )


def report_from_dict(data: dict) -> EvaluationReport:
    _check_envelope(data, "evaluation")
    return EvaluationReport(
        per_fold=tuple(FoldResult(**f) for f in data["folds"]),
        config=EvalConfig.from_dict(data["config"]),
        source_tag=data["source_tag"],
        target_tag=data["target_tag"],
        warnings=tuple(data["warnings"]),
    )


def cross_to_dict(cm: CrossMatrix) -> dict:
    acc = cm.accuracy()
    base = cm.baseline_accuracy()
    return _envelope("cross", {
        "tags": list(cm.tags),
        "accuracy": acc.tolist(),
        "baseline_accuracy": [[None if np.isnan(x) else x for x in row] for row in base.tolist()],
        "max_drop": cm.max_drop(),
        "cells": [
            [{"fitted": report_to_dict(cm.fitted[i][j]),
              "baseline": None if cm.baseline[i][j] is None else report_to_dict(cm.baseline[i][j])}
             for j in range(len(cm.tags))]
            for i in range(len(cm.tags))
        ],
    })


def cross_from_dict(data: dict) -> CrossMatrix:
    _check_envelope(data, "cross")
    cells = data["cells"]
    fitted = tuple(tuple(report_from_dict(c["fitted"]) for c in row) for row in cells)
    baseline = tuple(tuple(None if c["baseline"] is None else report_from_dict(c["baseline"]) for c in row)
                     for row in cells)
    return CrossMatrix(tuple(data["tags"]), fitted, baseline)


def sensitivity_to_dict(curve: SensitivityCurve, extra: dict | None = None) -> dict:
    return _envelope("sensitivity", {
        "points": [{"p": p, "accuracy": a} for p, a in curve.points],
        "full_accuracy": curve.full_accuracy,
        "p_for_drop": curve.p_for_drop,
        "drop_threshold": curve.drop_threshold,
        "m": curve.m,
        **(extra or {}),
    })


def sensitivity_from_dict(data: dict) -> SensitivityCurve:
    _check_envelope(data, "sensitivity")
    return SensitivityCurve(
        tuple((pt["p"], pt["accuracy"]) for pt in data["points"]),
        data["full_accuracy"], data["p_for_drop"], data["drop_threshold"], data["m"],
    )


def rank_to_dict(curve: RankCurve, extra: dict | None = None) -> dict:
    var = dict(curve.variance_points)
    return _envelope("rank", {
        "points": [{"k": k, "accuracy": a, "variance_explained": var[k]} for k, a in curve.points],
        "full_accuracy": curve.full_accuracy,
        **(extra or {}),
    })


def rank_from_dict(data: dict) -> RankCurve:
    _check_envelope(data, "rank")
    pts = data["points"]
    return RankCurve(
        tuple((pt["k"], pt["accuracy"]) for pt in pts),
        tuple((pt["k"], pt["variance_explained"]) for pt in pts),
        data["full_accuracy"],
    )


_TO_DICT = {
    EvaluationReport: report_to_dict,
    CrossMatrix: cross_to_dict,
    SensitivityCurve: sensitivity_to_dict,
    RankCurve: rank_to_dict,
}
_FROM_DICT = {
    "embedmap.evaluation": report_from_dict,
    "embedmap.cross": cross_from_dict,
    "embedmap.sensitivity": sensitivity_from_dict,
    "embedmap.rank": rank_from_dict,
}


def dumps(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(obj, path, extra: dict | None = None) -> None:
    """Write any result object as JSON; ``extra`` keys are merged into the top level."""
    try:
        to_dict = _TO_DICT[type(obj)]
    except KeyError:
        raise TypeError(f"cannot serialise {type(obj).__name__} as a report") from None
    data = to_dict(obj)
    if extra:
        data.update(extra)
    atomic_write(path, dumps(data))


def read_report(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    kind = data.get("format") if isinstance(data, dict) else None
    if kind not in _FROM_DICT:
        raise FormatError(f"{path}: unknown report format {kind!r}")
    return _FROM_DICT[kind](data)


def curve_csv(curve) -> str:
    if isinstance(curve, SensitivityCurve):
        lines = ["p,accuracy"] + [f"{p},{fmt_float(a)}" for p, a in curve.points]
    elif isinstance(curve, RankCurve):
        var = dict(curve.variance_points)
        lines = ["k,accuracy,variance_explained"] + [
            f"{k},{fmt_float(a)},{fmt_float(var[k])}" for k, a in curve.points
        ]
    else:
        raise TypeError(f"no CSV layout for {type(curve).__name__}")
    return "\n".join(lines) + "\n"


def write_curve_csv(curve, path) -> None:
    atomic_write(path, curve_csv(curve))
