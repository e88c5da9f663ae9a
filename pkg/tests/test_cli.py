import json
import subprocess
import sys

import pytest

from embedmap import io as eio
from embedmap.cli import main

SMALL = ["--n-identities", "200", "--latent-dim", "8", "--out-dims", "16", "16",
         "--folds", "5", "--matched", "30", "--mismatched", "30"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def small_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("small")
    assert main(["synth", "--out-dir", str(d), "--seed", "7", *SMALL]) == 0
    return d


def test_synth_defaults(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--out-dir", tmp_path)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "manifest.json", "pairs.txt", "system_0.csv", "system_1.csv"]
    manifest = json.loads(out)
    assert manifest["out_dims"] == [64, 64] and manifest["seed"] == 42
    emb = eio.read_embeddings(tmp_path / "system_0.csv")
    assert len(emb) == 12000 and emb.dim == 64
    proto = eio.read_pairs(tmp_path / "pairs.txt")
    assert proto.n_folds == 10 and all(len(f) == 600 for f in proto.folds)


def test_synth_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(capsys, "synth", "--out-dir", d, "--format", "bin", *SMALL)[0] == 0
    for name in ("system_0.emb", "system_1.emb", "pairs.txt", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_synth_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out-dir", str(tmp_path), "--latent-dim", "32", "--out-dims", "16"])
    assert exc.value.code == 2
    assert "latent-dim" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_missing_pairs_is_usage_error(small_dir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--source", str(small_dir / "system_0.csv"),
              "--target", str(small_dir / "system_1.csv"), "--report", "r.json"])
    assert exc.value.code == 2
    assert "--pairs" in capsys.readouterr().err


def test_bad_mode_is_usage_error(small_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--source", str(small_dir / "system_0.csv"), "--target",
              str(small_dir / "system_1.csv"), "--pairs", str(small_dir / "pairs.txt"),
              "--report", str(tmp_path / "r.json"), "--mode", "rank"])
    assert exc.value.code == 2


def _eval(capsys, d, out, src, tgt, *extra):
    return run(capsys, "evaluate", "--source", d / src, "--target", d / tgt,
               "--pairs", d / "pairs.txt", "--report", out, *extra)


def test_evaluate_identity_self_is_native(small_dir, tmp_path, capsys):
    report = tmp_path / "r.json"
    code, out, _ = _eval(capsys, small_dir, report, "system_0.csv", "system_0.csv", "--mode", "identity")
    assert code == 0
    data = json.loads(report.read_text())
    assert data["format"] == "embedmap.evaluation" and len(data["folds"]) == 5
    assert data["mean_accuracy"] >= 0.95
    assert f"{100 * data['mean_accuracy']:.2f}%" in out


def test_evaluate_fitted_beats_identity(small_dir, tmp_path, capsys):
    _eval(capsys, small_dir, tmp_path / "f.json", "system_0.csv", "system_1.csv")
    _eval(capsys, small_dir, tmp_path / "i.json", "system_0.csv", "system_1.csv", "--mode", "identity")
    fitted = json.loads((tmp_path / "f.json").read_text())["mean_accuracy"]
    ident = json.loads((tmp_path / "i.json").read_text())["mean_accuracy"]
    assert fitted >= ident + 0.30


def test_evaluate_rank_and_subsample(small_dir, tmp_path, capsys):
    code, out, _ = _eval(capsys, small_dir, tmp_path / "r.json", "system_0.csv", "system_1.csv",
                         "--mode", "rank", "4", "--pairs-subsample", "20")
    assert code == 0 and "[rank]" in out
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["config"]["rank"] == 4
    assert all(f["n_pairs_used"] == 20 for f in data["folds"])


def test_evaluate_missing_entity_fails(small_dir, tmp_path, capsys):
    from embedmap.types import EmbeddingSet

    src = eio.read_embeddings(small_dir / "system_0.csv")
    missing = eio.read_pairs(small_dir / "pairs.txt").folds[2][0].id_a
    keep = [i for i in src.ids if i != missing]
    eio.write_embeddings(EmbeddingSet(keep, src.vectors[src.rows(keep)], "cut"), tmp_path / "cut.csv")
    code, _, err = run(capsys, "evaluate", "--source", tmp_path / "cut.csv", "--target",
                       small_dir / "system_1.csv", "--pairs", small_dir / "pairs.txt",
                       "--report", tmp_path / "r.json")
    assert code == 1 and missing in err
    assert not (tmp_path / "r.json").exists()


def test_missing_file_fails(small_dir, tmp_path, capsys):
    code, _, err = _eval(capsys, small_dir, tmp_path / "r.json", "nope.csv", "system_1.csv")
    assert code == 1 and "error" in err


def test_cross_two_systems(small_dir, tmp_path, capsys):
    code, out, _ = run(capsys, "cross", "--systems", small_dir / "system_0.csv", small_dir / "system_1.csv",
                       "--pairs", small_dir / "pairs.txt", "--report", tmp_path / "c.json")
    assert code == 0
    table = out.splitlines()[:3]
    assert table[0].split()[-2:] == ["system_0", "system_1"]
    assert sum(line.count("%") for line in table) == 6
    cm = eio.read_report(tmp_path / "c.json")
    assert cm.accuracy().shape == (2, 2)


def test_cross_duplicated_system(small_dir, tmp_path, capsys):
    dup = tmp_path / "copy.csv"
    dup.write_bytes((small_dir / "system_0.csv").read_bytes())
    run(capsys, "cross", "--systems", small_dir / "system_0.csv", dup,
        "--pairs", small_dir / "pairs.txt", "--report", tmp_path / "c.json")
    acc = eio.read_report(tmp_path / "c.json").accuracy()
    assert acc[0, 1] == pytest.approx(acc[0, 0], abs=1e-12)
    assert acc[1, 0] == pytest.approx(acc[1, 1], abs=1e-12)


def test_sensitivity_points(small_dir, tmp_path, capsys):
    report = tmp_path / "s.json"
    code, out, _ = run(capsys, "sensitivity", "--source", small_dir / "system_0.csv",
                       "--target", small_dir / "system_1.csv", "--pairs", small_dir / "pairs.txt",
                       "--report", report, "--points", 5)
    assert code == 0
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "p,accuracy" and len(rows) == 6
    data = json.loads(report.read_text())
    assert "p_for_drop" in data and "config" in data


def test_rank_full_dim_matches_fitted(small_dir, tmp_path, capsys):
    code, out, _ = run(capsys, "rank", "--source", small_dir / "system_0.csv",
                       "--target", small_dir / "system_1.csv", "--pairs", small_dir / "pairs.txt",
                       "--report", tmp_path / "k.json", "--ranks", "2,4,16", "--csv", tmp_path / "k.csv")
    assert code == 0
    _eval(capsys, small_dir, tmp_path / "f.json", "system_0.csv", "system_1.csv")
    fitted = json.loads((tmp_path / "f.json").read_text())["mean_accuracy"]
    rows = (tmp_path / "k.csv").read_text().splitlines()
    k, acc, var = rows[-1].split(",")
    assert k == "16" and float(acc) == fitted and float(var) == 1.0


def test_rank_bad_list_is_usage_error(small_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["rank", "--source", "a", "--target", "b", "--pairs", "p", "--report", "r", "--ranks", "2,x"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "embedmap", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("synth", "evaluate", "cross", "sensitivity", "rank"):
        assert cmd in proc.stdout
