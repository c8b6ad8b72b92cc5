import subprocess
import sys

import pytest

from unfoldsep.cli import main
from unfoldsep.data import read_manifest


def run(*argv):
    assert main([str(a) for a in argv]) == 0


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    run("mix", "--n", 3, "--seed", 9, "--out", out)
    return out


def test_mix_deterministic(data_dir, tmp_path):
    run("mix", "--n", 3, "--seed", 9, "--out", tmp_path)
    assert (tmp_path / "manifest.jsonl").read_bytes() == (data_dir / "manifest.jsonl").read_bytes()
    for rec in read_manifest(tmp_path):
        assert (tmp_path / rec["mixture"]).read_bytes() == (data_dir / rec["mixture"]).read_bytes()


def test_oracle(data_dir, tmp_path, capsys):
    run("oracle", "--data", data_dir, "--mask", "iam", "psm", "--misi", 0, 2, "--out", tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "name,eval_k,mean_sisdr_db,std_db,n"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["iam", "0"], ["iam", "2"], ["psm", "0"], ["psm", "2"]]
    assert "iam" in capsys.readouterr().out


def test_train_separate_evaluate(data_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for ckpt in (a, b):
        run("train", "--data", data_dir, "--stage", "chimera", "--ckpt", ckpt, "--seed", 2)
        run("train", "--data", data_dir, "--stage", "wa", "--ckpt", ckpt, "--seed", 2)
    for name in ("chimera.ckpt", "wa.ckpt", "wa_curve.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    est = tmp_path / "est"
    for rec in read_manifest(data_dir):
        run("separate", "--ckpt", a / "wa.ckpt", "--in", data_dir / rec["mixture"], "--misi", 1, "--out", est)
        assert (est / f"{rec['id']}_s1.wav").exists() and (est / f"{rec['id']}_s2.wav").exists()
    run("evaluate", "--est", est, "--ref", data_dir, "--out", tmp_path / "e1.csv")
    run("evaluate", "--est", est, "--ref", data_dir, "--out", tmp_path / "e2.csv")
    assert (tmp_path / "e1.csv").read_bytes() == (tmp_path / "e2.csv").read_bytes()

    run("sweep-misi", "--ckpts", a, "--data", data_dir, "--k-max", 2, "--out", tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()[1:]
    assert [r.split(",")[:2] for r in rows] == [[n, str(k)] for n in ("chimera", "wa") for k in range(3)]


def test_train_needs_previous_stage(data_dir, tmp_path, capsys):
    assert main(["train", "--data", str(data_dir), "--stage", "wa-misi-2", "--ckpt", str(tmp_path)]) == 2
    assert "wa-misi-1.ckpt" in capsys.readouterr().err


def test_bad_stage(data_dir, tmp_path):
    assert main(["train", "--data", str(data_dir), "--stage", "foo", "--ckpt", str(tmp_path)]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "unfoldsep", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "sweep-misi" in out.stdout
