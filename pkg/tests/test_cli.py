import hashlib
import io

import pandas as pd
import pytest

from backend.cli import main
from backend.config import parse_config
from backend.pixel_core import read_ppm_file, synthesize_dataset, write_ppm_file

SMALL = """
trainer.epochs = 2
trainer.large_batch_size = 8
optim.warmup_epochs = 1
data.samples_per_class = 8
data.test_samples_per_class = 4
data.image_size = 16
"""


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "lab.cfg"
    path.write_text(SMALL)
    return path


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------- train ----------------
def test_dump_config_reparses(config_file):
    code, out, _ = run("train", "--config", config_file, "--seed", 3, "--mis.epsilon", "4", "--dump-config")
    assert code == 0
    cfg = parse_config(out)
    assert cfg.seed == 3
    assert cfg.mis.epsilon == 4.0
    assert cfg.epochs == 2


def test_train_writes_run_directory(config_file, tmp_path):
    out_dir = tmp_path / "run"
    code, stdout, _ = run("train", "--config", config_file, "--out", out_dir)
    assert code == 0
    assert stdout == ""
    metrics = pd.read_csv(out_dir / "metrics.csv")
    assert len(metrics) == 2
    assert (out_dir / "checkpoint.bin").read_bytes().startswith(b"SRACKPT1")
    assert parse_config((out_dir / "config.txt").read_text()).epochs == 2


def test_train_is_reproducible_across_threads(config_file, tmp_path):
    for name, threads in (("a", 1), ("b", 1), ("c", 4)):
        code, _, _ = run("train", "--config", config_file, "--seed", 5, "--threads", threads,
                         "--out", tmp_path / name)
        assert code == 0
    for f in ("metrics.csv", "checkpoint.bin"):
        assert sha(tmp_path / "a" / f) == sha(tmp_path / "b" / f) == sha(tmp_path / "c" / f)


def test_unknown_override_fails_cleanly(config_file):
    code, out, err = run("train", "--config", config_file, "--policy.dept", "3")
    assert code == 1
    assert out == ""
    assert err.strip().splitlines()[-1].startswith("error:")
    assert "policy.dept" in err


def test_bad_config_value(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("policy.depth = 0\n")
    code, _, err = run("train", "--config", path)
    assert code == 1
    assert "line 1" in err and "policy.depth" in err


def test_missing_config_file(tmp_path):
    code, _, err = run("train", "--config", tmp_path / "nope.cfg")
    assert code == 1
    assert "error:" in err


@pytest.mark.slow
def test_default_training_writes_thirty_rows(tmp_path):
    code, _, _ = run("train", "--out", tmp_path / "run")
    assert code == 0
    assert len(pd.read_csv(tmp_path / "run" / "metrics.csv")) == 30


# ---------------- augment ----------------
@pytest.fixture
def ppm_dir(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    for i, s in enumerate(synthesize_dataset(2, 4, 2, 16).samples):
        write_ppm_file(src / f"img_{i}.ppm", s.image)
    return src


def test_zero_magnitude_refine_leaves_images_unchanged(ppm_dir, tmp_path):
    ops = "ShearX,ShearY,TranslateX,TranslateY,Rotate,Brightness,Color,Sharpness,Contrast," \
          "Solarize,Posterize,Identity"
    code, _, _ = run("augment", "--in", ppm_dir, "--out", tmp_path / "out", "--mode", "refine",
                     "--magnitude", 0, "--depth", 2, "--seed", 1, "--ops", ops)
    assert code == 0
    for src in sorted(ppm_dir.iterdir()):
        assert (tmp_path / "out" / src.name).read_bytes() == src.read_bytes()


@pytest.mark.parametrize("mode", ["explore", "ra"])
def test_augment_is_seeded(mode, ppm_dir, tmp_path):
    for name in ("a", "b"):
        run("augment", "--in", ppm_dir, "--out", tmp_path / name, "--mode", mode,
            "--magnitude", 0.8, "--seed", 9)
    names = sorted(p.name for p in ppm_dir.iterdir())
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == names
    for n in names:
        assert read_ppm_file(tmp_path / "a" / n) == read_ppm_file(tmp_path / "b" / n)


def test_augment_missing_input(tmp_path):
    code, _, err = run("augment", "--in", tmp_path / "missing", "--out", tmp_path / "o", "--mode", "explore")
    assert code == 1
    assert err.startswith("error:") or "\nerror:" in err


def test_augment_rejects_unknown_flags(ppm_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("augment", "--in", ppm_dir, "--out", tmp_path / "o", "--mode", "explore", "--bogus", "1")
    assert exc.value.code == 2


# ---------------- score ----------------
def test_score_emits_one_row_per_sample(config_file, tmp_path):
    run("train", "--config", config_file, "--out", tmp_path / "run")
    code, out, _ = run("score", "--checkpoint", tmp_path / "run" / "checkpoint.bin",
                       "--data", "synthetic", "--epsilon", 2, "--config", config_file)
    assert code == 0
    df = pd.read_csv(io.StringIO(out))
    assert list(df.columns) == ["sample_index", "label", "target_prob", "mis"]
    assert df["sample_index"].tolist() == list(range(32))
    assert df["mis"].between(0, 1).all()
    assert df["target_prob"].between(0, 1).all()


def test_score_dimension_mismatch(config_file, tmp_path):
    run("train", "--config", config_file, "--out", tmp_path / "run")
    other = tmp_path / "other.cfg"
    other.write_text(SMALL.replace("data.image_size = 16", "data.image_size = 8"))
    code, out, err = run("score", "--checkpoint", tmp_path / "run" / "checkpoint.bin",
                         "--data", "synthetic", "--epsilon", 2, "--config", other)
    assert code == 1
    assert out == ""
    assert "error:" in err


def test_score_missing_checkpoint(tmp_path):
    code, _, err = run("score", "--checkpoint", tmp_path / "none.bin", "--data", "synthetic", "--epsilon", 2)
    assert code == 1
    assert "error:" in err


# ---------------- bench ----------------
def test_bench_csv():
    code, out, _ = run("bench", "--size", 8, "--iters", 2, "--repeats", 1)
    assert code == 0
    df = pd.read_csv(io.StringIO(out))
    assert list(df.columns) == ["op", "images_per_sec", "img_size", "iters"]
    assert len(df) == 14
    assert (df["images_per_sec"] > 0).all()
    assert (df["img_size"] == 8).all()
