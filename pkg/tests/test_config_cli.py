import os
import subprocess
import sys

import numpy as np
import pytest

from vanishkit import cli, dataio
from vanishkit import config as cf
from vanishkit.errors import FormatError
from vanishkit.synthgen import read_gt


def tree_bytes(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth") / "ds"
    assert cli.main(["synth", "--scenes", "4", "--seed", "7", "--out", str(root)]) == 0
    return root


def perfect_predictions(gt_dir, path, reverse=False):
    rows = []
    for name in sorted(os.listdir(gt_dir), reverse=reverse):
        rows.append(f"{name},{','.join(f'{v:.10g}' for v in read_gt(gt_dir / name / 'gt.txt'))}")
    path.write_text("imageId,x,y\n" + "\n".join(rows) + "\n")
    return path


# config file

def test_config_round_trip():
    cfg = cf.PipelineConfig()
    cfg.seed = 11
    cfg.ransac.alpha = 1.3
    cfg.ransac.inlier_threshold = 4.0
    cfg.cut.percentile = 35.0
    cfg.explicit_lines = "none"
    again = cf.loads(cf.dumps(cfg))
    assert again == cfg
    assert cf.dumps(again) == cf.dumps(cfg)
    assert cf.loads(cf.dumps(cf.PipelineConfig())) == cf.PipelineConfig()


def test_config_comments_and_blank_lines():
    cfg = cf.loads("# comment\n\nseed = 3   # trailing\nransac.restarts = 2\n")
    assert cfg.seed == 3 and cfg.ransac.restarts == 2
    assert cfg.ransac_config().seed == 3


@pytest.mark.parametrize("text,lineno", [
    ("seed = 1\nransac.alhpa = 1.2\n", 2),
    ("nosuch = 1\n", 1),
    ("ransac.seed = 4\n", 1),
    ("ransac.restarts = many\n", 1),
    ("ransac.restarts\n", 1),
])
def test_config_errors_name_line(text, lineno):
    with pytest.raises(FormatError) as exc:
        cf.loads(text, "x.cfg")
    assert exc.value.lineno == lineno


def test_config_invalid_values():
    with pytest.raises(FormatError):
        cf.loads("ransac.alpha = 0.5\n")
    with pytest.raises(FormatError):
        cf.loads("explicit_lines = sometimes\n")


def test_config_save_load(tmp_path):
    cfg = cf.PipelineConfig(seed=5)
    cf.save(cfg, tmp_path / "a.cfg")
    assert cf.load(tmp_path / "a.cfg") == cfg


# prediction files

def test_predictions_round_trip(tmp_path):
    rows = [("b", None), ("a", (1.5, -2.25))]
    dataio.write_predictions(rows, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text() == "imageId,x,y\na,1.5,-2.25\nb,none,none\n"
    got = dataio.read_predictions(tmp_path / "p.csv")
    assert got["b"] is None and np.array_equal(got["a"], [1.5, -2.25, 1.0])


@pytest.mark.parametrize("body", ["a,1,2\na,3,4\n", "a,1\n", "a,x,2\n", "a,inf,2\n"])
def test_predictions_bad(tmp_path, body):
    (tmp_path / "p.csv").write_text("imageId,x,y\n" + body)
    with pytest.raises(FormatError):
        dataio.read_predictions(tmp_path / "p.csv")


def test_image_decode_error(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"not an image")
    with pytest.raises(FormatError):
        dataio.load_image(tmp_path / "bad.png")


def test_ground_truth_flat_layout(tmp_path):
    (tmp_path / "x.txt").write_text("10 20\n")
    with pytest.raises(FormatError):
        dataio.find_ground_truth(tmp_path)
    gt = dataio.find_ground_truth(tmp_path, size=(100, 50))
    assert np.array_equal(gt["x"][0], [10, 20, 1]) and gt["x"][1] == (100, 50)


# CLI exit codes

def test_usage_errors(capsys):
    assert cli.main([]) == 1
    assert cli.main(["detect"]) == 1
    assert cli.main(["synth", "--scenes", "2", "--out", "x", "--bogus"]) == 1
    assert cli.main(["stress", "--dataset", "d", "--sigmas", "a,b"]) == 1
    assert cli.main(["detect", "x", "--jobs", "0"]) == 1


def test_data_errors(tmp_path, capsys):
    assert cli.main(["detect", str(tmp_path / "missing.png")]) == 2
    (tmp_path / "bad.png").write_bytes(b"junk")
    assert cli.main(["detect", str(tmp_path / "bad.png")]) == 2
    (tmp_path / "c.cfg").write_text("ransac.nope = 1\n")
    assert cli.main(["detect", str(tmp_path / "bad.png"), "--config", str(tmp_path / "c.cfg")]) == 2
    assert "c.cfg:1: unknown key 'ransac.nope'" in capsys.readouterr().err


def test_entry_point_runs(tmp_path):
    r = subprocess.run([sys.executable, "-m", "vanishkit.cli", "synth", "--scenes", "1",
                        "--out", str(tmp_path / "s")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "vanishkit.cli", "frobnicate"],
                       capture_output=True, text=True)
    assert r.returncode == 1


# CLI behavior

def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["synth", "--scenes", "5", "--seed", "7", "--noise", "0.5",
                         "--out", str(tmp_path / name)]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and len(a) == 15


def test_synth_seed_from_env(tmp_path, monkeypatch):
    cli.main(["synth", "--scenes", "2", "--seed", "9", "--out", str(tmp_path / "a")])
    monkeypatch.setenv("VANISHKIT_SEED", "9")
    cli.main(["synth", "--scenes", "2", "--out", str(tmp_path / "b")])
    cli.main(["synth", "--scenes", "2", "--out", str(tmp_path / "c"), "--seed", "1"])
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "c")


def test_detect_deterministic_and_eval(dataset, tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"p{k}.csv"
        assert cli.main(["detect", str(dataset), "--seed", "3", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().splitlines()
    assert lines[0] == "imageId,x,y" and len(lines) == 5
    assert cli.main(["eval", "--pred", str(tmp_path / "p0.csv"), "--gt", str(dataset)]) == 0
    text = capsys.readouterr().out
    median = float(next(ln for ln in text.splitlines() if ln.startswith("median")).split()[1])
    assert median <= 1.0


def test_detect_jobs_identical(dataset, tmp_path):
    cli.main(["detect", str(dataset), "--out", str(tmp_path / "a.csv")])
    cli.main(["detect", str(dataset), "--out", str(tmp_path / "b.csv"), "--jobs", "2"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_detect_single_feature_file(dataset, capsys):
    sub = dataset / "scene_0000"
    assert cli.main(["detect", str(sub / "features.csv"), "--size", "640x480"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].startswith("features,") and "none" not in out[1]


def test_eval_perfect(dataset, tmp_path, capsys):
    pred = perfect_predictions(dataset, tmp_path / "perfect.csv")
    assert cli.main(["eval", "--pred", str(pred), "--gt", str(dataset),
                     "--curve", str(tmp_path / "c.csv"), "--plot", str(tmp_path / "c.svg"),
                     "--results", str(tmp_path / "r.csv")]) == 0
    out = capsys.readouterr().out
    assert "AUC@10  10.0000" in out
    assert "median  0.0000 deg" in out
    assert (tmp_path / "c.svg").read_text().startswith("<svg")
    assert (tmp_path / "c.csv").read_text().splitlines()[-1] == "10,1"


def test_eval_order_invariant(dataset, tmp_path, capsys):
    a = perfect_predictions(dataset, tmp_path / "a.csv")
    b = perfect_predictions(dataset, tmp_path / "b.csv", reverse=True)
    cli.main(["eval", "--pred", str(a), "--gt", str(dataset)])
    first = capsys.readouterr().out
    cli.main(["eval", "--pred", str(b), "--gt", str(dataset)])
    assert capsys.readouterr().out == first


def test_eval_deterministic(dataset, tmp_path, capsys):
    pred = perfect_predictions(dataset, tmp_path / "p.csv")
    outs = []
    for k in range(2):
        cli.main(["eval", "--pred", str(pred), "--gt", str(dataset), "--results", str(tmp_path / f"r{k}.csv")])
        outs.append((capsys.readouterr().out, (tmp_path / f"r{k}.csv").read_bytes()))
    assert outs[0] == outs[1]


def test_compare_needs_pairs(dataset, tmp_path, capsys):
    pred = perfect_predictions(dataset, tmp_path / "p.csv")
    # four images are fewer than the minimum number of pairs
    assert cli.main(["compare", "--pred-a", str(pred), "--pred-b", str(pred), "--gt", str(dataset)]) == 2
    assert capsys.readouterr().out == ""


def test_compare_prints_table(tmp_path, capsys):
    ds = tmp_path / "ds"
    cli.main(["synth", "--scenes", "8", "--seed", "1", "--out", str(ds)])
    pred = perfect_predictions(ds, tmp_path / "p.csv")
    worse = tmp_path / "w.csv"
    worse.write_text("imageId,x,y\n" + "".join(f"scene_{i:04d},none,none\n" for i in range(8)))
    capsys.readouterr()
    assert cli.main(["compare", "--pred-a", str(pred), "--pred-b", str(worse), "--gt", str(ds)]) == 0
    out = capsys.readouterr().out
    assert "AUC@10" in out and "p-value" in out
    assert float(out.split("p-value")[1].split()[0]) < 0.01


def test_stress_and_bench(dataset, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert cli.main(["stress", "--dataset", str(dataset), "--sigmas", "0,5",
                     "--thresholds", "5", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("scale,sigma,theta") and len(rows) == 3
    assert rows[1].split(",")[-1] == "1"
    assert cli.main(["bench", "--dataset", str(dataset)]) == 0
    assert "median ms" in capsys.readouterr().out
