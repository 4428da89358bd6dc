import csv

import numpy as np
import pytest

from mldl import cli, datasets
from mldl.losses import MuSchedule
from mldl.trainer import preset

# tiny runs: a few epochs on a few dozen points
FAST = ["--n", "60", "--set", "epochs=4", "--set", "mu_start=1", "--set", "mu_end=2", "--set", "nbh_mode=knn",
        "--set", "nbh_param=5"]


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_generate_csv_and_bit_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["generate", "--dataset", "swiss-roll", "--n", "800", "--seed", "0", "--out", str(a)]) == 0
    assert cli.main(["generate", "--dataset", "swiss-roll", "--n", "800", "--seed", "0", "--out", str(b)]) == 0
    assert len(_rows(a)) == 801 and a.read_bytes() == b.read_bytes()
    assert cli.main(["generate", "--n", "20", "--out", str(tmp_path / "c.bin")]) == 0
    assert len(datasets.load_cache(tmp_path / "c.bin")) == 20


def test_generate_noise_inflates_variance(tmp_path):
    # same seed draws the same (t, y), so the column difference is the noise itself
    clean, noisy = tmp_path / "clean.csv", tmp_path / "noisy.csv"
    cli.main(["generate", "--n", "4000", "--seed", "1", "--out", str(clean)])
    cli.main(["generate", "--n", "4000", "--seed", "1", "--noise", "0.1", "--out", str(noisy)])
    c, n = datasets.load_csv(clean).points, datasets.load_csv(noisy).points
    inflation = n.var(axis=0) - c.var(axis=0)
    # var(x + e) - var(x) = var(e) + 2 cov(x, e); the covariance term is O(1/sqrt(M))
    assert np.allclose(np.var(n - c, axis=0), 0.01, rtol=0.1)
    assert np.all(np.abs(inflation - 0.01) < 0.25)


def test_generate_spheres_default_size(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["generate", "--dataset", "spheres", "--out", str(out)]) == 0
    labels = datasets.load_csv(out).labels
    assert len(labels) == 2750 and np.bincount(labels).tolist() == [250] * 11


def test_train_file_contract_and_idempotence(tmp_path):
    args = ["train", *FAST, "--seeds", "0-1"]
    assert cli.main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "r2")]) == 0
    for s in (0, 1):
        d = tmp_path / "r1" / f"seed{s}"
        for name in ("encoder.bin", "model.cfg", "loss.csv", "metrics.csv", "embedding.csv", "embedding.svg",
                     "loss.svg"):
            assert (d / name).exists(), name
        for name in ("encoder.bin", "loss.csv", "metrics.csv", "embedding.csv"):
            assert (d / name).read_bytes() == (tmp_path / "r2" / f"seed{s}" / name).read_bytes()
    summary = cli.read_summary(tmp_path / "r1" / "summary.csv")
    assert len(summary) == 1 and summary[0]["n_runs"] == "2"
    echo = (tmp_path / "r1" / "config.txt").read_text()
    assert "epochs = 4" in echo and "B = 3.0" in echo


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[train]\nB = 2.5\nepochs = 4\n")
    args = cli.build_parser().parse_args(["train", "--config", str(cfg), "--set", "B=1.5"])
    c = cli.build_config(args)
    assert c.B == 1.5 and c.epochs == 4 and c.nbh_param == 0.23


def test_divergence_exit_code_and_diagnostic(tmp_path):
    out = tmp_path / "d"
    code = cli.main(["train", *FAST, "--seeds", "0", "--set", "data_scale=1e300", "--out", str(out)])
    assert code == 3
    text = (out / "seed0" / "DIVERGED.txt").read_text()
    assert "epoch=0" in text


def test_invalid_config_exit_code(tmp_path):
    assert cli.main(["train", *FAST, "--set", "lr=-1", "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["train", "--set", "novalue", "--out", str(tmp_path / "y")]) == 2
    assert cli.main(["ablate", *FAST, "--which", "M42", "--out", str(tmp_path / "z")]) == 2
    assert cli.main(["train", "--seeds", ",", "--out", str(tmp_path / "w")]) == 2


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["generate", "--n", "5", "--out", str(blocker / "sub" / "a.csv")]) == 4
    code = cli.main(["train", "--dataset", "mnist", "--data-dir", str(tmp_path / "none"), "--seeds", "0",
                     "--out", str(tmp_path / "m")])
    assert code == 4


def test_sweep_table_dimensions(tmp_path):
    out = tmp_path / "sw"
    code = cli.main(["sweep", *FAST, "--seeds", "0", "--sizes", "40,50", "--sigmas", "0.05,0.1,0.2",
                     "--out", str(out)])
    assert code == 0
    table = _rows(out / "success_table.csv")
    assert table[0] == ["sigma\\n", "40", "50"] and len(table) == 4
    assert all(len(r) == 3 for r in table)
    assert (out / "n40_s0.05" / "seed0" / "metrics.csv").exists()


def test_single_cell_sweep_equals_train(tmp_path):
    cli.main(["sweep", *FAST, "--seeds", "0", "--sizes", "60", "--sigmas", "0", "--out", str(tmp_path / "s")])
    cli.main(["train", *FAST, "--seeds", "0", "--out", str(tmp_path / "t")])
    a = (tmp_path / "s" / "n60_s0" / "seed0" / "embedding.csv").read_bytes()
    assert a == (tmp_path / "t" / "seed0" / "embedding.csv").read_bytes()


def test_ablation_configs():
    base = preset("swiss-roll")
    assert cli.ablation_config(base, "AB") == base
    a = cli.ablation_config(base, "A")
    assert a.mu == MuSchedule(0.0, 500, 1000) and a.scheme == base.scheme
    b = cli.ablation_config(base, "B")
    assert all(w == 0 for w in b.scheme.alpha.values()) and b.mu == base.mu
    assert cli.ablation_config(base, "m4").scheme.name == "M4"


def test_ablate_and_report(tmp_path):
    out = tmp_path / "ab"
    assert cli.main(["ablate", *FAST, "--seeds", "0", "--which", "A,B,M4", "--out", str(out)]) == 0
    tags = [r["tag"] for r in cli.read_summary(out / "summary.csv")]
    assert tags == ["A", "B", "M4"]
    # a failed run taints its group
    bad = tmp_path / "bad"
    cli.main(["train", *FAST, "--seeds", "0", "--set", "data_scale=1e300", "--out", str(bad)])
    cli.main(["train", *FAST, "--seeds", "0", "--out", str(tmp_path / "good")])
    report = tmp_path / "report.txt"
    assert cli.main(["report", str(out), str(tmp_path / "good"), "--out", str(report)]) == 0
    text = report.read_text()
    assert "ab/A" in text and "good/enc" in text
    rows = [{"tag": "x", "n_runs": "2", "succ": "1", "tainted": "1", "k_max": "inf"}]
    assert cli.format_table(rows).splitlines()[1].lstrip().startswith("*x")


def test_generalize_and_gen_manifold(tmp_path):
    runs = tmp_path / "ae"
    assert cli.main(["train", *FAST, "--kind", "ae", "--seeds", "0", "--out", str(runs)]) == 0
    model = runs / "seed0"
    gout = tmp_path / "gen"
    assert cli.main(["generalize", "--model", str(model), "--n", "500", "--size", "0.4", "--out", str(gout)]) == 0
    rows = _rows(gout / "embedding.csv")
    full = datasets.make_swiss_roll(500, 0.0, 1000)
    assert len(rows) - 1 == len(datasets.excise_shape(full, "square", size=0.4))
    checks = (gout / "checks.txt").read_text()
    assert "cont = " in checks and "inside_hole = " in checks
    mout = tmp_path / "man"
    assert cli.main(["gen-manifold", "--model", str(model), "--n", "30", "--out", str(mout)]) == 0
    assert len(_rows(mout / "generated.csv")) == 31 and (mout / "generated.svg").exists()
    enc_only = tmp_path / "enc"
    cli.main(["train", *FAST, "--seeds", "0", "--out", str(enc_only)])
    assert cli.main(["gen-manifold", "--model", str(enc_only / "seed0"), "--out", str(tmp_path / "no")]) == 2


def test_parse_seeds():
    assert cli.parse_seeds("0-3") == [0, 1, 2, 3]
    assert cli.parse_seeds("0,5, 7") == [0, 5, 7]
    assert cli.parse_seeds("2-3,9") == [2, 3, 9]
    with pytest.raises(cli.ConfigError):
        cli.parse_seeds("")


def test_parallel_jobs_match_serial(tmp_path):
    args = ["train", *FAST, "--seeds", "0-1"]
    cli.main(args + ["--jobs", "2", "--out", str(tmp_path / "p")])
    cli.main(args + ["--jobs", "1", "--out", str(tmp_path / "q")])
    for s in (0, 1):
        name = f"seed{s}/embedding.csv"
        assert (tmp_path / "p" / name).read_bytes() == (tmp_path / "q" / name).read_bytes()
