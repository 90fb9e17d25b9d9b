import pandas as pd

from ..cli import main, parse_args


def test_parse_args_defaults():
    args = parse_args([])
    assert args.algorithm == "probe"
    assert args.beta == 0.05
    assert args.alpha == 0.1
    assert args.eps_max == 5.0
    assert args.mf == 3


def test_synthetic_run(tmp_path, capsys):
    out = tmp_path / "results.csv"
    argv = ["--synth", "far", "--trials", "3", "--phase1-u-frac", "0.1", "--out", str(out)]
    assert main(argv) == 0
    printed = capsys.readouterr().out
    assert "Decision-support query: probe" in printed
    assert "results written to" in printed
    frame = pd.read_csv(out)
    assert len(frame) == 4
    assert frame["summary"].iloc[-1] == 1


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    argv = ["--algorithm", "naive", "--synth", "far", "--trials", "2", "--quiet"]
    argv += ["--sweep", "beta", "--values", "0.05", "0.1", "--out", str(out)]
    assert main(argv) == 0
    frame = pd.read_csv(out)
    assert frame["value"].tolist() == [0.05, 0.1]


def test_errors(tmp_path, capsys):
    assert main(["--synth", "far", "--beta", "0.7"]) == 2
    assert "dpds: error" in capsys.readouterr().err
    assert main(["--trials", "2"]) == 2
    assert main(["--query", str(tmp_path / "missing.json"), "--synth", "far"]) == 2
    assert main(["--synth", "far", "--sweep", "beta"]) == 2
