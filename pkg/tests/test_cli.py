import pytest

from drpp.cli import main

CREDIT = "configs/credit.yaml"


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["run", "--nope"], ["constants", "a.yaml", "b.yaml"], ["validate", "quadratic", "--x=1"],
                                  ["run", "--threads", "0"]])
def test_bad_flags_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_config_exits_1(capsys):
    assert main(["constants", "no_such_config.yaml"]) == 1
    assert "no_such_config.yaml" in capsys.readouterr().err


def test_unknown_override_key_is_a_run_failure(capsys):
    assert main(["constants", "--no_such_key=3"]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_constants_prints_report(capsys):
    assert main(["constants", CREDIT]) == 0
    out = capsys.readouterr().out
    for name in ("kappa_rm", "kappa_gd", "eta_bound", "subopt_param_bound", "subopt_risk_bound"):
        assert name in out
    assert out.count("epsilon =") == 4


@pytest.mark.parametrize("kind", ["quadratic", "linear", "logistic-gaussian"])
def test_validate_passes(kind, capsys):
    assert main(["validate", kind]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 4


def test_run_twice_is_byte_identical(tmp_path):
    args = ["--sweep.epsilon=1,60", "--outer_iters=4", "--instance.n=150"]
    assert main(["run", CREDIT, "--out", str(tmp_path / "a"), *args]) == 0
    assert main(["--seed", "0", "run", CREDIT, "--out", str(tmp_path / "b"), "--threads", "2", *args]) == 0
    for name in ("trajectories.csv", "phase_metrics.csv", "detection_vs_epsilon.csv",
                 "detection_vs_lambda.csv", "summary.csv", "constants.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_results(tmp_path):
    args = ["--sweep.epsilon=60", "--outer_iters=2", "--instance.n=150", "--algorithms=static"]
    main(["run", "--out", str(tmp_path / "a"), *args])
    main(["run", "--seed", "5", "--out", str(tmp_path / "b"), *args])
    assert (tmp_path / "a/trajectories.csv").read_bytes() != (tmp_path / "b/trajectories.csv").read_bytes()


def test_sweep_sets_lists(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--epsilon", "10", "--lam-c", "25,35", "--outer_iters=2", "--instance.n=100",
                 "--algorithms=rrm", "--out", str(out)]) == 0
    assert "35.0" in (out / "detection_vs_lambda.csv").read_text()


def test_run_failure_exits_1(tmp_path, capsys):
    rc = main(["run", "--instance.source=credit_csv", f"--instance.path={tmp_path}/missing.csv",
               "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "missing.csv" in capsys.readouterr().err


def test_failed_cell_exits_1(tmp_path):
    rc = main(["run", "--sweep.lam_c=0.01", "--algorithms=rrm", "--outer_iters=2", "--instance.n=100",
               "--out", str(tmp_path / "f")])
    assert rc == 1
    assert (tmp_path / "f" / "errors.jsonl").exists()


def test_compare_prints_table(capsys):
    assert main(["compare", "--sweep.epsilon=100", "--outer_iters=3", "--instance.n=200"]) == 0
    out = capsys.readouterr().out
    assert "dr-pp" in out and "static" in out and "pp " in out
