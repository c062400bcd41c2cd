import json

import pytest

from multisle.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_zeval_total_and_pure(capsys):
    code, out = run_cli(capsys, "zeval", "--kappa", "3", "--points", "0,1,2,3")
    assert code == 0
    assert float(out) == pytest.approx(13.0 / 12.0)

    code, out = run_cli(capsys, "zeval", "--kappa", "4", "--points", "0,1,2,3",
                        "--pairing", "1-2,3-4")
    assert code == 0
    assert float(out) > 0.0


def test_zeval_probs(capsys):
    code, out = run_cli(capsys, "zeval", "--kappa", "4", "--points", "0,1,2,3", "--probs")
    assert code == 0
    table = json.loads(out)
    assert set(table) == {"1-2,3-4", "1-4,2-3"}
    assert table["1-2,3-4"] == pytest.approx(0.75, abs=1e-9)


def test_verify_commands_pass(capsys):
    code, out = run_cli(capsys, "verify-pde", "--configs", "5", "--seed", "1")
    assert code == 0 and json.loads(out)["pass"]

    code, out = run_cli(capsys, "verify-covariance", "--configs", "3", "--maps", "10")
    assert code == 0 and json.loads(out)["pass"]

    code, out = run_cli(capsys, "verify-sumrule")
    assert code == 0 and json.loads(out)["pass"]


def test_hoermander_command(capsys):
    code, out = run_cli(capsys, "hoermander", "--points", "0,1,2,3")
    assert code == 0
    payload = json.loads(out)
    assert payload["rank"] == 4 and payload["full_rank"]
    assert all(c > 1.0 - 1e-8 for c in payload["parallelism_cosine"].values())


def test_loewner_sim_csv(capsys):
    code, out = run_cli(capsys, "loewner-sim", "--kappa", "4", "--points", "0,1,2,3",
                        "--j", "1", "--radius", "0.4", "--dt", "1e-3",
                        "--paths", "2", "--seed", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "path,n_steps,t_final,w_final,stop_reason,drift_integral"
    assert len(lines) == 3


def test_martingale_command(capsys):
    code, out = run_cli(capsys, "martingale", "--kappa", "4", "--points", "0,1,2,3",
                        "--znum", "pure:1-2,3-4", "--zden", "gff",
                        "--radius", "0.4", "--paths", "150", "--seed", "5")
    payload = json.loads(out)
    assert code in (0, 2)
    assert payload["n_paths"] == 150


def test_ising_exact_and_sampling(capsys):
    code, out = run_cli(capsys, "ising", "--width", "2", "--height", "2",
                        "--marks", "1,0;2,1;1,2;0,1", "--exact")
    assert code == 0
    table = json.loads(out)
    assert abs(sum(table.values()) - 1.0) < 1e-12

    code, out = run_cli(capsys, "ising", "--width", "4", "--height", "4",
                        "--samples", "3", "--seed", "7", "--sweeps", "2",
                        "--burn-in", "20")
    lines = out.strip().splitlines()
    assert lines[0] == "seed,sweep_index,pairing,energy"
    assert len(lines) == 4


def test_explorer_command(capsys):
    code, out = run_cli(capsys, "explorer", "--radius", "3", "--marks", "0,9",
                        "--runs", "4", "--seed", "2")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "run,pairing"
    assert len(lines) == 5


def test_experiment_command(tmp_path, capsys):
    base = tmp_path / "report"
    code, out = run_cli(capsys, "experiment", "--model", "explorer", "--width", "12",
                        "--height", "8", "--samples", "200", "--seed", "4",
                        "--out", str(base), "--format", "all")
    assert code == 0
    payload = json.loads(out)
    assert payload["all_pass"]
    for ext in ("json", "csv", "svg"):
        assert (tmp_path / f"report.{ext}").exists()


def test_error_exit_code(capsys):
    code = main(["zeval", "--kappa", "3", "--points", "3,2,1,0"])
    assert code == 1


def test_config_file_defaults_and_override(tmp_path, capsys):
    cfg = tmp_path / "conf.json"
    cfg.write_text(json.dumps({"configs": 2, "seed": 9}))
    code, out = run_cli(capsys, "verify-pde", "--config", str(cfg))
    assert code == 0 and json.loads(out)["pass"]

    # explicit flag wins unless --config-override is given
    cfg.write_text(json.dumps({"points": "0,1,2,3"}))
    code, out = run_cli(capsys, "zeval", "--kappa", "3", "--points", "0,2",
                        "--config", str(cfg))
    assert float(out) == pytest.approx(0.5)
    code, out = run_cli(capsys, "zeval", "--kappa", "3", "--points", "0,2",
                        "--config", str(cfg), "--config-override")
    assert float(out) == pytest.approx(13.0 / 12.0)
