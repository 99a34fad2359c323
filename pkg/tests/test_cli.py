"""CLI behaviour: CSV output, determinism, report, config handling."""

import numpy as np

from goafem_ml import cli
from goafem_ml.adaptive import CSV_COLUMNS, fitted_slope


def run_cli(args):
    try:
        return cli.main(args)
    except SystemExit as exc:  # argparse exits directly on bad flags
        return exc.code


def test_run_writes_csv(tmp_path):
    rc = run_cli(["run", "--setup", "1", "--theta", "0.5", "--tol", "2e-4",
                  "--output-dir", str(tmp_path)])
    assert rc == 0
    path = tmp_path / "setup1_convergence.csv"
    assert path.exists()
    with open(path) as f:
        assert f.readline().strip() == "# goafem-ml v1"
        header = f.readline().strip().split(",")
    assert header == list(CSV_COLUMNS)
    data = cli.read_csv(path)
    assert (data["product"] > 0.0).all()
    assert data["product"][-1] < 2e-4
    assert (np.diff(data["dofs"]) > 0).all()


def test_run_max_iter_zero(tmp_path):
    rc = run_cli(["run", "--setup", "1", "--max-iter", "0",
                  "--output-dir", str(tmp_path)])
    assert rc == 0
    data = cli.read_csv(tmp_path / "setup1_convergence.csv")
    assert len(data["iter"]) == 1
    assert data["iter"][0] == 0


def test_rerun_is_deterministic(tmp_path):
    for sub in ("a", "b"):
        rc = run_cli(["run", "--setup", "1", "--tol", "3e-4",
                      "--output-dir", str(tmp_path / sub)])
        assert rc == 0
    da = cli.read_csv(tmp_path / "a" / "setup1_convergence.csv")
    db = cli.read_csv(tmp_path / "b" / "setup1_convergence.csv")
    for col in CSV_COLUMNS:
        if col == "seconds":  # wall time is the one nondeterministic column
            continue
        assert np.array_equal(da[col], db[col]), col


def test_report_slope(tmp_path, capsys):
    rc = run_cli(["run", "--setup", "1", "--tol", "1e-4",
                  "--output-dir", str(tmp_path)])
    assert rc == 0
    rc = run_cli(["report", "--output-dir", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "setup1_convergence.csv" in out
    data = cli.read_csv(tmp_path / "setup1_convergence.csv")
    slope = fitted_slope(data["dofs"], data["product"])
    assert f"{slope:8.3f}".strip() in out


def test_report_empty_dir(tmp_path):
    assert run_cli(["report", "--output-dir", str(tmp_path)]) == 2


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# desk-scale setup 1\n"
        "setup = 1\n"
        "tol = 5e-4\n"
        "max_iter = 3\n"
        f"output_dir = {tmp_path}\n")
    rc = run_cli(["run", "--config", str(cfg), "--max-iter", "1"])
    assert rc == 0
    data = cli.read_csv(tmp_path / "setup1_convergence.csv")
    assert len(data["iter"]) <= 2  # flag overrode the config file


def test_invalid_config_rejected(tmp_path):
    assert run_cli(["run", "--setup", "7",
                    "--output-dir", str(tmp_path)]) != 0
    assert run_cli(["run", "--setup", "1", "--theta", "1.5",
                    "--output-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("setup: 1\n")
    assert run_cli(["run", "--config", str(bad)]) == 2
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text("setup = 1\nfrobnicate = 2\n")
    assert run_cli(["run", "--config", unknown.as_posix()]) == 2


def test_dump_flags(tmp_path):
    rc = run_cli(["run", "--setup", "1", "--max-iter", "2",
                  "--dump-mesh", "--dump-indicators",
                  "--output-dir", str(tmp_path)])
    assert rc == 0
    dump = tmp_path / "setup1_mesh_zero.txt"
    assert dump.exists()
    from goafem_ml import mesh as M
    back = M.read_dump(dump)
    assert back.num_triangles >= 512
    ind = (tmp_path / "setup1_indicators.txt").read_text()
    assert "# iteration 0" in ind and "parametric" in ind
    assert "# dual" in ind


def test_reference_subcommand(tmp_path):
    rc = run_cli(["reference", "--setup", "1", "--tol", "4e-4",
                  "--ref-tol", "2e-4", "--output-dir", str(tmp_path)])
    assert rc == 0
    data = cli.read_csv(tmp_path / "setup1_reference.csv")
    assert "ref_error" in data
    assert len(data["ref_error"]) == len(data["iter"])
    assert data["product"][-1] < 4e-4
