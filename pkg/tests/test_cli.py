import csv
import io
import subprocess
import sys

from beaconrpl import cli


def run_cli(*args):
    return cli.main(list(args))


def test_run_default_flags(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("topology.leaves_per_hop=2\nrun.boot_jitter_bi=5\n")
    code = run_cli("run", "--config", str(cfg), "--seeds", "2", "--bo", "4", "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_OK
    assert (tmp_path / "o" / "aggregate.csv").exists()
    assert "convergence_ticks" in capsys.readouterr().out


def test_run_with_trace_writes_tab_separated_lines(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("topology.leaves_per_hop=1\nrun.boot_jitter_bi=2\n")
    assert run_cli("run", "--config", str(cfg), "--seeds", "1", "--trace", "--out", str(tmp_path)) == 0
    lines = (tmp_path / "trace_seed1.tsv").read_text().splitlines()
    assert lines and all(len(l.split("\t")) == 4 for l in lines)


def test_nonconvergence_exit_code(tmp_path):
    cfg = tmp_path / "short.cfg"
    cfg.write_text("topology.leaves_per_hop=1\nrun.max_ticks=1000\n")
    assert run_cli("run", "--config", str(cfg), "--seeds", "1", "--out", str(tmp_path)) == cli.EXIT_NOT_CONVERGED


def test_config_error_exit_code_names_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mac.bo=5\nmac.frobnicate=2\n")
    assert run_cli("run", "--config", str(cfg)) == cli.EXIT_CONFIG
    assert "mac.frobnicate" in capsys.readouterr().err


def test_bad_flag_values_are_config_errors(tmp_path):
    assert run_cli("run", "--scan", "soon", "--out", str(tmp_path)) == cli.EXIT_CONFIG
    assert run_cli("run", "--so", "9", "--out", str(tmp_path)) == cli.EXIT_CONFIG
    assert run_cli("run", "--config", str(tmp_path / "missing.cfg")) == cli.EXIT_CONFIG


def test_exit_codes_are_distinct():
    assert len({cli.EXIT_OK, cli.EXIT_NOT_CONVERGED, cli.EXIT_CONFIG}) == 3


def test_sweep_subcommand(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("topology.leaves_per_hop=1\nrun.boot_jitter_bi=2\n")
    code = run_cli("sweep", "--config", str(cfg), "--seeds", "2", "--sweep", "sbp_size=14,28",
                   "--scheme", "sbp", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "sweep_sbp_size_bytes.csv").exists()
    assert run_cli("sweep", "--out", str(tmp_path)) == cli.EXIT_CONFIG


def test_analyze_prints_csv(capsys):
    assert run_cli("analyze", "--p", "0.5", "--imax", "0,2", "--samples", "2000") == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["p", "Imax", "Imin", "BI", "E[D]_analytic", "E[D]_mc", "rel_err"]
    assert len(rows) == 3
    assert float(rows[1][4]) == 10560.0


def test_analyze_to_directory(tmp_path):
    assert run_cli("analyze", "--imin", "15360", "--p", "1", "--imax", "0", "--samples", "100",
                   "--out", str(tmp_path)) == 0
    assert (tmp_path / "analyze.csv").read_text().startswith("p,Imax")


def test_analyze_rejects_unparsable_imin():
    assert run_cli("analyze", "--imin", "x") == cli.EXIT_CONFIG


def test_validate_subset(capsys):
    assert run_cli("validate", "--only", "1,3") == 0
    out = capsys.readouterr().out
    assert "[PASS] C1" in out and "[PASS] C3" in out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "beaconrpl.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("run", "sweep", "analyze", "validate"):
        assert sub in proc.stdout
