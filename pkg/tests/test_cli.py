import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from semiclassica import cli


def read_csv(path):
    lines = path.read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    rows = list(csv.reader(l for l in lines if not l.startswith("#")))
    return header, rows[0], np.array(rows[1:], dtype=float) if len(rows) > 1 else np.empty((0, len(rows[0])))


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def test_simulate_energy_drift(tmp_path):
    assert run(tmp_path, "simulate", "--kind", "classical", "--eps", "0.1", "--t", "100") == 0
    header, cols, data = read_csv(tmp_path / "trajectory_classical.csv")
    assert cols == ["t", "q1", "q2", "p1", "p2", "E"]
    assert header[0].startswith("# semiclassica ")
    assert any('"eps": 0.1' in h for h in header)
    e = data[:, 5]
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-8


def test_effective_gamma_zero_matches_classical(tmp_path):
    run(tmp_path, "simulate", "--kind", "classical", "--eps", "0.3", "--t", "5")
    run(tmp_path, "simulate", "--kind", "effective", "--gamma", "0", "--eps", "0.3", "--t", "5")
    a = (tmp_path / "trajectory_classical.csv").read_text().splitlines()
    b = (tmp_path / "trajectory_effective.csv").read_text().splitlines()
    strip = lambda ls: [l for l in ls if not l.startswith("#")]  # noqa: E731
    assert strip(a) == strip(b)


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_bad_values_exit_2(tmp_path):
    assert run(tmp_path, "simulate", "--dt", "-1") == 2
    assert run(tmp_path, "simulate", "--ic", "1,2,3") == 2
    assert run(tmp_path, "scan-threshold", "--gammas", "-1") == 2
    assert run(tmp_path, "simulate", "--threads", "0") == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("seed = 9\n[simulate]\ngamma = 0.2\nt = 1.0\nkind = 'effective'\n")
    assert run(tmp_path, "simulate", "--config", str(cfg), "--t", "0.5") == 0
    header, _, data = read_csv(tmp_path / "trajectory_effective.csv")
    conf = json.loads(header[2].split("config: ", 1)[1])
    assert conf["gamma"] == 0.2 and conf["t"] == 0.5 and conf["seed"] == 9
    assert data[-1, 0] == pytest.approx(0.5)


def test_config_run_control_keys(tmp_path):
    out = tmp_path / "from_config"
    cfg = tmp_path / "run.toml"
    cfg.write_text(f"threads = 2\njson = true\nout = '{out}'\n[simulate]\nt = 0.1\n")
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    doc = json.loads((out / "trajectory_classical.json").read_text())
    assert "threads" not in doc["config"] and "out" not in doc["config"]


@pytest.mark.parametrize("text", ["bogus = 1\n", "[simulate]\nkind = 'quantum'\n", "[simulate]\nt = 'x'\n", "a = [\n"])
def test_config_errors_exit_2(tmp_path, text):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    assert run(tmp_path, "simulate", "--config", str(cfg)) == 2


def test_domain_exit_code(tmp_path):
    assert run(tmp_path, "simulate", "--kind", "effective", "--gamma", "1", "--ic", "3,3,0,0") == 3
    assert run(tmp_path, "simulate", "--kind", "effective", "--gamma", "0.5", "--ic", "1,0,0,3", "--t", "10") == 3
    assert (tmp_path / "trajectory_effective.csv").exists()


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SEMICLASSICA_OUT", str(tmp_path / "env"))
    assert cli.main(["simulate", "--t", "0.1"]) == 0
    assert (tmp_path / "env" / "trajectory_classical.csv").exists()


def test_json_output(tmp_path):
    assert run(tmp_path, "simulate", "--t", "0.1", "--json", "--stride", "10") == 0
    doc = json.loads((tmp_path / "trajectory_classical.json").read_text())
    assert doc["columns"] == ["t", "q1", "q2", "p1", "p2", "E"]
    assert len(doc["rows"]) == 11 and doc["config"]["t"] == 0.1


def test_poincare_and_lyapunov(tmp_path):
    assert run(tmp_path, "poincare", "--eps", "1", "--t", "200", "--n-orbits", "2") == 0
    _, cols, data = read_csv(tmp_path / "section_001.csv")
    assert cols == ["q1", "p1", "t", "dir"] and np.all(data[:, 3] == 1)
    assert run(tmp_path, "lyapunov", "--eps", "2", "--t", "20000") == 0
    header, cols, data = read_csv(tmp_path / "lyapunov.csv")
    assert cols == ["t", "lambda"] and data[-1, 1] > 5e-2


def test_scan_threshold_columns(tmp_path):
    argv = ["scan-threshold", "--gammas", "0,0.5", "--t-classify", "300", "--n-samples", "4",
            "--rel-tol", "0.2", "--lambda-threshold", "0.03", "--no-convex"]
    assert run(tmp_path, *argv) == 0
    _, cols, data = read_csv(tmp_path / "threshold.csv")
    assert cols == ["gamma", "eps_th", "eps_convex", "eps_th_reference"]
    assert data[1, 3] == pytest.approx(data[0, 1] * 1.5**2)
    assert (tmp_path / "threshold_rungs.csv").exists()


def test_quantum_compare_shared_grid(tmp_path):
    assert run(tmp_path, "quantum-compare", "--gamma", "0.1", "--t", "3", "--n-max", "12") == 0
    header, cols, data = read_csv(tmp_path / "quantum_compare.csv")
    assert cols == ["t", "q1_classical", "q1_effective", "q1_quantum"]
    assert np.allclose(data[:, 0], np.arange(301) * 0.01)
    _, cols, series = read_csv(tmp_path / "quantum_series.csv")
    assert cols == ["t", "<q1>", "<q2>", "norm", "<H>"]
    assert np.array_equal(series[:, 0], data[:, 0])
    _, cols, spec = read_csv(tmp_path / "spectrum.csv")
    assert cols == ["index", "eigenvalue"] and len(spec) == 13 * 13


def test_quantum_compare_raises_cutoff(tmp_path):
    # a cutoff too small for the coherent state is raised automatically
    assert run(tmp_path, "quantum-compare", "--gamma", "0.05", "--eps", "0.3", "--t", "1", "--n-max", "4") == 0
    header, _, _ = read_csv(tmp_path / "quantum_compare.csv")
    used = [h for h in header if h.startswith("# n_max_used")][0]
    assert int(used.split(":")[1]) > 4


def test_oneloop_check(tmp_path):
    assert run(tmp_path, "oneloop-check", "--support", "40") == 0
    rows = [r for r in (tmp_path / "oneloop_check.csv").read_text().splitlines() if not r.startswith("#")]
    assert rows[0] == "check,value,reference,tolerance,pass"
    assert any(r.startswith("zero_path,") and r.endswith(",1") for r in rows)


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "semiclassica", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("semiclassica ")
