import csv
import json

import numpy as np
import pytest

from dirac_nehari.cli import EXIT_INVALID, EXIT_NONCONVERGED, EXIT_OK, EXIT_VERIFY, main
from dirac_nehari.io import parse_key_values, parse_solution, run_config_from_dict


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    cfg = _write(d / "flat.cfg", "# flat ground state\nk_max = 8\np = 3\nb_cos = 1.0\n")
    assert main(["solve", "--config", cfg, "--out", str(d / "a")]) == EXIT_OK
    return d


def test_spectrum_small_flat(tmp_path):
    cfg = _write(tmp_path / "k2.cfg", "k_max = 2\n")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "spectrum.csv")
    assert [float(r["eigenvalue"]) for r in rows] == [-1.5, -0.5, 0.5, 1.5]


def test_spectrum_sphere_defect(tmp_path):
    cfg = _write(tmp_path / "s.cfg", "k_max = 4\nchart = round_sphere\nn_fiber = 2\nwinding = 0, 0\n")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "spectrum.csv")
    assert len(rows) == 16
    assert max(float(r["hermiticity_defect"]) for r in rows) <= 1e-9


def test_unknown_key_exits_3(tmp_path, caplog):
    cfg = _write(tmp_path / "bad.cfg", "k_max = 2\ncolour = blue\n")
    assert main(["spectrum", "--config", cfg]) == EXIT_INVALID
    assert "colour" in caplog.text


@pytest.mark.parametrize("text", ["k_max = two\n", "k_max 2\n", "k_max = 2\nk_max = 3\n", "log_level = LOUD\n",
                                  "chart = round_sphere\nn_fiber = 2\nwinding = 1, 0\n"])
def test_invalid_configs_exit_3(tmp_path, text):
    cfg = _write(tmp_path / "bad.cfg", text)
    assert main(["spectrum", "--config", cfg]) == EXIT_INVALID


def test_missing_config_and_bad_command(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.cfg")]) == EXIT_INVALID
    assert main(["launch", "--config", "x"]) == EXIT_INVALID


def test_solve_writes_solution_and_log(solved):
    sol = (solved / "a" / "solution.txt").read_text()
    data = parse_solution(sol)
    assert float(data.footer["energy"]) == pytest.approx(np.pi / 8, rel=1e-8)
    assert data.header["spin_structure"] == "anti-periodic"
    assert data.header["clifford_sign"] == "1"
    recs = [json.loads(line) for line in (solved / "a" / "solve_log.jsonl").read_text().splitlines()]
    assert {"iter", "energy", "r_scalar", "r_minus", "grad_u", "grad_v", "step"} <= set(recs[0])
    assert not list((solved / "a").glob("*.tmp"))


def test_round_trip_and_determinism(solved):
    cfg = str(solved / "flat.cfg")
    assert main(["solve", "--config", cfg, "--out", str(solved / "b")]) == EXIT_OK

    def body(p):
        return [line for line in p.read_text().splitlines() if not line.startswith("# created")]

    assert body(solved / "a" / "solution.txt") == body(solved / "b" / "solution.txt")
    assert main(["verify", "--config", str(solved / "a" / "solution.txt"), "--out", str(solved / "v")]) == EXIT_OK
    assert all(r["passed"] == "true" for r in _rows(solved / "v" / "verify.csv"))


def test_seed_override_changes_run(solved, tmp_path):
    cfg = str(solved / "flat.cfg")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--seed", "7"]) == EXIT_OK
    data = parse_solution((tmp_path / "solution.txt").read_text())
    assert data.cfg.seed == 7


def test_corrupted_psi_row_exits_4(solved, tmp_path, caplog):
    lines = (solved / "a" / "solution.txt").read_text().splitlines()
    i = next(k for k, line in enumerate(lines) if line.startswith("PSI, 3,"))
    lines[i] = "PSI, 3, 0, 0.25, 0"
    bad = _write(tmp_path / "bad.txt", "\n".join(lines) + "\n")
    assert main(["verify", "--config", bad, "--out", str(tmp_path)]) == EXIT_VERIFY
    assert "residual_psi" in caplog.text


def test_truncated_and_malformed_files_exit_3(solved, tmp_path):
    text = (solved / "a" / "solution.txt").read_text()
    trunc = _write(tmp_path / "t.txt", text[: len(text) // 2])
    assert main(["verify", "--config", trunc]) == EXIT_INVALID
    garbled = _write(tmp_path / "g.txt", text.replace("PHI, 0, 0,", "PHI, zero, 0,"))
    assert main(["verify", "--config", garbled]) == EXIT_INVALID


def test_parse_round_trip_reproduces_energy(solved):
    from dirac_nehari.geodesic import build_problem, total_energy

    data = parse_solution((solved / "a" / "solution.txt").read_text())
    prob = build_problem(data.cfg, data.winding)
    from dirac_nehari.circle import SpinorField

    e = total_energy(prob, data.phi_coeffs.reshape(-1), SpinorField(data.psi_coeffs, prob.domain).to_real())
    assert e == pytest.approx(float(data.footer["energy"]), rel=1e-12)


def test_iteration_cap_exits_2(tmp_path):
    cfg = _write(tmp_path / "cap.cfg", "k_max = 6\nmax_iter = 1\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_NONCONVERGED
    assert parse_solution((tmp_path / "solution.txt").read_text()).footer["converged"] == "false"


def test_winding_sweep(tmp_path):
    cfg = _write(tmp_path / "sw.cfg", "k_max = 6\nsweep_axis = winding\nsweep_values = 0; 1; 2\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "sweep.csv")
    e = [float(r["energy"]) for r in rows]
    assert e[1] - e[0] == pytest.approx(np.pi, rel=1e-6)
    assert e[2] - e[0] == pytest.approx(4 * np.pi, rel=1e-6)


def test_k_sweep_parallel(tmp_path):
    cfg = _write(tmp_path / "k.cfg", "k_max = 4\np = 2.5\nb_cos = 1.0, 0.5\nsweep_axis = k_max\n"
                                     "sweep_values = 4; 8\nworkers = 2\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "sweep.csv")
    assert [r["axis_value"] for r in rows] == ["4", "8"]
    assert all(r["converged"] == "true" for r in rows)


def test_empty_sweep_exits_3(tmp_path):
    cfg = _write(tmp_path / "e.cfg", "sweep_axis = winding\nsweep_values =\n")
    assert main(["sweep", "--config", cfg]) == EXIT_INVALID
    cfg = _write(tmp_path / "f.cfg", "sweep_axis = colour\nsweep_values = 1\n")
    assert main(["sweep", "--config", cfg]) == EXIT_INVALID


def test_oracle_table(tmp_path):
    cfg = _write(tmp_path / "o.cfg", "oracle_toys = 3\n")
    assert main(["oracle", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "oracle.csv")
    assert {r["toy"] for r in rows} == {"0", "1", "2"}
    assert all(r["passed"] == "true" for r in rows)


def test_thread_env(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "k2.cfg", "k_max = 2\n")
    monkeypatch.setenv("DIRAC_NEHARI_THREADS", "1")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    monkeypatch.setenv("DIRAC_NEHARI_THREADS", "many")
    assert main(["spectrum", "--config", cfg]) == EXIT_INVALID


def test_key_value_parser_comments():
    kv = parse_key_values(["# comment", "", "p = 2.5  # inline", "winding = 1, 2"])
    assert kv == {"p": "2.5", "winding": "1, 2"}
    rc = run_config_from_dict({"n_fiber": "2", "winding": "1, 2"}, seed=3)
    assert rc.geodesic.winding == (1, 2) and rc.geodesic.seed == 3
