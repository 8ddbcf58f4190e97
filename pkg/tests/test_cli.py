import csv
import io
import json
import subprocess
import sys

import pytest

from weighted_yamabe.cli import main, parse_int_range, parse_real_list
from weighted_yamabe.specfun import lambda_euclidean


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


class TestParsing:
    def test_real_list(self):
        assert parse_real_list("0,0.25,...,1") == [0, 0.25, 0.5, 0.75, 1]
        assert parse_real_list("1,2.5") == [1, 2.5]
        with pytest.raises(ValueError):
            parse_real_list("0,0.3,...,1")

    def test_int_range(self):
        assert parse_int_range("3..6") == [3, 4, 5, 6]
        assert parse_int_range("3,5") == [3, 5]


class TestCommands:
    def test_constants(self, capsys):
        code, out, _ = run(capsys, "constants", "--m", "1", "--n", "3")
        assert code == 0
        data = json.loads(out)
        assert {"lambda_mn", "V", "Q1_sphere", "F", "nu"} <= set(data)
        assert data["lambda_mn"] == pytest.approx(lambda_euclidean(1, 3), rel=1e-15)
        assert data["flags"]["m"] == 1.0

    def test_seventeen_digits(self, capsys):
        _, out, _ = run(capsys, "constants", "--m", "0.5", "--n", "3")
        line = next(l for l in out.splitlines() if '"lambda_mn"' in l)
        digits = line.split(":")[1].strip().rstrip(",").replace(".", "").lstrip("0")
        assert len(digits.split("e")[0]) >= 16

    def test_bubble_check(self, capsys):
        code, out, _ = run(capsys, "bubble-check", "--m", "0.5", "--n", "3", "--tau", "1")
        data = json.loads(out)
        assert code == 0
        assert data["pde_residual"] <= 1e-8 and data["volume_gap"] <= 1e-8 and data["q_gap"] <= 1e-6

    def test_bubble_check_coarse_grid_violates(self, capsys):
        code, _, _ = run(capsys, "bubble-check", "--m", "1", "--n", "3", "--nodes", "16")
        assert code == 3

    def test_f_table(self, capsys):
        code, out, _ = run(capsys, "f-table", "--m", "0,0.25,...,3", "--n", "3..10")
        assert code == 0
        assert out.startswith("#")
        rows = csv_rows(out)
        assert len(rows) == 13 * 8
        for row in rows:
            assert row["sign"] == row["expected_sign"]

    def test_quotient_with_tau(self, capsys):
        code, out, _ = run(capsys, "quotient", "--m", "2", "--n", "3", "--tau", "1")
        data = json.loads(out)
        assert code == 0
        assert {"energy", "mass_intermediate", "mass_volume", "q_value", "w_value", "tau"} <= set(data)

    def test_quotient_from_csv(self, capsys, tmp_path):
        from weighted_yamabe.geometry import make_space, write_field_csv
        import numpy as np

        sp = make_space("sphere", 3, 1, node_count=64)
        path = tmp_path / "w.csv"
        write_field_csv(path, sp, np.exp(0.2 * np.cos(sp.nodes)))
        code, out, _ = run(capsys, "quotient", "--m", "1", "--n", "3", "--nodes", "64", "--input", str(path))
        assert code == 0 and json.loads(out)["q_value"] > lambda_euclidean(1, 3)

    def test_minimize_json_and_trace(self, capsys, tmp_path):
        out_path = tmp_path / "trace.csv"
        code, _, _ = run(capsys, "minimize", "--m", "2", "--n", "3", "--init", "bubble", "--width", "2",
                         "--csv", "--out", str(out_path))
        assert code == 0
        text = out_path.read_text()
        assert "# m=2.0" in text
        rows = csv_rows(text)
        assert list(rows[0]) == ["iteration", "q_value", "sup", "mass_localization"]

    def test_minimize_nonconvergence(self, capsys):
        code, out, _ = run(capsys, "minimize", "--m", "2", "--n", "3", "--init", "bubble", "--width", "2",
                           "--max-iterations", "1")
        assert code == 2
        assert json.loads(out)["converged"] is False

    def test_nu_sweep(self, capsys):
        code, out, _ = run(capsys, "nu-sweep", "--m", "1", "--n", "3", "--points", "4")
        data = json.loads(out)
        assert code == 0
        assert len(data["points"]) == 4
        for p in data["points"]:
            assert p["probe"] >= p["nu"]

    def test_lift_check(self, capsys):
        code, out, _ = run(capsys, "lift-check", "--m", "0.5", "--n", "3", "--space", "euclidean")
        data = json.loads(out)
        assert code == 0
        assert data["lhs"] == pytest.approx(data["lambda_lifted"], rel=1e-5)

    def test_out_file(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        code, out, _ = run(capsys, "constants", "--m", "2", "--n", "4", "--out", str(path))
        assert code == 0 and out == ""
        assert json.loads(path.read_text())["F"] < 1


class TestErrors:
    @pytest.mark.parametrize("argv", [
        ["constants", "--m", "1", "--n", "2"],
        ["constants", "--m", "1", "--n", "3", "--bogus"],
        ["constants", "--m", "-1", "--n", "3"],
        ["bubble-check", "--m", "1", "--n", "3", "--tau", "0"],
        ["nope"],
        ["constants", "--m", "1", "--n", "3", "--json", "--csv"],
        ["nu-sweep", "--m", "1", "--n", "3", "--tau-min", "2"],
        ["f-table", "--m", "0,0.3,...,1", "--n", "3..4"],
        ["lift-check", "--m", "0.3", "--n", "3"],
    ])
    def test_argument_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 1
        assert "error" in err

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "weighted_yamabe", "constants", "--m", "0", "--n", "4"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["lambda_mn"] == pytest.approx(lambda_euclidean(0, 4), rel=1e-15)
