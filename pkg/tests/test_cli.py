import json
import re
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from raschmix.cli import main, parse_grid
from raschmix.data import VERBAL_AGGRESSION_ITEMS
from raschmix.sim import ScenarioSpec, generate_scenario


@pytest.fixture
def scenario5_csv(tmp_path):
    data, truth = generate_scenario(ScenarioSpec(5, theta=1.0, delta=2.0, n=500, seed=77))
    path = tmp_path / "s5.csv"
    lines = ["id," + ",".join(data.item_names) + ",grp"]
    for i, row in enumerate(data.entries):
        lines.append(f"p{i}," + ",".join(map(str, row)) + f",c{truth.classes[i]}")
    path.write_text("\n".join(lines) + "\n")
    return path


class TestParseGrid:
    def test_range_and_list(self):
        assert parse_grid("0:3:1") == [0.0, 1.0, 2.0, 3.0]
        assert parse_grid("0.5,1") == [0.5, 1.0]

    @pytest.mark.parametrize("text", ["3:0:1", "0:1:0", "a,b", ""])
    def test_invalid(self, text):
        with pytest.raises(Exception):
            parse_grid(text)


class TestFit:
    def test_k3_json(self, tmp_path, capsys):
        out = tmp_path / "fit.json"
        assert main(["fit", "--k", "3", "--score", "mean-variance", "--restricted", "--seed", "42", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["df"] == 37
        assert doc["bic"] == pytest.approx(3841.4, abs=2.5)
        assert doc["filter"]["n_effective"] == 273
        assert "BIC=3841" in capsys.readouterr().out

    def test_k1_df(self, tmp_path):
        out = tmp_path / "fit.json"
        assert main(["fit", "--k", "1", "--seed", "1", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["df"] == 13

    def test_custom_file(self, tmp_path):
        rng = np.random.default_rng(0)
        path = tmp_path / "d.csv"
        rows = ["a,b,c,d"] + [",".join(map(str, r)) for r in rng.integers(0, 3, (60, 4))]
        path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "fit.json"
        assert main(["fit", "--data", str(path), "--k", "1", "--seed", "1", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["df"] == 3 + 2

    def test_missing_file(self, tmp_path, capsys):
        path = tmp_path / "missing.csv"
        assert main(["fit", "--data", str(path), "--seed", "1"]) == 2
        assert str(path) in capsys.readouterr().err

    def test_bad_k(self):
        assert main(["fit", "--k", "0"]) == 1

    def test_seed_printed_and_reproducible(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("RASCHMIX_SEED", raising=False)
        a = tmp_path / "a.json"
        assert main(["fit", "--k", "2", "--starts", "1", "--out", str(a)]) == 0
        seed = re.search(r"seed (\d+)", capsys.readouterr().out).group(1)
        b = tmp_path / "b.json"
        assert main(["fit", "--k", "2", "--starts", "1", "--seed", seed, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RASCHMIX_SEED", "5")
        a = tmp_path / "a.json"
        main(["fit", "--k", "2", "--starts", "1", "--out", str(a)])
        assert json.loads(a.read_text())["spec"]["seed"] == 5


class TestSelect:
    def test_table2(self, tmp_path, capsys):
        csv = tmp_path / "t.csv"
        args = ["select", "--kmin", "1", "--kmax", "4", "--score", "mean-variance", "--restricted", "--seed", "42"]
        assert main(args + ["--csv", str(csv)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[1].split() == ["Model", "k", "#Df", "logL", "BIC"]
        starred = [ln for ln in lines if ln.startswith("*")]
        assert len(starred) == 1 and " 3 " in starred[0]
        rows = csv.read_text().splitlines()[1:]
        bic = [float(r.split(",")[4]) for r in rows]
        np.testing.assert_allclose(bic, [3874.6, 3847.8, 3841.4, 3858.8], atol=2.5)

    def test_table3(self, tmp_path):
        js = tmp_path / "t.json"
        assert main(["select", "--score-candidates", "all", "--k", "3", "--seed", "42", "--json", str(js)]) == 0
        doc = json.loads(js.read_text())
        assert [r["df"] for r in doc["rows"]] == [65, 45, 41, 37]
        assert doc["rows"][doc["best_index"]]["model"] == "restricted (mean-variance)"

    def test_kmin_gt_kmax(self, capsys):
        assert main(["select", "--kmin", "3", "--kmax", "2", "--seed", "1"]) == 1
        assert "exceeds" in capsys.readouterr().err


class TestSimulate:
    def test_csv_and_svg(self, tmp_path):
        out, svg = tmp_path / "s.csv", tmp_path / "s.svg"
        args = ["simulate", "--scenario", "2", "--delta", "0:3:1", "--n", "200", "--m", "8", "--reps", "1",
                "--kmax", "2", "--starts", "1", "--seed", "7", "--out", str(out), "--svg", str(svg)]
        assert main(args) == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 5
        ET.fromstring(svg.read_text())
        first = out.read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first

    def test_reps_zero(self):
        assert main(["simulate", "--scenario", "1", "--reps", "0"]) == 1

    def test_bad_grid(self):
        assert main(["simulate", "--scenario", "2", "--delta", "x"]) == 1

    def test_report_rerenders(self, tmp_path):
        out, svg = tmp_path / "s.csv", tmp_path / "r.svg"
        main(["simulate", "--scenario", "1,3", "--theta", "1", "--n", "150", "--m", "6", "--reps", "1",
              "--kmax", "2", "--starts", "1", "--seed", "2", "--out", str(out)])
        assert main(["report", "--csv", str(out), "--svg", str(svg)]) == 0
        assert svg.read_text().startswith("<svg")


class TestDif:
    def test_mixture_verbal_aggression(self, tmp_path):
        js = tmp_path / "d.json"
        assert main(["dif", "--method", "mixture", "--kmax", "4", "--seed", "42", "--json", str(js)]) == 0
        doc = json.loads(js.read_text())
        assert doc["flagged"] and doc["k_hat"] == 3

    def test_lr_constant_group(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("id,a,b,c,school\n1,1,0,1,x\n2,0,1,1,x\n3,1,1,0,x\n")
        assert main(["dif", "--method", "lr", "--data", str(path), "--group", "school", "--seed", "1"]) == 1

    def test_lr_missing_group(self, scenario5_csv):
        assert main(["dif", "--method", "lr", "--data", str(scenario5_csv), "--group", "nope", "--seed", "1"]) != 0

    def test_lr_scenario5(self, scenario5_csv, tmp_path):
        js = tmp_path / "d.json"
        assert main(["dif", "--method", "lr", "--data", str(scenario5_csv), "--group", "grp",
                     "--seed", "1", "--json", str(js)]) == 0
        doc = json.loads(js.read_text())
        assert doc["p_value"] < 0.01 and doc["flagged"]
        assert doc["groups"] == ["c0", "c1"]


class TestEntryPoint:
    def test_module_invocation(self):
        res = subprocess.run([sys.executable, "-m", "raschmix", "--version"], capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.strip()

    def test_unknown_command(self):
        res = subprocess.run([sys.executable, "-m", "raschmix", "bogus"], capture_output=True, text=True)
        assert res.returncode == 1
