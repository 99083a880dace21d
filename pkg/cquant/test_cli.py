#!/usr/bin/env python
"""
Тесты командной строки: подкоманды, файлы результатов, коды завершения.
"""
import csv
import json
import logging
import math

import pytest
from click.testing import CliRunner

from cquant.cli import cli

SMALL = """
[measure]
kind = uniform_circle
center = 0, 0
radius = 1
nodes = 128

[constraint]
kind = ball
center = 0, 0
radius = 0.5

[solver]
r = 2
n_list = 2, 4, 8, 16
restarts = 2
max_iters = 50

[analysis]
eps = 0.2, 0.1
u3_s = 1
ahlfors_d = 1
ahlfors_radii = 0.2, 0.1, 0.05
pullback_n = 4
perturb_eps = 0.01
witness_radii = 0.1
"""

DIRAC_STRICT = """
[measure]
kind = dirac
point = 0, 0

[constraint]
kind = circle
center = 0, 0
radius = 1

[solver]
n_list = 1, 2, 3, 4
restarts = 1

[analysis]
require_dimension = true
"""


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, "_cquant", False)]:
        root.removeHandler(handler)


def write_scenario(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def invoke(*args):
    return CliRunner().invoke(cli, list(args))


def test_quantize_writes_codebook_and_summary(tmp_path):
    config = write_scenario(tmp_path, SMALL)
    out = tmp_path / "out"
    result = invoke("--config", config, "--out", str(out), "quantize", "--n", "4")
    assert result.exit_code == 0, result.output
    rows = (out / "codebook.txt").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 4
    assert all(len(row.split()) == 2 for row in rows)
    with open(out / "summary.csv", encoding="utf-8") as f:
        summary = list(csv.DictReader(f))
    assert len(summary) == 1
    assert summary[0]["n"] == "4"
    assert float(summary[0]["e_inf"]) == pytest.approx(0.5)


def test_quantize_is_deterministic(tmp_path):
    config = write_scenario(tmp_path, SMALL)
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = invoke("--config", config, "--out", str(out), "--seed", "3", "quantize", "--n", "3")
        assert result.exit_code == 0, result.output
        outputs.append(((out / "codebook.txt").read_bytes(), (out / "summary.csv").read_bytes()))
    assert outputs[0] == outputs[1]


def test_dirac_circle_preset_quantize(tmp_path):
    result = invoke("--preset", "dirac-circle", "--out", str(tmp_path), "quantize", "--n", "2")
    assert result.exit_code == 0, result.output
    with open(tmp_path / "summary.csv", encoding="utf-8") as f:
        row = next(csv.DictReader(f))
    assert float(row["e"]) == pytest.approx(1.0)
    assert float(row["e_hat"]) == 0.0


def test_curve_and_dimension(tmp_path):
    config = write_scenario(tmp_path, SMALL)
    result = invoke("--config", config, "--out", str(tmp_path), "dimension")
    assert result.exit_code == 0, result.output
    with open(tmp_path / "curve.csv", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [row["n"] for row in rows] == ["2", "4", "8", "16"]
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["ahlfors"]["pass"]
    assert report["observations"]["e_inf"] == pytest.approx(0.5)
    assert report["verdict"] == "ok"


def test_check_writes_conditions(tmp_path):
    config = write_scenario(tmp_path, SMALL)
    result = invoke("--config", config, "--out", str(tmp_path), "check")
    assert result.exit_code == 0, result.output
    conditions = json.loads((tmp_path / "conditions.json").read_text(encoding="utf-8"))
    for key in ("U1", "U3", "ahlfors_image", "lower_ahlfors_image", "nowhere_dense", "pullback", "weights",
                "perturbation"):
        assert key in conditions
    assert conditions["U1"]["pass"]
    assert conditions["pullback"]["holds"]
    assert conditions["weights"]["residual"] < 1e-10
    assert all(row["holds"] for row in conditions["perturbation"]["rows"])


def test_project_vshape_origin(tmp_path):
    result = invoke("--preset", "vshape", "--out", str(tmp_path), "project", "--point", "0,0")
    assert result.exit_code == 0, result.output
    assert "-1 0; 0 1; 1 0" in result.output
    with open(tmp_path / "projection.csv", encoding="utf-8") as f:
        row = next(csv.DictReader(f))
    assert row["distance"] == "1"
    assert row["tie_count"] == "3"


def test_reproduce_dirac_circle(tmp_path):
    result = invoke("--out", str(tmp_path), "reproduce", "dirac-circle")
    assert result.exit_code == 0, result.output
    bundle = tmp_path / "dirac-circle"
    assert (bundle / "codebooks" / "n1.txt").exists()
    report = json.loads((bundle / "report.json").read_text(encoding="utf-8"))
    assert report["verdict"].startswith("degenerate")
    assert report["conditions"]["U1"] is False
    conditions = json.loads((bundle / "conditions.json").read_text(encoding="utf-8"))
    assert not conditions["U1"]["pass"]
    # Проверки без вердикта в сводку условий не попадают
    assert "weights" not in report["conditions"]
    assert None not in report["conditions"].values()


def reproduce(tmp_path, preset):
    result = invoke("--out", str(tmp_path), "reproduce", preset)
    assert result.exit_code == 0, result.output
    bundle = tmp_path / preset
    report = json.loads((bundle / "report.json").read_text(encoding="utf-8"))
    conditions = json.loads((bundle / "conditions.json").read_text(encoding="utf-8"))
    return report, conditions


def test_reproduce_circle_disc(tmp_path):
    report, conditions = reproduce(tmp_path, "circle-disc")
    for key in ("quant_dim_upper", "quant_dim_lower", "global_slope_dim"):
        assert 0.95 <= report[key] <= 1.05, key
    assert report["conditions"]["U1"] is True
    assert conditions["U1"]["pass"]
    assert conditions["nowhere_dense"]["pass"]


def test_reproduce_vshape_top_vertex(tmp_path):
    report, conditions = reproduce(tmp_path, "vshape")
    assert report["conditions"]["U1"] is False
    assert [0.0, 1.0] in conditions["U1"]["failed_probes"]


def test_reproduce_cantor_line(tmp_path):
    report, conditions = reproduce(tmp_path, "cantor-line")
    assert report["box_dim"] == pytest.approx(math.log(2) / math.log(3), abs=0.01)
    assert conditions["nowhere_dense"]["pass"]


def test_degenerate_dimension_exit_code(tmp_path):
    config = write_scenario(tmp_path, DIRAC_STRICT)
    result = invoke("--config", config, "--out", str(tmp_path), "dimension")
    assert result.exit_code == 5
    assert (tmp_path / "report.json").exists()


# Ошибочные запуски и ожидаемые коды завершения
failing_runs = {
    "нет сценария": ((), ("quantize",), 2),
    "неизвестный пресет": ((), ("reproduce", "square"), 2),
    "нет файла": (("--config", "missing.ini"), ("quantize",), 2),
}


def test_exit_codes(tmp_path):
    for name, (options, command, code) in failing_runs.items():
        result = invoke(*options, "--out", str(tmp_path), *command)
        assert result.exit_code == code, name


def test_bad_scenario_exit_code(tmp_path):
    config = write_scenario(tmp_path, SMALL.replace("kind = ball", "kind = hexagon"))
    assert invoke("--config", config, "--out", str(tmp_path), "quantize").exit_code == 2


def test_resource_exit_code(tmp_path):
    text = SMALL.replace("kind = uniform_circle\ncenter = 0, 0\nradius = 1\nnodes = 128",
                         "kind = cantor\na = 0, 0\nb = 1, 0\ndepth = 30")
    config = write_scenario(tmp_path, text)
    assert invoke("--config", config, "--out", str(tmp_path), "quantize").exit_code == 4
