#!/usr/bin/env python
"""
Тесты оценок размерности: наклоны кривой ошибок, box-размерность,
регулярность Альфорса, условия (U1)/(U3), отчет JSON.
"""
import json
import math

import numpy as np
import pytest

from cquant.dimension import (DEGENERATE, ahlfors_check, box_dimension, box_dimension_bounds, build_report,
                              check_condition_U1, check_condition_U3, fit_quant_dimension, lower_ahlfors_check)
from cquant.errors import UsageError
from cquant.geometry import Circle, ClosedBall, Line, Polyline, Union
from cquant.measures import cantor_measure, dirac, pushforward, uniform_circle, uniform_polyline
from cquant.quantizer import CurveRow, ErrorCurve

CANTOR_DIM = math.log(2) / math.log(3)
CIRCLE_SIZES = [2, 3, 4, 8, 16, 32, 64]


def circle_curve(scale=1.0):
    """Точная кривая e_hat окружности в круге."""
    values = [scale * math.sqrt(1 - (n / math.pi * math.sin(math.pi / n)) ** 2) for n in CIRCLE_SIZES]
    return ErrorCurve.from_values(CIRCLE_SIZES, values)


def vshape_scene():
    P = uniform_polyline([(-1, -1), (0, 0), (1, -1)], 2048)
    S = Union([
        Polyline([(3, 2), (1, 0), (3, -2)]),
        Polyline([(-3, 2), (-1, 0), (-3, -2)]),
        Polyline([(-3, 4), (0, 1), (3, 4)]),
    ])
    return P, S


def test_circle_curve_dimension_is_one():
    report = fit_quant_dimension(circle_curve())
    assert 0.95 <= report.quant_dim_lower <= report.quant_dim_upper <= 1.05
    assert report.global_slope_dim == pytest.approx(1.0, abs=0.05)
    assert report.which == "hat"
    assert not report.degenerate


def test_scale_invariance_of_local_slopes():
    """Умножение e_hat на степень двойки не меняет локальные наклоны."""
    base = fit_quant_dimension(circle_curve())
    scaled = fit_quant_dimension(circle_curve(4.0))
    assert [row["slope"] for row in base.local_slopes] == [row["slope"] for row in scaled.local_slopes]
    assert scaled.global_slope_dim == pytest.approx(base.global_slope_dim, abs=1e-9)


def test_cantor_closed_form_slope():
    n_list = [2 ** k for k in range(1, 6)]
    values = [math.sqrt(9.0 ** -k / 8) for k in range(1, 6)]
    report = fit_quant_dimension(ErrorCurve.from_values(n_list, values), window=1.0)
    assert report.global_slope_dim == pytest.approx(CANTOR_DIM, abs=1e-9)
    for row in report.local_slopes:
        assert row["slope"] == pytest.approx(CANTOR_DIM, abs=1e-9)


def test_degenerate_curve():
    report = fit_quant_dimension(ErrorCurve.from_values([1, 2, 3, 4], [0.0, 0.0, 0.0, 0.0]))
    assert report.degenerate
    assert report.verdict == DEGENERATE

def test_flat_rows_serialize_as_null(tmp_path):
    """Плоская пара строк дает бесконечный наклон, в JSON он становится null."""
    curve = ErrorCurve.from_values([2, 4, 8, 16], [0.5, 0.25, 0.25, 0.125])
    report = fit_quant_dimension(curve, window=1.0)
    text = report.to_json(tmp_path / "report.json").read_text(encoding="utf-8")
    assert "Infinity" not in text
    data = json.loads(text)
    assert data["local_slopes"][1]["slope"] is None
    assert data["quant_dim_upper"] is None
    assert data["quant_dim_lower"] == pytest.approx(1.0)



def test_short_curve_rejected():
    with pytest.raises(UsageError):
        fit_quant_dimension(ErrorCurve.from_values([1, 2, 4], [0.5, 0.25, 0.125]))
    with pytest.raises(UsageError):
        fit_quant_dimension(circle_curve(), which="plain")


def test_tilde_fit_records_choice():
    report = fit_quant_dimension(circle_curve(), which="tilde")
    assert report.which == "tilde"


def test_cantor_box_dimension():
    P = cantor_measure((0, 0), (1, 0), 12)
    image = pushforward(P, Line((0, 1), (1, 0))).atoms
    scales = [3.0 ** -k for k in range(2, 9)]
    dim, table = box_dimension(image, scales)
    assert dim == pytest.approx(CANTOR_DIM, abs=0.03)
    assert [row["count"] for row in table] == [2 ** k for k in range(2, 9)]
    upper, lower = box_dimension_bounds(table)
    assert lower <= dim <= upper
    # Прореживание выборки почти не меняет оценку
    sub, _ = box_dimension(image[::2], scales)
    assert abs(sub - dim) < 0.05


def test_box_dimension_of_single_point():
    dim, table = box_dimension([(0.3, 0.3)], [0.1, 0.01])
    assert dim == 0.0
    assert all(row["count"] == 1 for row in table)


def test_box_dimension_needs_two_scales():
    with pytest.raises(UsageError):
        box_dimension([(0, 0), (1, 1)], [0.1])


def test_ahlfors_circle():
    P = uniform_circle((0, 0), 1.0, 4096)
    assert ahlfors_check(P, 1.0, [0.5, 0.2, 0.1, 0.05, 0.02, 0.01])["pass"]
    wrong = ahlfors_check(P, 2.0, [0.5, 0.1, 0.01, 1e-3, 2e-4])
    assert not wrong["pass"]
    assert wrong["c_upper"] / wrong["c_lower"] > 1e3


def test_ahlfors_cantor():
    P = cantor_measure((0, 0), (1, 0), 10)
    result = ahlfors_check(P, CANTOR_DIM, [3.0 ** -k for k in range(1, 7)])
    assert result["pass"]
    assert len(result["table"]) == 6
    lower = lower_ahlfors_check(P, CANTOR_DIM, [3.0 ** -k for k in range(1, 7)])
    assert lower["pass"]
    assert lower["c_lower"] == pytest.approx(result["c_lower"])


def test_ahlfors_rejects_bad_arguments():
    P = uniform_circle((0, 0), 1.0, 64)
    with pytest.raises(UsageError):
        ahlfors_check(P, 0.0, [0.1])
    with pytest.raises(UsageError):
        ahlfors_check(P, 1.0, [])


def test_u1_holds_for_circle_in_disc():
    P = uniform_circle((0, 0), 1.0, 1024)
    result = check_condition_U1(P, ClosedBall((0, 0), 1.0), [0.2, 0.05, 0.01])
    assert result["pass"]
    assert result["failed_probes"] == []
    assert result["eps"] == [0.2, 0.05, 0.01]


def test_u1_fails_for_dirac_at_center():
    result = check_condition_U1(dirac((0, 0)), Circle((0, 0), 1.0), [0.5, 0.1])
    assert not result["pass"]
    assert result["failed_probes"]


def test_u1_fails_at_vshape_top_vertex():
    P, S = vshape_scene()
    result = check_condition_U1(P, S, [0.1, 0.05, 0.02], probes=[(0, 1)])
    assert not result["pass"]
    assert [0.0, 1.0] in result["failed_probes"]
    row = next(r for r in result["table"] if r["probe"] == [0.0, 1.0])
    assert row["masses"] == [0.0, 0.0, 0.0]


def test_u1_rejects_bad_eps():
    P = uniform_circle((0, 0), 1.0, 64)
    with pytest.raises(UsageError):
        check_condition_U1(P, ClosedBall((0, 0), 1.0), [0.1, -0.1])


def test_u3_circle_ball_half():
    P = uniform_circle((0, 0), 1.0, 2048)
    result = check_condition_U3(P, ClosedBall((0, 0), 0.5), 1.0, [0.1, 0.05, 0.02])
    assert result["pass"]
    assert result["s_source"] == "given"
    assert result["spread"] <= 10.0


def test_u3_estimates_s_when_missing():
    P = uniform_circle((0, 0), 1.0, 2048)
    result = check_condition_U3(P, ClosedBall((0, 0), 0.5), None, [0.1, 0.05, 0.02])
    assert result["s_source"] == "box-dimension estimate"
    assert result["s"] == pytest.approx(1.0, abs=0.2)


def test_u3_fails_for_dirac_at_center():
    result = check_condition_U3(dirac((0, 0)), Circle((0, 0), 1.0), 1.0, [0.5, 0.1])
    assert not result["pass"]


def test_build_report_json(tmp_path):
    P = cantor_measure((0, 0), (1, 0), 8)
    image = pushforward(P, Line((0, 1), (1, 0)))
    report = build_report(
        circle_curve(),
        box=(image.atoms, [3.0 ** -k for k in range(2, 7)]),
        ahlfors=ahlfors_check(image, CANTOR_DIM, [3.0 ** -k for k in range(1, 5)]),
        conditions={"U1": True},
        observations={"scenario": "test"},
    )
    path = report.to_json(tmp_path / "report.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    for key in ("quant_dim_upper", "quant_dim_lower", "global_slope_dim", "box_dim", "ahlfors", "conditions",
                "local_slopes", "box_table", "which", "verdict", "observations"):
        assert key in data
    assert data["conditions"] == {"U1": True}
    assert data["observations"]["scenario"] == "test"
    assert data["box_dim"] == pytest.approx(CANTOR_DIM, abs=1e-6)
    assert "box_dim_upper" in data["observations"]


def test_tilde_dimension_not_above_hat():
    """При e_inf > 0 разность e - e_inf убывает быстрее, и размерность по ней не больше."""
    e_inf = 0.5
    rows = []
    for n in CIRCLE_SIZES:
        e_hat = 0.5 * math.sqrt(1 - (n / math.pi * math.sin(math.pi / n)) ** 2)
        e = math.sqrt(e_inf ** 2 + e_hat ** 2)
        rows.append(CurveRow(n, 2.0, e, e_inf, e_hat, e - e_inf, 0, 0, 0, False))
    curve = ErrorCurve(rows)
    hat = fit_quant_dimension(curve, "hat")
    tilde = fit_quant_dimension(curve, "tilde")
    assert tilde.global_slope_dim <= hat.global_slope_dim + 0.05
    assert tilde.quant_dim_upper <= hat.quant_dim_upper + 0.05


def test_circle_box_dimension_subsampling():
    """Половина выборки окружности из 4096 точек почти не меняет box-размерность."""
    atoms = uniform_circle((0, 0), 1.0, 4096).atoms
    scales = [2.0 ** -k for k in range(3, 8)]
    full, table = box_dimension(atoms, scales)
    half, _ = box_dimension(atoms[::2], scales)
    assert abs(full - half) < 0.05
    assert full == pytest.approx(1.0, abs=0.05)
    # Число клеток не растет с размером клетки
    counts = [row["count"] for row in sorted(table, key=lambda row: row["delta"])]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
