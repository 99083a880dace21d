#!/usr/bin/env python
"""
Тесты сценариев: разбор текстового формата, проверки pydantic,
построение мер и множеств, встроенные пресеты.
"""
import math

import pytest

from cquant.errors import ConfigurationError
from cquant.geometry import Union
from cquant.presets import PRESETS, load_preset, preset_names
from cquant.scenario import build_constraint, build_measure, parse_int_range, parse_number, parse_scenario

MINIMAL = """
[measure]
kind = dirac
point = 0, 0

[constraint]
kind = circle
center = 0, 0
radius = 1

[solver]
n_list = 1..4
"""

# Сценарии, которые должны отвергаться
invalid_scenarios = {
    "неизвестная фигура": MINIMAL.replace("kind = circle", "kind = hexagon"),
    "неизвестный ключ": MINIMAL.replace("radius = 1", "radius = 1\ncolour = red"),
    "неизвестная секция": MINIMAL + "\n[plot]\nwidth = 3\n",
    "n_list не возрастает": MINIMAL.replace("n_list = 1..4", "n_list = 4, 2"),
    "r < 1": MINIMAL + "r = 0.5\n",
    "нет члена объединения": MINIMAL.replace("kind = circle", "kind = union\nmembers = left"),
    "синтаксис": "measure kind dirac",
}


def test_number_notation():
    assert parse_number("3^-2") == pytest.approx(1 / 9)
    assert parse_number("inf") == math.inf
    assert parse_number(" 0.25 ") == 0.25
    assert parse_int_range("2..5") == [2, 3, 4, 5]
    assert parse_int_range("2, 4, 8") == [2, 4, 8]


def test_minimal_scenario():
    scenario = parse_scenario(MINIMAL, "minimal")
    assert scenario.name == "minimal"
    assert scenario.solver.sizes() == [1, 2, 3, 4]
    assert scenario.solver.r == 2.0
    assert scenario.analysis.which == "hat"
    P = build_measure(scenario.measure)
    S = build_constraint(scenario.constraint, scenario.members)
    assert P.meta == "dirac"
    assert S.project((0, 0)).is_continuum


def test_infinite_order():
    scenario = parse_scenario(MINIMAL + "r = inf\n")
    assert scenario.solver.r == math.inf


def test_invalid_scenarios_rejected():
    for name, text in invalid_scenarios.items():
        with pytest.raises(ConfigurationError):
            parse_scenario(text, name)


def test_missing_required_parameter():
    scenario = parse_scenario(MINIMAL.replace("radius = 1\n", ""))
    with pytest.raises(ConfigurationError):
        build_constraint(scenario.constraint, scenario.members)


def test_all_presets_parse_and_build():
    assert preset_names() == sorted(PRESETS)
    for name in preset_names():
        scenario = load_preset(name)
        P = build_measure(scenario.measure)
        S = build_constraint(scenario.constraint, scenario.members)
        assert P.dim == S.dim == 2
        assert len(scenario.solver.sizes()) >= 4


def test_vshape_preset_geometry():
    scenario = load_preset("vshape")
    S = build_constraint(scenario.constraint, scenario.members)
    assert isinstance(S, Union)
    assert len(S.members) == 3
    result = S.project((0, 0))
    assert result.distance == pytest.approx(1.0)
    assert result.tie_count == 3
    assert scenario.analysis.probes == [[0.0, 1.0]]


def test_cantor_preset_scales():
    scenario = load_preset("cantor-line")
    assert scenario.analysis.box_scales[0] == pytest.approx(1 / 9)
    assert scenario.analysis.box_scales[-1] == pytest.approx(3.0 ** -8)
    assert scenario.analysis.require_dimension


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        load_preset("square-in-square")
