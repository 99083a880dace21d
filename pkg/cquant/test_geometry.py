#!/usr/bin/env python
"""
Тесты геометрии: проекции на фигуры, выбор представителя при равенствах,
выборки множеств, массы обратных образов.
"""
import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from cquant.errors import ConfigurationError, UsageError
from cquant.geometry import (CONTINUUM, CantorSegment, Circle, ClosedBall, FinitePointSet, Line, Polyline,
                             SampledImage, Segment, Union, hausdorff_distance, nowhere_density_witness, project,
                             projection_set_sample, reversal_mass, sample_boundary)
from cquant.measures import cantor_measure, dirac, uniform_circle


def vshape_constraint():
    return Union([
        Polyline([(3, 2), (1, 0), (3, -2)]),
        Polyline([(-3, 2), (-1, 0), (-3, -2)]),
        Polyline([(-3, 4), (0, 1), (3, 4)]),
    ])


# Точки и ожидаемые проекции на единичный шар
ball_cases = {
    "снаружи": ((2.0, 0.0), (1.0, 0.0), 1.0),
    "внутри": ((0.25, -0.5), (0.25, -0.5), 0.0),
    "диагональ": ((3.0, 4.0), (0.6, 0.8), 4.0),
}


def test_ball_projection():
    """Проекция на шар: радиальное сжатие снаружи, тождество внутри."""
    S = ClosedBall((0, 0), 1)
    for name, (point, rep, dist) in ball_cases.items():
        result = project(S, point)
        np.testing.assert_allclose(result.representative, rep, atol=1e-12, err_msg=name)
        assert result.distance == pytest.approx(dist, abs=1e-12)
        assert result.tie_count == 1


def test_vshape_origin_has_three_minimizers():
    """Начало координат равноудалено от трех ветвей S."""
    result = project(vshape_constraint(), (0, 0))
    assert result.distance == pytest.approx(1.0, abs=1e-12)
    assert result.tie_count == 3
    got = sorted(tuple(np.round(m, 12)) for m in result.all_minimizers)
    assert got == [(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)]
    # Лексикографически наименьший
    np.testing.assert_allclose(result.representative, (-1.0, 0.0))


def test_lexicographic_tie_break():
    S = FinitePointSet([(1, 0), (-1, 0), (0, 5)])
    result = S.project((0, 0))
    assert result.tie_count == 2
    np.testing.assert_allclose(result.representative, (-1.0, 0.0))


def test_sphere_center_is_continuum():
    """Центр окружности: континуум минимизаторов, представитель center + r e1."""
    S = Circle((1, 2), 0.5)
    result = S.project((1, 2))
    assert result.tie_count == CONTINUUM
    assert result.is_continuum
    assert result.distance == pytest.approx(0.5)
    np.testing.assert_allclose(result.representative, (1.5, 2.0))


def test_cantor_gap_gives_two_minimizers():
    S = CantorSegment((0, 0), (1, 0), depth=1)
    result = S.project((0.5, 0.0))
    assert result.tie_count == 2
    np.testing.assert_allclose(result.representative, (1 / 3, 0.0), atol=1e-12)
    assert result.distance == pytest.approx(1 / 6)
    # Точка внутри отрезка уровня depth проецируется в себя
    assert S.project((0.1, 0.0)).distance == pytest.approx(0.0, abs=1e-15)


def test_cantor_sample_counts():
    S = CantorSegment((0, 0), (1, 0), depth=4)
    coarse = S.sample(0.5)
    assert len(coarse) == 16
    fine = S.sample(1e-3)
    assert hausdorff_distance(fine, S.sample(1e-4)) <= 1e-3


def test_segment_rejects_equal_ends():
    with pytest.raises(ConfigurationError):
        Segment((1, 1), (1, 1))


def test_line_sample_requires_extent_or_box():
    S = Line((0, 1), (1, 0))
    with pytest.raises(ConfigurationError):
        S.sample(0.1)
    pts = S.sample(0.1, bbox=((-1, 0), (1, 2)))
    assert np.all(np.abs(pts[:, 1] - 1.0) < 1e-15)
    assert pts[:, 0].min() == pytest.approx(-1.0)
    assert pts[:, 0].max() == pytest.approx(1.0)
    assert project(S, (0.3, -2.0)).distance == pytest.approx(3.0)


def test_union_rejects_mixed_dimensions():
    with pytest.raises(ConfigurationError):
        Union([ClosedBall((0, 0), 1), ClosedBall((0, 0, 0), 1)])


def test_polyline_needs_two_vertices():
    with pytest.raises(ConfigurationError):
        Polyline([(0, 0)])


def test_project_many_matches_scalar_projection():
    """Векторная проекция совпадает с поточечной, включая точки с равенствами."""
    S = vshape_constraint()
    rng = np.random.default_rng(7)
    points = np.vstack([rng.uniform(-2, 2, size=(200, 2)), [(0.0, 0.0)]])
    reps, dists = S.project_many(points)
    for p, rep, dist in zip(points, reps, dists):
        result = S.project(p)
        np.testing.assert_allclose(rep, result.representative, atol=1e-12)
        assert dist == pytest.approx(result.distance, abs=1e-12)


def test_ball_sample_covers_ball():
    """Выборка шара покрывает сам шар, а не только границу."""
    h = 0.05
    S = ClosedBall((0, 0), 1)
    sample = sample_boundary(S, h)
    rng = np.random.default_rng(3)
    radius = np.sqrt(rng.uniform(0, 1, 500))
    angle = rng.uniform(0, 2 * math.pi, 500)
    probes = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    gaps = np.linalg.norm(probes[:, None, :] - sample[None, :, :], axis=2).min(axis=1)
    assert gaps.max() <= h + 1e-12
    assert np.all(np.linalg.norm(sample, axis=1) <= 1 + 1e-12)


def test_sample_bbox_restricts_points():
    S = ClosedBall((0, 0), 1)
    pts = S.sample(0.1, bbox=((0, 0), (0.5, 0.5)))
    assert len(pts) > 0
    assert np.all((pts >= -1e-15) & (pts <= 0.5 + 1e-15))


def test_sample_rejects_bad_resolution():
    with pytest.raises(UsageError):
        sample_boundary(Circle((0, 0), 1), 0.0)


def test_contains_and_diameter():
    S = ClosedBall((0, 0), 1)
    assert S.contains((0.5, 0))
    assert not S.contains((2, 0))
    assert S.diameter() == pytest.approx(2 * math.sqrt(2))
    assert Line((0, 0), (1, 1)).diameter() == math.inf


def test_hausdorff_distance():
    assert hausdorff_distance([(0, 0)], [(0, 0), (3, 4)]) == pytest.approx(5.0)


def test_reversal_mass_modes_for_dirac_at_center():
    """Выбранная проекция, хотя бы один минимизатор, все минимизаторы."""
    P = dirac((0, 0))
    S = Circle((0, 0), 1)
    assert reversal_mass(S, P.atoms, P.weights, (1, 0), 0.1) == pytest.approx(1.0)
    assert reversal_mass(S, P.atoms, P.weights, (-1, 0), 0.1) == 0.0
    assert reversal_mass(S, P.atoms, P.weights, (-1, 0), 0.1, "pointwise") == pytest.approx(1.0)
    assert reversal_mass(S, P.atoms, P.weights, (1, 0), 0.1, "set") == 0.0
    with pytest.raises(UsageError):
        reversal_mass(S, P.atoms, P.weights, (1, 0), 0.1, "unknown")


def test_projection_set_sample_of_continuum():
    """Образ центра окружности - вся окружность."""
    P = dirac((0, 0))
    image = projection_set_sample(Circle((0, 0), 1), P.atoms, P.weights)
    assert len(image) > 100
    np.testing.assert_allclose(np.linalg.norm(image, axis=1), 1.0, atol=1e-9)
    angles = np.arctan2(image[:, 1], image[:, 0])
    assert angles.min() < -3.0 and angles.max() > 3.0


def test_nowhere_density_witness_circle_in_disc():
    P = uniform_circle((0, 0), 1, 256)
    S = ClosedBall((0, 0), 1)
    image = projection_set_sample(S, P.atoms, P.weights)
    witness = nowhere_density_witness(S, image, [0.1, 0.02], max_points=8)
    assert witness["pass"]
    assert all(row["separation"] > 0 for row in witness["table"])


def test_nowhere_density_witness_cantor_line():
    P = cantor_measure((0, 0), (1, 0), 8)
    S = Line((0, 1), (1, 0), extent=2)
    image = projection_set_sample(S, P.atoms, P.weights)
    witness = nowhere_density_witness(S, image, [0.1, 0.01])
    assert witness["pass"]
    assert len(witness["table"]) == 2 * 32


def test_nowhere_density_witness_fails_when_image_fills_set():
    P = uniform_circle((0, 0), 1, 256)
    S = Circle((0, 0), 1)
    image = projection_set_sample(S, P.atoms, P.weights)
    witness = nowhere_density_witness(S, image, [0.1], max_points=8)
    assert not witness["pass"]


def test_sampled_image_reads_sample_as_curve():
    angles = 2 * math.pi * np.arange(128) / 128
    image = SampledImage(0.5 * np.column_stack([np.cos(angles), np.sin(angles)]), 1e-12)
    half = angles + math.pi / 128
    between = 0.5 * np.column_stack([np.cos(half), np.sin(half)])
    assert image.contains(between).all()
    assert not image.contains(0.99 * between).any()
    # Изолированные точки и щели канторова множества хордами не соединяются
    assert not SampledImage([(0, 0), (1, 0)], 1e-12).contains([(0.5, 0)]).any()
    cantor = SampledImage(cantor_measure((0, 0), (1, 0), 6).atoms, 1e-12)
    assert not cantor.contains([(0.5, 0)]).any()


# Ограниченные фигуры для проверок оракула проекции
bounded_shapes = {
    "шар": ClosedBall((0.1, -0.2), 0.25),
    "окружность": Circle((0, 0), 1.0),
    "отрезок": Segment((-1, 0.5), (1, -0.5)),
    "ломаная": Polyline([(-1, -1), (0, 0), (1, -1)]),
    "V-фигура": vshape_constraint(),
    "кантор": CantorSegment((0, 0), (1, 0), depth=3),
    "точки": FinitePointSet([(0, 0), (1, 1), (-1, 2)]),
}


def test_projection_is_idempotent():
    rng = np.random.default_rng(17)
    points = rng.uniform(-2, 2, size=(50, 2))
    for name, S in list(bounded_shapes.items()) + [("прямая", Line((0, 1), (1, 0)))]:
        for p in points:
            rep = S.project(p).representative
            assert S.project(rep).distance <= S.proj_tol, name


def test_projection_matches_dense_sampling():
    """Расстояние оракула совпадает с минимумом по выборке шага h с точностью h."""
    rng = np.random.default_rng(19)
    points = rng.uniform(-2, 2, size=(20, 2))
    for h in (1e-2, 1e-3):
        for name, S in bounded_shapes.items():
            _, dists = S.project_many(points)
            brute = cKDTree(S.sample(h)).query(points)[0]
            assert np.all(brute >= dists - 1e-12), (name, h)
            assert np.all(brute <= dists + h + 1e-12), (name, h)


def test_projection_is_stable_along_converging_points():
    """Проекции точек x_k -> x приближаются к проекции x."""
    cases = [
        (Circle((0, 0), 1.0), np.array([2.0, 0.0]), np.array([0.0, 1.0])),
        (ClosedBall((0, 0), 0.5), np.array([1.0, 1.0]), np.array([-1.0, 0.5])),
        (vshape_constraint(), np.array([0.0, 0.0]), np.array([0.5, 0.1])),
    ]
    for S, limit, direction in cases:
        target = S.project(limit).all_minimizers
        gaps = []
        for k in range(1, 21):
            rep = S.project(limit + 2.0 ** -k * direction).representative
            gaps.append(min(float(np.linalg.norm(rep - m)) for m in target))
        assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-5
