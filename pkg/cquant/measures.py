"""
Модуль мер: дискретные представления вероятностных мер P (квадратуры,
самоподобные меры, атомы Дирака, выборки из файла) и их образы T_*P
под выбранной проекцией.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from cquant import config
from cquant.errors import ConfigurationError, ResourceError
from cquant.geometry import CantorSegment, ConstraintSet, as_point, as_points

logger = logging.getLogger(__name__)

# Допуск на сумму весов
MASS_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Взвешенный конечный набор атомов x_j с весами w_j, sum w_j = 1."""

    atoms: np.ndarray
    weights: np.ndarray
    meta: str = "analytic-quadrature"

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.array(self.weights, dtype=float).ravel()
        if atoms.ndim != 2 or len(atoms) == 0:
            raise ConfigurationError("Мера должна иметь хотя бы один атом")
        if atoms.shape[1] not in (1, 2, 3):
            raise ConfigurationError(f"Размерность атомов {atoms.shape[1]} вне диапазона 1..3")
        if len(weights) != len(atoms):
            raise ConfigurationError(f"Число весов {len(weights)} не совпадает с числом атомов {len(atoms)}")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise ConfigurationError("Атомы и веса должны быть конечными")
        if np.any(weights < 0):
            raise ConfigurationError("Веса меры должны быть неотрицательными")
        if abs(weights.sum() - 1.0) > MASS_TOL:
            raise ConfigurationError(f"Сумма весов {weights.sum():.15g} отличается от 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return len(self.atoms)

    def support(self) -> np.ndarray:
        """Атомы положительного веса (выборка носителя K)."""
        return self.atoms[self.weights > 0]

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Интеграл f dP; f принимает массив атомов (m, D)."""
        return float(np.dot(self.weights, np.asarray(f(self.atoms), dtype=float)))

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def variance(self) -> float:
        """Полная дисперсия: интеграл |x - mean|^2 dP."""
        centered = self.atoms - self.mean()
        return float(self.weights @ np.einsum("ij,ij->i", centered, centered))

    def diameter(self) -> float:
        support = self.support()
        return float(np.linalg.norm(support.max(axis=0) - support.min(axis=0)))


def _equal_weights(count: int) -> np.ndarray:
    return np.full(count, 1.0 / count)


def uniform_circle(center, radius: float, nodes: int) -> DiscreteMeasure:
    """Равномерная мера на окружности: nodes атомов в равноотстоящих углах."""
    center = as_point(center, "center")
    if center.size != 2:
        raise ConfigurationError("Окружность задается в R^2")
    if int(nodes) != nodes or nodes < 3:
        raise ConfigurationError(f"Число узлов окружности должно быть >= 3: {nodes}")
    if not radius > 0:
        raise ConfigurationError(f"Радиус должен быть положительным: {radius}")
    angles = 2 * math.pi * np.arange(nodes) / nodes
    atoms = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    logger.debug(f"Равномерная мера на окружности: {nodes} узлов, радиус {radius}")
    return DiscreteMeasure(atoms, _equal_weights(int(nodes)), "analytic-quadrature")


def uniform_sphere(center, radius: float, nodes: int) -> DiscreteMeasure:
    """Приближение равномерной меры на сфере в R^3 решеткой Фибоначчи."""
    center = as_point(center, "center")
    if center.size != 3:
        raise ConfigurationError("Сфера задается в R^3")
    if int(nodes) != nodes or nodes < 4:
        raise ConfigurationError(f"Число узлов сферы должно быть >= 4: {nodes}")
    k = np.arange(nodes) + 0.5
    z = 1.0 - 2.0 * k / nodes
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    rho = np.sqrt(1.0 - z ** 2)
    atoms = center + radius * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return DiscreteMeasure(atoms, _equal_weights(int(nodes)), "analytic-quadrature")


def uniform_polyline(vertices, nodes: int) -> DiscreteMeasure:
    """Равномерная по длине мера на ломаной: середины nodes равных дуг."""
    vertices = as_points(vertices, name="vertices")
    if len(vertices) < 2:
        raise ConfigurationError("Ломаная должна иметь не менее двух вершин")
    if int(nodes) != nodes or nodes < 1:
        raise ConfigurationError(f"Число узлов должно быть >= 1: {nodes}")
    lengths = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    total = lengths.sum()
    if total <= 0:
        raise ConfigurationError("Ломаная нулевой длины")
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    arc = (np.arange(nodes) + 0.5) * total / nodes
    edge = np.clip(np.searchsorted(cumulative, arc, side="right") - 1, 0, len(lengths) - 1)
    t = (arc - cumulative[edge]) / np.where(lengths[edge] > 0, lengths[edge], 1.0)
    atoms = vertices[edge] + t[:, None] * (vertices[edge + 1] - vertices[edge])
    return DiscreteMeasure(atoms, _equal_weights(int(nodes)), "analytic-quadrature")


def uniform_segment(a, b, nodes: int) -> DiscreteMeasure:
    """Равномерная мера на отрезке [a, b] (правило средних точек)."""
    return uniform_polyline(np.array([as_point(a, "a"), as_point(b, "b")]), nodes)


def cantor_measure(a, b, depth: int) -> DiscreteMeasure:
    """Канторова мера: 2^depth атомов веса 2^-depth в серединах отрезков уровня depth."""
    if int(depth) != depth or depth < 1:
        raise ConfigurationError(f"Глубина канторовой меры должна быть >= 1: {depth}")
    if depth > config.MAX_CANTOR_DEPTH:
        raise ResourceError(f"Глубина канторовой меры {depth} > {config.MAX_CANTOR_DEPTH}")
    a, b = as_point(a, "a"), as_point(b, "b")
    segment = CantorSegment(a, b, int(depth))
    params = segment.interval_starts() + 0.5 * 3.0 ** -int(depth)
    atoms = a + params[:, None] * (b - a)
    logger.debug(f"Канторова мера глубины {depth}: {len(atoms)} атомов")
    return DiscreteMeasure(atoms, np.full(len(atoms), 0.5 ** int(depth)), "ifs")


def dirac(p) -> DiscreteMeasure:
    """Мера Дирака в точке p."""
    return DiscreteMeasure(as_point(p)[None, :], np.ones(1), "dirac")


def merge_atoms(atoms: np.ndarray, weights: np.ndarray, tol: float):
    """Склеивает атомы, совпадающие в пределах tol, суммируя веса."""
    tree = cKDTree(atoms)
    labels = np.full(len(atoms), -1)
    groups = 0
    for i in range(len(atoms)):
        if labels[i] >= 0:
            continue
        for j in tree.query_ball_point(atoms[i], tol):
            if labels[j] < 0:
                labels[j] = groups
        groups += 1
    first = np.unique(labels, return_index=True)[1]
    merged = np.bincount(labels, weights=weights, minlength=groups)
    return atoms[first], merged


def pushforward(P: DiscreteMeasure, S: ConstraintSet) -> DiscreteMeasure:
    """Образ T_*P меры P под выбранной проекцией на S."""
    images, _ = S.project_many(P.atoms)
    atoms, weights = merge_atoms(images, np.asarray(P.weights), S.proj_tol)
    # Пересчет суммы после склейки сохраняет нормировку до 1e-12
    weights = weights / weights.sum()
    if len(atoms) < len(images):
        logger.info(f"Образ меры: {len(images)} атомов склеены в {len(atoms)}")
    return DiscreteMeasure(atoms, weights, "pushforward")


def from_samples(path, dim: Optional[int] = None) -> DiscreteMeasure:
    """
    Загружает меру из текстового файла со строками `x y [z] weight`.

    Веса нормируются; NaN и отрицательные значения отвергаются.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Файл выборки не найден: {path}")
    try:
        data = np.loadtxt(path, ndmin=2, comments="#")
    except ValueError as e:
        logger.error(f"Ошибка чтения файла выборки {path}: {e}")
        raise ConfigurationError(f"Не удалось прочитать {path}: {e}") from e
    if data.size == 0:
        raise ConfigurationError(f"Файл выборки пуст: {path}")
    if data.shape[1] not in (2, 3, 4):
        raise ConfigurationError(f"Ожидается 2..4 столбца (координаты и вес), получено {data.shape[1]}")
    if dim is not None and data.shape[1] - 1 != dim:
        raise ConfigurationError(f"Размерность выборки {data.shape[1] - 1} не совпадает с {dim}")
    if np.any(np.isnan(data)) or not np.all(np.isfinite(data)):
        raise ConfigurationError(f"Файл {path} содержит NaN или бесконечности")
    atoms, weights = data[:, :-1], data[:, -1]
    if np.any(weights < 0):
        raise ConfigurationError(f"Файл {path} содержит отрицательные веса")
    total = weights.sum()
    if total <= 0:
        raise ConfigurationError(f"Суммарный вес в {path} равен нулю")
    logger.info(f"Загружена выборка {path}: {len(atoms)} атомов")
    return DiscreteMeasure(atoms, weights / total, "file")
