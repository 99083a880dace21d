"""
Модуль геометрии: замкнутые множества-ограничения S и метрическая проекция на них.

Проекция pi_S многозначна. Для каждой фигуры оракул ближайшей точки возвращает
всех кандидатов-минимизаторов, а базовый класс выбирает детерминированного
представителя: лексикографически наименьшую точку среди равноудаленных.
Центр сферы проецируется на целую сферу (континуум); в этом случае
возвращается точка с нулевым углом и tie_count = CONTINUUM.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, directed_hausdorff

from cquant import config
from cquant.errors import ConfigurationError, ResourceError, UsageError

logger = logging.getLogger(__name__)

# Признак континуума равноудаленных минимизаторов
CONTINUUM = -1


def as_point(value, name="point") -> np.ndarray:
    """Приводит число или последовательность к точке в R^D, D in {1, 2, 3}."""
    point = np.atleast_1d(np.asarray(value, dtype=float))
    if point.ndim != 1 or point.size not in (1, 2, 3):
        raise ConfigurationError(f"{name}: ожидается точка размерности 1..3, получено {np.shape(value)}")
    if not np.all(np.isfinite(point)):
        raise ConfigurationError(f"{name}: координаты должны быть конечными")
    return point


def as_points(values, dim: Optional[int] = None, name="points") -> np.ndarray:
    """Приводит набор точек к массиву формы (m, D)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise UsageError(f"{name}: ожидается непустой список точек")
    if dim is not None and arr.shape[1] != dim:
        raise ConfigurationError(f"{name}: размерность {arr.shape[1]} не совпадает с {dim}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name}: координаты должны быть конечными")
    return arr


def lexicographic_order(points: np.ndarray) -> np.ndarray:
    """Индексы точек в лексикографическом порядке координат."""
    return np.lexsort(points.T[::-1])


def dedupe_indices(points: np.ndarray, tol: float) -> List[int]:
    """Индексы точек без повторов: из совпадающих в пределах tol остается первая."""
    if len(points) < 2:
        return list(range(len(points)))
    drop = set()
    for i, j in sorted(cKDTree(points).query_pairs(tol)):
        if i not in drop:
            drop.add(j)
    return [k for k in range(len(points)) if k not in drop]


def dedupe_points(points: np.ndarray, tol: float) -> np.ndarray:
    return points[dedupe_indices(points, tol)]


@dataclass(frozen=True)
class ProjectionResult:
    """Результат проекции точки на S."""

    representative: np.ndarray
    distance: float
    tie_count: int
    all_minimizers: Tuple[np.ndarray, ...]

    @property
    def is_continuum(self) -> bool:
        return self.tie_count == CONTINUUM


class ConstraintSet(ABC):
    """
    Замкнутое множество S в R^D с оракулом ближайшей точки и сэмплером.

    Подклассы реализуют _candidates (кандидаты в минимизаторы с расстояниями)
    и sample; выбор представителя и подсчет равенств общий.
    """

    name = "set"

    def __init__(self, dim: int, proj_tol: Optional[float] = None):
        self.dim = dim
        if proj_tol is None:
            diameter = self.diameter()
            scale = diameter if math.isfinite(diameter) and diameter > 0 else 1.0
            proj_tol = config.PROJ_TOL_FACTOR * max(scale, 1.0)
        if proj_tol <= 0:
            raise ConfigurationError("proj_tol должен быть положительным")
        self.proj_tol = float(proj_tol)

    @abstractmethod
    def _candidates(self, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Кандидаты (точки (k, D), расстояния (k,), флаги континуума (k,))."""

    @abstractmethod
    def sample(self, resolution: float, bbox=None) -> np.ndarray:
        """Конечная выборка S с хаусдорфовым расстоянием не больше resolution."""

    @abstractmethod
    def bounding_box(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Ограничивающий брус или None для неограниченной фигуры."""

    def diameter(self) -> float:
        box = self.bounding_box()
        if box is None:
            return math.inf
        lo, hi = box
        return float(np.linalg.norm(hi - lo))

    def project(self, p) -> ProjectionResult:
        p = as_point(p)
        self._check_dim(p)
        points, dists, continuum = self._candidates(p)
        mask = dists <= float(dists.min()) + self.proj_tol
        minimizers, dists = points[mask], dists[mask]
        tie_continuum = bool(np.any(continuum[mask]))
        order = lexicographic_order(minimizers)
        minimizers, dists = minimizers[order], dists[order]
        keep = dedupe_indices(minimizers, self.proj_tol)
        minimizers, dists = minimizers[keep], dists[keep]
        tie_count = CONTINUUM if tie_continuum else len(minimizers)
        listed = tuple(m.copy() for m in minimizers[:config.MAX_MINIMIZERS])
        return ProjectionResult(minimizers[0].copy(), float(dists[0]), tie_count, listed)

    def project_many(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Представители и расстояния для массива точек (m, D)."""
        points = as_points(points, self.dim)
        reps = np.empty_like(points)
        dists = np.empty(len(points))
        for k, p in enumerate(points):
            result = self.project(p)
            reps[k] = result.representative
            dists[k] = result.distance
        return reps, dists

    def _resolve_rows(self, points, cand_pts, cand_d):
        """Векторный выбор ближайшего кандидата; строки с равенствами через project."""
        best = cand_d.min(axis=1)
        idx = cand_d.argmin(axis=1)
        reps = cand_pts[np.arange(len(points)), idx].copy()
        dists = best.copy()
        tied = np.count_nonzero(cand_d <= best[:, None] + self.proj_tol, axis=1) > 1
        for k in np.flatnonzero(tied):
            result = self.project(points[k])
            reps[k] = result.representative
            dists[k] = result.distance
        return reps, dists

    def contains(self, p, tol: Optional[float] = None) -> bool:
        tol = self.proj_tol if tol is None else tol
        return self.project(p).distance <= tol

    def _check_dim(self, p):
        if p.size != self.dim:
            raise ConfigurationError(f"Точка размерности {p.size} для множества размерности {self.dim}")

    def _require_bbox(self, bbox):
        if bbox is None:
            bbox = self.bounding_box()
        if bbox is None:
            raise ConfigurationError(f"{self.name}: неограниченная фигура требует ограничивающий брус")
        lo, hi = (np.asarray(b, dtype=float) for b in bbox)
        return lo, hi

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def _filter_bbox(points: np.ndarray, bbox) -> np.ndarray:
    if bbox is None:
        return points
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    mask = np.all((points >= lo - 1e-15) & (points <= hi + 1e-15), axis=1)
    return points[mask]


def _intervals(length: float, resolution: float) -> int:
    return max(1, math.ceil(length / resolution - 1e-9))


def _segment_sample(a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    k = _intervals(float(np.linalg.norm(b - a)), resolution)
    t = np.linspace(0.0, 1.0, k + 1)[:, None]
    return a + t * (b - a)


class ClosedBall(ConstraintSet):
    """Замкнутый шар B(center, radius)."""

    name = "ball"

    def __init__(self, center, radius: float, proj_tol: Optional[float] = None):
        self.center = as_point(center, "center")
        if not radius > 0:
            raise ConfigurationError(f"Радиус шара должен быть положительным: {radius}")
        self.radius = float(radius)
        super().__init__(self.center.size, proj_tol)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def _candidates(self, p):
        rep, dist = self.project_many(p[None, :])
        return rep, dist, np.zeros(1, dtype=bool)

    def project_many(self, points):
        points = as_points(points, self.dim)
        offset = points - self.center
        norm = np.linalg.norm(offset, axis=1)
        outside = norm > self.radius
        reps = points.copy()
        scale = self.radius / np.where(outside, norm, 1.0)
        reps[outside] = self.center + offset[outside] * scale[outside, None]
        dists = np.where(outside, norm - self.radius, 0.0)
        return reps, dists

    def sample(self, resolution, bbox=None):
        if not resolution > 0:
            raise UsageError("resolution должно быть положительным")
        lo, hi = self.bounding_box()
        if bbox is not None:
            lo = np.maximum(lo, np.asarray(bbox[0], dtype=float))
            hi = np.minimum(hi, np.asarray(bbox[1], dtype=float))
            if np.any(lo > hi):
                return np.empty((0, self.dim))
        if self.dim == 1:
            return _segment_sample(lo, hi, resolution)
        shell = Sphere(self.center, self.radius, proj_tol=self.proj_tol).sample(resolution, bbox)
        # Шаг сетки h/sqrt(D): вместе с точками границы дает хаусдорфово расстояние <= h
        step = resolution / math.sqrt(self.dim)
        axes = []
        for c, a, b in zip(self.center, lo, hi):
            first = math.ceil((a - c) / step - 1e-9)
            last = math.floor((b - c) / step + 1e-9)
            axes.append(c + step * np.arange(first, last + 1))
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        grid = grid[np.linalg.norm(grid - self.center, axis=1) <= self.radius]
        return np.vstack([grid, shell]) if len(shell) else grid


class Sphere(ConstraintSet):
    """Сфера (окружность при D = 2, пара точек при D = 1)."""

    name = "sphere"

    def __init__(self, center, radius: float, proj_tol: Optional[float] = None):
        self.center = as_point(center, "center")
        if not radius > 0:
            raise ConfigurationError(f"Радиус сферы должен быть положительным: {radius}")
        self.radius = float(radius)
        super().__init__(self.center.size, proj_tol)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def _zero_angle_point(self):
        point = self.center.copy()
        point[0] += self.radius
        return point

    def _candidates(self, p):
        offset = p - self.center
        norm = float(np.linalg.norm(offset))
        if self.dim == 1:
            pts = np.array([self.center - self.radius, self.center + self.radius])
            return pts, np.abs(pts[:, 0] - p[0]), np.zeros(2, dtype=bool)
        if norm <= self.proj_tol:
            return self._zero_angle_point()[None, :], np.array([self.radius]), np.ones(1, dtype=bool)
        rep = self.center + offset * (self.radius / norm)
        return rep[None, :], np.array([abs(norm - self.radius)]), np.zeros(1, dtype=bool)

    def project_many(self, points):
        points = as_points(points, self.dim)
        if self.dim == 1:
            return super().project_many(points)
        offset = points - self.center
        norm = np.linalg.norm(offset, axis=1)
        center_hit = norm <= self.proj_tol
        if np.any(center_hit):
            logger.debug(f"Проекция центра сферы: {int(center_hit.sum())} точек, выбран нулевой угол")
        safe = np.where(center_hit, 1.0, norm)
        reps = self.center + offset * (self.radius / safe)[:, None]
        reps[center_hit] = self._zero_angle_point()
        dists = np.where(center_hit, self.radius, np.abs(norm - self.radius))
        return reps, dists

    def sample(self, resolution, bbox=None):
        if not resolution > 0:
            raise UsageError("resolution должно быть положительным")
        c, r = self.center, self.radius
        if self.dim == 1:
            pts = np.array([c - r, c + r])
        elif self.dim == 2:
            count = _intervals(2 * math.pi * r, resolution)
            angles = 2 * math.pi * np.arange(count) / count
            pts = c + r * np.column_stack([np.cos(angles), np.sin(angles)])
        else:
            rings = _intervals(math.pi * r, resolution)
            pts = []
            for theta in math.pi * np.arange(rings + 1) / rings:
                count = _intervals(2 * math.pi * r * math.sin(theta), resolution)
                phi = 2 * math.pi * np.arange(count) / count
                ring = np.column_stack([
                    np.sin(theta) * np.cos(phi),
                    np.sin(theta) * np.sin(phi),
                    np.full(count, np.cos(theta)),
                ])
                pts.append(c + r * ring)
            pts = np.vstack(pts)
        return _filter_bbox(pts, bbox)


class Circle(Sphere):
    """Окружность в R^2."""

    name = "circle"

    def __init__(self, center, radius: float, proj_tol: Optional[float] = None):
        super().__init__(center, radius, proj_tol)
        if self.dim != 2:
            raise ConfigurationError("Окружность задается только в R^2")


class Segment(ConstraintSet):
    """Отрезок [a, b]."""

    name = "segment"

    def __init__(self, a, b, proj_tol: Optional[float] = None):
        self.a = as_point(a, "a")
        self.b = as_point(b, "b")
        if self.a.size != self.b.size:
            raise ConfigurationError("Концы отрезка разной размерности")
        if np.allclose(self.a, self.b, rtol=0.0, atol=0.0):
            raise ConfigurationError("Вырожденный отрезок: a == b")
        super().__init__(self.a.size, proj_tol)

    def bounding_box(self):
        return np.minimum(self.a, self.b), np.maximum(self.a, self.b)

    def _candidates(self, p):
        rep, dist = self.project_many(p[None, :])
        return rep, dist, np.zeros(1, dtype=bool)

    def project_many(self, points):
        points = as_points(points, self.dim)
        direction = self.b - self.a
        t = np.clip((points - self.a) @ direction / (direction @ direction), 0.0, 1.0)
        reps = self.a + t[:, None] * direction
        return reps, np.linalg.norm(points - reps, axis=1)

    def sample(self, resolution, bbox=None):
        if not resolution > 0:
            raise UsageError("resolution должно быть положительным")
        return _filter_bbox(_segment_sample(self.a, self.b, resolution), bbox)


class Line(ConstraintSet):
    """Прямая через point с направлением direction; extent - полудлина для выборки."""

    name = "line"

    def __init__(self, point, direction, extent: Optional[float] = None, proj_tol: Optional[float] = None):
        self.point = as_point(point, "point")
        direction = as_point(direction, "direction")
        norm = float(np.linalg.norm(direction))
        if direction.size != self.point.size or norm == 0.0:
            raise ConfigurationError("Направление прямой должно быть ненулевым и той же размерности")
        self.direction = direction / norm
        if extent is not None and not extent > 0:
            raise ConfigurationError("extent прямой должен быть положительным")
        self.extent = extent
        super().__init__(self.point.size, proj_tol)

    def bounding_box(self):
        if self.extent is None:
            return None
        ends = np.array([self.point - self.extent * self.direction, self.point + self.extent * self.direction])
        return ends.min(axis=0), ends.max(axis=0)

    def _candidates(self, p):
        rep, dist = self.project_many(p[None, :])
        return rep, dist, np.zeros(1, dtype=bool)

    def project_many(self, points):
        points = as_points(points, self.dim)
        t = (points - self.point) @ self.direction
        reps = self.point + t[:, None] * self.direction
        return reps, np.linalg.norm(points - reps, axis=1)

    def sample(self, resolution, bbox=None):
        if not resolution > 0:
            raise UsageError("resolution должно быть положительным")
        lo, hi = self._require_bbox(bbox)
        # Отсечение прямой брусом (метод плит)
        t_lo, t_hi = -math.inf, math.inf
        for k in range(self.dim):
            d, x = self.direction[k], self.point[k]
            if abs(d) < 1e-15:
                if x < lo[k] or x > hi[k]:
                    return np.empty((0, self.dim))
                continue
            t1, t2 = sorted(((lo[k] - x) / d, (hi[k] - x) / d))
            t_lo, t_hi = max(t_lo, t1), min(t_hi, t2)
        if t_lo > t_hi:
            return np.empty((0, self.dim))
        a = self.point + t_lo * self.direction
        b = self.point + t_hi * self.direction
        return _segment_sample(a, b, resolution)


class Polyline(ConstraintSet):
    """Ломаная по списку вершин."""

    name = "polyline"

    def __init__(self, vertices, proj_tol: Optional[float] = None):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or len(vertices) < 2:
            raise ConfigurationError("Ломаная должна иметь не менее двух вершин")
        self.vertices = as_points(vertices, name="vertices")
        super().__init__(self.vertices.shape[1], proj_tol)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def _feet(self, points):
        """Основания перпендикуляров на каждое звено: (m, E, D) и расстояния (m, E)."""
        a, b = self.vertices[:-1], self.vertices[1:]
        edge = b - a
        length2 = np.einsum("ij,ij->i", edge, edge)
        rel = points[:, None, :] - a[None, :, :]
        t = np.einsum("mej,ej->me", rel, edge) / np.where(length2 > 0, length2, 1.0)
        t = np.clip(t, 0.0, 1.0)
        feet = a[None] + t[..., None] * edge[None]
        return feet, np.linalg.norm(points[:, None, :] - feet, axis=2)

    def _candidates(self, p):
        feet, dists = self._feet(p[None, :])
        return feet[0], dists[0], np.zeros(len(dists[0]), dtype=bool)

    def project_many(self, points):
        points = as_points(points, self.dim)
        feet, dists = self._feet(points)
        return self._resolve_rows(points, feet, dists)

    def sample(self, resolution, bbox=None):
        if not resolution > 0:
            raise UsageError("resolution должно быть положительным")
        parts = [_segment_sample(a, b, resolution) for a, b in zip(self.vertices[:-1], self.vertices[1:])]
        return _filter_bbox(np.vstack(parts), bbox)


class Union(ConstraintSet):
    """Объединение конечного числа множеств."""

    name = "union"

    def __init__(self, members: Sequence[ConstraintSet], proj_tol: Optional[float] = None):
        members = list(members)
        if not members:
            raise ConfigurationError("Объединение должно содержать хотя бы одно множество")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise ConfigurationError(f"Члены объединения разной размерности: {sorted(dims)}")
        self.members = tuple(members)
        super().__init__(dims.pop(), proj_tol)

    def bounding_box(self):
        boxes = [m.bounding_box() for m in self.members]
        if any(b is None for b in boxes):
            return None
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def _candidates(self, p):
        pts, dists, flags = [], [], []
        for member in self.members:
            result = member.project(p)
            for m in result.all_minimizers:
                pts.append(m)
                dists.append(result.distance)
                flags.append(result.is_continuum)
        return np.array(pts), np.array(dists), np.array(flags, dtype=bool)

    def project_many(self, points):
        points = as_points(points, self.dim)
        reps, dists = zip(*(m.project_many(points) for m in self.members))
        cand_pts = np.stack(reps, axis=1)
        cand_d = np.stack(dists, axis=1)
        return self._resolve_rows(points, cand_pts, cand_d)

    def sample(self, resolution, bbox=None):
        parts = []
        for member in self.members:
            if bbox is None and member.bounding_box() is None:
                raise ConfigurationError("Неограниченный член объединения требует ограничивающий брус")
            parts.append(member.sample(resolution, bbox))
        return np.vstack(parts)


class CantorSegment(ConstraintSet):
    """
    Канторово множество глубины depth на отрезке [a, b]: объединение 2^depth
    замкнутых отрезков длины 3^-depth |b - a|.
    """

    name = "cantor"

    def __init__(self, a, b, depth: int, proj_tol: Optional[float] = None):
        self.a = as_point(a, "a")
        self.b = as_point(b, "b")
        if self.a.size != self.b.size or np.array_equal(self.a, self.b):
            raise ConfigurationError("Концы канторова отрезка должны различаться и иметь одну размерность")
        if int(depth) != depth or depth < 0:
            raise ConfigurationError(f"Глубина канторова множества должна быть целой и >= 0: {depth}")
        self.depth = int(depth)
        self.length = float(np.linalg.norm(self.b - self.a))
        super().__init__(self.a.size, proj_tol)

    def bounding_box(self):
        return np.minimum(self.a, self.b), np.maximum(self.a, self.b)

    def nearest_parameters(self, s: float) -> List[float]:
        """Ближайшие к s точки канторова множества на [0, 1] (одна или две при равенстве)."""
        if s <= 0.0:
            return [0.0]
        if s >= 1.0:
            return [1.0]
        lo, hi = 0.0, 1.0
        for _ in range(self.depth):
            third = (hi - lo) / 3.0
            left_end, right_start = lo + third, hi - third
            if s <= left_end:
                hi = left_end
            elif s >= right_start:
                lo = right_start
            else:
                return [left_end, right_start]
        return [s]

    def _candidates(self, p):
        direction = self.b - self.a
        s = float((p - self.a) @ direction / (direction @ direction))
        params = np.array(self.nearest_parameters(s))
        pts = self.a + params[:, None] * direction
        return pts, np.linalg.norm(pts - p, axis=1), np.zeros(len(params), dtype=bool)

    def interval_starts(self) -> np.ndarray:
        """Левые концы 2^depth отрезков на [0, 1]."""
        if self.depth > config.MAX_CANTOR_DEPTH:
            raise ResourceError(f"Глубина {self.depth} > {config.MAX_CANTOR_DEPTH}: слишком много отрезков")
        starts = np.zeros(1)
        for level in range(1, self.depth + 1):
            starts = np.concatenate([starts, starts + 2.0 * 3.0 ** -level])
        return np.sort(starts)

    def sample(self, resolution, bbox=None):
        if not resolution > 0:
            raise UsageError("resolution должно быть положительным")
        width = 3.0 ** -self.depth
        starts = self.interval_starts()
        if width * self.length / 2.0 <= resolution:
            params = starts + width / 2.0
        else:
            k = _intervals(width * self.length, resolution)
            params = (starts[:, None] + width * np.linspace(0.0, 1.0, k + 1)[None, :]).ravel()
        pts = self.a + params[:, None] * (self.b - self.a)
        return _filter_bbox(pts, bbox)


class FinitePointSet(ConstraintSet):
    """Конечное множество точек."""

    name = "points"

    def __init__(self, points, proj_tol: Optional[float] = None):
        self.points = as_points(points, name="points")
        super().__init__(self.points.shape[1], proj_tol)

    def bounding_box(self):
        return self.points.min(axis=0), self.points.max(axis=0)

    def _candidates(self, p):
        dists = np.linalg.norm(self.points - p, axis=1)
        return self.points, dists, np.zeros(len(dists), dtype=bool)

    def project_many(self, points):
        points = as_points(points, self.dim)
        dists = cdist(points, self.points)
        cand = np.broadcast_to(self.points, (len(points),) + self.points.shape)
        return self._resolve_rows(points, cand, dists)

    def sample(self, resolution, bbox=None):
        return _filter_bbox(self.points.copy(), bbox)


class PreimageIndex:
    """
    Выбранные проекции и полные множества минимизаторов атомов.

    Нужен для масс обратных образов шаров: selector (выбранная проекция
    в шаре), pointwise (хотя бы один минимизатор в шаре), set (все
    минимизаторы в шаре).
    """

    MODES = ("selector", "pointwise", "set")

    def __init__(self, S: ConstraintSet, atoms: np.ndarray, weights: np.ndarray):
        atoms = as_points(atoms, S.dim, "atoms")
        self.S = S
        self.weights = np.asarray(weights, dtype=float)
        results = [S.project(x) for x in atoms]
        self.atoms = atoms
        self.selected = np.array([res.representative for res in results])
        self.distances = np.array([res.distance for res in results])
        self.continuum = np.array([res.is_continuum for res in results], dtype=bool)
        width = max(len(res.all_minimizers) for res in results)
        self.minimizers = np.full((len(results), width, S.dim), np.nan)
        for k, res in enumerate(results):
            self.minimizers[k, :len(res.all_minimizers)] = np.array(res.all_minimizers)
        self._tree = cKDTree(self.selected)
        if np.any(self.continuum):
            logger.info(f"Континуум минимизаторов у {int(self.continuum.sum())} атомов, выбран представитель")

    def mass(self, center, eps: float, mode: str = "selector") -> float:
        center = as_point(center, "center")
        if mode not in self.MODES:
            raise UsageError(f"Неизвестный режим обратного образа: {mode}")
        if mode == "selector":
            idx = self._tree.query_ball_point(center, eps)
            return float(self.weights[idx].sum())
        gaps = np.linalg.norm(self.minimizers - center, axis=2)
        to_atom = np.linalg.norm(self.atoms - center, axis=1)
        if mode == "pointwise":
            hit = np.nanmin(gaps, axis=1) <= eps
            # Сфера равноудаленных точек задевает шар
            hit |= self.continuum & (np.abs(to_atom - self.distances) <= eps)
        else:
            hit = np.nanmax(gaps, axis=1) <= eps
            hit &= ~self.continuum | (to_atom + self.distances <= eps)
        return float(self.weights[hit].sum())

    def image_sample(self, resolution: Optional[float] = None) -> np.ndarray:
        """Выборка полного образа pi_S(K) по атомам положительного веса."""
        support = self.weights > 0
        parts = [m[~np.isnan(m[:, 0])] for m in self.minimizers[support]]
        cont_atoms = np.flatnonzero(support & self.continuum)
        if len(cont_atoms):
            h = resolution if resolution else max(self.S.diameter(), 1.0) / 256
            cloud = self.S.sample(h)
            for k in cont_atoms:
                gap = np.abs(np.linalg.norm(cloud - self.atoms[k], axis=1) - self.distances[k])
                parts.append(cloud[gap <= max(self.S.proj_tol, 1e-9 * self.distances[k])])
        return dedupe_points(np.vstack(parts), self.S.proj_tol)


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Расстояния от точки p (или точек, по строкам) до отрезков [a_k, b_k]."""
    edge = b - a
    length2 = np.einsum("ij,ij->i", edge, edge)
    t = np.einsum("ij,ij->i", p - a, edge) / np.where(length2 > 0, length2, 1.0)
    feet = a + np.clip(t, 0.0, 1.0)[:, None] * edge
    return np.linalg.norm(p - feet, axis=1)


class SampledImage:
    """
    Конечная выборка образа pi_S(K), прочитанная как набор хорд.

    Каждая точка соединена с двумя ближайшими соседями, если они не дальше
    CHORD_FACTOR медианного шага выборки. Точка считается лежащей на образе,
    если она ближе tol к какой-нибудь хорде или точке выборки; tol равен
    proj_tol плюс наибольший прогиб выборки между соседями.
    """

    def __init__(self, points, proj_tol: float):
        self.points = np.asarray(points, dtype=float)
        self._tree = cKDTree(self.points)
        self.neighbors = np.full((len(self.points), 2), -1, dtype=int)
        self.max_chord = 0.0
        sag = 0.0
        if len(self.points) >= 3:
            dist, idx = self._tree.query(self.points, k=3)
            limit = config.CHORD_FACTOR * float(np.median(dist[:, 1]))
            near = dist[:, 1:] <= limit
            self.neighbors = np.where(near, idx[:, 1:], -1)
            if np.any(near):
                self.max_chord = float(dist[:, 1:][near].max())
            first, second = self.points[idx[:, 1]], self.points[idx[:, 2]]
            # Прогиб считается только там, где соседи лежат по разные стороны
            between = near.all(axis=1) & (np.einsum("ij,ij->i", first - self.points, second - self.points) < 0)
            if np.any(between):
                sag = float(_segment_distance(self.points[between], first[between], second[between]).max())
        self.tol = proj_tol + sag

    def distance(self, points) -> np.ndarray:
        """Расстояния от точек до хорд выборки."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        nearest, _ = self._tree.query(points)
        out = nearest.copy()
        if self.max_chord == 0.0:
            return out
        for k, p in enumerate(points):
            idx = np.asarray(self._tree.query_ball_point(p, nearest[k] + self.max_chord), dtype=int)
            starts = np.repeat(idx, 2)
            ends = self.neighbors[idx].ravel()
            keep = ends >= 0
            if np.any(keep):
                gaps = _segment_distance(p[None, :], self.points[starts[keep]], self.points[ends[keep]])
                out[k] = min(out[k], float(gaps.min()))
        return out

    def contains(self, points) -> np.ndarray:
        return self.distance(points) <= self.tol


def project(S: ConstraintSet, p) -> ProjectionResult:
    """Ближайшая точка S к p с детерминированным выбором при равенстве."""
    return S.project(p)


def sample_boundary(S: ConstraintSet, resolution: float, bbox=None) -> np.ndarray:
    """Конечная выборка S (внутри bbox, если задан) с шагом не больше resolution."""
    if not resolution > 0:
        raise UsageError("resolution должно быть положительным")
    return S.sample(resolution, bbox)


def project_set(S: ConstraintSet, pts) -> Tuple[np.ndarray, np.ndarray]:
    """Поточечная проекция выбранным представителем: образы и расстояния."""
    pts = as_points(pts, S.dim, "pts")
    return S.project_many(pts)


def projection_set_sample(S: ConstraintSet, atoms, weights, resolution: Optional[float] = None) -> np.ndarray:
    """Конечная выборка многозначного образа pi_S(K)."""
    return PreimageIndex(S, atoms, weights).image_sample(resolution)


def reversal_mass(S: ConstraintSet, atoms, weights, center, eps: float, mode: str = "selector") -> float:
    """Масса обратного образа шара B(center, eps) в заданном режиме."""
    return PreimageIndex(S, atoms, weights).mass(center, eps, mode)


def hausdorff_distance(A, B) -> float:
    """Симметричное хаусдорфово расстояние двух конечных множеств."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    return max(directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0])


def nowhere_density_witness(S: ConstraintSet, image, radii, max_points: int = 32) -> dict:
    """
    Для точек образа и радиусов ищет точку S в шаре радиуса rho, удаленную
    от хорд выборки образа больше чем на допуск SampledImage.
    """
    image = as_points(image, S.dim, "image")
    sampled = SampledImage(image, S.proj_tol)
    stride = max(1, len(image) // max_points)
    rows = []
    for y in image[::stride]:
        for rho in radii:
            box = (y - rho, y + rho)
            cloud = S.sample(rho / 4.0, box)
            cloud = cloud[np.linalg.norm(cloud - y, axis=1) <= rho] if len(cloud) else cloud
            gap = sampled.distance(cloud) if len(cloud) else np.zeros(0)
            found = bool(len(gap)) and float(gap.max()) > sampled.tol
            rows.append({
                "point": y.tolist(),
                "radius": float(rho),
                "separation": float(gap.max()) if len(gap) else 0.0,
                "found": found,
            })
    verdict = all(row["found"] for row in rows)
    logger.info(f"Свидетель нигде не плотности: {'найден' if verdict else 'не найден'} для {len(rows)} пар")
    return {"pass": verdict, "table": rows}
