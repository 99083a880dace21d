"""
Модуль квантователя: поиск оптимальных n-точечных кодбуков внутри S,
ошибки e_{n,r}, e_{inf,r}, их разности, весовое разложение и сдвиг
кодовых точек с образа проекции.
"""
import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, islice
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from cquant import config
from cquant.errors import ConfigurationError, ResourceError, UsageError
from cquant.geometry import ConstraintSet, SampledImage, as_points, dedupe_indices, projection_set_sample
from cquant.measures import DiscreteMeasure

logger = logging.getLogger(__name__)

INF = math.inf
# Метка теплого старта в best_seed
WARM_SEED = -1
CURVE_HEADER = ["n", "r", "e", "e_inf", "e_hat", "e_tilde", "iters", "restarts", "best_seed", "clamped"]


def check_order(r) -> float:
    """Порядок ошибки: вещественное r >= 1 или бесконечность."""
    if isinstance(r, str):
        r = INF if r.strip().lower() in ("inf", "infinity", "∞") else float(r)
    r = float(r)
    if math.isnan(r) or r < 1:
        raise UsageError(f"Порядок r должен быть >= 1 или inf, получено {r}")
    return r


def format_float(value) -> str:
    """Число с FLOAT_DIGITS значащими цифрами."""
    return f"{float(value):.{config.FLOAT_DIGITS}g}"


@dataclass(frozen=True)
class Codebook:
    """Конечный квантователь alpha внутри S."""

    points: np.ndarray
    r: float
    seed: int = 0
    converged: bool = False
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        object.__setattr__(self, "points", points)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Assignment:
    """Владелец (ближайшая кодовая точка) и расстояние для каждого атома."""

    owner: np.ndarray
    dist: np.ndarray


@dataclass
class SolverOptions:
    restarts: int = field(default_factory=lambda: config.RESTARTS)
    max_iters: int = field(default_factory=lambda: config.MAX_ITERS)
    tol: float = field(default_factory=lambda: config.TOL)
    seed: int = field(default_factory=lambda: config.DEFAULT_SEED)
    threads: int = field(default_factory=lambda: config.THREADS)
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ConfigurationError("restarts должно быть >= 1")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters должно быть >= 1")
        if not self.tol >= 0:
            raise ConfigurationError("tol должно быть неотрицательным")


@dataclass
class CurveRow:
    n: int
    r: float
    e: float
    e_inf: float
    e_hat: float
    e_tilde: float
    iters: int
    restarts: int
    best_seed: int
    clamped: bool
    on_projection: int = 0


@dataclass
class ErrorCurve:
    """Строки (n, e, e_inf, e_hat, e_tilde, метаданные решателя)."""

    rows: List[CurveRow]
    codebooks: List[Codebook] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CURVE_HEADER)
            for row in self.rows:
                writer.writerow([
                    row.n, format_float(row.r), format_float(row.e), format_float(row.e_inf),
                    format_float(row.e_hat), format_float(row.e_tilde), row.iters, row.restarts,
                    row.best_seed, int(row.clamped),
                ])
        logger.info(f"Кривая ошибок сохранена в {path}")
        return path

    @classmethod
    def from_values(cls, n_list: Sequence[int], e_hat: Sequence[float], r: float = 2.0) -> "ErrorCurve":
        """Кривая только из значений e_hat (e_tilde = e_hat) для анализа размерности."""
        rows = [CurveRow(int(n), r, float(v), 0.0, float(v), float(v), 0, 0, 0, False)
                for n, v in zip(n_list, e_hat)]
        return cls(rows)


@dataclass(frozen=True)
class WeightDiagnostics:
    lam: float
    term_weighted: float
    term_lambda: float
    e_hat_1: float
    residual: float
    max_abs_weight: float
    level_masses: Tuple[Tuple[float, float], ...]
    weights: np.ndarray


def _power_mean(weights: np.ndarray, dist: np.ndarray, r: float) -> float:
    if math.isinf(r):
        return float(dist[weights > 0].max())
    return float(np.dot(weights, dist ** r) ** (1.0 / r))


def _points_of(alpha) -> np.ndarray:
    points = alpha.points if isinstance(alpha, Codebook) else np.asarray(alpha, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.size == 0:
        raise UsageError("Пустой кодбук")
    return points


def assign(P: DiscreteMeasure, alpha) -> Assignment:
    """Ближайшая кодовая точка для каждого атома; равенства к меньшему индексу."""
    points = _points_of(alpha)
    if points.shape[1] != P.dim:
        raise UsageError(f"Размерность кодбука {points.shape[1]} не совпадает с мерой {P.dim}")
    dists = cdist(P.atoms, points)
    owner = dists.argmin(axis=1)
    return Assignment(owner, dists[np.arange(len(owner)), owner])


def error(P: DiscreteMeasure, alpha, r) -> float:
    """e_r(P; alpha): (sum w_j dist_j^r)^(1/r) или max dist_j при r = inf."""
    r = check_order(r)
    return _power_mean(P.weights, assign(P, alpha).dist, r)


def e_infinity(P: DiscreteMeasure, S: ConstraintSet, r) -> float:
    """Предел e_{inf,r}(P;S) по формуле проекции: (интеграл rho(x, pi_S(x))^r dP)^(1/r)."""
    r = check_order(r)
    _, dists = S.project_many(P.atoms)
    return _power_mean(P.weights, dists, r)


def error_hat(e: float, e_inf: float, r: float) -> Tuple[float, bool]:
    """(e^r - e_inf^r)^(1/r) с обрезкой отрицательного подкоренного к нулю и флагом."""
    if math.isinf(r):
        gap = e - e_inf
        return max(gap, 0.0), gap < 0
    radicand = e ** r - e_inf ** r
    if radicand < 0:
        return 0.0, True
    return radicand ** (1.0 / r), False


def _cell_stats(P: DiscreteMeasure, owner: np.ndarray, k: int):
    mass = np.bincount(owner, weights=P.weights, minlength=k)
    sums = np.column_stack([
        np.bincount(owner, weights=P.weights * P.atoms[:, d], minlength=k) for d in range(P.dim)
    ])
    return mass, sums


def _repair_empty(points, empty, S, P, dist) -> int:
    """Переносит пустые кодовые точки в проекции самых дальних атомов."""
    empty = np.flatnonzero(empty)
    if len(empty) == 0:
        return 0
    farthest = np.argsort(-np.where(P.weights > 0, dist, -np.inf), kind="stable")[:len(empty)]
    reps, _ = S.project_many(P.atoms[farthest])
    points[empty[:len(reps)]] = reps
    logger.debug(f"Восстановлено пустых ячеек: {len(empty)}")
    return len(empty)


def lloyd_step_r2(P: DiscreteMeasure, alpha: Codebook, S: ConstraintSet) -> Codebook:
    """Шаг Ллойда для r = 2: каждая точка -> проекция взвешенного центроида ячейки."""
    points = _points_of(alpha).copy()
    assignment = assign(P, points)
    mass, sums = _cell_stats(P, assignment.owner, len(points))
    filled = mass > 0
    if not np.any(filled):
        raise UsageError("Все ячейки кодбука пусты")
    points[filled], _ = S.project_many(sums[filled] / mass[filled, None])
    repaired = _repair_empty(points, ~filled, S, P, assignment.dist)
    meta = dict(alpha.meta) if isinstance(alpha, Codebook) else {}
    meta["repairs"] = meta.get("repairs", 0) + repaired
    return Codebook(points, 2.0, getattr(alpha, "seed", 0), False, meta)


def _cell_descent(x: np.ndarray, w: np.ndarray, a: np.ndarray, S: ConstraintSet, r: float, tol: float) -> np.ndarray:
    """
    Проекционный градиент с поиском шага Армихо для одной ячейки.

    Атомы, совпадающие с текущей точкой, не входят в градиент и в нормировку
    шага (как в итерации Вейсфельда); иначе при r < 2 шаг вырождается в ноль.
    """

    def objective(point):
        return float(np.dot(w, np.linalg.norm(x - point, axis=1) ** r))

    f_cur = objective(a)
    for _ in range(config.INNER_ITERS):
        diff = a - x
        dist = np.linalg.norm(diff, axis=1)
        away = dist > S.proj_tol
        if not np.any(away):
            break
        scale = w[away] * dist[away] ** (r - 2.0)
        grad = r * (scale @ diff[away])
        step = 1.0 / (r * scale.sum())
        accepted = None
        for _ in range(config.MAX_HALVINGS):
            candidate = S.project(a - step * grad).representative
            f_new = objective(candidate)
            if f_new <= f_cur + config.ARMIJO * float(grad @ (candidate - a)) and f_new <= f_cur:
                accepted = candidate
                break
            step /= 2.0
        if accepted is None:
            break
        gain = f_cur - f_new
        a, f_cur = accepted, f_new
        if gain <= tol * max(f_cur, 1e-300):
            break
    return a


def descent_step(P: DiscreteMeasure, alpha: Codebook, S: ConstraintSet, r: float, tol: float = None) -> Codebook:
    """Шаг для произвольного конечного r: спуск внутри каждой ячейки."""
    tol = config.TOL if tol is None else tol
    points = _points_of(alpha).copy()
    assignment = assign(P, points)
    mass = np.bincount(assignment.owner, weights=P.weights, minlength=len(points))
    filled = mass > 0
    if not np.any(filled):
        raise UsageError("Все ячейки кодбука пусты")
    for i in np.flatnonzero(filled):
        cell = assignment.owner == i
        points[i] = _cell_descent(P.atoms[cell], P.weights[cell], points[i], S, r, tol)
    repaired = _repair_empty(points, ~filled, S, P, assignment.dist)
    meta = dict(alpha.meta)
    meta["repairs"] = meta.get("repairs", 0) + repaired
    return Codebook(points, r, alpha.seed, False, meta)


def _distinct_support(P: DiscreteMeasure) -> Tuple[np.ndarray, np.ndarray]:
    support = P.weights > 0
    atoms, weights = P.atoms[support], P.weights[support]
    keep = np.unique(atoms, axis=0, return_index=True)[1]
    return atoms[np.sort(keep)], weights[np.sort(keep)]


def _initial_points(P: DiscreteMeasure, S: ConstraintSet, n: int, seed: int) -> np.ndarray:
    atoms, weights = _distinct_support(P)
    k = min(n, len(atoms))
    centers, _ = kmeans_plusplus(atoms, n_clusters=k, sample_weight=weights, random_state=seed)
    reps, _ = S.project_many(centers)
    return reps


def _finalize(points: np.ndarray, S: ConstraintSet) -> np.ndarray:
    return points[dedupe_indices(points, S.proj_tol)]


def _run_lloyd(P, S, n, r, seed, opts: SolverOptions, start=None):
    points = _initial_points(P, S, n, seed) if start is None else np.array(start, dtype=float)
    codebook = Codebook(points, r, seed, False, {"repairs": 0})
    best_points, best_err = codebook.points.copy(), error(P, codebook, r)
    current = best_err
    iters, converged = 0, False
    for iters in range(1, opts.max_iters + 1):
        if r == 2.0:
            codebook = lloyd_step_r2(P, codebook, S)
        else:
            codebook = descent_step(P, codebook, S, r, opts.tol)
        err = error(P, codebook, r)
        if err < best_err:
            best_points, best_err = codebook.points.copy(), err
        if abs(current - err) <= opts.tol * max(current, 1e-300):
            converged = True
            current = err
            break
        current = err
    meta = {"iters": iters, "repairs": codebook.meta.get("repairs", 0)}
    return Codebook(_finalize(best_points, S), r, seed, converged, meta), best_err


def _covering_box(P: DiscreteMeasure, S: ConstraintSet):
    box = S.bounding_box()
    if box is not None:
        return box
    support = P.support()
    reps, dists = S.project_many(support)
    pad = float(dists.max())
    cloud = np.vstack([support, reps])
    return cloud.min(axis=0) - pad, cloud.max(axis=0) + pad


def _candidates(P, S, resolution, box, extra=None, limit=4000):
    cand = S.sample(resolution, box)
    if len(cand) > limit:
        stride = math.ceil(len(cand) / limit)
        logger.debug(f"Кандидатов {len(cand)}, прореживание с шагом {stride}")
        cand = cand[::stride]
    if extra is not None and len(extra):
        cand = np.vstack([cand, extra])
    return cand


def gonzalez_centers(dist: np.ndarray, n: int, first: int) -> List[int]:
    """Жадный выбор: открыть кандидата, ближайшего к самому дальнему непокрытому атому."""
    opened = [int(dist[first].argmin())]
    cover = dist[:, opened[0]].copy()
    while len(opened) < min(n, dist.shape[1]):
        far = int(cover.argmax())
        if cover[far] <= 0:
            break
        choice = int(dist[far].argmin())
        opened.append(choice)
        cover = np.minimum(cover, dist[:, choice])
    return opened


def one_swap_search(dist: np.ndarray, centers: List[int], max_rounds: int, pool: int = 64) -> Tuple[List[int], int]:
    """Локальный поиск обменами одного центра на кандидата, покрывающего узкое место."""
    centers = list(centers)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        cover = dist[:, centers]
        nearest = cover.min(axis=1)
        err = float(nearest.max())
        bottleneck = int(nearest.argmax())
        options = np.flatnonzero(dist[bottleneck] < err)
        if len(options) == 0:
            break
        options = options[np.argsort(dist[bottleneck, options], kind="stable")[:pool]]
        if len(centers) == 1:
            without = [np.full(len(dist), np.inf)]
        else:
            order = np.argsort(cover, axis=1, kind="stable")
            first = np.take_along_axis(cover, order[:, :1], axis=1)[:, 0]
            second = np.take_along_axis(cover, order[:, 1:2], axis=1)[:, 0]
            without = [np.where(order[:, 0] == i, second, first) for i in range(len(centers))]
        best = (err, None, None)
        for i, rest in enumerate(without):
            values = np.minimum(rest[:, None], dist[:, options]).max(axis=0)
            j = int(values.argmin())
            if values[j] < best[0] - 1e-15:
                best = (float(values[j]), i, int(options[j]))
        if best[1] is None:
            break
        centers[best[1]] = best[2]
    return centers, rounds


def _run_covering(P, S, n, seed, opts: SolverOptions, start=None):
    """Решатель r = inf: затравка дальней точкой по кандидатам и обмены."""
    support = P.support()
    box = _covering_box(P, S)
    diag = float(np.linalg.norm(np.asarray(box[1]) - np.asarray(box[0])))
    resolution = max(diag, 1e-12) / 64.0
    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(support)))
    incumbent = None if start is None else np.array(start, dtype=float)
    best_points, best_err, rounds_total = None, INF, 0
    for _ in range(2):
        cand = _candidates(P, S, resolution, box, incumbent)
        dist = cdist(support, cand)
        centers = gonzalez_centers(dist, n, first)
        if incumbent is not None:
            tail = list(range(len(cand) - len(incumbent), len(cand)))
            if dist[:, tail].min(axis=1).max() < dist[:, centers].min(axis=1).max():
                centers = tail
        centers, rounds = one_swap_search(dist, centers, opts.max_iters)
        rounds_total += rounds
        err = float(dist[:, centers].min(axis=1).max())
        if err < best_err:
            best_points, best_err = cand[centers].copy(), err
        incumbent = best_points
        if err <= 0:
            break
        resolution = err / 8.0
    meta = {"iters": rounds_total, "repairs": 0}
    return Codebook(_finalize(best_points, S), INF, seed, True, meta), best_err


def solve(P: DiscreteMeasure, S: ConstraintSet, n: int, r, opts: Optional[SolverOptions] = None) -> Tuple[Codebook, float]:
    """
    Лучший кодбук из opts.restarts запусков с сидами seed..seed+restarts-1.

    r = 2 - итерации Ллойда, конечное r - проекционный спуск по ячейкам,
    r = inf - покрытие по выборке S. Возвращаемая ошибка не больше ошибки
    любой промежуточной итерации.
    """
    opts = opts or SolverOptions()
    r = check_order(r)
    if int(n) != n or n < 1:
        raise UsageError(f"n должно быть целым >= 1: {n}")
    if P.dim != S.dim:
        raise ConfigurationError(f"Размерность меры {P.dim} не совпадает с размерностью S {S.dim}")
    n = int(n)
    distinct = len(_distinct_support(P)[0])
    if n > distinct:
        logger.warning(f"n = {n} больше числа различных атомов {distinct}: кодбук будет меньше n")

    def task(seed, start=None):
        if math.isinf(r):
            return _run_covering(P, S, n, seed, opts, start)
        return _run_lloyd(P, S, n, r, seed, opts, start)

    seeds = [opts.seed + k for k in range(opts.restarts)]
    workers = opts.threads if opts.threads > 0 else (os.cpu_count() or 1)
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            results = list(pool.map(task, seeds))
    else:
        results = [task(seed) for seed in seeds]
    if opts.warm_start is not None and len(opts.warm_start):
        warm = _warm_points(P, S, n, np.asarray(opts.warm_start, dtype=float))
        codebook, err = task(opts.seed, warm)
        results.append((Codebook(codebook.points, r, WARM_SEED, codebook.converged, codebook.meta), err))

    best_index = min(range(len(results)), key=lambda k: (results[k][1], k))
    codebook, err = results[best_index]
    meta = dict(codebook.meta)
    meta.update({
        "restarts": len(results),
        "best_seed": codebook.seed,
        "iters_total": int(sum(res[0].meta.get("iters", 0) for res in results)),
        "oversized": n > distinct,
    })
    logger.info(f"n={n}, r={r:g}: ошибка {err:.12g}, лучший сид {codebook.seed}")
    return Codebook(codebook.points, r, codebook.seed, codebook.converged, meta), err


def _warm_points(P, S, n, previous):
    """Предыдущий кодбук, дополненный по одной точке проекцией самого дальнего атома."""
    points = list(previous[:n])
    _, proj_d = S.project_many(P.atoms)
    dist = np.where(P.weights > 0, assign(P, previous).dist, -np.inf)
    while len(points) < n:
        # Избыток над расстоянием до S: у уже покрытого атома он нулевой
        far = int((dist - proj_d).argmax())
        rep = S.project(P.atoms[far]).representative
        points.append(rep)
        dist = np.minimum(dist, np.linalg.norm(P.atoms - rep, axis=1))
    return np.array(points)


def brute_force_solve(P: DiscreteMeasure, candidates, n: int, r) -> Tuple[Codebook, float]:
    """Точный минимум ошибки по всем n-подмножествам кандидатов."""
    r = check_order(r)
    cand = as_points(candidates, P.dim, "candidates")
    if int(n) != n or not 1 <= n <= len(cand):
        raise UsageError(f"n должно быть в диапазоне 1..{len(cand)}: {n}")
    n = int(n)
    total = math.comb(len(cand), n)
    if total > config.BRUTE_FORCE_BUDGET:
        raise ResourceError(f"Полный перебор: {total} сочетаний > {config.BRUTE_FORCE_BUDGET}")
    support = P.weights > 0
    dist = cdist(P.atoms[support], cand)
    weights = P.weights[support]
    powered = dist if math.isinf(r) else dist ** r
    chunk = max(1, 2_000_000 // max(1, len(dist) * n))
    combos_iter = combinations(range(len(cand)), n)
    best_value, best_combo = INF, None
    while True:
        block = np.array(list(islice(combos_iter, chunk)), dtype=int)
        if len(block) == 0:
            break
        nearest = powered[:, block].min(axis=2)
        values = nearest.max(axis=0) if math.isinf(r) else weights @ nearest
        k = int(values.argmin())
        if values[k] < best_value:
            best_value, best_combo = float(values[k]), block[k]
    err = best_value if math.isinf(r) else best_value ** (1.0 / r)
    logger.info(f"Полный перебор {total} сочетаний: ошибка {err:.12g}")
    return Codebook(cand[best_combo], r, 0, True, {"combinations": total}), err


def image_of(P: DiscreteMeasure, S: ConstraintSet) -> SampledImage:
    """Выборка pi_S(K) по носителю P, прочитанная как набор хорд."""
    return SampledImage(projection_set_sample(S, P.atoms, P.weights), S.proj_tol)


def count_on_projection(alpha, S: ConstraintSet, P: DiscreteMeasure, image: Optional[SampledImage] = None) -> int:
    """Число кодовых точек, лежащих на образе pi_S(K) с точностью до шага его выборки."""
    image = image if image is not None else image_of(P, S)
    return int(image.contains(_points_of(alpha)).sum())


def error_curve(P: DiscreteMeasure, S: ConstraintSet, r, n_list: Sequence[int],
                opts: Optional[SolverOptions] = None) -> ErrorCurve:
    """Решение для каждого n из n_list и строки e, e_inf, e_hat, e_tilde."""
    opts = opts or SolverOptions()
    r = check_order(r)
    n_list = [int(n) for n in n_list]
    if not n_list or n_list[0] < 1 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise UsageError(f"n_list должен строго возрастать и начинаться с n >= 1: {n_list}")
    e_inf = e_infinity(P, S, r)
    image = image_of(P, S)
    rows, codebooks = [], []
    previous = None
    for n in n_list:
        row_opts = SolverOptions(opts.restarts, opts.max_iters, opts.tol, opts.seed, opts.threads, previous)
        codebook, e = solve(P, S, n, r, row_opts)
        e_hat, clamped = error_hat(e, e_inf, r)
        if clamped:
            logger.warning(f"n={n}: отрицательное подкоренное выражение обрезано до нуля")
        rows.append(CurveRow(
            n=n, r=r, e=e, e_inf=e_inf, e_hat=e_hat, e_tilde=e - e_inf,
            iters=int(codebook.meta.get("iters_total", 0)), restarts=int(codebook.meta.get("restarts", 0)),
            best_seed=int(codebook.seed), clamped=clamped,
            on_projection=count_on_projection(codebook, S, P, image),
        ))
        codebooks.append(codebook)
        previous = codebook.points
    return ErrorCurve(rows, codebooks)


def weight_decompose(P: DiscreteMeasure, S: ConstraintSet, alpha, lam: Optional[float] = None,
                     deltas: Optional[Sequence[float]] = None) -> WeightDiagnostics:
    """
    Весовое разложение e_hat_{n,1}: w = (rho(x,a) - rho(x,pi(x))) / (lam + rho(a,pi(x)))
    и массы множеств уровня {w >= delta}.
    """
    points = _points_of(alpha)
    if lam is None:
        lam = config.LAMBDA_FACTOR * max(P.diameter(), float(np.ptp(points, axis=0).max()), 1e-12)
    if not lam > 0:
        raise UsageError(f"lambda должна быть положительной: {lam}")
    _, member_d = S.project_many(points)
    if np.any(member_d > S.proj_tol):
        logger.warning("Часть кодовых точек лежит вне S")
    assignment = assign(P, points)
    proj_pts, proj_d = S.project_many(P.atoms)
    to_projection = np.linalg.norm(points[assignment.owner] - proj_pts, axis=1)
    excess = assignment.dist - proj_d
    weights = excess / (lam + to_projection)
    term_weighted = float(np.dot(P.weights, weights * to_projection))
    term_lambda = float(lam * np.dot(P.weights, weights))
    e_hat_1 = float(np.dot(P.weights, excess))
    deltas = list(deltas) if deltas is not None else [2.0 ** -k for k in range(1, 11)]
    levels = tuple((float(d), float(P.weights[weights >= d].sum())) for d in deltas)
    residual = abs(term_weighted + term_lambda - e_hat_1)
    return WeightDiagnostics(float(lam), term_weighted, term_lambda, e_hat_1, residual,
                             float(np.abs(weights).max()), levels, weights)


def perturb_codebook(alpha: Codebook, S: ConstraintSet, piSK_sample, eps: float, n: int, d: float) -> Codebook:
    """
    Сдвигает кодовые точки, лежащие на образе pi_S(K), не дальше eps * n^(-1/d)
    в точки S вне образа. Принадлежность образу решает SampledImage. Неудачи
    возвращаются в meta["perturbation_failures"].
    """
    if not eps > 0:
        raise UsageError(f"eps должно быть положительным: {eps}")
    if not d > 0:
        raise UsageError(f"d должно быть положительным: {d}")
    radius = eps * n ** (-1.0 / d)
    image = SampledImage(as_points(piSK_sample, S.dim, "piSK_sample"), S.proj_tol)
    points = _points_of(alpha).copy()
    moved, failures = [], []
    for i, a in enumerate(points):
        if not image.contains(a)[0]:
            continue
        cloud = S.sample(radius / 4.0, (a - radius, a + radius))
        if len(cloud):
            cloud = cloud[np.linalg.norm(cloud - a, axis=1) <= radius]
        separation = image.distance(cloud) if len(cloud) else np.zeros(0)
        order = np.argsort(-separation, kind="stable")[:config.PERTURB_DIRECTIONS]
        target = next((cloud[k] for k in order if separation[k] > image.tol and S.contains(cloud[k])), None)
        if target is None:
            failures.append(i)
            logger.warning(f"Не удалось сдвинуть кодовую точку {i} с образа проекции")
            continue
        points[i] = target
        moved.append(i)
    meta = dict(alpha.meta)
    meta.update({"moved": moved, "perturbation_failures": failures, "radius": radius})
    logger.info(f"Сдвинуто кодовых точек: {len(moved)}, неудач: {len(failures)}")
    return Codebook(points, alpha.r, alpha.seed, alpha.converged, meta)


def covering_radius(points, centers) -> float:
    """max по points расстояния до ближайшего центра."""
    return float(cdist(np.asarray(points, dtype=float), np.asarray(centers, dtype=float)).min(axis=1).max())


def pullback_bound(P: DiscreteMeasure, S: ConstraintSet, n: int, opts: Optional[SolverOptions] = None) -> Dict:
    """
    Проверка неравенства e_{n,inf}(K;S) - e_{inf,inf}(K;S) <= e_{n,inf}(pi_S(K); pi_S(K)).

    Правая часть оценивается сверху покрытием выборки образа жадными центрами
    из самой выборки; ее кодбук также используется как допустимый кандидат слева.
    """
    opts = opts or SolverOptions()
    e_inf = e_infinity(P, S, INF)
    image = projection_set_sample(S, P.atoms, P.weights)
    dist = cdist(image, image)
    centers = gonzalez_centers(dist, n, 0)
    cover = float(dist[:, centers].min(axis=1).max())
    _, solved = solve(P, S, n, INF, opts)
    pulled = error(P, image[centers], INF)
    lhs = min(solved, pulled) - e_inf
    holds = lhs <= cover + 1e-9 * max(1.0, P.diameter())
    logger.info(f"Оценка через проекцию: {lhs:.12g} <= {cover:.12g}: {holds}")
    return {"n": n, "e_tilde_inf": lhs, "cover_radius": cover, "cover_lower": cover / 2.0, "holds": bool(holds)}
