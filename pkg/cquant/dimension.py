"""
Модуль оценки размерностей: квантовая размерность по кривой ошибок,
box-размерность конечных множеств, проверка регулярности Альфорса
и условий (U1)/(U3) на обратные образы шаров.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from cquant import config
from cquant.errors import UsageError
from cquant.geometry import ConstraintSet, PreimageIndex, as_point, as_points
from cquant.measures import DiscreteMeasure
from cquant.quantizer import ErrorCurve, format_float

logger = logging.getLogger(__name__)

DEGENERATE = "degenerate: ê ≡ 0"


def round_floats(value):
    """Рекурсивно округляет числа до FLOAT_DIGITS значащих цифр для JSON; inf и nan -> None."""
    if isinstance(value, dict):
        return {k: round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return float(format_float(value)) if math.isfinite(value) else None
    return value


@dataclass
class DimensionReport:
    """Оценки размерностей, таблицы масштабов и вердикты условий."""

    quant_dim_upper: float = 0.0
    quant_dim_lower: float = 0.0
    global_slope_dim: float = 0.0
    local_slopes: List[Dict] = field(default_factory=list)
    which: str = "hat"
    verdict: str = "ok"
    box_dim: Optional[float] = None
    box_table: List[Dict] = field(default_factory=list)
    ahlfors: Optional[Dict] = None
    conditions: Dict = field(default_factory=dict)
    observations: Dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return self.verdict == DEGENERATE

    def to_dict(self) -> Dict:
        return round_floats({
            "quant_dim_upper": self.quant_dim_upper,
            "quant_dim_lower": self.quant_dim_lower,
            "global_slope_dim": self.global_slope_dim,
            "box_dim": self.box_dim,
            "ahlfors": self.ahlfors,
            "conditions": self.conditions,
            "local_slopes": self.local_slopes,
            "box_table": self.box_table,
            "which": self.which,
            "verdict": self.verdict,
            "observations": self.observations,
        })

    def to_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=2)
        logger.info(f"Отчет о размерностях сохранен в {path}")
        return path


def _local_slopes(x_ratio_num: np.ndarray, values: np.ndarray) -> np.ndarray:
    """log(a_{k+1}/a_k) / log(v_k/v_{k+1}) для соседних строк."""
    num = np.log(x_ratio_num[1:] / x_ratio_num[:-1])
    den = np.log(values[:-1] / values[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den != 0, num / np.where(den != 0, den, 1.0), math.inf)


def fit_quant_dimension(curve: ErrorCurve, which: str = "hat", window: Optional[float] = None) -> DimensionReport:
    """
    Квантовая размерность log n / (-log e): локальные наклоны соседних строк,
    max/min по хвосту window и глобальный наклон МНК по хвосту.
    """
    if which not in ("hat", "tilde"):
        raise UsageError(f"which должно быть 'hat' или 'tilde': {which}")
    window = config.TAIL_WINDOW if window is None else window
    if not 0 < window <= 1:
        raise UsageError(f"window должно быть в (0, 1]: {window}")
    n = curve.column("n")
    values = curve.column("e_hat" if which == "hat" else "e_tilde")
    usable = values > config.NOISE_FLOOR
    if not np.any(usable):
        logger.warning("Все ошибки ниже порога шума: размерность вырождена")
        return DimensionReport(which=which, verdict=DEGENERATE)
    n, values = n[usable], values[usable]
    if len(n) < 4:
        raise UsageError(f"Для оценки нужно не менее 4 строк выше порога шума, есть {len(n)}")
    slopes = _local_slopes(n, values)
    table = [{"n_from": int(a), "n_to": int(b), "slope": float(s)} for a, b, s in zip(n[:-1], n[1:], slopes)]
    start = min(int(math.floor(len(n) * (1.0 - window))), len(n) - 2)
    tail = slopes[start:]
    coeffs = np.polyfit(np.log(n[start:]), np.log(values[start:]), 1)
    global_dim = -1.0 / coeffs[0] if coeffs[0] != 0 else math.inf
    report = DimensionReport(
        quant_dim_upper=float(tail.max()),
        quant_dim_lower=float(tail.min()),
        global_slope_dim=float(global_dim),
        local_slopes=table,
        which=which,
    )
    logger.info(
        f"Квантовая размерность ({which}): верхняя {report.quant_dim_upper:.6g}, "
        f"нижняя {report.quant_dim_lower:.6g}, МНК {report.global_slope_dim:.6g}"
    )
    return report


def box_dimension(pts, scales: Sequence[float]) -> Tuple[float, List[Dict]]:
    """Box-размерность: наклон log N_delta против -log delta, сетка с началом в нуле."""
    pts = as_points(pts, name="pts")
    scales = sorted((float(s) for s in scales), reverse=True)
    if len(scales) < 2 or any(s <= 0 for s in scales):
        raise UsageError("Нужно не менее двух положительных масштабов")
    counts = [len(np.unique(np.floor(pts / delta).astype(np.int64), axis=0)) for delta in scales]
    table = [{"delta": d, "count": c} for d, c in zip(scales, counts)]
    if len(np.unique(pts, axis=0)) == 1:
        return 0.0, table
    log_inv = -np.log(np.array(scales))
    log_count = np.log(np.array(counts, dtype=float))
    local = np.diff(log_count) / np.diff(log_inv)
    for row, slope in zip(table[1:], local):
        row["slope"] = float(slope)
    return float(np.polyfit(log_inv, log_count, 1)[0]), table


def box_dimension_bounds(table: List[Dict]) -> Tuple[float, float]:
    """Верхняя и нижняя box-размерности как max/min локальных наклонов таблицы."""
    slopes = [row["slope"] for row in table if "slope" in row]
    if not slopes:
        return 0.0, 0.0
    return float(max(slopes)), float(min(slopes))


def _ball_masses(mu: DiscreteMeasure, radii, centers: Optional[int]):
    support = mu.weights > 0
    atoms, weights = mu.atoms[support], mu.weights[support]
    count = len(atoms) if centers is None else int(centers)
    if not 1 <= count <= len(atoms):
        raise UsageError(f"Число центров должно быть в диапазоне 1..{len(atoms)}")
    picks = np.unique(np.linspace(0, len(atoms) - 1, count).round().astype(int))
    tree = cKDTree(atoms)
    masses = np.array([
        [weights[idx].sum() for idx in tree.query_ball_point(atoms[picks], radius)] for radius in radii
    ])
    return masses, atoms[picks]


def ahlfors_check(mu: DiscreteMeasure, d: float, radii: Sequence[float], centers: Optional[int] = 64,
                  bound: Optional[float] = None) -> Dict:
    """Отношения mu(B(a,r)) / r^d по центрам носителя и радиусам; проверка разброса."""
    if not d > 0:
        raise UsageError(f"Размерность d должна быть положительной: {d}")
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise UsageError("Радиусы должны быть положительными")
    bound = config.AHLFORS_BOUND if bound is None else bound
    if max(radii) >= mu.diameter() > 0:
        logger.warning("Радиусы не меньше диаметра носителя")
    centers = None if centers is None else min(int(centers), int(np.count_nonzero(mu.weights > 0)))
    masses, _ = _ball_masses(mu, radii, centers)
    ratios = masses / np.array(radii)[:, None] ** d
    c_lower, c_upper = float(ratios.min()), float(ratios.max())
    passed = c_lower > 0 and c_upper / c_lower <= bound
    table = [{"radius": r, "min_ratio": float(row.min()), "max_ratio": float(row.max())}
             for r, row in zip(radii, ratios)]
    logger.info(f"Альфорс d={d:.6g}: c_lower={c_lower:.6g}, c_upper={c_upper:.6g}, {'да' if passed else 'нет'}")
    return {"d": float(d), "c_lower": c_lower, "c_upper": c_upper, "pass": bool(passed), "table": table}


def lower_ahlfors_check(mu: DiscreteMeasure, d: float, radii: Sequence[float], centers: Optional[int] = 64,
                        bound: Optional[float] = None) -> Dict:
    """Односторонняя (нижняя) регулярность: inf по центрам mu(B(a,r)) / r^d по радиусам."""
    full = ahlfors_check(mu, d, radii, centers, bound)
    lows = [row["min_ratio"] for row in full["table"]]
    bound = config.AHLFORS_BOUND if bound is None else bound
    passed = min(lows) > 0 and max(lows) / min(lows) <= bound
    return {"d": float(d), "c_lower": full["c_lower"], "per_radius": lows, "pass": bool(passed)}


def _probes(index: PreimageIndex, probe_count: Optional[int], extra) -> np.ndarray:
    image = index.image_sample()
    count = config.PROBE_COUNT if probe_count is None else int(probe_count)
    stride = max(1, len(image) // max(count, 1))
    probes = image[::stride][:count]
    if extra is not None and len(extra):
        extra = np.array([as_point(p, "probe") for p in extra])
        probes = np.vstack([probes, extra])
    return probes


def check_condition_U1(P: DiscreteMeasure, S: ConstraintSet, eps_list: Sequence[float],
                       probe_count: Optional[int] = None, probes=None) -> Dict:
    """
    Условие (U1): масса атомов, чья выбранная проекция лежит в B(x, eps),
    положительна для каждой пробы x из выборки образа при всех eps.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if not eps_list or any(e <= 0 for e in eps_list):
        raise UsageError("eps_list должен состоять из положительных чисел")
    index = PreimageIndex(S, P.atoms, P.weights)
    points = _probes(index, probe_count, probes)
    masses = np.array([[index.mass(x, eps) for eps in eps_list] for x in points])
    largest = eps_list[0]
    table = [{
        "probe": x.tolist(),
        "masses": row.tolist(),
        "pointwise": index.mass(x, largest, "pointwise"),
        "set": index.mass(x, largest, "set"),
    } for x, row in zip(points, masses)]
    min_mass = masses.min(axis=0)
    failed = [x.tolist() for x, row in zip(points, masses) if row.min() <= 0]
    passed = bool(np.all(min_mass > 0))
    logger.info(f"Условие (U1): {'выполнено' if passed else 'нарушено'}, проб {len(points)}, провалов {len(failed)}")
    return {"pass": passed, "eps": eps_list, "min_mass": min_mass.tolist(), "failed_probes": failed, "table": table}


def estimate_image_dimension(P: DiscreteMeasure, S: ConstraintSet, scales: Optional[Sequence[float]] = None) -> float:
    """Box-размерность выборки образа pi_S(K) как замена размерности Хаусдорфа."""
    image = PreimageIndex(S, P.atoms, P.weights).image_sample()
    if scales is None:
        diam = max(float(np.ptp(image, axis=0).max()), 1e-12)
        scales = [diam * 2.0 ** -k for k in range(2, 7)]
    return box_dimension(image, scales)[0]


def check_condition_U3(P: DiscreteMeasure, S: ConstraintSet, s: Optional[float], eps_list: Sequence[float],
                       probe_count: Optional[int] = None, probes=None) -> Dict:
    """
    Условие (U3): inf по пробам массы обратного образа B(x, eps), деленной
    на eps^s, отделен от нуля по шкале eps (разброс не больше U3_STABILITY).
    """
    source = "given"
    if s is None:
        s = estimate_image_dimension(P, S)
        source = "box-dimension estimate"
    if not s > 0:
        raise UsageError(f"s должно быть положительным: {s}")
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if not eps_list or any(e <= 0 for e in eps_list):
        raise UsageError("eps_list должен состоять из положительных чисел")
    index = PreimageIndex(S, P.atoms, P.weights)
    points = _probes(index, probe_count, probes)
    inf_ratio = np.array([min(index.mass(x, eps) for x in points) / eps ** s for eps in eps_list])
    positive = bool(np.all(inf_ratio > 0))
    spread = float(inf_ratio.max() / inf_ratio.min()) if positive else math.inf
    passed = positive and spread <= config.U3_STABILITY
    logger.info(f"Условие (U3) при s={s:.6g} ({source}): {'выполнено' if passed else 'нарушено'}")
    return {"pass": bool(passed), "s": float(s), "s_source": source, "eps": eps_list,
            "inf_ratio": inf_ratio.tolist(), "spread": spread}


def build_report(curve: Optional[ErrorCurve] = None, which: str = "hat", window: Optional[float] = None,
                 box: Optional[Tuple[np.ndarray, Sequence[float]]] = None, ahlfors: Optional[Dict] = None,
                 conditions: Optional[Dict] = None, observations: Optional[Dict] = None) -> DimensionReport:
    """Собирает DimensionReport из частей, которые были посчитаны."""
    report = fit_quant_dimension(curve, which, window) if curve is not None else DimensionReport(which=which)
    if box is not None:
        pts, scales = box
        report.box_dim, report.box_table = box_dimension(pts, scales)
        upper, lower = box_dimension_bounds(report.box_table)
        report.observations["box_dim_upper"] = upper
        report.observations["box_dim_lower"] = lower
    report.ahlfors = ahlfors
    report.conditions = dict(conditions or {})
    report.observations.update(observations or {})
    return report
