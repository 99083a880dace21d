"""
Модуль сценариев: плоский текстовый формат (секции и строки key = value),
проверка через модели pydantic и построение мер и множеств-ограничений.

Числа в списках разделяются запятыми, точки в списках точек - точкой с
запятой; допускается запись степени вида 3^-2.
"""
import configparser
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ValidationError, field_validator, model_validator

from cquant import config
from cquant.errors import ConfigurationError
from cquant import geometry, measures

logger = logging.getLogger(__name__)

MEASURE_KINDS = ("uniform_circle", "uniform_sphere", "cantor", "dirac", "polyline", "segment", "file")
CONSTRAINT_KINDS = ("ball", "sphere", "circle", "segment", "line", "polyline", "union", "cantor", "points")


def parse_number(token) -> float:
    """Число или степень base^exp."""
    if isinstance(token, (int, float)):
        return float(token)
    token = str(token).strip()
    if token.lower() in ("inf", "infinity"):
        return math.inf
    if "^" in token:
        base, exp = token.split("^", 1)
        return float(base) ** float(exp)
    return float(token)


def parse_numbers(value) -> List[float]:
    if value is None or value == "":
        return []
    if isinstance(value, (list, tuple)):
        return [parse_number(v) for v in value]
    return [parse_number(t) for t in str(value).replace(";", ",").split(",") if t.strip()]


def parse_points(value) -> List[List[float]]:
    if value is None or value == "":
        return []
    if isinstance(value, (list, tuple)):
        return [parse_numbers(p) for p in value]
    return [parse_numbers(p) for p in str(value).split(";") if p.strip()]


def parse_int_range(value) -> List[int]:
    """'2..5' -> [2, 3, 4, 5]; '2, 4, 8' -> [2, 4, 8]."""
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    text = str(value).strip()
    if ".." in text and "," not in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(parse_number(t)) for t in text.split(",") if t.strip()]


class _Spec(BaseModel):
    model_config = {"extra": "forbid"}


class MeasureSpec(_Spec):
    kind: str
    center: List[float] = []
    radius: Optional[float] = None
    nodes: Optional[int] = None
    a: List[float] = []
    b: List[float] = []
    depth: Optional[int] = None
    point: List[float] = []
    vertices: List[List[float]] = []
    path: Optional[str] = None

    @field_validator("kind")
    @classmethod
    def _kind(cls, value):
        if value not in MEASURE_KINDS:
            raise ValueError(f"неизвестный вид меры {value}, доступны: {', '.join(MEASURE_KINDS)}")
        return value

    @field_validator("center", "a", "b", "point", mode="before")
    @classmethod
    def _numbers(cls, value):
        return parse_numbers(value)

    @field_validator("radius", mode="before")
    @classmethod
    def _number(cls, value):
        return None if value in (None, "") else parse_number(value)

    @field_validator("vertices", mode="before")
    @classmethod
    def _points(cls, value):
        return parse_points(value)


class ConstraintSpec(_Spec):
    kind: str
    center: List[float] = []
    radius: Optional[float] = None
    a: List[float] = []
    b: List[float] = []
    point: List[float] = []
    direction: List[float] = []
    extent: Optional[float] = None
    vertices: List[List[float]] = []
    points: List[List[float]] = []
    depth: Optional[int] = None
    members: List[str] = []
    proj_tol: Optional[float] = None

    @field_validator("kind")
    @classmethod
    def _kind(cls, value):
        if value not in CONSTRAINT_KINDS:
            raise ValueError(f"неизвестный вид множества {value}, доступны: {', '.join(CONSTRAINT_KINDS)}")
        return value

    @field_validator("center", "a", "b", "point", "direction", mode="before")
    @classmethod
    def _numbers(cls, value):
        return parse_numbers(value)

    @field_validator("radius", "extent", "proj_tol", mode="before")
    @classmethod
    def _number(cls, value):
        return None if value in (None, "") else parse_number(value)

    @field_validator("vertices", "points", mode="before")
    @classmethod
    def _points(cls, value):
        return parse_points(value)

    @field_validator("members", mode="before")
    @classmethod
    def _members(cls, value):
        if isinstance(value, str):
            return [m.strip() for m in value.split(",") if m.strip()]
        return value


class SolverSpec(_Spec):
    r: float = 2.0
    n: Optional[int] = None
    n_list: List[int] = []
    restarts: int = config.RESTARTS
    max_iters: int = config.MAX_ITERS
    tol: float = config.TOL
    seed: int = config.DEFAULT_SEED
    threads: int = config.THREADS

    @field_validator("r", "tol", mode="before")
    @classmethod
    def _number(cls, value):
        return parse_number(value)

    @field_validator("n_list", mode="before")
    @classmethod
    def _n_list(cls, value):
        return parse_int_range(value)

    @field_validator("n_list")
    @classmethod
    def _increasing(cls, value):
        if any(b <= a for a, b in zip(value, value[1:])) or any(v < 1 for v in value):
            raise ValueError(f"n_list должен строго возрастать и состоять из n >= 1: {value}")
        return value

    @model_validator(mode="after")
    def _order(self):
        if math.isnan(self.r) or self.r < 1:
            raise ValueError(f"r должно быть >= 1 или inf: {self.r}")
        return self

    def sizes(self) -> List[int]:
        if self.n_list:
            return self.n_list
        if self.n is not None:
            return [self.n]
        raise ConfigurationError("В секции [solver] нужен n или n_list")


class AnalysisSpec(_Spec):
    which: str = "hat"
    window: float = config.TAIL_WINDOW
    box_scales: List[float] = []
    ahlfors_d: Optional[float] = None
    ahlfors_radii: List[float] = []
    ahlfors_centers: int = 64
    eps: List[float] = []
    probe_count: int = config.PROBE_COUNT
    probes: List[List[float]] = []
    check_u1: bool = True
    check_u3: bool = True
    u3_s: Optional[float] = None
    lam: Optional[float] = None
    perturb_eps: List[float] = []
    perturb_d: float = 1.0
    pullback_n: Optional[int] = None
    witness_radii: List[float] = []
    require_dimension: bool = False

    @field_validator("box_scales", "ahlfors_radii", "eps", "perturb_eps", "witness_radii", mode="before")
    @classmethod
    def _numbers(cls, value):
        return parse_numbers(value)

    @field_validator("ahlfors_d", "u3_s", "lam", mode="before")
    @classmethod
    def _optional_number(cls, value):
        return None if value in (None, "") else parse_number(value)

    @field_validator("probes", mode="before")
    @classmethod
    def _points(cls, value):
        return parse_points(value)

    @field_validator("which")
    @classmethod
    def _which(cls, value):
        if value not in ("hat", "tilde"):
            raise ValueError("which должно быть hat или tilde")
        return value


class OutputSpec(_Spec):
    dir: Optional[str] = None


class Scenario(_Spec):
    """Полный сценарий: мера, ограничение, решатель, анализ, вывод."""

    name: str = "scenario"
    measure: MeasureSpec
    constraint: ConstraintSpec
    members: Dict[str, ConstraintSpec] = {}
    solver: SolverSpec = SolverSpec()
    analysis: AnalysisSpec = AnalysisSpec()
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _resolvable(self):
        pending = [self.constraint]
        seen = set()
        while pending:
            spec = pending.pop()
            for member in spec.members:
                if member not in self.members:
                    raise ValueError(f"член объединения '{member}' не описан секцией [constraint.{member}]")
                if member in seen:
                    raise ValueError(f"циклическая ссылка на '{member}'")
                seen.add(member)
                pending.append(self.members[member])
        return self


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Разбирает текст сценария в проверенную модель."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigurationError(f"Ошибка синтаксиса сценария: {e}") from e
    data = {"name": name, "members": {}}
    for section in parser.sections():
        values = dict(parser.items(section))
        if section.startswith("constraint."):
            data["members"][section.split(".", 1)[1]] = values
        elif section in ("measure", "constraint", "solver", "analysis", "output"):
            data[section] = values
        elif section == "scenario":
            data["name"] = values.get("name", name)
        else:
            raise ConfigurationError(f"Неизвестная секция сценария: [{section}]")
    try:
        return Scenario(**data)
    except ValidationError as e:
        logger.error(f"Ошибка проверки сценария {name}: {e}")
        raise ConfigurationError(f"Некорректный сценарий {name}: {e}") from e


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Файл сценария не найден: {path}")
    return parse_scenario(path.read_text(encoding="utf-8"), path.stem)


def _require(value, what: str):
    if value is None or (isinstance(value, list) and not value):
        raise ConfigurationError(f"Не задан параметр {what}")
    return value


def build_measure(spec: MeasureSpec) -> measures.DiscreteMeasure:
    if spec.kind == "uniform_circle":
        return measures.uniform_circle(_require(spec.center, "center"), _require(spec.radius, "radius"),
                                       _require(spec.nodes, "nodes"))
    if spec.kind == "uniform_sphere":
        return measures.uniform_sphere(_require(spec.center, "center"), _require(spec.radius, "radius"),
                                       _require(spec.nodes, "nodes"))
    if spec.kind == "cantor":
        return measures.cantor_measure(_require(spec.a, "a"), _require(spec.b, "b"), _require(spec.depth, "depth"))
    if spec.kind == "dirac":
        return measures.dirac(_require(spec.point, "point"))
    if spec.kind == "polyline":
        return measures.uniform_polyline(_require(spec.vertices, "vertices"), _require(spec.nodes, "nodes"))
    if spec.kind == "segment":
        return measures.uniform_segment(_require(spec.a, "a"), _require(spec.b, "b"), _require(spec.nodes, "nodes"))
    return measures.from_samples(_require(spec.path, "path"))


def build_constraint(spec: ConstraintSpec, members: Optional[Dict[str, ConstraintSpec]] = None) -> geometry.ConstraintSet:
    members = members or {}
    tol = spec.proj_tol
    if spec.kind == "ball":
        return geometry.ClosedBall(_require(spec.center, "center"), _require(spec.radius, "radius"), tol)
    if spec.kind == "sphere":
        return geometry.Sphere(_require(spec.center, "center"), _require(spec.radius, "radius"), tol)
    if spec.kind == "circle":
        return geometry.Circle(_require(spec.center, "center"), _require(spec.radius, "radius"), tol)
    if spec.kind == "segment":
        return geometry.Segment(_require(spec.a, "a"), _require(spec.b, "b"), tol)
    if spec.kind == "line":
        return geometry.Line(_require(spec.point, "point"), _require(spec.direction, "direction"), spec.extent, tol)
    if spec.kind == "polyline":
        return geometry.Polyline(_require(spec.vertices, "vertices"), tol)
    if spec.kind == "cantor":
        return geometry.CantorSegment(_require(spec.a, "a"), _require(spec.b, "b"), _require(spec.depth, "depth"), tol)
    if spec.kind == "points":
        return geometry.FinitePointSet(_require(spec.points, "points"), tol)
    parts = [build_constraint(members[name], members) for name in _require(spec.members, "members")]
    return geometry.Union(parts, tol)
