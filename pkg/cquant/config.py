"""
Модуль конфигурации для системы ограниченного квантования.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Загрузка переменных окружения из .env файла
load_dotenv()


def _env_int(name, default):
    return int(os.environ.get(name, default))


def _env_float(name, default):
    return float(os.environ.get(name, default))


# Базовые пути
BASE_DIR = Path(__file__).resolve().parent
OUTPUT_DIR = Path(os.environ.get("CQUANT_OUTPUT_DIR", Path.cwd() / "results"))

# Параметры решателя
RESTARTS = _env_int("CQUANT_RESTARTS", 16)  # Число перезапусков, сиды 0..RESTARTS-1
MAX_ITERS = _env_int("CQUANT_MAX_ITERS", 500)  # Предел внешних итераций
TOL = _env_float("CQUANT_TOL", 1e-10)  # Относительное изменение ошибки для остановки
INNER_ITERS = 100  # Внутренние итерации проекционного градиента (r != 2)
ARMIJO = 1e-4  # Константа условия Армихо
MAX_HALVINGS = 30  # Предел делений шага пополам
DEFAULT_SEED = _env_int("CQUANT_SEED", 0)
THREADS = _env_int("CQUANT_THREADS", 0)  # 0 - автоматически по числу ядер

# Параметры геометрии
PROJ_TOL_FACTOR = 1e-12  # proj_tol = PROJ_TOL_FACTOR * диаметр сцены
MAX_MINIMIZERS = 16  # Сколько равноудаленных минимизаторов хранить
CHORD_FACTOR = 1.5  # Хорды выборки образа не длиннее CHORD_FACTOR медианного шага

# Параметры мер
MAX_CANTOR_DEPTH = 24  # Глубже - слишком много атомов (2^depth)

# Параметры квантователя
BRUTE_FORCE_BUDGET = 2_000_000  # Предел числа сочетаний для полного перебора
LAMBDA_FACTOR = 1e-3  # lambda по умолчанию = LAMBDA_FACTOR * диаметр сцены
PERTURB_DIRECTIONS = 64  # Сколько кандидатов пробовать при сдвиге кодовой точки

# Параметры оценки размерности
NOISE_FLOOR = 1e-9  # Ошибки ниже порога считаются нулевыми
AHLFORS_BOUND = _env_float("CQUANT_AHLFORS_BOUND", 1e3)  # Допустимое отношение c_upper / c_lower
U3_STABILITY = 10.0  # Допустимый разброс инфимума по шкале eps
TAIL_WINDOW = 0.5  # Доля хвоста кривой для локальных наклонов
PROBE_COUNT = _env_int("CQUANT_PROBE_COUNT", 64)  # Число проб для условий (U1)/(U3)

# Формат вывода
FLOAT_DIGITS = 12  # Значащих цифр в CSV и JSON
LOG_LEVEL = os.environ.get("CQUANT_LOG_LEVEL", "INFO")
LOG_FORMAT = os.environ.get("CQUANT_LOG_FORMAT", "text")  # text или json
LOG_FILE = os.environ.get("CQUANT_LOG_FILE", "")  # Пустая строка - без файла

# Имена файлов результатов
CODEBOOK_FILE = "codebook.txt"
SUMMARY_FILE = "summary.csv"
CURVE_FILE = "curve.csv"
REPORT_FILE = "report.json"
CONDITIONS_FILE = "conditions.json"
PROJECTION_FILE = "projection.csv"
