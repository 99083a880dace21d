#!/usr/bin/env python
"""
Командная строка cquant: пакетный запуск сценариев ограниченного квантования.

Подкоманды: quantize, curve, dimension, check, reproduce <preset>, project.
Файлы результатов пишутся один раз в конце команды.
"""
import csv
import functools
import json
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

import click
import numpy as np
from pythonjsonlogger import jsonlogger

from cquant import config
from cquant.dimension import (DimensionReport, ahlfors_check, build_report, check_condition_U1,
                              check_condition_U3, lower_ahlfors_check, round_floats)
from cquant.errors import ConfigurationError, DegenerateError, QuantizationError, UsageError
from cquant.geometry import PreimageIndex, nowhere_density_witness
from cquant.measures import pushforward
from cquant.presets import load_preset, preset_names
from cquant.quantizer import (CurveRow, ErrorCurve, SolverOptions, count_on_projection, e_infinity,
                              error, error_curve, error_hat, format_float, perturb_codebook, pullback_bound, solve,
                              weight_decompose)
from cquant.scenario import Scenario, build_constraint, build_measure, load_scenario, parse_numbers

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: Optional[str] = None):
    """Настраивает корневой логгер: консоль, файл (CQUANT_LOG_FILE), текст или JSON."""
    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, "_cquant", False)]:
        root.removeHandler(handler)
    if config.LOG_FORMAT == "json":
        formatter = jsonlogger.JsonFormatter(LOG_FORMAT)
    else:
        formatter = logging.Formatter(LOG_FORMAT)
    handlers = [logging.StreamHandler(sys.stderr)]
    if config.LOG_FILE:
        handlers.append(logging.FileHandler(config.LOG_FILE, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)
        handler._cquant = True
        root.addHandler(handler)
    root.setLevel((level or config.LOG_LEVEL).upper())


def handle_errors(func):
    """Переводит исключения пакета в коды завершения."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except QuantizationError as e:
            logger.error(f"Ошибка {type(e).__name__}: {e}")
            raise SystemExit(e.exit_code)
        except OSError as e:
            logger.error(f"Ошибка ввода-вывода: {e}")
            raise SystemExit(ConfigurationError.exit_code)
        except Exception as e:
            logger.exception(f"Непредвиденная ошибка: {e}")
            raise SystemExit(1)

    return wrapper


class Context:
    """Общие флаги группы, переопределяющие сценарий."""

    def __init__(self, config_path=None, preset=None, seed=None, out=None, threads=None):
        self.config_path = config_path
        self.preset = preset
        self.seed = seed
        self.out = out
        self.threads = threads

    def scenario(self) -> Scenario:
        if self.config_path:
            scenario = load_scenario(self.config_path)
        elif self.preset:
            scenario = load_preset(self.preset)
        else:
            raise ConfigurationError("Нужен сценарий: --config <файл> или --preset <имя>")
        return self.apply(scenario)

    def apply(self, scenario: Scenario) -> Scenario:
        solver = scenario.solver.model_copy(update={
            k: v for k, v in (("seed", self.seed), ("threads", self.threads)) if v is not None
        })
        return scenario.model_copy(update={"solver": solver})

    def out_dir(self, scenario: Scenario) -> Path:
        if self.out:
            return Path(self.out)
        if scenario.output.dir:
            return Path(scenario.output.dir)
        return config.OUTPUT_DIR


def solver_options(scenario: Scenario) -> SolverOptions:
    s = scenario.solver
    return SolverOptions(s.restarts, s.max_iters, s.tol, s.seed, s.threads)


def write_codebook(path, points) -> Path:
    """Строки `x y [z]` с FLOAT_DIGITS значащими цифрами."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for point in np.atleast_2d(points):
            f.write(" ".join(format_float(v) for v in point) + "\n")
    return path


def write_json(path, data: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(round_floats(data), f, ensure_ascii=False, indent=2)
    logger.info(f"Сохранено: {path}")
    return path


def run_quantize(scenario: Scenario, out: Path, n: Optional[int] = None) -> Dict[str, Path]:
    """Один кодбук: codebook.txt и однострочная сводка summary.csv."""
    P = build_measure(scenario.measure)
    S = build_constraint(scenario.constraint, scenario.members)
    n = n or scenario.solver.n or scenario.solver.sizes()[0]
    r = scenario.solver.r
    codebook, e = solve(P, S, n, r, solver_options(scenario))
    e_inf = e_infinity(P, S, r)
    e_hat, clamped = error_hat(e, e_inf, r)
    row = CurveRow(n, r, e, e_inf, e_hat, e - e_inf, int(codebook.meta.get("iters_total", 0)),
                   int(codebook.meta.get("restarts", 0)), int(codebook.seed), clamped,
                   count_on_projection(codebook, S, P))
    return {
        "codebook": write_codebook(out / config.CODEBOOK_FILE, codebook.points),
        "summary": ErrorCurve([row]).to_csv(out / config.SUMMARY_FILE),
    }


def _curve(scenario: Scenario, P, S) -> ErrorCurve:
    return error_curve(P, S, scenario.solver.r, scenario.solver.sizes(), solver_options(scenario))


def _report(scenario: Scenario, P, S, curve: ErrorCurve) -> DimensionReport:
    analysis = scenario.analysis
    image = PreimageIndex(S, P.atoms, P.weights).image_sample()
    box = (image, analysis.box_scales) if analysis.box_scales else None
    ahlfors = None
    if analysis.ahlfors_d is not None and analysis.ahlfors_radii:
        ahlfors = ahlfors_check(pushforward(P, S), analysis.ahlfors_d, analysis.ahlfors_radii,
                                analysis.ahlfors_centers)
    observations = {
        "scenario": scenario.name,
        "measure": P.meta,
        "atoms": len(P),
        "e_inf": curve.rows[0].e_inf,
        "on_projection": {str(row.n): row.on_projection for row in curve.rows},
        "clamped_rows": [row.n for row in curve.rows if row.clamped],
    }
    try:
        return build_report(curve, analysis.which, analysis.window, box, ahlfors, observations=observations)
    except UsageError as e:
        logger.warning(f"Размерность не оценена: {e}")
    report = build_report(None, analysis.which, analysis.window, box, ahlfors, observations=observations)
    report.verdict = "curve too short"
    return report


def run_analyze(scenario: Scenario, out: Path) -> Dict[str, Path]:
    """Кривая ошибок и отчет о размерностях."""
    P = build_measure(scenario.measure)
    S = build_constraint(scenario.constraint, scenario.members)
    curve = _curve(scenario, P, S)
    report = _report(scenario, P, S, curve)
    paths = {"curve": curve.to_csv(out / config.CURVE_FILE), "report": report.to_json(out / config.REPORT_FILE)}
    if report.degenerate and scenario.analysis.require_dimension:
        raise DegenerateError("Кривая ошибок вырождена (ê ≡ 0), оценка размерности невозможна")
    return paths


def run_checks(scenario: Scenario, P=None, S=None) -> Dict:
    """Условия (U1)/(U3), регулярность образа, нигде не плотность, оценка через проекцию."""
    if P is None:
        P = build_measure(scenario.measure)
    if S is None:
        S = build_constraint(scenario.constraint, scenario.members)
    analysis = scenario.analysis
    opts = solver_options(scenario)
    results = {}
    eps = analysis.eps
    if eps and analysis.check_u1:
        results["U1"] = check_condition_U1(P, S, eps, analysis.probe_count, analysis.probes or None)
    if eps and analysis.check_u3:
        results["U3"] = check_condition_U3(P, S, analysis.u3_s, eps, analysis.probe_count, analysis.probes or None)
    if analysis.ahlfors_d is not None and analysis.ahlfors_radii:
        image_measure = pushforward(P, S)
        results["ahlfors_image"] = ahlfors_check(image_measure, analysis.ahlfors_d, analysis.ahlfors_radii,
                                                 analysis.ahlfors_centers)
        results["lower_ahlfors_image"] = lower_ahlfors_check(image_measure, analysis.ahlfors_d,
                                                             analysis.ahlfors_radii, analysis.ahlfors_centers)
    image = PreimageIndex(S, P.atoms, P.weights).image_sample()
    if analysis.witness_radii:
        results["nowhere_dense"] = nowhere_density_witness(S, image, analysis.witness_radii)
    if analysis.pullback_n:
        results["pullback"] = pullback_bound(P, S, analysis.pullback_n, opts)
    n = scenario.solver.n or scenario.solver.sizes()[0]
    codebook, _ = solve(P, S, n, 1.0, opts)
    diagnostics = weight_decompose(P, S, codebook, analysis.lam)
    results["weights"] = {
        "n": n,
        "lambda": diagnostics.lam,
        "term_weighted": diagnostics.term_weighted,
        "term_lambda": diagnostics.term_lambda,
        "e_hat_1": diagnostics.e_hat_1,
        "residual": diagnostics.residual,
        "max_abs_weight": diagnostics.max_abs_weight,
        "level_masses": [{"delta": d, "mass": m} for d, m in diagnostics.level_masses],
    }
    if analysis.perturb_eps:
        before = error(P, codebook, 1.0)
        rows = []
        for eps_value in analysis.perturb_eps:
            moved = perturb_codebook(codebook, S, image, eps_value, n, analysis.perturb_d)
            after = error(P, moved, 1.0)
            rows.append({
                "eps": eps_value,
                "radius": moved.meta["radius"],
                "moved": len(moved.meta["moved"]),
                "failures": len(moved.meta["perturbation_failures"]),
                "drift": abs(after - before),
                "holds": abs(after - before) <= moved.meta["radius"] + 1e-9,
            })
        results["perturbation"] = {"n": n, "d": analysis.perturb_d, "e_1": before, "rows": rows}
    return results


def run_check(scenario: Scenario, out: Path) -> Dict[str, Path]:
    return {"conditions": write_json(out / config.CONDITIONS_FILE, run_checks(scenario))}


def run_reproduce(scenario: Scenario, out: Path) -> Dict[str, Path]:
    """Все результаты пресета: кодбуки, кривая, отчет, условия."""
    P = build_measure(scenario.measure)
    S = build_constraint(scenario.constraint, scenario.members)
    curve = _curve(scenario, P, S)
    report = _report(scenario, P, S, curve)
    checks = run_checks(scenario, P, S)
    report.conditions = {name: check.get("pass", check.get("holds")) for name, check in checks.items()
                         if "pass" in check or "holds" in check}
    paths = {}
    for codebook, row in zip(curve.codebooks, curve.rows):
        paths[f"codebook_{row.n}"] = write_codebook(out / "codebooks" / f"n{row.n}.txt", codebook.points)
    paths["curve"] = curve.to_csv(out / config.CURVE_FILE)
    paths["report"] = report.to_json(out / config.REPORT_FILE)
    paths["conditions"] = write_json(out / config.CONDITIONS_FILE, checks)
    return paths


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Файл сценария")
@click.option("--preset", default=None, help=f"Встроенный сценарий: {', '.join(preset_names())}")
@click.option("--seed", type=int, default=None, help="Начальный сид перезапусков")
@click.option("--out", type=click.Path(), default=None, help="Каталог результатов")
@click.option("--threads", type=int, default=None, help="Число потоков (0 - автоматически)")
@click.option("--log-level", default=None, help="Уровень логирования")
@click.pass_context
def cli(ctx, config_path, preset, seed, out, threads, log_level):
    """Ограниченное квантование мер: кодбуки, кривые ошибок, размерности."""
    configure_logging(log_level)
    ctx.obj = Context(config_path, preset, seed, out, threads)


@cli.command()
@click.option("--n", "n", type=int, default=None, help="Размер кодбука")
@click.pass_obj
@handle_errors
def quantize(obj: Context, n):
    """Оптимальный кодбук размера n и сводка ошибок."""
    scenario = obj.scenario()
    for name, path in run_quantize(scenario, obj.out_dir(scenario), n).items():
        click.echo(f"{name}: {path}")


@cli.command()
@click.pass_obj
@handle_errors
def curve(obj: Context):
    """Кривая ошибок по n_list."""
    scenario = obj.scenario()
    P = build_measure(scenario.measure)
    S = build_constraint(scenario.constraint, scenario.members)
    path = _curve(scenario, P, S).to_csv(obj.out_dir(scenario) / config.CURVE_FILE)
    click.echo(f"curve: {path}")


@cli.command()
@click.pass_obj
@handle_errors
def dimension(obj: Context):
    """Кривая ошибок и отчет о размерностях."""
    scenario = obj.scenario()
    for name, path in run_analyze(scenario, obj.out_dir(scenario)).items():
        click.echo(f"{name}: {path}")


@cli.command()
@click.pass_obj
@handle_errors
def check(obj: Context):
    """Проверки условий, записанные в conditions.json."""
    scenario = obj.scenario()
    for name, path in run_check(scenario, obj.out_dir(scenario)).items():
        click.echo(f"{name}: {path}")


@cli.command()
@click.argument("preset")
@click.pass_obj
@handle_errors
def reproduce(obj: Context, preset):
    """Полный прогон встроенного сценария в <out>/<preset>/."""
    scenario = obj.apply(load_preset(preset))
    out = obj.out_dir(scenario) / preset
    logger.info(f"Воспроизведение пресета {preset} в {out}")
    for name, path in run_reproduce(scenario, out).items():
        click.echo(f"{name}: {path}")


@cli.command()
@click.option("--point", "points", multiple=True, help="Точка x,y[,z]; можно повторять")
@click.pass_obj
@handle_errors
def project(obj: Context, points):
    """Проекции точек (или атомов меры сценария) на S."""
    scenario = obj.scenario()
    S = build_constraint(scenario.constraint, scenario.members)
    if points:
        pts = np.array([parse_numbers(p) for p in points], dtype=float)
    else:
        pts = build_measure(scenario.measure).atoms
    path = obj.out_dir(scenario) / config.PROJECTION_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["point", "representative", "distance", "tie_count", "minimizers"])
        for p in pts:
            res = S.project(p)
            cells = [
                " ".join(format_float(v) for v in p),
                " ".join(format_float(v) for v in res.representative),
                format_float(res.distance),
                res.tie_count,
                "; ".join(" ".join(format_float(v) for v in m) for m in res.all_minimizers),
            ]
            writer.writerow(cells)
            click.echo(",".join(str(c) for c in cells))
    click.echo(f"projection: {path}")


def main():
    """Точка входа console_scripts; ошибки использования click дают код 3."""
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Прервано", err=True)
        sys.exit(1)
    except click.exceptions.UsageError as e:
        e.show()
        sys.exit(3)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except SystemExit as e:
        sys.exit(e.code)


if __name__ == "__main__":
    main()
