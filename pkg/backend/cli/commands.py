"""
Command-line front end.

    dcm-resonance build    --config run.yml --out results/
    dcm-resonance solve    --config run.yml
    dcm-resonance sweep    --config run.yml --workers 4 --plot
    dcm-resonance critical --config run.yml
    dcm-resonance verify

Every command writes ``<command>.csv`` and ``summary.json`` into the output
directory. Exit codes: 0 success, 2 invalid input, 3 numerical or I/O failure.
"""

import argparse
import asyncio
import logging
import math
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import Settings, get_settings
from core.container import Container
from core.exceptions import AppException, NumericalError, ValidationError
from models.medium import LayeredMedium
from models.results import SWEEP_COLUMNS
from models.run_config import RunConfig
from services.media import power, region_table
from services.special import scaled_radial_table
from services.transform import (
    DoublyComplementaryMedium,
    build_dc_medium,
    build_trivial_medium,
)
from utils.svg_plot import line_plot

logger = logging.getLogger(__name__)


def configure_logging(settings: Settings):
    app = settings.section("app")
    logging.basicConfig(
        level=getattr(logging, str(getattr(app, "log_level", "INFO")).upper(), logging.INFO),
        format=getattr(app, "log_format", "%(asctime)s %(levelname)s %(name)s: %(message)s"),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcm-resonance",
        description="Localized resonance experiments in radial doubly complementary media",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="Run configuration YAML file")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--workers", type=int, default=None, help="Worker threads")
    common.add_argument("--seed", type=int, default=None, help="Random seed for sampled checks")
    common.add_argument("--plot", action="store_true", help="Also write SVG plots")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="Build the medium and report its layers and residuals")
    sub.add_parser("solve", parents=[common], help="Solve at one loss level and evaluate fields at points")
    sub.add_parser("sweep", parents=[common], help="Run a loss ladder and classify the power")
    sub.add_parser("critical", parents=[common], help="Scan dipole radii for the critical radius")
    sub.add_parser("verify", parents=[common], help="Run the transform and special-function self-tests")
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Run file with the command-line flags applied on top."""
    config = RunConfig.load(args.config) if args.config else RunConfig()
    data = config.model_dump(mode="python")
    if args.workers is not None:
        data["workers"] = args.workers
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out:
        data["output"]["directory"] = args.out
    data["output"]["plot"] = data["output"]["plot"] or args.plot
    return RunConfig.from_mapping(data)


def settings_for_run(base: Settings, config: RunConfig) -> Settings:
    """Application settings with the run file's truncation and region knobs applied."""
    truncation: Dict[str, Any] = {}
    if config.truncation.n_floor is not None:
        truncation["n_floor"] = config.truncation.n_floor
    if config.truncation.safety_factor is not None:
        truncation["safety_factor"] = float(config.truncation.safety_factor)
    overrides: Dict[str, Dict[str, Any]] = {}
    if truncation:
        overrides["solver"] = {"truncation": truncation}
    if config.regions.exterior_outer is not None:
        overrides["resonance"] = {
            "exterior_outer_factor": float(config.regions.exterior_outer) / float(config.geometry.r3)
        }
    return base.with_overrides(overrides) if overrides else base


def build_media(config: RunConfig) -> Tuple[LayeredMedium, Optional[DoublyComplementaryMedium]]:
    geometry = config.geometry.floats()
    if config.geometry.trivial:
        return build_trivial_medium(geometry["r2"], geometry["r3"], geometry["omega"]), None
    construction = build_dc_medium(
        geometry["r2"], geometry["r3"], lam=geometry["lam"], omega=geometry["omega"], R0=geometry["R0"],
        core_coefficient=geometry["core_coefficient"], exterior_coefficient=geometry["exterior_coefficient"],
        seed=config.seed,
    )
    return construction.medium, construction


# -- commands ---------------------------------------------------------------------


def cmd_build(config: RunConfig, container: Container, writer) -> Dict[str, Any]:
    medium, construction = build_media(config)
    rows = [
        (layer.name, layer.r_in, layer.r_out, layer.eps.coefficient.real, layer.eps.coefficient.imag,
         layer.eps.power, layer.eps.pivot, int(layer.lossy))
        for layer in medium.layers
    ]
    writer.write_csv(
        "build.csv",
        ("layer", "r_in", "r_out", "coefficient_re", "coefficient_im", "power", "pivot", "lossy"),
        rows,
    )
    payload: Dict[str, Any] = {
        "medium": medium.label,
        "regions": {name: list(bounds) for name, bounds in region_table(medium).items()},
        "interfaces": list(medium.interfaces),
    }
    if construction is not None:
        payload.update({
            "rho": construction.rho,
            "r1": construction.r1,
            "r_core": construction.r_core,
            "complementarity": construction.complementarity.model_dump(),
            "double_complementarity": construction.double_complementarity.model_dump(),
        })
    return payload


def _profile_points(medium: LayeredMedium, source_radius: float, r_max: float, count: int = 200) -> np.ndarray:
    radii = np.linspace(r_max / count, r_max, count)
    special = list(medium.interfaces) + [source_radius]
    keep = [r for r in radii if all(abs(r - s) > 1e-6 * max(1.0, s) for s in special)]
    return np.array(keep)


def cmd_solve(config: RunConfig, container: Container, writer) -> Dict[str, Any]:
    medium, _ = build_media(config)
    source = config.source.build()
    delta = float(config.delta)
    solution = container.solver.solve_full(medium, source, delta, n_max=config.truncation.n_max)

    points = np.array(config.point_values, dtype=float).reshape(-1, 3)
    rows = []
    if points.size:
        fields = container.solver.field_eval(solution, points)
        for p, (x, y, z) in enumerate(points):
            row: List[Any] = [x, y, z]
            for name in ("E", "H"):
                for c in range(3):
                    value = complex(fields[name][p, c])
                    row.extend([value.real, value.imag])
            rows.append(row)
    header = ["x", "y", "z"] + [f"{f}{c}_{part}" for f in ("E", "H") for c in "xyz" for part in ("re", "im")]
    writer.write_csv("solve.csv", header, rows)

    if config.output.plot:
        radii = _profile_points(medium, source.radius, 2.0 * medium.r3)
        # ray tilted 0.3 rad away from the source axis
        axis = np.asarray(source.direction)
        perp = np.cross(axis, [1.0, 0.0, 0.0] if abs(axis[0]) < 0.9 else [0.0, 1.0, 0.0])
        ray = np.cos(0.3) * axis + np.sin(0.3) * perp / np.linalg.norm(perp)
        fields = solution.field_at(radii[:, None] * ray[None, :])
        magnitude = np.sqrt(np.sum(np.abs(fields["E"]) ** 2 + np.abs(fields["H"]) ** 2, axis=1))
        with np.errstate(divide="ignore"):
            svg = line_plot([("|(E,H)|", list(radii), list(np.log10(magnitude)))],
                            f"Field profile at delta={delta:g}", "r", "log10 |(E,H)|")
        writer.write_svg("profile.svg", svg)

    return {
        "delta": delta,
        "n_max": solution.n_max,
        "tail_estimate": solution.tail_estimate,
        "power_shell": power(solution, delta),
        "norm_exterior": solution.norm(container.analyzer.exterior_region(medium)),
        "points": len(rows),
    }


def _sweep_rows(sweep) -> List[Tuple[Any, ...]]:
    return [record.csv_row() for record in sweep.records]


def cmd_sweep(config: RunConfig, container: Container, writer) -> Dict[str, Any]:
    medium, construction = build_media(config)
    source = config.source.build()
    analyzer = container.analyzer
    sweep = asyncio.run(analyzer.delta_sweep(
        medium, source, config.ladder_values, construction=construction,
        n_max=config.truncation.n_max, workers=config.workers,
    ))
    writer.write_csv("sweep.csv", SWEEP_COLUMNS, _sweep_rows(sweep))

    payload: Dict[str, Any] = {"sweep": sweep.model_dump(exclude={"records"})}
    payload["records"] = [record.model_dump() for record in sweep.records]
    try:
        payload["criticality"] = analyzer.classify_blowup(sweep).model_dump()
    except AppException as exc:
        logger.warning(f"Sweep not classified: {exc.message}")
        payload["criticality_error"] = exc.to_record()

    if config.output.plot:
        ok = sweep.successful()
        with np.errstate(divide="ignore"):
            xs = list(np.log10([r.delta for r in ok]))
            ys = list(np.log10([r.power_shell for r in ok]))
        writer.write_svg("power.svg", line_plot([("P_delta", xs, ys)], "Dissipated power", "log10 delta", "log10 P"))
    return payload


def cmd_critical(config: RunConfig, container: Container, writer) -> Dict[str, Any]:
    if config.geometry.trivial:
        raise ValidationError(
            "The critical-radius scan needs the doubly complementary medium; drop geometry.trivial",
            error_code="trivial_medium",
        )
    _, construction = build_media(config)
    grid = config.scan.grid(construction.r2, construction.r3)
    source = config.source
    scan = asyncio.run(container.analyzer.critical_radius_scan(
        construction, grid, config.ladder_values,
        moment=tuple(float(v) for v in source.moment),
        direction=tuple(float(v) for v in source.direction),
        workers=config.workers,
    ))
    rows = [
        (radius, report.classification.value, report.fitted_exponent, report.predicted_exponent, report.cauchy_radius)
        for radius, report in zip(scan.radii, scan.reports)
    ]
    writer.write_csv(
        "critical.csv",
        ("radius", "classification", "fitted_exponent", "predicted_exponent", "cauchy_radius"),
        rows,
    )
    if config.output.plot:
        svg = line_plot(
            [("fitted", scan.radii, [r.fitted_exponent for r in scan.reports]),
             ("derived prediction", scan.radii, [r.predicted_exponent or math.nan for r in scan.reports])],
            "Power exponent against source radius", "r_s", "s",
        )
        writer.write_svg("power.svg", svg)
    payload = scan.model_dump()
    payload["theoretical_r_star"] = scan.r_star_theory
    return payload


def cmd_verify(config: RunConfig, container: Container, writer) -> Dict[str, Any]:
    """Self-tests of the transform algebra, special functions and scalar bounds."""
    checks: List[Tuple[str, float, float]] = []
    for r2, r3, lam in ((1.0, 2.0, 1.0), (1.0, 4.0, 1.0), (1.0, 2.0, 3.0)):
        construction = build_dc_medium(r2, r3, lam=lam, seed=config.seed)
        scale = max(1.0, lam * construction.rho)
        checks.append((f"complementary_{r2:g}_{r3:g}_{lam:g}", construction.complementarity.max_residual / scale, 1e-12))
        checks.append((f"dcm_{r2:g}_{r3:g}_{lam:g}", construction.double_complementarity.max_residual / scale, 1e-12))

    worst = 0.0
    for z in (0.3, 1.0, 7.5, 40.0, 2.0 + 0.5j):
        table = scaled_radial_table(300, z)
        n = table.orders.astype(float)[:, None]
        identity = table.jbar * table.ybar_ric - table.ybar * table.jbar_ric
        worst = max(worst, float(np.max(np.abs(identity + (2 * n + 1)) / (2 * n + 1))))
    checks.append(("wronskian_n300", worst, 1e-10))

    three = container.analyzer.three_sphere_check(seed=config.seed)
    checks.append(("three_sphere_constant", three.worst_constant, 10.0))
    bounds = container.analyzer.damping_bound_check(1.0, 2.0, alpha=0.5)
    checks.append(("damping_lower", bounds.lower_constant, 1.0 + 1e-12))
    checks.append(("damping_upper", bounds.upper_constant, 1.0 + 1e-12))

    rows = [(name, value, tolerance, value <= tolerance) for name, value, tolerance in checks]
    writer.write_csv("verify.csv", ("check", "value", "tolerance", "passed"), rows)
    failed = [name for name, _, _, passed in rows if not passed]
    if failed:
        raise NumericalError(f"Self-tests failed: {', '.join(failed)}", error_code="verify_failed",
                             details={"failed": failed})
    return {"checks": {name: {"value": value, "tolerance": tol, "passed": ok} for name, value, tol, ok in rows}}


HANDLERS = {
    "build": cmd_build,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "critical": cmd_critical,
    "verify": cmd_verify,
}


def run(argv: Optional[Sequence[str]] = None, settings: Optional[Settings] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = settings or get_settings()
    configure_logging(settings)

    summary: Dict[str, Any] = {"command": args.command}
    writer = None
    exit_code = 0
    try:
        config = load_run_config(args)
        container = Container(settings_for_run(settings, config))
        writer = container.writer(config.output.directory)
        logger.info(f"Running '{args.command}' into {config.output.directory}")
        summary["result"] = HANDLERS[args.command](config, container, writer)
        summary["status"] = "ok"
    except AppException as exc:
        logger.error(f"'{args.command}' failed: {exc.message}")
        summary.update(status="error", error=exc.to_record())
        exit_code = exc.exit_code
    except Exception as exc:
        logger.exception(f"'{args.command}' failed unexpectedly")
        summary.update(status="error", error={"type": type(exc).__name__, "message": str(exc),
                                              "error_code": "unexpected", "details": {}})
        exit_code = 3

    if writer is None:
        from utils.result_writer import ResultWriter

        writer = ResultWriter.from_settings(args.out or "results", settings)
    summary_name = getattr(settings.section("output"), "summary_name", "summary.json")
    try:
        writer.write_json(summary_name, summary)
    except AppException as exc:
        logger.error(f"Summary not written: {exc.message}")
        exit_code = exit_code or exc.exit_code
    return exit_code


def main() -> None:
    sys.exit(run())
