"""
Resonance diagnostics: δ-sweeps, blow-up classification, critical-radius scans
and the scalar checks around them.
"""

import asyncio
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad_vec

from config import Settings
from core.exceptions import (
    AppException,
    DomainError,
    IndeterminateError,
    NumericalError,
    RefusalError,
    ValidationError,
)
from models.medium import LayeredMedium
from models.modes import Polarization
from models.results import (
    CauchyEstimate,
    Classification,
    CriticalityReport,
    DampingBoundReport,
    RadiusScanReport,
    SweepRecord,
    SweepResult,
    ThreeSphereReport,
)
from models.source import SphericalSource
from services.media import power
from services.solver import (
    FieldSolutionBase,
    SpectralSolver,
    local_coefficient,
    regular_coefficient_logs,
)
from services.special import scaled_radial_table
from services.transform import DoublyComplementaryMedium, build_tilde_source

logger = logging.getLogger(__name__)

DERIVED_LABEL = "derived prediction"


def derived_exponent(r2: float, r3: float, r_s: float) -> float:
    """Predicted power exponent s in P_δ ~ δ^s for a source sphere at r_s."""
    if not (0 < r2 < r3) or r_s <= 0:
        raise DomainError(f"Invalid radii r2={r2}, r3={r3}, r_s={r_s}", error_code="geometry")
    return 1.0 - 2.0 * math.log(r3 / r_s) / math.log(r3 / r2)


def _least_squares_slope(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    design = np.column_stack([np.ones_like(x), x])
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coeffs - y) ** 2)))
    return float(coeffs[1]), residual


def free_mode_norms(n_max: int, R: float, omega: float = 1.0, epsrel: float = 1e-10) -> np.ndarray:
    """Squared L² norms over B_R of the unit regular vacuum modes, n = 1..n_max."""
    orders = np.arange(1, n_max + 1, dtype=float)
    L = orders * (orders + 1.0)

    def density(r: float) -> np.ndarray:
        table = scaled_radial_table(n_max, omega * r)
        power_n = np.exp(orders * math.log(omega * r))
        u = r * power_n * table.jbar[1:, 0]
        w = 1j * power_n * table.jbar_ric[1:, 0] / omega
        return np.abs(u) ** 2 + np.abs(w) ** 2 + L * np.abs(u) ** 2 / (omega * r) ** 2

    value, _ = quad_vec(density, 0.0, R, epsrel=epsrel, epsabs=1e-300)
    return np.real(value)


class ResonanceAnalyzer:
    """Runs and interprets loss ladders on a layered medium."""

    def __init__(self, solver: SpectralSolver, settings: Settings):
        self.solver = solver
        self.settings = settings
        config = settings.section("resonance")
        self.blowup_threshold = float(getattr(config, "blowup_threshold", -0.1))
        self.window = int(getattr(config, "window", 2))
        self.min_points = int(getattr(config, "min_points", 4))
        self.n_min = int(getattr(config, "n_min", 10))
        self.exterior_outer_factor = float(getattr(config, "exterior_outer_factor", 2.0))
        self.three_sphere_modes = int(getattr(config, "three_sphere_modes", 20))

    # -- sweeps -------------------------------------------------------------------

    @staticmethod
    def _check_ladder(ladder: Sequence[float]) -> List[float]:
        values = [float(d) for d in ladder]
        if not values:
            raise ValidationError("Empty loss ladder", error_code="empty_ladder")
        if any(d <= 0 for d in values):
            raise ValidationError("Loss ladder values must be positive", error_code="ladder_sign")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ValidationError("Loss ladder must be strictly decreasing", error_code="ladder_order",
                                  details={"ladder": values})
        return values

    def exterior_region(self, medium: LayeredMedium) -> Tuple[float, float]:
        return medium.r3, self.exterior_outer_factor * medium.r3

    def _sweep_point(
        self,
        medium: LayeredMedium,
        sources: Tuple[SphericalSource, ...],
        delta: float,
        tilde: Optional[FieldSolutionBase],
        n_max: Optional[int],
        n_min: Optional[int] = None,
    ) -> SweepRecord:
        try:
            solution = self.solver.solve_full(medium, sources, delta, n_max=n_max, n_min=n_min)
            exterior = self.exterior_region(medium)
            power_shell = power(solution, delta)
            # a lossless medium dissipates nothing anywhere
            power_ball = power(solution, delta, (0.0, medium.r3)) if medium.has_lossy_layer else 0.0
            record = SweepRecord(
                delta=delta,
                power_shell=power_shell,
                power_Br3=power_ball,
                norm_exterior=solution.norm(exterior),
                norm_diff_tilde=solution.norm(exterior, minus=tilde) if tilde is not None else None,
                n_max=solution.n_max,
                tail_estimate=solution.tail_estimate,
            )
            if medium.has_lossy_layer:
                per_mode = sum(solution.norm_squared("shell", by_mode=True).values())
                record.peak_order = int(np.argmax(per_mode)) + 1
                record.trace_surrogate = self.trace_norm_surrogate(solution, medium.r2)
            logger.info(f"delta={delta:g}: P={power_shell:.6g}, N={solution.n_max}")
            return record
        except AppException as exc:
            logger.warning(f"Sweep point delta={delta:g} failed: {exc.message}")
            return SweepRecord(delta=delta, status="failed", error=exc.to_record())
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.warning(f"Sweep point delta={delta:g} failed numerically: {exc}")
            failure = NumericalError(str(exc), error_code="sweep_point_failed", details={"delta": delta})
            return SweepRecord(delta=delta, status="failed", error=failure.to_record())

    async def delta_sweep(
        self,
        medium: LayeredMedium,
        sources,
        ladder: Sequence[float],
        construction: Optional[DoublyComplementaryMedium] = None,
        n_max: Optional[int] = None,
        workers: int = 1,
        executor: Optional[ThreadPoolExecutor] = None,
    ) -> SweepResult:
        """One truncated solve per loss level; failed levels are recorded and skipped.

        With adaptive truncation the orders are made nondecreasing along the
        ladder: a level that settled below an order used at a larger δ is solved
        again starting from that order.
        """
        deltas = self._check_ladder(ladder)
        sources = (sources,) if isinstance(sources, SphericalSource) else tuple(sources)
        if not sources:
            raise ValidationError("A sweep needs at least one source", error_code="no_source")

        tilde = None
        if construction is not None:
            tilde_sources = build_tilde_source(construction, sources)
            if tilde_sources:
                tilde = self.solver.solve_effective(construction, tilde_sources)

        own_executor = executor is None
        executor = executor or ThreadPoolExecutor(max_workers=max(1, workers))
        try:
            loop = asyncio.get_running_loop()
            tasks = [
                loop.run_in_executor(executor, self._sweep_point, medium, sources, delta, tilde, n_max)
                for delta in deltas
            ]
            records = list(await asyncio.gather(*tasks))

            floor = 0
            for i, record in enumerate(records):
                if n_max is None and record.ok and record.n_max < floor:
                    logger.debug(f"Raising truncation at delta={record.delta:g} from {record.n_max} to {floor}")
                    records[i] = await loop.run_in_executor(
                        executor, self._sweep_point, medium, sources, record.delta, tilde, None, floor,
                    )
                if records[i].ok:
                    floor = max(floor, records[i].n_max)
        finally:
            if own_executor:
                executor.shutdown(wait=True)

        single = sources[0] if len(sources) == 1 else None
        cauchy = None
        if single is not None and not single.is_finite:
            used = max([r.n_max for r in records if r.n_max] or [self.n_min * 4])
            cauchy = self._cauchy_logs(medium, single, used)

        failed = sum(1 for r in records if not r.ok)
        logger.info(f"Sweep over {len(deltas)} loss levels finished, {failed} failed")
        return SweepResult(
            records=list(records),
            source_radius=single.radius if single is not None else None,
            medium_label=medium.label,
            r2=medium.r2,
            r3=medium.r3,
            cauchy_log_coefficients=cauchy,
            source_is_finite=all(s.is_finite for s in sources),
        )

    def _cauchy_logs(self, medium: LayeredMedium, source: SphericalSource, n_max: int) -> Optional[List[float]]:
        logs = np.full(n_max, -np.inf)
        for pol in source.polarizations():
            a1 = local_coefficient(medium, 0.0, pol, source.radius)
            a2 = local_coefficient(medium, 0.0, pol, source.radius, which="a2")
            values = regular_coefficient_logs(source, pol, n_max, a1, a2, medium.omega)
            logs = np.logaddexp(logs, 2.0 * values)
        return [float(v) for v in 0.5 * logs]

    # -- classification -----------------------------------------------------------

    def classify_blowup(self, sweep: SweepResult) -> CriticalityReport:
        """Fit P_δ ~ δ^s on windowed maxima and classify the sweep."""
        records = sweep.successful()
        if len(records) < self.min_points:
            raise ValidationError(
                f"Need at least {self.min_points} successful loss levels, got {len(records)}",
                error_code="too_few_points",
            )
        deltas = np.array([r.delta for r in records])
        if np.any(np.diff(deltas) >= 0):
            raise ValidationError("Sweep loss levels are not strictly decreasing", error_code="ladder_order")
        powers = np.array([r.power_shell for r in records], dtype=float)

        positive = powers > 0
        if positive.sum() < 2:
            exponent, residual, used = 0.0, 0.0, int(positive.sum())
        else:
            log_d = np.log(deltas[positive])
            log_p = np.log(powers[positive])
            w = min(self.window, log_p.size)
            points = []
            for start in range(log_p.size - w + 1):
                k = start + int(np.argmax(log_p[start:start + w]))
                if not points or points[-1][0] != k:
                    points.append((k, log_d[k], log_p[k]))
            xs = np.array([p[1] for p in points])
            ys = np.array([p[2] for p in points])
            if xs.size < 2:
                xs, ys = log_d, log_p
            exponent, residual = _least_squares_slope(xs, ys)
            used = int(xs.size)

        classification = Classification.BLOW_UP if exponent <= self.blowup_threshold else Classification.BOUNDED
        report = CriticalityReport(
            classification=classification,
            fitted_exponent=exponent,
            fit_residual=residual,
            n_points=used,
            source_radius=sweep.source_radius,
        )
        if sweep.r2 and sweep.r3:
            report.theoretical_r_star = math.sqrt(sweep.r2 * sweep.r3)
            if sweep.source_radius:
                report.predicted_exponent = derived_exponent(sweep.r2, sweep.r3, sweep.source_radius)
                report.prediction_label = DERIVED_LABEL
        if sweep.source_is_finite:
            report.cauchy_radius = math.inf
        elif sweep.cauchy_log_coefficients:
            try:
                report.cauchy_radius = self.cauchy_solvability(sweep.cauchy_log_coefficients, logs=True).radius
            except IndeterminateError as exc:
                logger.warning(f"Cauchy radius not estimated: {exc.message}")
        logger.info(f"Classified sweep as {classification.value} with exponent {exponent:.4f}")
        return report

    def cauchy_solvability(self, coefficients, logs: bool = False, finite: bool = False) -> CauchyEstimate:
        """Radius of convergence 1/limsup|c_n|^{1/n} of a coefficient sequence c_1, c_2, …"""
        if finite:
            return CauchyEstimate(radius=math.inf, method="finite")
        values = np.asarray(coefficients)
        with np.errstate(divide="ignore"):
            log_c = values.astype(float) if logs else np.log(np.abs(values))
        orders = np.arange(1, log_c.size + 1, dtype=float)
        nonzero = np.isfinite(log_c)
        if nonzero.sum() < 5:
            raise IndeterminateError(
                "Fewer than 5 nonzero coefficients; the Cauchy radius is indeterminate",
                error_code="indeterminate",
                details={"nonzero": int(nonzero.sum())},
            )
        n_used = orders[nonzero]
        y = log_c[nonzero]
        tail = n_used >= self.n_min
        if tail.sum() < 5:
            tail = n_used >= n_used[n_used.size // 2]
        n_used, y = n_used[tail], y[tail]
        design = np.column_stack([np.ones_like(n_used), n_used, np.log(n_used)])
        coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
        return CauchyEstimate(radius=float(math.exp(-coeffs[1])), method="log_linear_fit", n_used=int(n_used.size))

    async def critical_radius_scan(
        self,
        construction: DoublyComplementaryMedium,
        radii: Sequence[float],
        ladder: Sequence[float],
        moment=(0.0, 0.0, 1.0),
        direction=(0.0, 0.0, 1.0),
        workers: int = 1,
    ) -> RadiusScanReport:
        """Classify on-axis dipoles over a radius grid and bracket the critical radius."""
        r2, r3 = construction.r2, construction.r3
        grid = sorted(float(r) for r in radii)
        if not grid:
            raise ValidationError("Empty radius grid", error_code="empty_grid")
        outside = [r for r in grid if not (r2 < r < r3)]
        if outside:
            raise ValidationError("Scan radii must lie inside (r2, r3)", error_code="grid_range",
                                  details={"outside": outside})

        reports: List[CriticalityReport] = []
        with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            for radius in grid:
                source = SphericalSource.point_dipole(radius, moment, direction)
                sweep = await self.delta_sweep(construction.medium, source, ladder, executor=executor)
                reports.append(self.classify_blowup(sweep))
                logger.info(f"r_s={radius:g}: {reports[-1].classification.value}, s={reports[-1].fitted_exponent:.3f}")

        bracket = None
        for (ra, a), (rb, b) in zip(zip(grid, reports), zip(grid[1:], reports[1:])):
            if a.classification == Classification.BLOW_UP and b.classification == Classification.BOUNDED:
                if bracket is None or rb - ra < bracket[1] - bracket[0]:
                    bracket = (ra, rb)
        if bracket is None:
            logger.warning("No BlowUp to Bounded transition found on the radius grid")

        return RadiusScanReport(
            radii=grid,
            reports=reports,
            bracket=bracket,
            r_star_estimate=0.5 * (bracket[0] + bracket[1]) if bracket else None,
            r_star_theory=math.sqrt(r2 * r3),
            endpoint_classifications=(reports[0].classification, reports[-1].classification),
        )

    def invisibility_check(self, sweep: SweepResult) -> List[float]:
        """Exterior norm normalized by √P_δ per loss level, for blow-up sweeps only."""
        report = self.classify_blowup(sweep)
        if report.classification != Classification.BLOW_UP:
            raise RefusalError(
                "Normalized exterior norms are only meaningful when the power blows up",
                error_code="not_blowup",
                details={"fitted_exponent": report.fitted_exponent},
            )
        return [r.norm_exterior / math.sqrt(r.power_shell) for r in sweep.successful()]

    # -- scalar checks ------------------------------------------------------------

    def three_sphere_check(
        self,
        radii: Tuple[float, float, float] = (0.5, 0.8, 1.0),
        n_fields: int = 100,
        n_modes: Optional[int] = None,
        seed: int = 0,
        omega: float = 1.0,
    ) -> ThreeSphereReport:
        """Worst constant C in ‖·‖_{R₂} ≤ C‖·‖_{R₁}^α ‖·‖_{R₃}^{1−α} over random free fields."""
        R1, R2, R3 = (float(r) for r in radii)
        if not (0 < R1 <= R2 < R3):
            raise DomainError(f"Need 0 < R1 <= R2 < R3, got {radii}", error_code="radii_order")
        n_modes = n_modes or self.three_sphere_modes
        alpha = math.log(R2 / R3) / math.log(R1 / R3)

        # mode norms are pol- and m-independent in vacuum
        norms = [free_mode_norms(n_modes, R, omega) for R in (R1, R2, R3)]
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_fields):
            orders = rng.integers(1, n_modes + 1, size=n_modes)
            weights = np.abs(rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)) ** 2
            squared = [float(np.sum(weights * N[orders - 1])) for N in norms]
            n1, n2, n3 = (math.sqrt(v) for v in squared)
            worst = max(worst, n2 / (n1**alpha * n3 ** (1.0 - alpha)))
        logger.info(f"Three-sphere check at {radii}: alpha={alpha:.4f}, worst constant {worst:.4f}")
        return ThreeSphereReport(radii=(R1, R2, R3), alpha=alpha, worst_constant=worst, n_fields=n_fields, seed=seed)

    def damping_bound_check(
        self,
        r2: float,
        r3: float,
        alpha: float = 0.5,
        n_max: int = 200,
        ladder: Sequence[float] = tuple(10.0 ** -k for k in range(2, 9)),
    ) -> DampingBoundReport:
        """Largest ratios of the damped amplifications to their δ-power bounds.

        With ξ_n = δ^α (r₃/r₀)ⁿ and r₀ = r₂^α r₃^{1−α}:
        r₃^{2n}/(1+ξ_n²) ≤ C δ^{-2α} r₀^{2n} and ξ_n² r₂^{2n}/(1+ξ_n²) ≤ C δ^{2(1−α)} r₀^{2n}.
        """
        if not (0 < r2 < r3):
            raise DomainError(f"Need 0 < r2 < r3, got r2={r2}, r3={r3}", error_code="geometry")
        if not (0 < alpha < 1):
            raise DomainError(f"Exponent must lie in (0, 1), got {alpha}", error_code="alpha")
        log_r0 = alpha * math.log(r2) + (1.0 - alpha) * math.log(r3)
        n = np.arange(1, n_max + 1, dtype=float)[:, None]
        log_d = np.log(np.asarray(self._check_ladder(ladder)))[None, :]

        log_xi2 = 2.0 * (alpha * log_d + n * (math.log(r3) - log_r0))
        log_damp = np.logaddexp(0.0, log_xi2)
        lower = 2.0 * n * math.log(r3) - log_damp - (-2.0 * alpha * log_d + 2.0 * n * log_r0)
        upper = log_xi2 + 2.0 * n * math.log(r2) - log_damp - (2.0 * (1.0 - alpha) * log_d + 2.0 * n * log_r0)
        return DampingBoundReport(
            alpha=alpha,
            r0=math.exp(log_r0),
            lower_constant=float(np.exp(lower.max())),
            upper_constant=float(np.exp(upper.max())),
        )

    def trace_norm_surrogate(self, solution: FieldSolutionBase, radius: float) -> float:
        """Mode-weighted norm of the tangential E trace on |x| = radius.

        Σ (|e_V|² + (1 + n(n+1))|e_U|²)/(1 + n) over the V (divergence-free) and
        U (gradient) trace coefficients; diagnostic only.
        """
        orders = solution.orders.astype(float)
        total = 0.0
        for pol in solution.polarizations():
            if solution.azimuths(pol).size == 0:
                continue
            state = solution.states(pol, radius, side="outer")
            if pol == Polarization.TE:
                e_v, e_u = state[..., 0] / radius, 0.0
            else:
                e_v, e_u = 0.0, -state[..., 1] / radius
            weight = (1.0 + orders * (orders + 1.0))[:, None]
            total += float(np.sum((np.abs(e_v) ** 2 + weight * np.abs(e_u) ** 2) / (1.0 + orders)[:, None]))
        return math.sqrt(total)

    def resonant_window(self, sweep: SweepResult) -> Dict[str, object]:
        """Order of maximal shell contribution per δ and its slope against ln(1/δ)."""
        records = [r for r in sweep.successful() if r.peak_order is not None]
        if len(records) < 2:
            raise ValidationError("Need at least two loss levels with peak orders", error_code="too_few_points")
        x = np.log(1.0 / np.array([r.delta for r in records]))
        y = np.array([r.peak_order for r in records], dtype=float)
        slope, residual = _least_squares_slope(x, y)
        predicted = None
        if sweep.source_radius and sweep.r3 and sweep.source_radius < sweep.r3:
            predicted = 1.0 / (2.0 * math.log(sweep.r3 / sweep.source_radius))
        return {
            "deltas": [r.delta for r in records],
            "peak_orders": [r.peak_order for r in records],
            "slope": slope,
            "residual": residual,
            "predicted_slope": predicted,
        }

    def convergence_rate(self, sweep: SweepResult) -> float:
        """Slope of ln‖(E_δ,H_δ) − (Ẽ,H̃)‖ against ln δ."""
        records = [r for r in sweep.successful() if r.norm_diff_tilde and r.norm_diff_tilde > 0]
        if len(records) < 2:
            raise ValidationError("Need at least two loss levels with effective-field differences",
                                  error_code="too_few_points")
        x = np.log([r.delta for r in records])
        y = np.log([r.norm_diff_tilde for r in records])
        slope, _ = _least_squares_slope(np.asarray(x), np.asarray(y))
        return slope
