"""Experiment runner behind the command line subcommands."""

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .assembly import assemble_all, assemble_global, default_delta
from .config import RunConfig, build_geometry, offset_levels
from .exceptions import ConfigurationError, DgIetiError, ExperimentError, OracleSizeError
from .geometry import MultiPatch, compute_metrics, max_h_ratio, mesh_ratio_factor, verify_topology
from .ieti import IetiDP, dense_spectrum_oracle, spectrum_summary
from .manufactured import get_solution
from .norms import dg_error, l2_error
from .utils import linear_fit, observed_rates

logger = logging.getLogger(__name__)

SOLVE_COLUMNS = [
    "dofs", "multipliers", "primal", "iterations", "converged", "lambda_min", "lambda_max", "kappa",
    "H_over_h", "q_h", "jump_residual", "direct_diff", "dg_error", "l2_error", "oracle_lambda_min", "oracle_kappa",
]
KAPPA_COLUMNS = ["level", "H_over_h", "dofs", "iterations", "lambda_min", "lambda_max", "kappa"]
RATIO_COLUMNS = ["ratio", "q_h", "H_over_h", "kappa", "envelope", "within_envelope"]
CONVERGENCE_COLUMNS = ["level", "h", "dofs", "dg_error", "l2_error", "dg_rate", "l2_rate"]
EXPERIMENT_COLUMNS = {
    "solve": SOLVE_COLUMNS,
    "kappa-study": KAPPA_COLUMNS,
    "ratio-study": RATIO_COLUMNS,
    "convergence": CONVERGENCE_COLUMNS,
}


def unit_source(x: np.ndarray) -> np.ndarray:
    return np.ones(len(x))


class ExperimentRunner:
    """Runs the solve and study experiments of one configuration.

    Args:
        config (RunConfig): validated run configuration.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.solution = get_solution(config.manufactured) if config.manufactured else None

    def build(self, levels=None) -> MultiPatch:
        c = self.config
        mp = build_geometry(c.geometry, c.degree, c.levels if levels is None else levels, c.alpha)
        violations = verify_topology(mp)
        if violations:
            raise ConfigurationError("Non-matching interfaces: " + "; ".join(violations))
        return mp

    def _data(self, mp: MultiPatch):
        # without a manufactured solution a unit source drives PCG
        if self.solution is None:
            return unit_source, None
        alpha = mp.patches[0].alpha
        return self.solution.rhs(alpha), self.solution.flux(alpha)

    def run_once(self, mp: MultiPatch, oracle: Optional[bool] = None) -> Dict[str, Any]:
        """Assemble, solve with IETI-DP and measure one configuration."""
        c = self.config
        oracle = c.oracle if oracle is None else oracle
        f, g_N = self._data(mp)
        delta = default_delta(mp) if c.delta is None else c.delta
        systems = assemble_all(mp, delta, f, g_N, c.workers)
        ieti = IetiDP(mp, systems, c.scaling, c.workers)
        result, solution = ieti.solve(c.tol, c.maxit)
        u_norm = max((float(np.max(np.abs(u))) for u in solution.patches if u.size), default=0.0)
        direct = assemble_global(mp, systems=systems).solve()
        direct_diff = max((float(np.max(np.abs(u - v))) for u, v in zip(solution.patches, direct) if u.size), default=0.0)
        logger.debug("max |u_ieti - u_direct| = %.3g", direct_diff)
        row = {
            "dofs": sum(p.space.size for p in mp.patches),
            "multipliers": ieti.jump.size,
            "primal": ieti.primal.size,
            "iterations": result.iterations,
            "converged": result.converged,
            "lambda_min": result.lambda_min,
            "lambda_max": result.lambda_max,
            "kappa": result.kappa,
            "H_over_h": max_h_ratio(mp),
            "q_h": mesh_ratio_factor(mp),
            "jump_residual": solution.jump_residual,
            "direct_diff": direct_diff,
            "u_max": u_norm,
        }
        if self.solution is not None:
            row["dg_error"] = dg_error(mp, solution.patches, self.solution.u, self.solution.grad, delta)
            row["l2_error"] = l2_error(mp, solution.patches, self.solution.u)
        if oracle:
            try:
                spectrum = spectrum_summary(dense_spectrum_oracle(ieti))
            except OracleSizeError as e:
                logger.warning("skipping the dense spectrum: %s", e)
            else:
                row["oracle_lambda_min"] = spectrum["lambda_min"]
                row["oracle_kappa"] = spectrum["kappa"]
        row["_solution"] = solution.patches
        return row

    def solve(self) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
        try:
            row = self.run_once(self.build())
        except DgIetiError as e:
            raise ExperimentError(f"Failed to solve: {str(e)}") from e
        row.pop("_solution")
        return [row], {"converged": row["converged"]}

    def _levels_rows(self, run) -> List[Dict[str, Any]]:
        rows = []
        for level in self.config.level_list:
            try:
                rows.append(run(level))
            except DgIetiError as e:
                raise ExperimentError(f"Failed at level {level}: {str(e)}", partial=rows) from e
        return rows

    def kappa_study(self) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
        """Condition numbers over refinement levels and their fit against ``(1 + log(H/h))^2``."""
        if len(self.config.level_list) < 3:
            raise ConfigurationError("A kappa study needs at least three levels")

        def run(level):
            row = self.run_once(self.build(offset_levels(self.config.levels, level)))
            row.pop("_solution")
            row["level"] = level
            return row

        rows = self._levels_rows(run)
        growth = [(1.0 + np.log(r["H_over_h"])) ** 2 for r in rows]
        fit = linear_fit(growth, [r["kappa"] for r in rows])
        normalized = [r["kappa"] / g for r, g in zip(rows, growth)]
        summary = dict(fit, normalized_spread=max(normalized) / min(normalized),
                       converged=all(r["converged"] for r in rows))
        logger.info("kappa fit: slope %.4g, intercept %.4g, R^2 %.4f", fit["slope"], fit["intercept"], fit["r2"])
        return rows, summary

    def ratio_study(self) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
        """Condition numbers for a coarser second patch; compares with ``C q_h^2 (1 + log(H/h))^2``."""
        base = self.config.levels
        if not np.isscalar(base):
            raise ConfigurationError("A ratio study needs a scalar base level")
        rows = []
        for ratio in self.config.ratios:
            coarsen = int(round(np.log2(ratio)))
            if coarsen > base:
                raise ExperimentError(f"Ratio {ratio} needs base level >= {coarsen}", partial=rows)
            try:
                mp = self.build([int(base), int(base) - coarsen])
                if mp.numpatches != 2:
                    raise ConfigurationError(f"A ratio study needs a two-patch geometry, got {mp.numpatches} patches")
                row = self.run_once(mp)
            except DgIetiError as e:
                raise ExperimentError(f"Failed at ratio {ratio}: {str(e)}", partial=rows) from e
            row.pop("_solution")
            row["ratio"] = ratio
            rows.append(row)
        reference = min(rows, key=lambda r: r["ratio"])
        scale = reference["kappa"] / (reference["q_h"] ** 2 * (1.0 + np.log(reference["H_over_h"])) ** 2)
        for row in rows:
            row["envelope"] = scale * row["q_h"] ** 2 * (1.0 + np.log(row["H_over_h"])) ** 2
            row["within_envelope"] = bool(row["kappa"] <= row["envelope"] * (1.0 + 1e-8))
        kappas = [r["kappa"] for r in rows]
        summary = {
            "all_within_envelope": all(r["within_envelope"] for r in rows),
            "kappa_spread": max(kappas) / min(kappas),
            "converged": all(r["converged"] for r in rows),
        }
        return rows, summary

    def convergence(self) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
        """Errors against the manufactured solution and observed rates."""
        if self.solution is None:
            raise ConfigurationError("A convergence study needs a manufactured solution")

        def run(level):
            mp = self.build(offset_levels(self.config.levels, level))
            row = self.run_once(mp, oracle=False)
            row.pop("_solution")
            row["level"] = level
            row["h"] = max(compute_metrics(p).h for p in mp.patches)
            return row

        rows = self._levels_rows(run)
        h = [r["h"] for r in rows]
        for key in ("dg", "l2"):
            for row, rate in zip(rows, observed_rates(h, [r[f"{key}_error"] for r in rows])):
                row[f"{key}_rate"] = rate
        summary = {
            "dg_rate": rows[-1]["dg_rate"],
            "l2_rate": rows[-1]["l2_rate"],
            "converged": all(r["converged"] for r in rows),
        }
        return rows, summary

    def run(self) -> Tuple[List[str], List[Dict[str, Any]], Dict[str, Any]]:
        """Run the configured experiment; returns CSV columns, rows and a summary."""
        kind = self.config.experiment
        experiments = {
            "solve": self.solve,
            "kappa-study": self.kappa_study,
            "ratio-study": self.ratio_study,
            "convergence": self.convergence,
        }
        if kind not in experiments:
            raise ConfigurationError(f"Unknown experiment '{kind}'")
        return (EXPERIMENT_COLUMNS[kind],) + experiments[kind]()
