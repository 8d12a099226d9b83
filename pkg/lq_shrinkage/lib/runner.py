import logging
import pathlib
import threading
import time
from dataclasses import replace

import numpy as np

from lq_shrinkage.config import (
    BENCHMARK_KERNEL,
    BENCHMARK_KERNEL_PARAMS,
    BENCHMARK_SEED,
    BENCHMARK_SPIKES,
    DEFAULT_Q_GRID,
    EXIT_OK,
    LANDWEBER_MAX_ITERS,
    LANDWEBER_REL_TOL,
    MATCH_ALPHA_START,
    MAXENT_BETA,
    MAXENT_MAX_ITERS,
    MAXENT_TOL,
)
from lq_shrinkage.errors import ConfigError, DomainError, LqShrinkageError
from lq_shrinkage.lib.experiment import ExperimentConfig, resolve_problem
from lq_shrinkage.lib.fredholm import FredholmProblem, default_benchmark, save_problem
from lq_shrinkage.lib.frames import (
    BiFrame,
    ForwardProblem,
    Frame,
    canonical_basis,
    canonical_dual,
)
from lq_shrinkage.lib.matrixio import dumps_json, read_matrix, read_vector, write_csv, write_json, write_matrix
from lq_shrinkage.lib.modelsel import (
    QSweepRow,
    curvature,
    match_residual_alpha,
    max_curvature_alpha,
    parse_log_grid,
    q_sweep,
    select_beta,
    sweep_alpha,
)
from lq_shrinkage.lib.prox import (
    AuditRow,
    audit_rows,
    lq_terms,
    log_uniform_sample,
    parse_grid_spec,
)
from lq_shrinkage.lib.shrinkage import get_rule
from lq_shrinkage.lib.solver import (
    LandweberConfig,
    landweber_shrink,
    maxent_nonzero_count,
    maxent_solve,
    nonzero_count,
    objective_monotone_check,
    peak_positions,
)
from lq_shrinkage.lib.styler import create_table, highlight_json
from lq_shrinkage.lib.variational import (
    VariationalProblem,
    constant_factor_audit_Jq,
    constant_factor_audit_Kq,
    default_probes,
    eval_Jq,
    theorem1_minimizer,
    theorem2_minimizer,
)

DEFAULT_AUDIT_GRID = "1e-3:1e3:41,1e-2:1e2:21"
LCURVE_HEADER = ("alpha", "residual_sq", "penalty", "curvature", "chosen")
COMPARE_HEADER = ("method", "residual", "nonzeros", "peaks", "objective")


class OutputWriter:
    """Single sink for every artifact of a run.

    Without a path JSON goes to stdout (highlighted with `show`) and CSV
    rows are printed as a table.
    """

    def __init__(self, show: bool = False, record_timing: bool = False) -> None:
        self.show = show
        self.record_timing = record_timing
        self.written: list[pathlib.Path] = []
        self._lock = threading.Lock()

    def json(self, value, path=None) -> None:
        text = dumps_json(value)
        with self._lock:
            if path is None:
                print(highlight_json(text) if self.show else text, end="")
                return
            self.written.append(write_json(path, value))
            logging.info(f"generating: {path}")
            if self.show:
                print(highlight_json(text), end="")

    def csv(self, header, rows, path=None) -> None:
        rows = list(rows)
        with self._lock:
            if path is None:
                print(create_table(list(header), rows))
                return
            self.written.append(write_csv(path, header, rows))
            logging.info(f"generating: {path}")

    def table(self, header, rows) -> None:
        with self._lock:
            print(create_table(list(header), list(rows)))


def load_input(reference, seed=None) -> FredholmProblem:
    problem = resolve_problem(reference, seed=seed)
    if problem.data is None:
        raise DomainError("problem has neither data nor a ground truth to observe")
    return problem


def solution_record(
    problem: FredholmProblem,
    method: str,
    params: dict,
    g,
    penalty: float,
    nonzeros: int,
    elapsed: float | None = None,
    **extra,
) -> dict:
    """Result document: residual, penalty, sparsity, peaks and the solution vector."""
    g = np.asarray(g, dtype=float)
    residual = problem.data - problem.kernel_matrix @ g
    residual_sq = float(residual @ residual)
    record = {
        "method": method,
        "params": params,
        "residual": float(np.sqrt(residual_sq)),
        "residual_sq": residual_sq,
        "penalty": float(penalty),
        "objective": residual_sq + float(penalty),
        "nonzeros": int(nonzeros),
        "peaks": peak_positions(g),
        **extra,
    }
    if problem.ground_truth is not None:
        record["truth_peaks"] = peak_positions(problem.ground_truth)
    if elapsed is not None:
        record["wall_time"] = elapsed
    record["solution"] = g
    return record


def _landweber_config(params: dict) -> LandweberConfig:
    q = float(params["q"])
    return LandweberConfig(
        q=q,
        alpha=float(params["alpha"]),
        rule=get_rule(params.get("rule", "hs"), q=q),
        max_iters=int(params.get("max_iters", LANDWEBER_MAX_ITERS)),
        rel_tol=float(params.get("tol", LANDWEBER_REL_TOL)),
        nonneg=bool(params.get("nonneg", False)),
        refine=bool(params.get("refine", True)),
    )


def _landweber(problem: FredholmProblem, params: dict):
    cfg = _landweber_config(params)
    g0 = None
    if params.get("warm_start"):
        beta = float(params.get("beta", MAXENT_BETA))
        g0 = maxent_solve(problem.kernel_matrix, problem.data, beta).solution
        logging.info(f"warm start from the maxent solution at beta={beta:g}")
    return cfg, landweber_shrink(problem.kernel_matrix, problem.data, cfg, g0)


def _landweber_record(problem, params, trace, elapsed=None) -> dict:
    g = trace.iterate
    return solution_record(
        problem,
        "landweber_shrink",
        params,
        g,
        trace.final.penalty,
        nonzero_count(g),
        elapsed,
        iterations=trace.iterations_used,
        stop_reason=trace.stop_reason,
        monotone=objective_monotone_check(trace),
        refine_moves=trace.refine_moves,
    )


def _maxent_record(problem, params, result, elapsed=None) -> dict:
    g = result.solution
    penalty = float(params["beta"]) * float(np.sum(g * np.log(g)))
    return solution_record(
        problem,
        "maxent",
        params,
        g,
        penalty,
        maxent_nonzero_count(g),
        elapsed,
        iterations=result.iterations,
        converged=result.converged,
    )


def _closed_form_record(problem, params, g, elapsed=None) -> dict:
    q, alpha = float(params["q"]), float(params["alpha"])
    penalty = alpha * float(np.sum(lq_terms(g, q)))
    return solution_record(problem, "closed_form", params, g, penalty, nonzero_count(g), elapsed)


def _elapsed(writer: OutputWriter, start: float) -> float | None:
    return time.perf_counter() - start if writer.record_timing else None


def run_solve(args, writer: OutputWriter) -> int:
    problem = load_input(args.input, args.seed)
    params = {
        "q": args.q,
        "alpha": args.alpha,
        "rule": args.rule,
        "nonneg": args.nonneg,
        "max_iters": args.max_iters,
        "tol": args.tol,
        "warm_start": args.warm_start,
        "refine": not args.no_refine,
    }
    start = time.perf_counter()
    _, trace = _landweber(problem, params)
    elapsed = _elapsed(writer, start)
    if args.trace:
        writer.written.append(trace.to_csv(args.trace))
        logging.info(f"generating: {args.trace}")
    writer.json(_landweber_record(problem, params, trace, elapsed), args.out)
    return EXIT_OK


def run_maxent(args, writer: OutputWriter) -> int:
    problem = load_input(args.input, args.seed)
    beta = args.beta
    if beta is None or args.select_beta:
        grid = parse_log_grid(args.beta_grid) if args.beta_grid else None
        beta = select_beta(problem.kernel_matrix, problem.data, grid, args.scale, args.workers)
    params = {"beta": float(beta), "max_iters": args.max_iters, "tol": args.tol}
    start = time.perf_counter()
    result = maxent_solve(problem.kernel_matrix, problem.data, beta, args.max_iters, args.tol)
    writer.json(_maxent_record(problem, params, result, _elapsed(writer, start)), args.out)
    return EXIT_OK


def _read_weights(args, size: int):
    if args.weights:
        weights = read_vector(args.weights)
        if weights.size != size:
            raise DomainError(f"{weights.size} weights for {size} frame vectors")
        return weights
    return args.alpha


def _read_biframe(args, dim: int) -> BiFrame:
    if not args.frame:
        basis = canonical_basis(dim)
        return BiFrame(basis, basis)
    primal = Frame(read_matrix(args.frame))
    dual = Frame(read_matrix(args.dual)) if args.dual else canonical_dual(primal)
    return BiFrame(primal, dual)


def run_varmin(args, writer: OutputWriter) -> int:
    h = read_vector(args.data)
    rule = get_rule(args.rule, q=args.q)
    if args.objective == "J":
        if not args.operator:
            raise ConfigError("--operator is required for the J objective")
        forward = ForwardProblem(read_matrix(args.operator), h)
        biframe = _read_biframe(args, forward.shape[1])
        variant = args.variant or "pulled_back"
        p = VariationalProblem(forward, biframe, _read_weights(args, len(biframe)), args.q)
        solution = theorem1_minimizer(p, rule, variant)
        breakdown = eval_Jq(p, solution)
        probes = default_probes(p, args.seed or 0, args.probes)
        worst = constant_factor_audit_Jq(p, rule, probes, variant, args.workers)
    else:
        biframe = _read_biframe(args, h.size)
        variant = args.variant or "projected"
        weights = _read_weights(args, len(biframe))
        result = theorem2_minimizer(biframe, h, weights, args.q, rule, variant)
        solution, breakdown = result.omega, result.objective
        p = VariationalProblem(ForwardProblem(np.eye(h.size), h), biframe, weights, args.q)
        probes = default_probes(p, args.seed or 0, args.probes, domain="sequence")
        worst = constant_factor_audit_Kq(biframe, h, weights, args.q, rule, probes, variant, args.workers)
    logging.info(f"{args.objective}_q audit: max ratio {worst:.6g} over {len(probes)} probes")
    record = {
        "objective": args.objective,
        "variant": variant,
        "q": args.q,
        "rule": rule.name,
        "breakdown": breakdown.to_dict(),
        "audit": {"probes": len(probes), "max_ratio": worst},
        "nonzeros": nonzero_count(solution),
        "solution": solution,
    }
    writer.json(record, args.out)
    return EXIT_OK


def run_prox_audit(args, writer: OutputWriter) -> int:
    rule = get_rule(args.rule, q=args.q)
    if args.sample:
        sample = log_uniform_sample(args.sample, args.seed or 0)
    else:
        sample = parse_grid_spec(args.grid)
    rows = audit_rows(args.q, rule, sample, args.workers)
    worst = max(row.ratio for row in rows)
    logging.info(f"{rule.name} at q={args.q:g}: max ratio {worst:.12g} over {len(rows)} points")
    writer.csv(AuditRow.header, (row.as_row() for row in rows), args.out)
    return EXIT_OK


def _landweber_options(args) -> dict:
    return {
        "nonneg": args.nonneg,
        "max_iters": args.max_iters,
        "rel_tol": args.tol,
        "refine": not args.no_refine,
    }


def run_lcurve(args, writer: OutputWriter) -> int:
    problem = load_input(args.input, args.seed)
    grid = parse_log_grid(args.grid) if args.grid else None
    rule = get_rule(args.rule, q=args.q)
    curve = sweep_alpha(
        problem.to_variational(args.q),
        args.q,
        rule,
        grid,
        args.solver,
        args.workers,
        _landweber_options(args) if args.solver == "landweber" else None,
    )
    kappa = curvature(curve, args.scale)
    chosen = max_curvature_alpha(curve, args.scale)
    rows = [
        (alpha, residual_sq, penalty, k, alpha == chosen)
        for alpha, residual_sq, penalty, k in zip(
            curve.alphas, curve.residual_sq, curve.penalty, kappa
        )
    ]
    writer.csv(LCURVE_HEADER, rows, args.out)
    return EXIT_OK


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(i) for i in text.split(",") if i.strip()]
    except ValueError as e:
        raise DomainError(f"malformed list of numbers: {text}") from e


def run_qsweep(args, writer: OutputWriter) -> int:
    problem = load_input(args.input, args.seed)
    q_grid = parse_float_list(args.q_grid) if args.q_grid else list(DEFAULT_Q_GRID)
    grid = parse_log_grid(args.grid) if args.grid else None
    rows = q_sweep(
        problem.to_variational(1.0),
        q_grid,
        grid,
        args.rule,
        args.solver,
        args.scale,
        args.workers,
        _landweber_options(args) if args.solver == "landweber" else None,
    )
    writer.csv(QSweepRow.header, (row.as_row() for row in rows), args.out)
    return EXIT_OK


def parse_params(items) -> dict:
    """`key=value` pairs into a dict of floats."""
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise DomainError(f"malformed parameter {item}, expected key=value")
        try:
            params[key.strip()] = float(value)
        except ValueError as e:
            raise DomainError(f"parameter {key} is not a number: {value}") from e
    return params


def parse_spikes(text: str) -> list[tuple[int, float]]:
    """`POS:AMP,...` with positions on the 100-point benchmark scale."""
    spikes = []
    for item in text.split(","):
        position, _, amplitude = item.partition(":")
        try:
            spikes.append((int(position), float(amplitude or 1.0)))
        except ValueError as e:
            raise DomainError(f"malformed spike {item}, expected POS:AMP") from e
    return spikes


def run_gen_problem(args, writer: OutputWriter) -> int:
    params = parse_params(args.param)
    if not params and args.kind == BENCHMARK_KERNEL:
        params = dict(BENCHMARK_KERNEL_PARAMS)
    problem = default_benchmark(
        points=args.points,
        seed=BENCHMARK_SEED if args.seed is None else args.seed,
        noise_ratio=args.noise_ratio,
        kind=args.kind,
        params=params,
        spikes=parse_spikes(args.spikes) if args.spikes else BENCHMARK_SPIKES,
    )
    if args.out:
        writer.written.append(save_problem(problem, args.out))
        logging.info(f"generating: {args.out}")
    else:
        writer.json(problem.to_dict())
    if args.kernel_out:
        writer.written.append(write_matrix(args.kernel_out, problem.kernel_matrix))
        logging.info(f"generating: {args.kernel_out}")
    return EXIT_OK


def compare_methods(
    problem: FredholmProblem,
    q: float,
    alpha: float | None = None,
    beta: float | None = None,
    max_iters: int | None = None,
    tol: float | None = None,
    workers: int = 1,
) -> dict:
    """Nonneg shrinked Landweber against maximum entropy, cold and maxent-warm started.

    Without alpha the largest alpha = 2^-k whose cold solve fits the data as
    closely as the maxent solution is used.
    """
    if beta is None:
        beta = select_beta(problem.kernel_matrix, problem.data, workers=workers)
    maxent = maxent_solve(problem.kernel_matrix, problem.data, beta)
    maxent_residual = float(np.linalg.norm(problem.data - problem.kernel_matrix @ maxent.solution))
    params = {"q": q, "alpha": MATCH_ALPHA_START if alpha is None else alpha, "nonneg": True}
    if max_iters is not None:
        params["max_iters"] = max_iters
    if tol is not None:
        params["tol"] = tol
    if alpha is None:
        cfg = _landweber_config(params)
        alpha, cold = match_residual_alpha(problem.kernel_matrix, problem.data, maxent_residual, cfg)
        params["alpha"] = alpha
        cfg = replace(cfg, alpha=alpha)
        selection = "matched"
    else:
        cfg, cold = _landweber(problem, params)
        selection = "given"
    warm = landweber_shrink(problem.kernel_matrix, problem.data, cfg, maxent.solution)
    methods = [
        _maxent_record(problem, {"beta": float(beta)}, maxent),
        {**_landweber_record(problem, params, cold), "method": "landweber_shrink"},
        {**_landweber_record(problem, params, warm), "method": "landweber_shrink_warm"},
    ]
    gap = abs(warm.final.objective - cold.final.objective) / max(abs(cold.final.objective), 1e-300)
    return {
        "q": q,
        "alpha": float(alpha),
        "alpha_selection": selection,
        "beta": float(beta),
        "maxent_residual": maxent_residual,
        "truth_peaks": peak_positions(problem.ground_truth) if problem.ground_truth is not None else None,
        "warm_start_gap": gap,
        "methods": methods,
    }


def run_compare(args, writer: OutputWriter) -> int:
    problem = load_input(args.input, args.seed)
    summary = compare_methods(
        problem, args.q, args.alpha, args.beta, args.max_iters, args.tol, args.workers
    )
    rows = [tuple(m[key] for key in COMPARE_HEADER) for m in summary["methods"]]
    writer.table(COMPARE_HEADER, rows)
    if summary["alpha_selection"] == "matched":
        logging.info(f"alpha={summary['alpha']:g} matches the maxent residual {summary['maxent_residual']:.6g}")
    logging.info(f"warm start changes the final objective by {summary['warm_start_gap']:.3e} (relative)")
    for m in summary["methods"]:
        m.pop("solution")
    writer.json(summary, args.out)
    return EXIT_OK


def run_benchmark(config: ExperimentConfig, writer: OutputWriter) -> int:
    """Solve the configured problem with the configured method and write its artifacts."""
    problem = config.load_problem()
    params = config.params
    outputs = config.outputs
    start = time.perf_counter()
    if config.method == "landweber_shrink":
        _, trace = _landweber(problem, params)
        elapsed = _elapsed(writer, start)
        if "trace" in outputs:
            writer.written.append(trace.to_csv(outputs["trace"]))
            logging.info(f"generating: {outputs['trace']}")
        record = _landweber_record(problem, params, trace, elapsed)
    elif config.method == "maxent":
        result = maxent_solve(
            problem.kernel_matrix,
            problem.data,
            float(params["beta"]),
            int(params.get("max_iters", MAXENT_MAX_ITERS)),
            float(params.get("tol", MAXENT_TOL)),
        )
        record = _maxent_record(problem, params, result, _elapsed(writer, start))
    else:
        q = float(params["q"])
        p = problem.to_variational(q, float(params["alpha"]))
        g = theorem1_minimizer(p, get_rule(params.get("rule", "hs"), q=q), params.get("variant", "direct"))
        record = _closed_form_record(problem, params, g, _elapsed(writer, start))
    if "trace" in outputs and config.method != "landweber_shrink":
        logging.warning(f"method {config.method} records no trace, {outputs['trace']} not written")
    writer.json(record, outputs["solution"])
    return EXIT_OK


def run_config(args, writer: OutputWriter) -> int:
    config = ExperimentConfig(pathlib.Path(args.experiment))
    writer.record_timing = writer.record_timing or config.record_timing
    return run_benchmark(config, writer)


COMMANDS = {
    "solve": run_solve,
    "maxent": run_maxent,
    "varmin": run_varmin,
    "prox-audit": run_prox_audit,
    "lcurve": run_lcurve,
    "qsweep": run_qsweep,
    "gen-problem": run_gen_problem,
    "compare": run_compare,
    "run": run_config,
}


def run_command(args) -> int:
    """
    Returns:
        exit code, 0 on success, the error's exit code on any library error.
    """
    writer = OutputWriter(show=args.show, record_timing=args.record_timing)
    logging.debug(f"running: {args.command}")
    try:
        exit_code = COMMANDS[args.command](args, writer)
    except LqShrinkageError as e:
        logging.error(f"{args.command} failed\n  reason: {e}")
        return e.exit_code
    logging.debug(f"number of written files: {len(writer.written)}")
    return exit_code
