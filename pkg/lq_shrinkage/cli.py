import argparse

from lq_shrinkage.config import (
    BENCHMARK_ALPHA,
    BENCHMARK_KERNEL,
    BENCHMARK_NOISE_RATIO,
    BENCHMARK_POINTS,
    BENCHMARK_Q,
    CURVE_SCALES,
    KERNEL_KINDS,
    LANDWEBER_MAX_ITERS,
    LANDWEBER_REL_TOL,
    MAXENT_MAX_ITERS,
    MAXENT_TOL,
)
from lq_shrinkage.lib.modelsel import SOLVERS
from lq_shrinkage.lib.runner import DEFAULT_AUDIT_GRID
from lq_shrinkage.lib.variational import THEOREM1_VARIANTS, THEOREM2_VARIANTS

PROG = "lq-shrinkage"
INPUT_HELP = "Problem file (JSON), or benchmark[:POINTS] for the synthetic benchmark."


def preparse_config(argv=None) -> str | None:
    """Value of --config, read before the full parser is built."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=str, default=None)
    args, _ = parser.parse_known_args(argv)
    return args.config


def _add_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", type=str, default=None, help=INPUT_HELP)


def _add_landweber(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--nonneg",
        action="store_true",
        help="Set negative shrinkage arguments to zero.",
    )
    parser.add_argument("--max-iters", type=int, default=LANDWEBER_MAX_ITERS)
    parser.add_argument(
        "--tol",
        type=float,
        default=LANDWEBER_REL_TOL,
        help="Stop once |g_new - g| <= tol * max(|g|, 1).",
    )
    parser.add_argument(
        "--no-refine",
        action="store_true",
        help="Skip the support refinement after the iteration.",
    )


def _add_curve(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--grid",
        type=str,
        default=None,
        help="Log-spaced alpha grid LOW:HIGH:N (default 1e-4:1e1:30).",
    )
    parser.add_argument("--solver", choices=SOLVERS, default="closed_form")
    parser.add_argument(
        "--scale",
        choices=CURVE_SCALES,
        default="loglog",
        help="Scale in which the curvature of the L-curve is measured.",
    )


def _add_commands(subparsers) -> None:
    formatter = argparse.ArgumentDefaultsHelpFormatter

    solve = subparsers.add_parser(
        "solve", help="Shrinked Landweber iteration.", formatter_class=formatter
    )
    _add_input(solve)
    solve.add_argument("--q", type=float, default=BENCHMARK_Q)
    solve.add_argument("--alpha", type=float, default=BENCHMARK_ALPHA)
    solve.add_argument("--rule", type=str, default="hs", help="Shrinkage rule name.")
    _add_landweber(solve)
    solve.add_argument(
        "--warm-start",
        action="store_true",
        help="Start from the maximum-entropy solution instead of zero.",
    )
    solve.add_argument("--trace", type=str, default=None, help="Trace CSV path.")
    solve.add_argument("--out", type=str, default=None, help="Solution JSON path.")

    maxent = subparsers.add_parser(
        "maxent", help="Maximum-entropy regularization.", formatter_class=formatter
    )
    _add_input(maxent)
    maxent.add_argument("--beta", type=float, default=None, help="Chosen by L-curve if omitted.")
    maxent.add_argument("--select-beta", action="store_true", help="Choose beta by L-curve.")
    maxent.add_argument("--beta-grid", type=str, default=None, help="LOW:HIGH:N (default 1e-3:1e2:16).")
    maxent.add_argument("--scale", choices=CURVE_SCALES, default="loglog")
    maxent.add_argument("--max-iters", type=int, default=MAXENT_MAX_ITERS)
    maxent.add_argument("--tol", type=float, default=MAXENT_TOL)
    maxent.add_argument("--out", type=str, default=None, help="Solution JSON path.")

    varmin = subparsers.add_parser(
        "varmin",
        help="Closed-form constant-factor minimizer of J_q or K_q.",
        formatter_class=formatter,
    )
    varmin.add_argument("--operator", type=str, default=None, help="Matrix file of L (J only).")
    varmin.add_argument("--frame", type=str, default=None, help="Synthesis matrix F, canonical basis if omitted.")
    varmin.add_argument("--dual", type=str, default=None, help="Dual synthesis matrix, canonical dual if omitted.")
    varmin.add_argument("--data", type=str, required=True, help="Vector file of h.")
    varmin.add_argument("--weights", type=str, default=None, help="Vector file of per-index weights.")
    varmin.add_argument("--alpha", type=float, default=1.0, help="Uniform weight if --weights is omitted.")
    varmin.add_argument("--q", type=float, default=1.0)
    varmin.add_argument("--rule", type=str, default="hs")
    varmin.add_argument("--objective", choices=("J", "K"), default="J")
    varmin.add_argument(
        "--variant",
        choices=THEOREM1_VARIANTS + THEOREM2_VARIANTS,
        default=None,
        help="pulled_back/direct for J, projected/plain for K.",
    )
    varmin.add_argument("--probes", type=int, default=8, help="Random probes per family in the ratio audit.")
    varmin.add_argument("--out", type=str, default=None, help="Result JSON path.")

    audit = subparsers.add_parser(
        "prox-audit",
        help="Shrinkage versus brute-force minimizer of the decoupled problem.",
        formatter_class=formatter,
    )
    audit.add_argument("--q", type=float, default=1.0)
    audit.add_argument("--rule", type=str, default="hs")
    audit.add_argument("--grid", type=str, default=DEFAULT_AUDIT_GRID, help="VMIN:VMAX:NV,AMIN:AMAX:NA")
    audit.add_argument("--sample", type=int, default=None, help="Random log-uniform sample size instead of the grid.")
    audit.add_argument("--out", type=str, default=None, help="Audit CSV path.")

    lcurve = subparsers.add_parser(
        "lcurve", help="Regularization curve and its corner.", formatter_class=formatter
    )
    _add_input(lcurve)
    lcurve.add_argument("--q", type=float, default=1.0)
    lcurve.add_argument("--rule", type=str, default="hs")
    _add_curve(lcurve)
    _add_landweber(lcurve)
    lcurve.add_argument("--out", type=str, default=None, help="Curve CSV path.")

    qsweep = subparsers.add_parser(
        "qsweep", help="L-curve corner per q.", formatter_class=formatter
    )
    _add_input(qsweep)
    qsweep.add_argument("--q-grid", type=str, default="0,0.5,1", help="Comma separated q values.")
    qsweep.add_argument("--rule", type=str, default="hs", help="Rule name, bare hs follows q.")
    _add_curve(qsweep)
    _add_landweber(qsweep)
    qsweep.add_argument("--out", type=str, default=None, help="Summary CSV path.")

    generate = subparsers.add_parser(
        "gen-problem", help="Synthetic Fredholm problem file.", formatter_class=formatter
    )
    generate.add_argument(
        "--kind", choices=[i for i in KERNEL_KINDS if i != "inline"], default=BENCHMARK_KERNEL
    )
    generate.add_argument("--points", type=int, default=BENCHMARK_POINTS)
    generate.add_argument(
        "--noise-ratio",
        type=float,
        default=BENCHMARK_NOISE_RATIO,
        help="sigma as a fraction of max |K g*|.",
    )
    generate.add_argument("--param", action="append", default=None, help="Kernel parameter key=value.")
    generate.add_argument(
        "--spikes",
        type=str,
        default=None,
        help="POS:AMP,... with positions on the 100-point scale (default 45,55,66,89).",
    )
    generate.add_argument("--out", type=str, default=None, help="Problem JSON path.")
    generate.add_argument(
        "--kernel-out",
        type=str,
        default=None,
        help="Also write the kernel matrix (.csv, .bin or .json), readable by varmin --operator.",
    )

    compare = subparsers.add_parser(
        "compare",
        help="Shrinked Landweber against maximum entropy.",
        formatter_class=formatter,
    )
    _add_input(compare)
    compare.add_argument("--q", type=float, default=BENCHMARK_Q)
    compare.add_argument(
        "--alpha",
        type=float,
        default=None,
        help="Matched to the maxent residual if omitted.",
    )
    compare.add_argument("--beta", type=float, default=None, help="Chosen by L-curve if omitted.")
    compare.add_argument("--max-iters", type=int, default=LANDWEBER_MAX_ITERS)
    compare.add_argument("--tol", type=float, default=LANDWEBER_REL_TOL)
    compare.add_argument("--out", type=str, default=None, help="Summary JSON path.")

    run = subparsers.add_parser(
        "run", help="Run an experiment config file.", formatter_class=formatter
    )
    run.add_argument("experiment", type=str, help="Experiment YAML or JSON file.")


def _apply_defaults(parser: argparse.ArgumentParser, defaults: dict) -> None:
    known = {action.dest for action in parser._actions}
    values = {k: v for k, v in defaults.items() if not isinstance(v, dict) and k in known}
    if values:
        parser.set_defaults(**values)


def build_args_parser(
    description: str, version: str, defaults: dict | None = None
) -> argparse.ArgumentParser:
    """
    Args:
        defaults: option defaults from a config file; top-level keys apply to
            every subcommand, a mapping under a subcommand name to that one.

    Returns:
        An ArgumentParser instance for the CLI.
    """
    parser = argparse.ArgumentParser(
        prog=PROG,
        description=description,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--version",
        action="version",
        version=version,
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="More verbosity in logging.",
    )
    parser.add_argument(
        "--quiet",
        action="store_true",
        help="Only log warnings and errors.",
    )
    parser.add_argument(
        "--show",
        action="store_true",
        help="Print the JSON result highlighted, also when it is written to a file.",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed of the benchmark noise and of random probes.",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Threads for independent solves and audits.",
    )
    parser.add_argument(
        "--config",
        type=str,
        default=None,
        help="YAML or JSON file with option defaults.",
    )
    parser.add_argument(
        "--record-timing",
        action="store_true",
        help="Write wall time into result JSON (breaks byte-identical reruns).",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_commands(subparsers)
    defaults = defaults or {}
    _apply_defaults(parser, defaults)
    for name, subparser in subparsers.choices.items():
        _apply_defaults(subparser, defaults)
        section = defaults.get(name)
        if isinstance(section, dict):
            _apply_defaults(subparser, section)
    return parser
