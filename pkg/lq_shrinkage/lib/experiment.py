import pathlib

from lq_shrinkage.config import (
    BENCHMARK_POINTS,
    BENCHMARK_SEED,
    CONFIG_REQUIRED_FIELDS,
    CONFIG_SUFFIXES,
    METHOD_REQUIRED_PARAMS,
    METHODS,
    OUTPUT_REQUIRED_FIELDS,
)
from lq_shrinkage.errors import (
    ConfigError,
    LqShrinkageError,
    ProblemFileError,
    SchemaError,
)
from lq_shrinkage.lib.fredholm import FredholmProblem, default_benchmark, load_problem
from lq_shrinkage.lib.shrinkage import get_rule
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

METHOD_OPTIONAL_PARAMS = {
    "landweber_shrink": {"rule", "nonneg", "max_iters", "tol", "warm_start", "refine", "beta"},
    "maxent": {"max_iters", "tol"},
    "closed_form": {"rule", "variant"},
}
OUTPUT_FIELDS = {"solution", "trace"}
BENCHMARK_PREFIX = "benchmark"


def load_mapping(path: pathlib.Path) -> dict:
    """YAML or JSON mapping from `path` (YAML 1.2 reads JSON as well)."""
    path = pathlib.Path(path)
    if not path.is_file():
        raise ProblemFileError(f"file {path} does not exist")
    if path.suffix not in CONFIG_SUFFIXES:
        raise ConfigError(f"{path.suffix} not accepted.")
    try:
        with open(path, "r") as f:
            content = YAML(typ="safe", pure=True).load(f)
    except YAMLError as e:
        raise ConfigError(f"file {path} is not valid yaml: {e}") from e
    if not content or not isinstance(content, dict):
        raise ConfigError(f"file {path} doesn't seem to hold a mapping.")
    return content


def load_option_defaults(path) -> dict:
    """Option defaults from a config file, keys normalized to argparse dests.

    Top-level scalars apply to every subcommand; a mapping under a
    subcommand name applies to that subcommand only.
    """
    defaults = {}
    for key, value in load_mapping(path).items():
        if isinstance(value, dict):
            defaults[str(key)] = {str(k).replace("-", "_"): v for k, v in value.items()}
        else:
            defaults[str(key).replace("-", "_")] = value
    return defaults


def resolve_problem(
    reference: str | None, base: pathlib.Path | None = None, seed: int | None = None
) -> FredholmProblem:
    """A problem file path, or `benchmark[:POINTS]` for the synthetic benchmark."""
    reference = reference or BENCHMARK_PREFIX
    name, _, points = str(reference).partition(":")
    if name == BENCHMARK_PREFIX:
        try:
            points = int(points) if points else BENCHMARK_POINTS
        except ValueError as e:
            raise ConfigError(f"malformed benchmark reference {reference}") from e
        return default_benchmark(points, BENCHMARK_SEED if seed is None else seed)
    path = pathlib.Path(reference)
    if base is not None and not path.is_absolute():
        path = base / path
    return load_problem(path)


class ExperimentConfig:
    """A validated experiment: problem reference, method, its parameters and outputs."""

    def __init__(self, config_path: pathlib.Path) -> None:
        self.config_path = pathlib.Path(config_path)
        self.content = load_mapping(self.config_path)
        self._validate()

    @property
    def method(self) -> str:
        return self.content["method"]

    @property
    def params(self) -> dict:
        return dict(self.content.get("params") or {})

    @property
    def outputs(self) -> dict:
        base = self.config_path.parent
        return {key: base / value for key, value in self.content["outputs"].items()}

    @property
    def seed(self) -> int | None:
        return self.content.get("seed")

    @property
    def record_timing(self) -> bool:
        return bool(self.content.get("record_timing", False))

    def load_problem(self) -> FredholmProblem:
        return resolve_problem(self.content["problem"], self.config_path.parent, self.seed)

    def _validate(self) -> None:
        keys = set(self.content.keys())
        if not CONFIG_REQUIRED_FIELDS <= keys:
            raise SchemaError(CONFIG_REQUIRED_FIELDS, "top level")
        if self.method not in METHODS:
            raise ConfigError(f"method {self.method} not accepted, expected one of {list(METHODS)}")
        params = self.content.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("params must be a mapping")
        required = METHOD_REQUIRED_PARAMS[self.method]
        if not required <= set(params):
            raise SchemaError(required, ".params")
        unknown = set(params) - required - METHOD_OPTIONAL_PARAMS[self.method]
        if unknown:
            raise ConfigError(f"unknown params for {self.method}: {sorted(unknown)}")
        self._validate_values(params)
        outputs = self.content["outputs"]
        if not isinstance(outputs, dict) or not OUTPUT_REQUIRED_FIELDS <= set(outputs):
            raise SchemaError(OUTPUT_REQUIRED_FIELDS, ".outputs")
        if set(outputs) - OUTPUT_FIELDS:
            raise ConfigError(f"unknown outputs: {sorted(set(outputs) - OUTPUT_FIELDS)}")
        seed = self.content.get("seed")
        if seed is not None and (not isinstance(seed, int) or seed < 0):
            raise ConfigError(f"seed must be a nonnegative integer, got {seed}")
        problem = str(self.content["problem"])
        if problem.partition(":")[0] != BENCHMARK_PREFIX:
            path = pathlib.Path(problem)
            if not path.is_absolute():
                path = self.config_path.parent / path
            if not path.is_file():
                raise ProblemFileError(f"file {path} does not exist")

    def _validate_values(self, params: dict) -> None:
        try:
            q = float(params.get("q", 0.0))
            if not 0.0 <= q <= 1.0:
                raise ConfigError(f"params.q must lie in [0, 1], got {q}")
            if float(params.get("alpha", 1.0)) < 0:
                raise ConfigError("params.alpha must be nonnegative")
            if float(params.get("beta", 1.0)) <= 0:
                raise ConfigError("params.beta must be positive")
            if int(params.get("max_iters", 1)) < 1:
                raise ConfigError("params.max_iters must be positive")
            if float(params.get("tol", 1.0)) <= 0:
                raise ConfigError("params.tol must be positive")
            if "rule" in params:
                get_rule(str(params["rule"]), q=q)
            for flag in ("nonneg", "warm_start", "refine"):
                if flag in params and not isinstance(params[flag], bool):
                    raise ConfigError(f"params.{flag} must be true or false, got {params[flag]!r}")
        except ConfigError:
            raise
        except (LqShrinkageError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid params: {e}") from e
