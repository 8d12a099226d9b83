# Shrinkage axioms, default empirical grid
AXIOM_X_RANGE = (1e-4, 1e4, 200)
AXIOM_ALPHA_RANGE = (1e-3, 1e3, 50)
AXIOM_RTOL = 1e-9
AXIOM_ATOL = 1e-12

# firm-shrinkage with fixed alpha_1 keeps its constants on (0, FIRM_ALPHA_SPAN * alpha_1]
FIRM_ALPHA_SPAN = 10.0

DIFFUSION2_CONSTANT = 0.2

# Decoupled problem oracle
ORACLE_GRID_POINTS = 10_000
ORACLE_XATOL = 1e-12
ORACLE_OBJECTIVE_RTOL = 1e-10
ORACLE_MINIMIZER_ATOL = 1e-9

# Frames and operators
RANK_RTOL = 1e-12
BIFRAME_ATOL = 1e-10
PSEUDO_INVERSE_ATOL = 1e-8
RANGE_RTOL = 1e-8
BOUNDEDNESS_SAMPLES = 200

# Shrinked Landweber iteration
LANDWEBER_MAX_ITERS = 100_000
LANDWEBER_REL_TOL = 1e-8
LANDWEBER_TARGET_NORM = 0.99
SPECTRAL_NORM_TOL = 1e-6
SNAPSHOT_EVERY = 100
MONOTONE_TOL = 1e-10

# Support refinement after the iteration
REFINE_MAX_ROUNDS = 1000
REFINE_RTOL = 1e-15
POLISH_MAX_ITERS = 10_000
POLISH_FTOL = 1e-15
POLISH_GTOL = 1e-12

# Maximum entropy baseline
MAXENT_BETA = 1.0
MAXENT_MAX_ITERS = 15_000
MAXENT_TOL = 1e-12
MAXENT_FLOOR = 1e-12
MAXENT_NONZERO_RTOL = 1e-6

# Regularization curves
MIN_CURVE_POINTS = 5
CURVATURE_TIE_RTOL = 1e-9
CURVE_SCALES = ("loglog", "linear")
DEFAULT_ALPHA_GRID = (1e-4, 1e1, 30)
DEFAULT_BETA_GRID = (1e-3, 1e2, 16)
DEFAULT_Q_GRID = (0.0, 0.5, 1.0)
# alpha_k = alpha_0 * factor^k until the residual matches a target
MATCH_ALPHA_START = 1.0
MATCH_ALPHA_FACTOR = 0.5
MATCH_ALPHA_STEPS = 16

# Synthetic sedimentation benchmark
BENCHMARK_POINTS = 100
BENCHMARK_SPIKES = ((45, 1.0), (55, 1.0), (66, 1.0), (89, 1.0))
BENCHMARK_KERNEL = "sigmoid_front"
BENCHMARK_KERNEL_PARAMS = {"t": 1.0, "w": 1.0}
BENCHMARK_NOISE_RATIO = 1e-2
BENCHMARK_SEED = 42
BENCHMARK_Q = 0.3
BENCHMARK_ALPHA = 0.1
KERNEL_KINDS = ("gaussian_blur", "sigmoid_front", "inline")
QUADRATURE = "trapezoid"
PROBLEM_FORMAT = "lq-shrinkage/problem"
PROBLEM_VERSION = 1

# Experiment config files
CONFIG_SUFFIXES = (".yaml", ".yml", ".json")
METHODS = ("landweber_shrink", "maxent", "closed_form")
CONFIG_REQUIRED_FIELDS = {"problem", "method", "outputs"}
METHOD_REQUIRED_PARAMS = {
    "landweber_shrink": {"q", "alpha"},
    "maxent": {"beta"},
    "closed_form": {"q", "alpha"},
}
OUTPUT_REQUIRED_FIELDS = {"solution"}

# Output
FLOAT_FORMAT = ".17g"
PEAK_COUNT = 4

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4
