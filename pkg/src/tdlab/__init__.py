"""Off-policy linear TD evaluation: update rules, mean ODEs, stability checks and experiments."""

from .envs import ENV_NAMES, MdpEnv, build_env, stationary_distribution, true_value_function
from .errors import TdlabError
from .harness import ExperimentConfig, RunResult, run_experiment, run_sweep
from .learners import AlgoSpec, LearnerState, RegFn, StepSchedule
from .odelab import OdeSystem, closed_loop, simulate
from .stability import is_hurwitz
from .tdcore import KeyMatrices, expected_matrices

__all__ = [
    "ENV_NAMES",
    "AlgoSpec",
    "ExperimentConfig",
    "KeyMatrices",
    "LearnerState",
    "MdpEnv",
    "OdeSystem",
    "RegFn",
    "RunResult",
    "StepSchedule",
    "TdlabError",
    "build_env",
    "closed_loop",
    "expected_matrices",
    "is_hurwitz",
    "run_experiment",
    "run_sweep",
    "simulate",
    "stationary_distribution",
    "true_value_function",
]
