import os
import sys
import logging
from typing import Optional

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from core.config_manager import ConfigManager

logger = logging.getLogger(__name__)

# Global config manager instance
_config_manager: Optional[ConfigManager] = None


def get_config_manager() -> ConfigManager:
    """Get the global configuration manager instance."""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager


_config_manager = get_config_manager()

# Policy defaults
DEFAULT_ALPHA = float(_config_manager.get_policy_setting("default_alpha", 1.0))
TIE_BREAK = _config_manager.get_policy_setting("tie_break", "lexicographic")
TOL_TIE = float(_config_manager.get_policy_setting("tol_tie", 1e-9))

# Tolerances, centralized
LP_TOL = float(_config_manager.get_tolerance("lp", 1e-9))
WEIGHT_ABS_TOL = float(_config_manager.get_tolerance("weight_abs", 1e-12))
DUAL_GRAD_TOL = float(_config_manager.get_tolerance("dual_gradient", 1e-8))
PRIMAL_FEAS_TOL = float(_config_manager.get_tolerance("primal_feasibility", 1e-7))
INVARIANT_TOL = float(_config_manager.get_tolerance("invariant", 1e-8))
TRAJECTORY_SLACK_FACTOR = float(_config_manager.get_tolerance("trajectory_slack_factor", 10.0))

# Fluid integrator
Q_FLOOR = float(_config_manager.get_fluid_setting("q_floor", 1e-9))
CLIP_BUDGET = float(_config_manager.get_fluid_setting("clip_budget", 0.1))
H_MAX_NUMERATOR = float(_config_manager.get_fluid_setting("h_max_numerator", 0.01))
FLUID_SELECTION = _config_manager.get_fluid_setting("selection", "uniform")
MAX_SUBSTEPS = int(_config_manager.get_fluid_setting("max_substeps", 64))

# Packet simulator
REPRODUCIBLE = bool(_config_manager.get_simulation_setting("reproducible", True))
RECORD_EVENTS = bool(_config_manager.get_simulation_setting("record_events", True))

# Enumeration caps
MAX_BASES = int(_config_manager.get_lp_setting("max_bases", 1000000))
MAX_SCHEDULES = int(_config_manager.get_lp_setting("max_schedules", 65536))
LIFT_MAX_ITERS = int(_config_manager.get_lifting_setting("max_iters", 100000))

# Runner
DEFAULT_THREADS = int(_config_manager.get_runner_setting("threads", 1))
THREADS_ENV = _config_manager.get_runner_setting("threads_env", "MWUM_NET_THREADS")
MANIFEST_NAME = _config_manager.get_output_setting("manifest_name", "manifest.json")


def validate_configuration() -> bool:
    """Validate the current configuration."""
    issues = _config_manager.validate_config()
    if issues:
        for category, problems in issues.items():
            for problem in problems:
                logger.error("Configuration issue (%s): %s", category, problem)
        return False
    return True


def thread_limit() -> int:
    """Fan-out cap: MWUM_NET_THREADS if set, else the configured default."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_THREADS
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return DEFAULT_THREADS
    return max(1, value)
