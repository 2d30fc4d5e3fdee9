import os
import json
import logging
from typing import Dict, Any, Optional, List

logger = logging.getLogger(__name__)

CONFIG_ENV = "MWUM_NET_CONFIG"


class ConfigManager:
    """Manages solver and experiment settings loaded from a JSON file."""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file or self._default_config_path()
        self.config: Dict[str, Any] = {}
        self._default_config = self._get_default_config()
        self.load_config()

    @staticmethod
    def _default_config_path() -> str:
        """Config path from the environment, else config.json beside main.py."""
        env_path = os.environ.get(CONFIG_ENV)
        if env_path:
            return env_path
        project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        return os.path.join(project_root, "config.json")

    def _get_default_config(self) -> Dict[str, Any]:
        """Get default configuration as fallback."""
        return {
            "policy": {
                "default_alpha": 1.0,
                "tie_break": "lexicographic",
                "tol_tie": 1e-9
            },
            "tolerances": {
                "lp": 1e-9,
                "weight_abs": 1e-12,
                "dual_gradient": 1e-8,
                "primal_feasibility": 1e-7,
                "invariant": 1e-8,
                "trajectory_slack_factor": 10.0
            },
            "fluid": {
                "q_floor": 1e-9,
                "clip_budget": 0.1,
                "h_max_numerator": 0.01,
                "selection": "uniform",
                "max_substeps": 64
            },
            "simulation": {
                "reproducible": True,
                "record_events": True
            },
            "lp": {
                "max_bases": 1000000,
                "max_schedules": 65536
            },
            "lifting": {
                "max_iters": 100000
            },
            "runner": {
                "threads": 1,
                "threads_env": "MWUM_NET_THREADS"
            },
            "output": {
                "manifest_name": "manifest.json"
            }
        }

    def load_config(self) -> bool:
        """Load configuration from file, falling back to defaults."""
        try:
            if os.path.exists(self.config_file):
                with open(self.config_file, 'r') as f:
                    loaded_config = json.load(f)
                self.config = self._deep_merge(self._default_config, loaded_config)
                logger.debug("Configuration loaded from %s", self.config_file)
            else:
                self.config = self._deep_merge(self._default_config, {})
                logger.debug("No configuration at %s, using defaults", self.config_file)
            return True
        except (OSError, ValueError) as e:
            logger.warning("Error loading configuration: %s. Using defaults.", e)
            self.config = self._deep_merge(self._default_config, {})
            return False

    def _deep_merge(self, base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
        """Deep merge two dictionaries."""
        result = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
        for key, value in update.items():
            if (key in result and isinstance(result[key], dict)
                    and isinstance(value, dict)):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = value
        return result

    def get_policy_setting(self, key: str, default: Any = None) -> Any:
        """Get policy setting."""
        return self.config["policy"].get(key, default)

    def get_tolerance(self, key: str, default: Any = None) -> Any:
        """Get a numeric tolerance."""
        return self.config["tolerances"].get(key, default)

    def get_fluid_setting(self, key: str, default: Any = None) -> Any:
        """Get fluid integrator setting."""
        return self.config["fluid"].get(key, default)

    def get_simulation_setting(self, key: str, default: Any = None) -> Any:
        """Get packet simulator setting."""
        return self.config["simulation"].get(key, default)

    def get_lp_setting(self, key: str, default: Any = None) -> Any:
        """Get LP / enumeration setting."""
        return self.config["lp"].get(key, default)

    def get_lifting_setting(self, key: str, default: Any = None) -> Any:
        """Get lifting map solver setting."""
        return self.config["lifting"].get(key, default)

    def get_runner_setting(self, key: str, default: Any = None) -> Any:
        """Get experiment runner setting."""
        return self.config["runner"].get(key, default)

    def get_output_setting(self, key: str, default: Any = None) -> Any:
        """Get output setting."""
        return self.config["output"].get(key, default)

    def set_setting(self, category: str, key: str, value: Any) -> bool:
        """Update a configuration setting."""
        if category in self.config:
            self.config[category][key] = value
        else:
            self.config[category] = {key: value}
        return True

    def validate_config(self) -> Dict[str, List[str]]:
        """Validate configuration and return any issues."""
        issues: Dict[str, List[str]] = {}

        def report(category: str, message: str):
            issues.setdefault(category, []).append(message)

        for key, value in self.config["tolerances"].items():
            if not isinstance(value, (int, float)) or value <= 0:
                report("invalid_tolerances", f"{key} must be a positive number")

        alpha = self.config["policy"].get("default_alpha")
        if not isinstance(alpha, (int, float)) or alpha <= 0:
            report("invalid_settings", "default_alpha must be positive")
        if self.config["policy"].get("tie_break") != "lexicographic":
            report("invalid_settings", "tie_break must be 'lexicographic'")
        tol_tie = self.config["policy"].get("tol_tie")
        if not isinstance(tol_tie, (int, float)) or tol_tie < 0:
            report("invalid_settings", "tol_tie must be nonnegative")

        fluid = self.config["fluid"]
        budget = fluid.get("clip_budget")
        if not isinstance(budget, (int, float)) or not 0 < budget < 1:
            report("invalid_settings", "clip_budget must lie in (0, 1)")
        q_floor = fluid.get("q_floor")
        if not isinstance(q_floor, (int, float)) or q_floor < 0:
            report("invalid_settings", "q_floor must be nonnegative")
        if fluid.get("selection") != "uniform":
            report("invalid_settings", "fluid selection must be 'uniform'")
        if not isinstance(fluid.get("max_substeps"), int) or fluid["max_substeps"] < 1:
            report("invalid_settings", "max_substeps must be a positive integer")

        for key in ("max_bases", "max_schedules"):
            value = self.config["lp"].get(key)
            if not isinstance(value, int) or value < 1:
                report("invalid_settings", f"{key} must be a positive integer")

        max_iters = self.config["lifting"].get("max_iters")
        if not isinstance(max_iters, int) or max_iters < 1:
            report("invalid_settings", "lifting max_iters must be a positive integer")

        threads = self.config["runner"].get("threads")
        if not isinstance(threads, int) or threads < 1:
            report("invalid_settings", "runner threads must be a positive integer")

        return issues

    def save_config(self, path: Optional[str] = None) -> bool:
        """Save current configuration atomically."""
        target = path or self.config_file
        temp_file = target + '.tmp'
        try:
            with open(temp_file, 'w') as f:
                json.dump(self.config, f, indent=4, sort_keys=True)
            os.replace(temp_file, target)
            return True
        except OSError as e:
            if os.path.exists(temp_file):
                os.remove(temp_file)
            logger.error("Error saving configuration: %s", e)
            return False
