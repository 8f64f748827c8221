"""
Configuration management: YAML defaults from config/config.yaml, overridden
by environment variables (optionally loaded from a .env file).

Every setting is resolved when read, so tests and the CLI can change the
environment after the Config object exists.
"""

import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional, TypeVar

import yaml
from dotenv import load_dotenv

T = TypeVar("T")

_TRUE = ("true", "1", "yes", "on")


def _to_bool(text: str) -> bool:
    return text.strip().lower() in _TRUE


class Config:
    """Configuration manager for the QPL semantics toolkit."""

    def __init__(
        self,
        env_file: Optional[str] = None,
        config_file: Optional[str] = None,
    ):
        """
        Args:
            env_file: .env file (defaults to .env in the project root; a missing file is ignored)
            config_file: YAML config (defaults to config/config.yaml)

        Raises:
            FileNotFoundError: If the YAML file does not exist
        """
        # src/utils/config.py -> project root
        self.project_root = Path(__file__).resolve().parent.parent.parent
        load_dotenv(env_file or self.project_root / ".env")
        self.config_file = Path(config_file or self.project_root / "config" / "config.yaml")
        self.config_data = self._load_yaml(self.config_file)

    @staticmethod
    def _load_yaml(config_file: Path) -> Dict[str, Any]:
        if not config_file.exists():
            raise FileNotFoundError(f"Config file not found: {config_file}")
        with open(config_file, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}

    def get(self, key: str, default: Any = None) -> Any:
        """
        Value at a dotted YAML path such as ``tolerance.eps_psd``; ``default``
        when any segment is missing.
        """
        value: Any = self.config_data
        for part in key.split("."):
            if not isinstance(value, dict) or value.get(part) is None:
                return default
            value = value[part]
        return value

    def setting(self, env_keys: tuple, yaml_key: str, default: T, cast: Callable[[str], T]) -> T:
        """
        Resolve one setting: the first of ``env_keys`` that is set and parses
        with ``cast`` wins, then the YAML value, then ``default``. Unparseable
        environment values are ignored.
        """
        for env_key in env_keys:
            raw = os.getenv(env_key)
            if raw is None:
                continue
            try:
                return cast(raw)
            except ValueError:
                continue
        return self.get(yaml_key, default)

    # Tolerances
    @property
    def eps_psd(self) -> float:
        """Relative eigenvalue slack for positivity tests."""
        return self.setting(("QPL_EPS_PSD", "QPL_TOLERANCE"), "tolerance.eps_psd", 1e-9, float)

    @property
    def eps_eq(self) -> float:
        """Entrywise equality slack."""
        return self.setting(("QPL_EPS_EQ", "QPL_TOLERANCE"), "tolerance.eps_eq", 1e-9, float)

    @property
    def eps_fix(self) -> float:
        """Kleene convergence slack."""
        return self.setting(("QPL_EPS_FIX",), "tolerance.eps_fix", 1e-10, float)

    # Iteration
    @property
    def max_iter(self) -> int:
        return self.setting(("QPL_MAX_ITER",), "iteration.max_iter", 10000, int)

    @property
    def check_invariants(self) -> bool:
        """Re-check the trace-nonincreasing invariant after every arrow constructor."""
        return self.setting(("QPL_CHECK_INVARIANTS",), "iteration.check_invariants", False, _to_bool)

    # Verification sampling
    @property
    def check_samples(self) -> int:
        """Random state/effect pairs per duality check."""
        return self.setting(("QPL_CHECK_SAMPLES",), "check.samples", 20, int)

    @property
    def seed(self) -> int:
        return self.setting(("QPL_SEED",), "check.seed", 0, int)

    # Application
    @property
    def report_dir(self) -> str:
        return self.setting(("QPL_REPORT_DIR",), "output.report_dir", "reports", str)

    @property
    def log_level(self) -> str:
        return self.setting(("LOG_LEVEL",), "logging.level", "WARNING", str)


_config_instance: Optional[Config] = None


def get_config() -> Config:
    """Process-wide Config, created on first use."""
    global _config_instance
    if _config_instance is None:
        _config_instance = Config()
    return _config_instance
