"""
Workbench Configuration - Default hyperparameters, paths and logging settings.

Layered configuration, highest priority first:
1. Explicit keyword arguments (CLI flags and --config files are merged in here)
2. Environment variables (SDL_ prefix)
3. .env file in the working directory
4. config.yaml in the repo root
5. Field defaults
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type

import yaml
from pydantic import Field
from pydantic.fields import FieldInfo
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

CONFIG_PATH = Path(__file__).parent.parent / "config.yaml"


def _load_yaml_config(path: Optional[Path] = None) -> dict:
    """
    Load configuration from a YAML file.

    Args:
        path: File to read; the repo-root config.yaml when None

    Returns:
        Dictionary of config values, or empty dict if the file doesn't exist
    """
    config_path = Path(path) if path is not None else CONFIG_PATH

    if not config_path.exists():
        return {}

    try:
        with open(config_path, "r") as f:
            config = yaml.safe_load(f) or {}
            return config if isinstance(config, dict) else {}
    except Exception as e:
        logger = logging.getLogger(__name__)
        logger.warning(f"Failed to load {config_path}: {e}")
        return {}


class YamlDefaultsSource(PydanticBaseSettingsSource):
    """Settings source backed by config.yaml, placed below env and .env."""

    def __init__(self, settings_cls: Type[BaseSettings]):
        super().__init__(settings_cls)
        self._values = _load_yaml_config()

    def get_field_value(self, field: FieldInfo, field_name: str) -> Tuple[Any, str, bool]:
        return self._values.get(field_name), field_name, False

    def __call__(self) -> Dict[str, Any]:
        return {name: value for name, value in self._values.items() if name in self.settings_cls.model_fields}


class Settings(BaseSettings):
    """Workbench defaults. Every field can be overridden by SDL_<NAME>."""

    model_config = SettingsConfigDict(
        env_prefix="SDL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Model
    variant: str = Field(default="mp", description="relu, jumprelu, topk, batchtopk or mp")
    k: int = Field(default=10, description="Target sparsity / MP steps")
    p: int = Field(default=1000, description="Dictionary size")
    lambda_l1: float = Field(default=1e-3, description="ReLU l1 weight")
    target_l0: float = Field(default=1e-3, description="JumpReLU l0 weight")
    aux_alpha: Optional[float] = Field(default=None, description="Aux loss weight; variant default when unset")
    aux_k: Optional[int] = Field(default=None, description="Dead atoms per aux reconstruction")
    dead_steps_threshold: int = Field(default=256)
    ste_bandwidth: float = Field(default=0.001)

    # Optimization
    epochs: int = Field(default=50)
    batch_size: int = Field(default=256)
    lr_init: float = Field(default=5e-4)
    lr_final: float = Field(default=1e-6)
    warmup_steps: Optional[int] = Field(default=None, description="None means one epoch of steps")
    beta1: float = Field(default=0.9)
    beta2: float = Field(default=0.999)
    adam_eps: float = Field(default=1e-8)
    log_every: int = Field(default=10, description="Training-log cadence in updates")

    # Runs
    seed: int = Field(default=0)
    out_dir: str = Field(default="runs")
    sweep_workers: int = Field(default=1)

    # Logging
    log_level: str = Field(default="INFO")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return init_settings, env_settings, dotenv_settings, YamlDefaultsSource(settings_cls), file_secret_settings


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    Get the global settings instance.

    Loads settings on first call, then caches the instance.

    Returns:
        Settings instance with configuration values
    """
    global _settings

    if _settings is None:
        _settings = Settings()

    return _settings


def reset_settings() -> None:
    """
    Reset the global settings instance.

    Useful for testing to reload settings.
    """
    global _settings
    _settings = None
