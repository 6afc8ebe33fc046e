"""
GUIM Configuration Management.

Unified configuration system supporting:
- Bundled presets (desk, production, acceptance)
- YAML configuration files (guim.yaml), nested by section or flat
- Environment variable overrides
- Command-line overrides (--set section.key=value, --seed)
- Validation with fail-fast key reporting

Configuration Priority (highest to lowest):
1. Command-line overrides
2. Environment variables (GUIM_*)
3. YAML configuration file (and its includes)
4. Preset
5. Default values
"""

import logging
import os
from importlib.resources import files
from pathlib import Path
from typing import Any

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from guim.core.exceptions import (
    ConfigError,
    ConfigKeyError,
    ConfigNotFoundError,
    ConfigParseError,
)
from guim.core.models import ModelVariant, Precision

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "guim.yaml"
ENV_PREFIX = "GUIM_"


# =============================================================================
# Configuration Sections
# =============================================================================


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)


class ModelConfig(_Section):
    """Model architecture settings (the model config file keys).

    ``num_vectors`` is C for GUIM and GUI-EDI and H for GUIM-MH. Vocabulary
    sizes left as ``None`` are filled from the corpus at pre-training time;
    ``time_rows`` defaults to the history window in days plus the t_0 row.
    """

    variant: ModelVariant = ModelVariant.GUIM
    d: int = Field(16, gt=0)
    num_vectors: int = Field(1, gt=0)
    num_layers: int = Field(1, ge=0)
    num_heads: int = Field(2, gt=0)
    d_c: int = Field(16, gt=0)
    d_i: int = Field(16, gt=0)
    d_w: int = Field(8, gt=0)
    top_x: int = Field(1000, gt=0)
    num_categories: int | None = Field(None, gt=0)
    word_vocab_size: int | None = Field(None, gt=0)
    time_rows: int | None = Field(None, gt=0)
    mask_prob: float = Field(0.15, ge=0.0, le=1.0)
    max_len: int = Field(64, gt=1)
    alpha: float = Field(20.0, gt=0.0)
    seed: int = 0

    @property
    def num_cls(self) -> int:
        """Number of CLS tokens prepended to each sequence."""
        return self.num_vectors if self.variant == ModelVariant.GUIM else 1

    @property
    def d_model(self) -> int:
        """Hidden width of the encoder (C·d for the widened baseline)."""
        if self.variant == ModelVariant.GUI_EDI:
            return self.num_vectors * self.d
        return self.d

    @property
    def encoder_heads(self) -> int:
        """Attention heads; the widened baseline keeps head width constant."""
        if self.variant == ModelVariant.GUI_EDI:
            return self.num_heads * self.num_vectors
        return self.num_heads

    @property
    def user_vectors(self) -> int:
        """Number of vectors in one user representation."""
        return 1 if self.variant == ModelVariant.GUI_EDI else self.num_vectors

    @model_validator(mode="after")
    def _check_heads(self) -> "ModelConfig":
        if self.d_model % self.encoder_heads:
            raise ValueError(
                f"d_model {self.d_model} not divisible by {self.encoder_heads} heads"
            )
        if self.max_len <= self.num_cls:
            raise ValueError("max_len must exceed the number of CLS tokens")
        return self


class TrainConfig(_Section):
    """Mini-batch optimisation settings."""

    batch_size: int = Field(32, ge=2)
    negatives: int = Field(31, ge=1)
    epochs: int = Field(10, ge=0)
    learning_rate: float = Field(1e-3, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    weight_decay: float = Field(0.0, ge=0.0)
    grad_clip_norm: float | None = Field(None, gt=0.0)
    log_every: int = Field(10, gt=0)
    patience: int = Field(3, ge=1)
    validation_ratio: float = Field(0.1, gt=0.0, lt=1.0)
    precision: Precision = Precision.FLOAT32
    seed: int = 0


class EvalConfig(_Section):
    """Downstream evaluation settings."""

    m: int = Field(20, gt=0)
    protocol: str = "L"
    horizon_days: int = Field(30, gt=0)
    candidate_pool: int | None = Field(None, gt=0)
    backend: str = "exact"
    n_lists: int = Field(32, gt=0)
    n_probe: int = Field(4, gt=0)
    recall_floor: float = Field(0.9, ge=0.0, le=1.0)
    inference_batch_size: int = Field(256, gt=0)
    cpp_task: str = "dominant_cluster"
    cpp_hidden: tuple[int, int] = (256, 64)
    cpp_epochs: int = Field(300, gt=0)
    cpp_learning_rate: float = Field(1e-3, gt=0.0)
    test_fraction: float = Field(0.2, gt=0.0, lt=1.0)

    @field_validator("protocol")
    @classmethod
    def _check_protocol(cls, value: str) -> str:
        value = value.upper()
        if value not in {"L", "S", "N", "CPP"}:
            raise ValueError("protocol must be one of L, S, N, CPP")
        return value

    @field_validator("backend")
    @classmethod
    def _check_backend(cls, value: str) -> str:
        if value not in {"exact", "approximate"}:
            raise ValueError("backend must be 'exact' or 'approximate'")
        return value


class SyntheticConfig(_Section):
    """Synthetic multi-interest corpus settings.

    Ranges are inclusive ``(min, max)`` pairs. ``interests_per_user`` is the
    range of the number of interest clusters per user, drawn uniformly.
    """

    num_users: int = Field(1000, gt=0)
    num_items: int = Field(500, gt=0)
    num_categories: int = Field(32, gt=0)
    num_clusters: int = Field(8, gt=0)
    interests_per_user: tuple[int, int] = (1, 3)
    popularity_skew: float = Field(1.0, ge=0.0)
    seq_length_range: tuple[int, int] = (5, 30)
    post_length_range: tuple[int, int] = (1, 6)
    title_length_range: tuple[int, int] = (2, 6)
    word_vocab_size: int = Field(512, gt=0)
    stop_words: int = Field(16, ge=0)
    stop_word_rate: float = Field(0.3, ge=0.0, le=1.0)
    window_days: tuple[int, int] = (365, 30)
    cutoff_ts: int = 1_565_913_600
    seed: int = 0

    def check_feasible(self) -> None:
        """Raise ConfigError when ranges or cluster counts cannot be honoured."""
        ranges = {
            "interests_per_user": self.interests_per_user,
            "seq_length_range": self.seq_length_range,
            "post_length_range": self.post_length_range,
            "title_length_range": self.title_length_range,
        }
        for name, (low, high) in ranges.items():
            if low > high or low < 0:
                raise ConfigError(f"Empty range for {name}: {(low, high)}")
        if self.seq_length_range[0] < 1 or self.post_length_range[0] < 1:
            raise ConfigError("Every user needs at least one pre- and post-cutoff purchase")
        if self.interests_per_user[0] < 1:
            raise ConfigError("Users need at least one interest cluster")
        if self.num_clusters > self.num_categories:
            raise ConfigError("num_clusters must not exceed num_categories")
        if self.interests_per_user[1] > self.num_clusters:
            raise ConfigError("interests_per_user exceeds num_clusters")
        if self.num_items < self.num_clusters:
            raise ConfigError("Every cluster needs at least one item")
        if self.word_vocab_size - self.stop_words < self.num_clusters:
            raise ConfigError("Word vocabulary too small for per-cluster words")
        if min(self.window_days) < 1:
            raise ConfigError("Window durations must be at least one day")


class GradcheckConfig(_Section):
    """Finite-difference verification settings and its tiny model."""

    epsilon: float = Field(1e-5, gt=0.0)
    samples: int = Field(200, gt=0)
    threshold: float = Field(1e-4, gt=0.0)
    abs_floor: float = Field(1e-3, gt=0.0)
    model_dim: int = Field(8, gt=0)
    layers: int = Field(1, ge=0)
    vectors: int = Field(2, gt=0)
    num_negatives: int = Field(3, ge=1)
    seq_len: int = Field(12, gt=0)
    batch_users: int = Field(4, ge=2)


class PathsConfig(_Section):
    """Input and output locations."""

    corpus: str = "runs/corpus"
    checkpoint: str = "runs/checkpoint.guim"
    out: str = "runs"


class LoggingConfig(_Section):
    """Logging configuration."""

    level: str = "INFO"
    format: str = "console"


class GUIMConfig(_Section):
    """
    Complete GUIM run configuration.

    Combines all configuration sections into a single object. The top-level
    ``seed`` governs every seeded section.
    """

    version: str = "0.1.0"
    seed: int = 0
    threads: int | None = Field(None, gt=0)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    synth: SyntheticConfig = Field(default_factory=SyntheticConfig)
    gradcheck: GradcheckConfig = Field(default_factory=GradcheckConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)


SECTIONS: dict[str, type[BaseModel]] = {
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "synth": SyntheticConfig,
    "gradcheck": GradcheckConfig,
    "paths": PathsConfig,
    "logging": LoggingConfig,
}
TOP_LEVEL_KEYS = {"version", "seed", "threads", "includes"}
SEEDED_SECTIONS = ("model", "train", "synth")


# =============================================================================
# Configuration Loading
# =============================================================================


def find_config_file(start_path: Path | None = None) -> Path | None:
    """
    Find guim.yaml by walking up from the start directory.

    Args:
        start_path: Starting directory for search

    Returns:
        Path to config file if found, None otherwise
    """
    current = Path(start_path) if start_path else Path.cwd()
    while True:
        candidate = current / CONFIG_FILENAME
        if candidate.exists():
            return candidate
        if current == current.parent:
            return None
        current = current.parent


def load_yaml_config(path: Path) -> dict[str, Any]:
    """
    Load configuration from YAML file.

    Raises:
        ConfigNotFoundError: If file doesn't exist
        ConfigParseError: If YAML parsing fails
    """
    if not path.exists():
        raise ConfigNotFoundError(str(path))

    try:
        with open(path, encoding="utf-8") as f:
            config = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigParseError(str(path), parse_error=str(e)) from e
    if not isinstance(config, dict):
        raise ConfigParseError(str(path), "Config root must be a mapping")
    return config


def load_preset(name: str) -> dict[str, Any]:
    """Load a bundled preset from the package data directory."""
    resource = files("guim.data").joinpath("presets", f"{name}.yaml")
    if not resource.is_file():
        raise ConfigNotFoundError(f"preset:{name}")
    try:
        data = yaml.safe_load(resource.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigParseError(f"preset:{name}", parse_error=str(e)) from e
    return nest_flat_keys(data)


def nest_flat_keys(config: dict[str, Any]) -> dict[str, Any]:
    """
    Route top-level scalar keys of a flat config to their owning sections.

    A key owned by several sections (e.g. ``num_categories`` for both the
    model and the synthetic corpus) is routed to all of them.

    Raises:
        ConfigKeyError: If a key belongs to no section
    """
    nested: dict[str, Any] = {}
    for key, value in config.items():
        if key in SECTIONS and isinstance(value, dict):
            nested[key] = merge_configs(nested.get(key, {}), value)
            continue
        if key in TOP_LEVEL_KEYS:
            nested[key] = value
            continue
        owners = [name for name, model in SECTIONS.items() if key in model.model_fields]
        if not owners:
            raise ConfigKeyError(key)
        for owner in owners:
            nested.setdefault(owner, {})[key] = value
    return nested


def get_env_overrides() -> dict[str, Any]:
    """
    Get configuration overrides from environment variables.

    Environment variables are prefixed with GUIM_ and use double underscore
    for nested keys. For example:
    - GUIM_TRAIN__EPOCHS=5
    - GUIM_MODEL__NUM_VECTORS=4
    - GUIM_SEED=7
    """
    overrides: dict[str, Any] = {}

    for key, value in sorted(os.environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = key[len(ENV_PREFIX) :].lower().split("__")
        current = overrides
        for part in parts[:-1]:
            current = current.setdefault(part, {})
        current[parts[-1]] = _convert_value(value)

    return overrides


def parse_overrides(assignments: list[str]) -> dict[str, Any]:
    """
    Parse ``section.key=value`` command-line assignments.

    Values are parsed as YAML scalars/sequences, so ``--set
    model.variant=gui_edi`` and ``--set eval.cpp_hidden=[128,32]`` both work.
    """
    overrides: dict[str, Any] = {}
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigKeyError(assignment, f"Override must be key=value: {assignment}")
        dotted, raw = assignment.split("=", 1)
        parts = dotted.strip().split(".")
        current = overrides
        for part in parts[:-1]:
            current = current.setdefault(part, {})
        current[parts[-1]] = yaml.safe_load(raw) if raw else None
    return nest_flat_keys(overrides)


def _convert_value(value: str) -> Any:
    """Convert environment variable string to appropriate type."""
    try:
        return yaml.safe_load(value)
    except yaml.YAMLError:
        return value


def merge_configs(*configs: dict[str, Any]) -> dict[str, Any]:
    """
    Deep merge multiple configuration dictionaries.

    Later configs override earlier ones.
    """
    result: dict[str, Any] = {}

    for config in configs:
        for key, value in config.items():
            if (
                key in result
                and isinstance(result[key], dict)
                and isinstance(value, dict)
            ):
                result[key] = merge_configs(result[key], value)
            else:
                result[key] = value

    return result


def load_config(
    config_path: Path | None = None,
    preset: str | None = None,
    overrides: dict[str, Any] | None = None,
    *,
    search: bool = True,
) -> dict[str, Any]:
    """
    Load complete configuration with all sources merged.

    Args:
        config_path: Explicit path to a YAML config file
        preset: Name of a bundled preset applied below the file
        overrides: Already-nested command-line overrides (highest priority)
        search: Look for guim.yaml upwards from cwd when no path is given

    Returns:
        Complete merged configuration dictionary
    """
    configs: list[dict[str, Any]] = []

    if preset:
        configs.append(load_preset(preset))

    yaml_path = config_path or (find_config_file() if search else None)
    if config_path is not None and not config_path.exists():
        raise ConfigNotFoundError(str(config_path))
    if yaml_path:
        yaml_config = load_yaml_config(yaml_path)
        includes = yaml_config.pop("includes", [])
        for include in includes:
            include_path = yaml_path.parent / include
            configs.append(nest_flat_keys(load_yaml_config(include_path)))
        configs.append(nest_flat_keys(yaml_config))
        logger.debug("Loaded config file %s", yaml_path)

    env_overrides = get_env_overrides()
    if env_overrides:
        configs.append(nest_flat_keys(env_overrides))

    if overrides:
        configs.append(overrides)

    merged = merge_configs(*configs)
    return _propagate_seed(merged)


def _propagate_seed(config: dict[str, Any]) -> dict[str, Any]:
    """Copy the top-level seed into every seeded section that sets none."""
    if "seed" not in config:
        return config
    for section in SEEDED_SECTIONS:
        config.setdefault(section, {}).setdefault("seed", config["seed"])
    return config


def build_config(config: dict[str, Any]) -> GUIMConfig:
    """
    Validate a configuration dictionary into GUIMConfig.

    Raises:
        ConfigKeyError: Naming the first unknown or invalid dotted key
    """
    try:
        return GUIMConfig.model_validate(config)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigKeyError(key, f"Invalid config key {key}: {first['msg']}") from e


# =============================================================================
# Global Configuration Instance
# =============================================================================

_config: GUIMConfig | None = None


def get_config(reload: bool = False) -> GUIMConfig:
    """
    Get the global configuration instance.

    Args:
        reload: Force reload configuration from sources
    """
    global _config

    if _config is None or reload:
        _config = build_config(load_config())

    return _config


def reset_config() -> None:
    """Reset the global configuration (mainly for testing)."""
    global _config
    _config = None
