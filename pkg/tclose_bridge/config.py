import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .exceptions import ConfigError
from .models import AttributeSchema


class AppConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)

    grid_resolution: int = Field(default=10_001, ge=3)
    grid_tail_scales: float = Field(default=10.0, gt=0)
    # default for sweeps whose file does not set its own tolerance
    tolerance: float = Field(default=0.02, ge=0)
    jobs: int = Field(default=1, ge=1)
    log_level: Literal["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"] = "WARNING"
    qi_strategy: str = "greedy-seed"


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)

    sizes: List[int] = Field(default_factory=lambda: [12, 48, 120])
    epsilons: List[float] = Field(default_factory=lambda: [0.1, 0.6931471805599453, 1.0, 2.0])
    layouts: List[str] = Field(default_factory=lambda: ["equal", "skewed"])
    conf_distribution: str = "uniform"
    value_range: List[float] = Field(default_factory=lambda: [0.0, 100.0], min_length=2, max_length=2)
    grid_resolution: int = Field(default=10_001, ge=3)
    tolerance: float = Field(default=0.02, ge=0)
    seed: int = 2024
    construction_cases: List[List[int]] = Field(default_factory=lambda: [[48, 3, 1], [120, 2, 2], [27, 2, 1]])
    construction_trials: int = Field(default=100, ge=1)


def _first_error(e: ValidationError) -> str:
    error = e.errors()[0]
    where = ".".join(str(part) for part in error["loc"])
    return f"{where}: {error['msg']}" if where else error["msg"]


class ConfigManager:
    """Settings loader with support for config_private.json and config.json."""

    def __init__(self, project_root: Optional[Path] = None):
        self.project_root = project_root or Path(__file__).parent.parent
        self.private_config_path = self.project_root / "config_private.json"
        self.default_config_path = self.project_root / "config.json"

    def load_config(self, explicit_path: Optional[Path] = None) -> AppConfig:
        """Load settings with priority: explicit path > config_private.json > config.json > defaults."""
        config_data = self._load_config_file(explicit_path)
        try:
            return AppConfig(**config_data)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {_first_error(e)}") from e

    def _load_config_file(self, explicit_path: Optional[Path]) -> Dict[str, Any]:
        """Load the first configuration file found, or an empty mapping."""
        candidates = [explicit_path] if explicit_path else [self.private_config_path, self.default_config_path]
        for path in candidates:
            if path is not None and path.exists():
                logger.debug(f"Loading configuration from {path}")
                return _read_json(path)
            if explicit_path:
                raise ConfigError(f"Configuration file {path} does not exist")

        logger.debug("No configuration file found, using defaults")
        return {}


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return data


def load_sweep_config(path: Path) -> SweepConfig:
    """Read the fixed verification sweep matrix."""
    data = _read_json(path)
    try:
        return SweepConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid sweep configuration in {path}: {_first_error(e)}") from e


# ---------------------------------------------------------------------------
# Schema sidecar
#
#   # comment
#   <column>.role=quasi_identifier|confidential
#   <column>.kind=numeric|ordinal|categorical
#   <column>.bounds=<lo>,<hi>
#   <column>.order=<v1>,<v2>,...
#
# Columns appear in the order they are first mentioned; that order must match
# the CSV header.
# ---------------------------------------------------------------------------

SCHEMA_KEYS = ("role", "kind", "bounds", "order")


def parse_schema(text: str, source: str = "<schema>") -> tuple[AttributeSchema, ...]:
    columns: Dict[str, Dict[str, Any]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected <column>.<key>=<value>")
        lhs, value = line.split("=", 1)
        column, dot, key = lhs.strip().rpartition(".")
        if not dot or not column or key not in SCHEMA_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{lhs.strip()}'")
        entry = columns.setdefault(column, {"name": column})
        if key in entry:
            raise ConfigError(f"{source}:{lineno}: '{column}.{key}' given twice")
        value = value.strip()
        if key == "bounds":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"{source}:{lineno}: bounds need exactly two values")
            try:
                entry[key] = (float(parts[0]), float(parts[1]))
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: bounds must be numbers") from None
        elif key == "order":
            entry[key] = tuple(p.strip() for p in value.split(","))
        else:
            entry[key] = value

    if not columns:
        raise ConfigError(f"{source}: schema declares no columns")

    schema = []
    for name, entry in columns.items():
        try:
            schema.append(AttributeSchema(**entry))
        except ValidationError as e:
            raise ConfigError(f"{source}: column '{name}': {e.errors()[0]['msg']}") from e
    return tuple(schema)


def load_schema(path: Path) -> tuple[AttributeSchema, ...]:
    path = Path(path)
    logger.debug(f"Loading schema from {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot read schema {path}: {e}")
        raise
    return parse_schema(text, source=str(path))


def render_schema(schema: tuple[AttributeSchema, ...]) -> str:
    """Inverse of parse_schema; used when a release is written next to its data."""
    lines = []
    for attr in schema:
        lines.append(f"{attr.name}.role={attr.role.value}")
        lines.append(f"{attr.name}.kind={attr.kind.value}")
        if attr.bounds is not None:
            lines.append(f"{attr.name}.bounds={attr.bounds[0]!r},{attr.bounds[1]!r}")
        if attr.order is not None:
            lines.append(f"{attr.name}.order={','.join(attr.order)}")
    return "\n".join(lines) + "\n"


# Global config manager instance
_config_manager = None


def get_config(explicit_path: Optional[Path] = None) -> AppConfig:
    """Get the application configuration."""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager.load_config(explicit_path)
