import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

import yaml
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.models.models import ExperimentConfig
from pydantic import ValidationError

__all__ = ["ConfigLoader", "load_experiment_config", "describe_validation_error"]

logger = nlkg_logger()


def describe_validation_error(error: ValidationError) -> str:
    """One line per offending field, named by its dotted path."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


class ConfigLoader:
    """Loads experiment configurations from files or from the presets
    shipped with the package.

    Attributes
    ----------
    presets : `dict` [`str`, `dict`]
        Raw preset sections keyed by name.
    """

    def __init__(self) -> None:
        presets_file_path = Path(__file__).parent / "experiments_data.yaml"
        with open(presets_file_path, "r") as file:
            data = yaml.safe_load(file)
        self.presets: dict[str, dict[str, Any]] = data["presets"]

    def preset_names(self) -> list[str]:
        return sorted(self.presets)

    def load(self, source: str | Path) -> ExperimentConfig:
        """Load a config from a path, or from a preset when ``source``
        names one and no such file exists.

        Parameters
        ----------
        source : `str` | `Path`
            File path (``.toml``, ``.json``, ``.yaml``/``.yml``) or preset
            name.

        Returns
        -------
        config : `ExperimentConfig`
            The validated configuration.
        """
        path = Path(source)
        if not path.exists() and str(source) in self.presets:
            logger.debug("Loading preset", preset=str(source))
            data = dict(self.presets[str(source)])
            data.setdefault("name", str(source))
            return self._populate_model(data)
        if not path.exists():
            raise ConfigError(f"No config file or preset named {str(source)!r}")
        return self._populate_model(self._read(path))

    def _read(self, path: Path) -> dict[str, Any]:
        suffix = path.suffix.lower()
        try:
            if suffix == ".toml":
                with open(path, "rb") as file:
                    data = tomllib.load(file)
            elif suffix == ".json":
                with open(path, "r") as file:
                    data = json.load(file)
            elif suffix in (".yaml", ".yml"):
                with open(path, "r") as file:
                    data = yaml.safe_load(file)
            else:
                raise ConfigError(f"Unsupported config format {suffix!r} for {path}")
        except (tomllib.TOMLDecodeError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Could not parse {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must contain a table at top level")
        return data

    def _populate_model(self, data: dict[str, Any]) -> ExperimentConfig:
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(describe_validation_error(e)) from e


def load_experiment_config(source: str | Path) -> ExperimentConfig:
    return ConfigLoader().load(source)
