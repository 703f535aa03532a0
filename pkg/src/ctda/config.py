import os
from pathlib import Path
from typing import Any, Dict, List, Tuple

from dotenv import dotenv_values

from ctda.errors import ConfigError

DEFAULTS = {
    "CTDA_OUT": "runs",
    "CTDA_LOG_LEVEL": "INFO",
}


class Config:
    """Environment settings for the lab, loaded from dotenv files."""

    def __init__(self, config_dict: Dict[str, Any]):
        self._config_dict = config_dict

    @classmethod
    def load(cls, config_dir: str | Path | None = None, deploy: str | None = None) -> "Config":
        """
        Load configuration from .env files in the config directory and return a new Config object.

        Files are read in order ``config.env``, ``<deploy>.env``, ``local.env``; later files
        override earlier ones. A value of ``__ENV__`` is replaced by the process environment,
        and ``CTDA_OUT`` in the process environment always overrides the files.
        """
        config_dir = find_config_dir(config_dir)
        deploy = deploy or os.getenv("CTDA_DEPLOY", "devel")

        config_files = [
            config_dir / "config.env",
            config_dir / f"{deploy}.env",
            config_dir / "local.env",
        ]

        config_dict: Dict[str, Any] = dict(DEFAULTS)
        loaded_files = []

        for config_file in config_files:
            if config_file.exists():
                config_dict.update(dotenv_values(config_file))
                loaded_files.append(config_file)

        config_dict["__loaded_files__"] = loaded_files
        config_dict["__config_dir__"] = str(config_dir)
        config_dict["__deploy__"] = deploy

        for key, value in config_dict.items():
            if value == "__ENV__":
                env_value = os.getenv(key)
                if env_value is not None:
                    config_dict[key] = env_value

        if os.getenv("CTDA_OUT"):
            config_dict["CTDA_OUT"] = os.environ["CTDA_OUT"]

        return cls(config_dict)

    @property
    def out_root(self) -> Path:
        return Path(self._config_dict["CTDA_OUT"])

    @property
    def log_level(self) -> str:
        return str(self._config_dict.get("CTDA_LOG_LEVEL", "INFO")).upper()

    def __getattr__(self, name: str) -> Any:
        try:
            return self._config_dict[name]
        except KeyError:
            raise AttributeError(f"'Config' object has no attribute '{name}'")

    def __getitem__(self, key: str) -> Any:
        return self._config_dict[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self._config_dict.get(key, default)

    def items(self) -> List[Tuple[str, Any]]:
        return list(self._config_dict.items())


def find_config_dir(config_dir: str | Path | None = None) -> Path:
    """Resolve the config directory: explicit path, then CTDA_CONFIG_DIR, then <repo>/config."""
    dirs: List[Path] = []

    if config_dir:
        dirs.append(Path(config_dir))

    env_dir = os.getenv("CTDA_CONFIG_DIR")
    if env_dir:
        dirs.append(Path(env_dir))

    dirs.append(Path(__file__).parents[2] / "config")

    for path in dirs:
        if path.is_dir():
            return path

    if config_dir:
        raise ConfigError(f"Config directory not found in {[str(d) for d in dirs]}")

    # No config directory at all is fine; defaults apply.
    return Path.cwd()
