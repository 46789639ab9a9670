import configparser
from functools import lru_cache
from pathlib import Path


def _get_defaults_path() -> Path:
    """Get the path to the defaults.ini configuration file."""
    return Path(__file__).parent / "defaults.ini"


@lru_cache(maxsize=1)
def load_defaults() -> configparser.ConfigParser:
    """Load numeric defaults from defaults.ini."""
    config = configparser.ConfigParser()
    defaults_path = _get_defaults_path()
    if not config.read(defaults_path):
        raise FileNotFoundError(
            f"Defaults file not found at {defaults_path}. "
            "Please ensure the file exists."
        )
    return config


def default_float(section: str, key: str) -> float:
    return load_defaults().getfloat(section, key)


def default_int(section: str, key: str) -> int:
    return load_defaults().getint(section, key)
