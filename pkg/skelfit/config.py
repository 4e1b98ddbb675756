# File: skelfit/config.py
import glob
import os
from typing import Dict, Optional

from dotenv import load_dotenv

from skelfit.exception import ConfigurationException

_TRUTHY = {"true", "1", "yes", "y", "on"}


def read_properties(path: str) -> Dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are skipped"""
    entries = {}
    with open(path, "r") as f:
        for raw in f:
            line = raw.strip()
            if line and not line.startswith("#") and "=" in line:
                key, value = line.split("=", 1)
                entries[key.strip()] = value.strip()
    return entries


class Config:
    """
    Process-level runtime settings (log and report directories, debug, torch threads, seed).

    Lookups read the environment on every call, so a variable set after import still wins.
    Values from ``settings/*.properties`` are the fallback; later files override earlier ones.
    Fit, camera search and retarget parameters are not read here, see ``workbench.settings``.
    """

    def __init__(self, env_file=".env", properties_dir="settings"):
        self.properties: Dict[str, str] = {}
        for path in sorted(glob.glob(os.path.join(properties_dir, "*.properties"))):
            self.properties.update(read_properties(path))
        load_dotenv(env_file)

    def get(self, key, default=None) -> Optional[str]:
        value = os.getenv(key)
        return value if value is not None else self.properties.get(key, default)

    def get_bool(self, key: str, default: bool = False) -> bool:
        value = self.get(key)
        if value is None:
            return default
        return str(value).strip().lower() in _TRUTHY

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        value = self.get(key)
        if value is None or not str(value).strip():
            return default
        try:
            return int(value)
        except ValueError:
            return default

    def seed_override(self) -> Optional[int]:
        """CASA_SEED as an int, or None when it is unset"""
        value = self.get("CASA_SEED")
        if value is None or not str(value).strip():
            return None
        try:
            return int(value)
        except ValueError:
            raise ConfigurationException(f"CASA_SEED must be an integer, got {value!r}")


config = Config()
