"""
Configuration layer shared by the library, the command line and the HTTP service.

Environment defaults come from `.env` / the process environment; run files are
TOML documents with the sections [scene], [solver], [filter], [camera], [heat]
and [wave]. Precedence: command-line flag > TOML file > environment > model default.
"""

import os

import tomlkit
from dotenv import load_dotenv
from tomlkit.exceptions import TOMLKitError

from app.errors import PWoSError

# Load environment variables
load_dotenv()

APP_ENV = os.getenv("APP_ENV", "production")
DEFAULT_SEED = int(os.getenv("PWOS_SEED", "0"))
DEFAULT_THREADS = int(os.getenv("PWOS_THREADS", "1"))

TOML_SECTIONS = ("scene", "solver", "filter", "camera", "heat", "wave")


class ConfigFileError(PWoSError, ValueError):
    """Unreadable or malformed TOML run file."""


def load_run_file(path):
    """
    Parse a TOML run file.

    :param path: Path of the TOML document.
    :return: dict section -> dict of plain Python values (missing sections are empty).
    """
    try:
        with open(path, "r", encoding="utf-8") as file:
            document = tomlkit.parse(file.read()).unwrap()
    except OSError as e:
        raise ConfigFileError(f"Cannot read config file {path}: {e}") from e
    except TOMLKitError as e:
        raise ConfigFileError(f"Malformed config file {path}: {e}") from e
    unknown = set(document) - set(TOML_SECTIONS)
    if unknown:
        raise ConfigFileError(f"Unknown config sections: {', '.join(sorted(unknown))}")
    return {section: dict(document.get(section, {})) for section in TOML_SECTIONS}


def dump_run_file(sections):
    """Serialize section dicts back to TOML text (used to record the effective config)."""
    document = tomlkit.document()
    for section in TOML_SECTIONS:
        values = {k: v for k, v in sections.get(section, {}).items() if v is not None}
        if values:
            table = tomlkit.table()
            table.update(values)
            document.add(section, table)
    return tomlkit.dumps(document)


def merge_settings(flags=None, file_section=None, env_defaults=None):
    """
    Merge one configuration section by precedence.

    :param flags: Values given on the command line (None entries are ignored).
    :param file_section: Values from the TOML section.
    :param env_defaults: Values derived from the environment.
    :return: Merged dict; keys absent everywhere fall back to the model defaults.
    """
    merged = {}
    for source in (env_defaults or {}, file_section or {}, flags or {}):
        merged.update({k: v for k, v in source.items() if v is not None})
    return merged


def solver_env_defaults():
    """Solver values taken from the environment."""
    return {"seed": DEFAULT_SEED, "threads": DEFAULT_THREADS}
