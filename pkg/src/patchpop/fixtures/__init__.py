"""Bundled example configurations for the CLI and the test suite."""

from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled fixture config (name without extension)."""
    ref = resources.files(__package__) / f"{name}.json"
    with resources.as_file(ref) as p:
        return Path(p)


def fixture_names() -> list[str]:
    return sorted(
        p.name[: -len(".json")]
        for p in resources.files(__package__).iterdir()
        if p.name.endswith(".json")
    )
