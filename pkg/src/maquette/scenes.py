"""Shipped demonstration scenes; CLI commands accept either a file path
or one of these bare names."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def scenes_dir() -> Path:
    return Path(resources.files("maquette") / "scenes")


def list_scenes() -> list[str]:
    return sorted(p.stem for p in scenes_dir().glob("*.json"))


def resolve_scene(name_or_path: str) -> Path:
    """A path that exists wins; otherwise look up a packaged scene name."""
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = scenes_dir() / f"{name_or_path}.json"
    if candidate.exists():
        return candidate
    raise FileNotFoundError(
        f"no scenario file {name_or_path!r} and no packaged scene of that "
        f"name (available: {', '.join(list_scenes())})")


def resolve_aux(name_or_path: str) -> Path:
    """Trace or capture files shipped next to the packaged scenes."""
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = scenes_dir() / name_or_path
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"no such file: {name_or_path}")
