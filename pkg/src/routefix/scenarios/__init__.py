"""Bundled example networks (one directory of ``.cfg`` files plus ``requirements.json`` each)."""
from __future__ import annotations

from pathlib import Path

ROOT = Path(__file__).parent


def names() -> list[str]:
    return sorted(p.name for p in ROOT.iterdir() if p.is_dir() and (p / "requirements.json").exists())


def path(name: str) -> Path:
    p = ROOT / name
    if not (p / "requirements.json").exists():
        raise KeyError(f"unknown scenario {name!r}; have {', '.join(names())}")
    return p


def load(name: str):
    from ..config import parse_corpus
    from ..harness import Scenario
    from ..requirements import load_requirements

    p = path(name)
    return Scenario(parse_corpus(p), load_requirements(p / "requirements.json"), name)
