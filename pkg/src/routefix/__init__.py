"""Requirement-driven diagnosis and repair of BGP/OSPF router configurations."""
from __future__ import annotations

__version__ = "0.1.0"

from .config import Corpus, Patch, parse_corpus, parse_texts
from .pipeline import Options, RunReport, run
from .requirements import Requirement, load_requirements, parse_requirements
from .sim import simulate, verify

__all__ = [
    "Corpus", "Options", "Patch", "Requirement", "RunReport", "__version__", "load_requirements",
    "parse_corpus", "parse_requirements", "parse_texts", "run", "simulate", "verify",
]
