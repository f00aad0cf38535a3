"""Evolve an agent's skill library from its own failures."""

from __future__ import annotations

from .data import DatasetSplits, Example, stratified_split
from .frontier import Frontier
from .history import FeedbackHistory, FeedbackRecord
from .loop import EvolutionLoop, LoopConfig
from .merge import merge_unique
from .scoring import multi_tolerance_score, score
from .store import ProgramStore

__version__ = "0.1.0"

__all__ = [
    "DatasetSplits", "EvolutionLoop", "Example", "FeedbackHistory", "FeedbackRecord",
    "Frontier", "LoopConfig", "ProgramStore", "merge_unique", "multi_tolerance_score",
    "score", "stratified_split",
]
