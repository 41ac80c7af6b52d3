"""Paradifferential lab: type 1,1 pseudodifferential operators on the torus."""

from .pipeline import LabPipeline
from .models import Report, RunConfig, RunStatus, SymbolSpec, NormSpec
from .config import settings

__all__ = [
    "LabPipeline",
    "Report",
    "RunConfig",
    "RunStatus",
    "SymbolSpec",
    "NormSpec",
    "settings",
]
