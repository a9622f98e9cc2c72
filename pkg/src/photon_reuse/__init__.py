"""Temporal reuse of photon paths across animation frames."""

from .pipeline import Engine, EngineMode, FrameStats, energies_close, run_frame
from .scene import Scene, load_scene

__all__ = ["Engine", "EngineMode", "FrameStats", "Scene", "energies_close", "load_scene",
           "run_frame"]
__version__ = "0.1.0"
