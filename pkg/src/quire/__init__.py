"""Archival data management: transcription, curation, graph derivation.

The pipeline keeps sources verbatim and derives everything else: records
are transcribed against templates, published records feed an identity
catalogue, and a deterministic transformation turns both into named-graph
quads that stay traceable back to the original cells.
"""

from .config import EngineConfig
from .engine import Workspace
from .errors import EngineError

__version__ = "0.1.0"

__all__ = ["EngineConfig", "EngineError", "Workspace", "__version__"]
