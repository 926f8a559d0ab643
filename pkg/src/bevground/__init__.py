"""BEV 3D grounding toolkit: scene annotation, hierarchical prompt
generation, a toy context-aggregation/fusion pipeline, and the grounding
evaluation suite (precision/recall, mAP, NDS)."""

from .matching import BACKEND as MATCH_BACKEND

__version__ = "0.1.0"

__all__ = ["MATCH_BACKEND", "__version__"]
