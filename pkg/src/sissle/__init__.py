"""Affinity-group UNL overlay, two-stage consensus and a seeded network simulator."""
from .overlay import ConfigError, OverlayParams, Variant

__version__ = "0.1.0"
__all__ = ["ConfigError", "OverlayParams", "Variant", "__version__"]
