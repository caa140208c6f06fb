"""Best proximity points of relatively nonexpansive maps on proximal parallel pairs."""

__version__ = "0.1.0"
