"""Sound-source distance estimation from tetrahedral microphone-array audio."""

__version__ = "0.1.0"
