"""AGHMN - Attention Gated Hierarchical Memory Network for real-time emotion recognition"""

from aghmn.__version__ import __version__

__all__ = ["__version__"]
