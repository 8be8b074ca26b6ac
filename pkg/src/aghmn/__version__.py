"""Version information for aghmn"""

__version__ = "0.1.0"
