"""Data-driven bottomhole pressure soft sensor."""
__version__ = "0.1.0"
