"""Sub-cycle THz field and intensity correlation testbed."""
__version__ = "0.1.0"
