"""Data-driven analysis of input-output properties of LTI systems."""
__version__ = "0.1.0"
