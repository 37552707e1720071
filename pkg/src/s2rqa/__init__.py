"""Quality assessment of the steps to reproduce in bug reports."""

__version__ = "0.1.0"
