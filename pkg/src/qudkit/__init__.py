"""QUD-driven elaborative simplification toolkit."""

__version__ = "0.1.0"
