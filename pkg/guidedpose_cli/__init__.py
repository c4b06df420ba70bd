"""Command line interface for the guided pose library: generate, infer, evaluate, gradient-check, benchmark."""

__all__ = ["__version__"]
__version__ = "0.1.0"
