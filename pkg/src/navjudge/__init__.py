"""Instruction-following navigation over street graphs, with trajectory scoring."""

__version__ = "0.1.0"
