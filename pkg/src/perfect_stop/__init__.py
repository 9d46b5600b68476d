"""Minimax perfect stopping rules for selling an asset near its maximum."""

__version__ = "0.1.0"
