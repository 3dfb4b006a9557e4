"""Segment-proposal-ranking engine for ranked moment retrieval."""

__version__ = "0.1.0"
