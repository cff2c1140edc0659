"""Spatiotemporal translation embeddings for POI recommendation."""

__version__ = "0.1.0"
