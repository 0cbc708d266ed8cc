"""Localize a single street-level image against rasterized OpenStreetMap data."""

__version__ = "0.1.0"
