"""Contextual privacy policy scanning: service, client SDK and latency bench."""

__version__ = "0.1.0"
