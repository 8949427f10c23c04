"""Offline feature extraction for the summarization service."""

__version__ = "0.1.0"
