"""Language-guided video summarization toolkit."""

__version__ = "0.1.0"
