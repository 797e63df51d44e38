"""Multi-speaker neural speech synthesis toolkit."""

__version__ = "0.1.0"
