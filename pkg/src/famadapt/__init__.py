"""Adapting a multilingual encoder to a language family."""

__version__ = "0.1.0"
