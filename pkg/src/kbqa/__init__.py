"""Attention-based question answering over a small knowledge base."""

__version__ = "0.1.0"
