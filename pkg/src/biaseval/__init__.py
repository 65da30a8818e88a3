"""Toolkit for measuring nationality bias in chat-model text: corpus
generation and merging, lexical metrics, best-worst-scaling annotation,
spectral rank aggregation, and indicator correlation."""

__version__ = "0.1.0"
