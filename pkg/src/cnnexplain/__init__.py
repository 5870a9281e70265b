"""Explain 1D text-CNN predictions with n-gram relevance and sufficient and
necessary feature-sets."""

__version__ = "0.1.0"
