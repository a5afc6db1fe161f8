"""Commit representation learning: diff parsing, corpus building, denoising pre-training and evaluation."""

__version__ = "0.1.0"
