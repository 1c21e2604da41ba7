"""Corpus-to-model-input and evaluation toolkit for multilingual discourse relation classification."""

__version__ = "0.1.0"
