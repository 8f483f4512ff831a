"""Desk-scale workbench for multilingual dual-encoder retrieval experiments.

Trains siamese embedding-bag encoders on next-sentence and inverse-cloze
pairs, evaluates them with sampled recall@k, and runs the transfer
experiments (per-language vs combined matrices, mixture-ratio sweeps,
censored transitive transfer) on real or synthetic corpora.
"""

__version__ = "0.1.0"
