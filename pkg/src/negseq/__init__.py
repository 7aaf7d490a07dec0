"""Mining of gap-constrained patterns with absent symbols, and
classification of symbol sequences on pattern-count features."""

__version__ = "0.1.0"
