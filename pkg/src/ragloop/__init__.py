"""Human-in-the-loop tooling for multi-turn retrieval-augmented conversations."""

__version__ = "0.1.0"
