"""Few-shot knowledge-graph completion from entity and relation descriptions."""
__version__ = "0.1.0"
