"""blundershield: chess move selection with a learned blunder shield."""

__version__ = "0.1.0"
