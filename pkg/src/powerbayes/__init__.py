"""Power-law severity models with missingness, counting noise and heaping."""

__version__ = "0.1.0"
