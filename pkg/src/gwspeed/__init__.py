"""Speed of random walks on Galton-Watson trees with random conductances."""
__version__ = "0.1.0"
