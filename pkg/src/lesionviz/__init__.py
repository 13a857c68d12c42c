"""Train a small CNN on synthetic lesion phantoms and visualize its channels
by regularized activation maximization."""

__version__ = "0.1.0"
