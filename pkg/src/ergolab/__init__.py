"""Monte Carlo laboratory for ergodic sums of chaotic maps."""

__version__ = "0.1.0"
