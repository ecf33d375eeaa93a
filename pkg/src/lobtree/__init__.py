"""Order-book Markov chain, its tree coupling, and Monte Carlo checks of both."""

__version__ = "0.1.0"
