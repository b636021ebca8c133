"""Learning taxonomic decision-list policies for relational stochastic planning domains."""

__version__ = "0.1.0"
