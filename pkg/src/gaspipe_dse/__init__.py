"""Dynamic state estimation for transient natural-gas pipeline networks."""

__version__ = "0.1.0"
