"""Dynamic ride-pooling dispatch and simulation on road networks."""

__version__ = "0.1.0"
