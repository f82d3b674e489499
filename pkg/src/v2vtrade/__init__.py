"""Vehicle-to-vehicle energy trading simulator with bargaining-based clearing and a shared actor-critic learner."""

__version__ = "0.1.0"
