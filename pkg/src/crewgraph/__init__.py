"""Graph-structured workflows whose nodes can run role-based agent crews."""

__version__ = "0.1.0"
