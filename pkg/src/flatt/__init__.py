"""Flat linear transports in tensor bundles over a coordinate chart."""
__version__ = "0.1.0"
