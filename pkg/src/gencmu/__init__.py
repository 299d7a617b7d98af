"""Generalized c-mu scheduling in the moderate-deviation heavy-traffic regime."""

__version__ = "0.1.0"
