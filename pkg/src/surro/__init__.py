"""Weekly weather-guided building energy surrogates."""

__version__ = "0.1.0"
