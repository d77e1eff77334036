"""Road friction prediction from irregular vehicle and weather measurements."""

__version__ = "0.1.0"
