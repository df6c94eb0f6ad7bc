"""Area-matching detection of third-party library reuse in binaries."""

__version__ = "0.1.0"
