"""Chemical dimensionality estimation and endmember extraction for hyperspectral data."""

__version__ = "0.1.0"
