"""fbmlab: a numerical laboratory for fBm-driven SDEs with singular drifts."""
__version__ = "0.1.0"
