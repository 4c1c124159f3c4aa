"""Fourier-mixing temporal transformer + GRU for remaining-useful-life
regression on turbofan degradation data, with a full CPU training and
benchmarking pipeline."""

__version__ = "0.1.0"
