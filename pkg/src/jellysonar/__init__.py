"""Sonar event classification: synthetic data, two-stage fusion, jellyfish gating."""

__version__ = "0.1.0"
