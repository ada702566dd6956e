"""Certifier and reduced-flow simulator for the fractional Nirenberg problem on S^n."""

__version__ = "0.1.0"
