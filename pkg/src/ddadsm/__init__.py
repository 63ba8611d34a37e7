"""Behavioral simulator and analysis toolkit for a hybrid CT/DT second-order
delta-sigma modulator front-end built around a DDA R-C integrator."""

__version__ = "0.1.0"
