"""Desk-scale FDTD simulator for conductor loss in superconducting-qubit microwave packages."""

__version__ = "0.1.0"
