"""Simulation and analysis toolkit for the He-McKellar-Wilkens phase measurement."""

__version__ = "0.1.0"
