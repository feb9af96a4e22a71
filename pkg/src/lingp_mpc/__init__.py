"""Linearized-GP adaptive linear MPC for quadrotors flying in each other's downwash."""

__version__ = "0.1.0"
