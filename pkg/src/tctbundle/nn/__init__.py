"""Residual network inverter."""
