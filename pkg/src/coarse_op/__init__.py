"""Finite-scale quasi-locality toolkit for operators on l^p spaces over metric spaces."""

__version__ = "0.1.0"
