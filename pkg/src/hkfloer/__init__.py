"""Numerical toolkit for hyperkähler Floer theory on 3-manifolds."""

__version__ = "0.1.0"
