"""Functional principal components from discretely observed curves and
bootstrap two-sample tests for their means, eigenvalues, eigenfunctions and
eigenspaces."""

__version__ = "0.1.0"
INTERFACE_VERSION = "1"
