"""Numerical routines of the GIW local level model, one module per concern."""
