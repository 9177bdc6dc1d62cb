"""Finite-element building blocks: quadrature, P1/P2 spaces, assembly, solves."""
