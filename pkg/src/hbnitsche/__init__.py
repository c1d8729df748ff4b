"""Adaptive hierarchical B-spline solver for the clamped biharmonic problem
with weakly imposed boundary conditions."""
