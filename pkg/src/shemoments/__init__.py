"""Moment bounds for the stochastic heat equation with colored noise."""
