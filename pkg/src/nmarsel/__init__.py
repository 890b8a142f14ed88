"""Nonparametric inference for outcomes missing not at random."""
