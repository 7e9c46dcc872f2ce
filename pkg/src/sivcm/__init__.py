"""Empirical likelihood inference for single-index varying-coefficient models."""
