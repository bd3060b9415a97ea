"""Variational quantum pulse learning toolkit."""
