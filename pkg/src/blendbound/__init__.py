"""Temporary development stub; full exports restored once all modules exist."""
