"""Shipped run configurations, loaded as ``preset:<name>``."""
